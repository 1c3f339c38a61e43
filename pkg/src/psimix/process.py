"""Finite-state stationary sources.

A source is a stationary Markov chain of order ``m`` on a finite alphabet.
Words are tuples of symbol *indices*; a word ``w`` of length ``n`` is
stored at position ``sum(w[i] * K**(n-1-i))`` of any law over ``K**n``
words (big-endian, so the ordering is lexicographic).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    AlphabetTooLarge,
    ConfigError,
    HorizonTooLarge,
    NotIrreducible,
    ZeroProbabilityPrefix,
)

DEFAULT_CAP = 2**20
ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10


def encode(word: Sequence[int], n_symbols: int) -> int:
    code = 0
    for s in word:
        code = code * n_symbols + int(s)
    return code


def decode(code: int, length: int, n_symbols: int) -> tuple[int, ...]:
    out = [0] * length
    for i in range(length - 1, -1, -1):
        code, out[i] = divmod(code, n_symbols)
    return tuple(out)


def all_words(length: int, n_symbols: int) -> np.ndarray:
    """Every word of ``length`` symbols as rows of an int array, in code order."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.int64)
    codes = np.arange(n_symbols**length)
    powers = n_symbols ** np.arange(length - 1, -1, -1)
    return (codes[:, None] // powers[None, :]) % n_symbols


def _check_cap(size: int, cap: int | None, exc=HorizonTooLarge, what="law") -> None:
    cap = DEFAULT_CAP if cap is None else cap
    if size > cap:
        raise exc(f"{what} needs {size} entries, cap is {cap}")


@dataclass(frozen=True, eq=False)
class CylinderLaw:
    """Probability law of a window of ``horizon`` consecutive symbols."""

    horizon: int
    n_symbols: int
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.shape != (self.n_symbols**self.horizon,):
            raise ValueError(
                f"expected {self.n_symbols ** self.horizon} probabilities, got shape {p.shape}"
            )
        if p.min(initial=0.0) < -ROW_TOL or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("not a probability law")
        p = np.clip(p, 0.0, None)
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    def __getitem__(self, word: Sequence[int]) -> float:
        if len(word) != self.horizon:
            raise ValueError(f"word length {len(word)} != horizon {self.horizon}")
        return float(self.probabilities[encode(word, self.n_symbols)])

    def words(self) -> np.ndarray:
        return all_words(self.horizon, self.n_symbols)

    def tv(self, other: "CylinderLaw") -> float:
        """Total-variation distance."""
        if (other.horizon, other.n_symbols) != (self.horizon, self.n_symbols):
            raise ValueError("laws live on different spaces")
        return 0.5 * float(np.abs(self.probabilities - other.probabilities).sum())

    def as_dict(self, states: Sequence[str]) -> dict[str, float]:
        sep = "" if all(len(s) == 1 for s in states) else " "
        return {
            sep.join(states[s] for s in w): float(p)
            for w, p in zip(self.words(), self.probabilities)
        }


@dataclass(frozen=True)
class ChainReport:
    irreducible: bool
    aperiodic: bool
    period: int


def _closed_classes(adj: np.ndarray) -> list[np.ndarray]:
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(adj.shape[0], dtype=bool)
        outside[members] = False
        if not adj[np.ix_(members, outside)].any():
            closed.append(members)
    return closed


def stationary_distribution(transition) -> np.ndarray:
    """Unique stationary vector of a row-stochastic matrix.

    Transient states are allowed (they get zero mass); more than one closed
    communicating class raises :class:`NotIrreducible`.
    """
    P = np.asarray(transition, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    _check_rows(P)
    n = P.shape[0]
    closed = _closed_classes(P > 0)
    if len(closed) > 1:
        raise NotIrreducible(f"chain has {len(closed)} closed communicating classes")
    if np.all(P == P[0]):
        return P[0] / P[0].sum()  # independent draws: the row itself, exactly
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi[np.abs(pi) < 1e-15] = 0.0
    if pi.min() < -1e-12:
        raise NotIrreducible("linear solve returned a signed vector")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _check_rows(P: np.ndarray) -> None:
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_TOL):
        raise ConfigError("transition rows must be nonnegative and sum to 1")


def _period(adj: np.ndarray) -> int:
    """gcd of cycle lengths, taken over edges inside strongly connected classes."""
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    g = 0
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        sub = adj[np.ix_(members, members)].astype(np.int8)
        if not sub.any():
            continue
        order, pred = breadth_first_order(sub, 0, directed=True, return_predecessors=True)
        level = np.full(len(members), -1)
        level[0] = 0
        for v in order[1:]:
            level[v] = level[pred[v]] + 1
        for u, v in zip(*np.nonzero(sub)):
            g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g or 1


class MarkovSource:
    """Stationary Markov chain of order ``order`` on ``states``.

    ``transition`` has one row per length-``order`` history (rows in code
    order) giving the law of the next symbol.  The stationary law lives on
    histories, i.e. it is the law of ``X_1^order``.
    """

    def __init__(
        self,
        states: Sequence[str],
        transition,
        order: int = 1,
        stationary=None,
    ):
        self.states = tuple(str(s) for s in states)
        if len(set(self.states)) != len(self.states):
            raise ConfigError("duplicate state labels")
        if order < 1:
            raise ConfigError("order must be a positive integer")
        self.order = int(order)
        K = len(self.states)
        P = np.array(transition, dtype=float)
        if P.shape != (K**order, K):
            raise ConfigError(f"transition must have shape {(K ** order, K)}, got {P.shape}")
        _check_rows(P)
        P.flags.writeable = False
        self.transition = P
        Q = self.history_chain()
        if stationary is None:
            pi = stationary_distribution(Q)
        else:
            pi = np.asarray(stationary, dtype=float)
            if pi.shape != (K**order,) or pi.min() < 0 or abs(pi.sum() - 1) > 1e-12:
                raise ConfigError("stationary law must be a probability vector over histories")
        if np.max(np.abs(pi @ Q - pi)) > STATIONARY_TOL:
            raise ConfigError("supplied law is not stationary for this chain")
        pi = np.array(pi)
        pi.flags.writeable = False
        self.stationary = pi

    @property
    def n_symbols(self) -> int:
        return len(self.states)

    @property
    def n_histories(self) -> int:
        return self.n_symbols**self.order

    def history_chain(self) -> np.ndarray:
        """First-order chain induced on length-``order`` histories."""
        K, H = self.n_symbols, self.n_histories
        Q = np.zeros((H, H))
        h = np.arange(H)
        for x in range(K):
            Q[h, (h * K + x) % H] += self.transition[:, x]
        return Q

    def index(self, symbol: str) -> int:
        return self.states.index(str(symbol))

    def word(self, symbols: Sequence[str] | str) -> tuple[int, ...]:
        """Symbol labels to an index word; a plain string is split per character."""
        return tuple(self.index(s) for s in symbols)

    def label(self, word: Sequence[int], sep: str = "") -> str:
        return sep.join(self.states[i] for i in word)

    def __repr__(self):
        return f"MarkovSource(states={self.states}, order={self.order})"


def _extend(probs: np.ndarray, source: MarkovSource) -> np.ndarray:
    """Append one symbol to every word of a word-indexed mass vector."""
    hist = np.arange(probs.size) % source.n_histories
    return (probs[:, None] * source.transition[hist]).ravel()


def check_irreducible_aperiodic(source) -> ChainReport:
    """Graph classification of a source's history chain (or of a raw matrix)."""
    Q = source.history_chain() if isinstance(source, MarkovSource) else np.asarray(source)
    adj = Q > 0
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    period = _period(adj)
    return ChainReport(irreducible=n_comp == 1, aperiodic=period == 1, period=period)


def marginal_PT(source: MarkovSource, T: int, cap: int | None = None) -> CylinderLaw:
    """Stationary law of ``T`` consecutive symbols."""
    if T < 1:
        raise ValueError("T must be >= 1")
    K, m = source.n_symbols, source.order
    _check_cap(K**T, cap)
    if T <= m:
        probs = source.stationary.reshape(K**T, K ** (m - T)).sum(axis=1)
    else:
        probs = np.array(source.stationary)
        for _ in range(T - m):
            probs = _extend(probs, source)
    return CylinderLaw(T, K, probs)


def cylinder_probability(source: MarkovSource, word: Sequence[int]) -> float:
    """P(X_1^n = word)."""
    K, m = source.n_symbols, source.order
    n = len(word)
    if n == 0:
        return 1.0
    if n <= m:
        block = source.stationary.reshape(K**n, K ** (m - n))
        return float(block[encode(word, K)].sum())
    p = float(source.stationary[encode(word[:m], K)])
    for i in range(m, n):
        if p == 0.0:
            return 0.0
        p *= source.transition[encode(word[i - m : i], K), word[i]]
    return float(p)


def conditional_law(
    source: MarkovSource,
    prefix: Sequence[int],
    gap: int,
    horizon: int,
    cap: int | None = None,
) -> CylinderLaw:
    """Law of ``X_{t+gap+1}^{t+gap+horizon}`` given ``X_1^t = prefix``."""
    K, m, H = source.n_symbols, source.order, source.n_histories
    t = len(prefix)
    if t < 1 or gap < 0 or horizon < 1:
        raise ValueError("need a nonempty prefix, gap >= 0 and horizon >= 1")
    if cylinder_probability(source, prefix) <= 0.0:
        raise ZeroProbabilityPrefix(f"prefix {tuple(prefix)} has probability 0")
    if m == 1 and np.all(source.transition == source.transition[0]):
        return marginal_PT(source, horizon, cap)
    if t >= m:
        _check_cap(H * K**horizon, cap)
        dist = np.zeros(H)
        dist[encode(prefix[-m:], K)] = 1.0
        if gap:
            dist = dist @ np.linalg.matrix_power(source.history_chain(), gap)
        for _ in range(horizon):
            dist = _extend(dist, source)
        probs = dist.reshape(H, K**horizon).sum(axis=0)
    else:
        # prefix shorter than one history: enumerate the joint window
        law = marginal_PT(source, t + gap + horizon, cap).probabilities
        joint = law.reshape(K**t, K**gap, K**horizon)[encode(prefix, K)].sum(axis=0)
        probs = joint / joint.sum()
    return CylinderLaw(horizon, K, probs / probs.sum())


def block_process(source: MarkovSource, L: int, cap: int | None = None) -> MarkovSource:
    """Regroup the source into non-overlapping ``L``-blocks.

    The blocked chain has order ``ceil(order / L)`` (first order whenever
    ``L >= order``) and its stationary law is the parent's window law, so
    the block process is stationary by construction.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    K, m = source.n_symbols, source.order
    r = -(-m // L)
    _check_cap(K ** (r * L + L), cap, AlphabetTooLarge, "blocked transition table")
    probs = np.ones(K ** (r * L))
    for _ in range(L):
        probs = _extend(probs, source)
    transition = probs.reshape(K ** (r * L), K**L)
    sep = "" if all(len(s) == 1 for s in source.states) else "|"
    states = [sep.join(source.states[i] for i in w) for w in all_words(L, K)]
    stationary = marginal_PT(source, r * L, cap).probabilities
    return MarkovSource(states, transition, order=r, stationary=stationary)


def order_m_wrap(
    transition: Mapping[str, Sequence[float]] | Sequence[Sequence[float]],
    m: int,
    states: Sequence[str],
) -> MarkovSource:
    """Build an order-``m`` source from history-keyed rows.

    Keys are histories written as concatenated symbols (``"01"``), or
    whitespace/comma separated when symbols are longer than one character.
    A plain list of rows is taken in lexicographic history order.
    """
    states = [str(s) for s in states]
    K = len(states)
    if isinstance(transition, Mapping):
        rows = np.full((K**m, K), np.nan)
        for key, row in transition.items():
            hist = _split_history(str(key), states, m)
            rows[encode([states.index(s) for s in hist], K)] = row
        if np.isnan(rows).any():
            raise ConfigError("transition table is missing histories")
    else:
        rows = np.asarray(transition, dtype=float)
    return MarkovSource(states, rows, order=m)


def _split_history(key: str, states: list[str], m: int) -> list[str]:
    parts = key.replace(",", " ").split()
    if len(parts) == m and all(p in states for p in parts):
        return parts
    if all(len(s) == 1 for s in states) and len(key) == m and all(c in states for c in key):
        return list(key)
    raise ConfigError(f"cannot parse history key {key!r}")


def binary_symmetric_chain(p: float) -> MarkovSource:
    """Two-state chain that flips with probability ``p``."""
    return MarkovSource(["0", "1"], [[1 - p, p], [p, 1 - p]])


def iid_source(probs: Sequence[float], states: Sequence[str] | None = None) -> MarkovSource:
    probs = list(probs)
    states = states or [str(i) for i in range(len(probs))]
    return MarkovSource(states, [probs] * len(probs))


def chain_from_dict(raw: Mapping) -> MarkovSource:
    try:
        states = [str(s) for s in raw["states"]]
        order = int(raw.get("order", 1))
        transition = raw["transition"]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad chain description: {e}") from e
    if order == 1 and not isinstance(transition, Mapping):
        return MarkovSource(states, transition)
    return order_m_wrap(transition, order, states)


def chain_to_dict(source: MarkovSource) -> dict:
    return {
        "states": list(source.states),
        "order": source.order,
        "transition": source.transition.tolist(),
    }


def load_chain(path: str | Path) -> MarkovSource:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read chain file {path}: {e}") from e
    return chain_from_dict(raw)


def sample_path(
    source: MarkovSource, n: int, rng: np.random.Generator, size: int = 1
) -> np.ndarray:
    """Draw ``size`` independent stationary paths of length ``n``."""
    K, m, H = source.n_symbols, source.order, source.n_histories
    out = np.empty((size, n), dtype=np.int64)
    head = min(m, n)
    start = rng.choice(H, size=size, p=source.stationary)
    for j in range(head):
        out[:, j] = (start // K ** (m - 1 - j)) % K
    hist = start.copy()
    cdf = np.cumsum(source.transition, axis=1)
    for j in range(m, n):
        u = rng.random(size)
        x = (u[:, None] > cdf[hist]).sum(axis=1).clip(max=K - 1)
        out[:, j] = x
        hist = (hist * K + x) % H
    return out
