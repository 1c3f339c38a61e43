"""Slot-based simulation of a psi-mixing source.

Time ``1..n`` with ``n = (T + tau) k`` is cut into A-slots of width ``T``
and B-slots of width ``tau``, alternating ``A_1 B_1 A_2 B_2 ... A_k B_k``.
Slots are filled in the order ``A_1, A_2, B_1, A_3, B_2, ..., A_k, B_{k-1},
B_k``.  A good A-slot (flag 1) is drawn from the window law ``P_T``
independently of everything else; a bad one (flag 0) is drawn from the
residual law given the realised prefix, with the unfilled B-slot as the
gap.  B-slots are then bridged from the chain's law given both flanks.
Averaged over the flags, the output has exactly the source's law.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InconsistentLambda, PsimixError
from .mixing import _residual, psi_markov
from .process import (
    CylinderLaw,
    MarkovSource,
    _check_cap,
    conditional_law,
    cylinder_probability,
    decode,
    encode,
    marginal_PT,
)

LAMBDA_TOL = 1e-12


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


FLAG_STREAM = 0
CODEWORD_STREAM = 1


@dataclass(frozen=True)
class SlotSchedule:
    T: int
    tau: int
    k: int

    def __post_init__(self):
        if self.T < 1 or self.tau < 0 or self.k < 1:
            raise ValueError("need T >= 1, tau >= 0, k >= 1")

    @property
    def n(self) -> int:
        return (self.T + self.tau) * self.k

    @property
    def a_bounds(self) -> tuple[tuple[int, int], ...]:
        """1-based inclusive (first, last) of each A-slot."""
        T, tau = self.T, self.tau
        return tuple(((i - 1) * (T + tau) + 1, i * T + (i - 1) * tau) for i in range(1, self.k + 1))

    @property
    def b_bounds(self) -> tuple[tuple[int, int], ...]:
        """1-based inclusive (first, last); empty slots have last = first - 1."""
        T, tau = self.T, self.tau
        return tuple((i * T + (i - 1) * tau + 1, i * (T + tau)) for i in range(1, self.k + 1))

    def a_slice(self, i: int) -> slice:
        first, last = self.a_bounds[i - 1]
        return slice(first - 1, last)

    def b_slice(self, i: int) -> slice:
        first, last = self.b_bounds[i - 1]
        return slice(first - 1, last)

    def generation_order(self) -> list[tuple[str, int]]:
        """Fill order A_1, A_2, B_1, A_3, B_2, ..., A_k, B_{k-1}, B_k; empty B-slots omitted."""
        order = [("A", 1)]
        for i in range(2, self.k + 1):
            order += [("A", i), ("B", i - 1)]
        order.append(("B", self.k))
        return [slot for slot in order if slot[0] == "A" or self.tau]


def build_schedule(T: int, tau: int, k: int) -> SlotSchedule:
    return SlotSchedule(T, tau, k)


@dataclass(frozen=True)
class SlotFlags:
    flags: tuple[int, ...]
    lam: float

    @property
    def k(self) -> int:
        return len(self.flags)

    def good_slots(self) -> list[int]:
        """1-based indices of good A-slots."""
        return [i + 1 for i, c in enumerate(self.flags) if c]


def draw_flags(k: int, lam: float, seed: int) -> SlotFlags:
    """C_1 = 1; C_2..C_k i.i.d. equal to 1 with probability 1 - lam."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    u = _rng(seed, FLAG_STREAM).random(k)
    flags = [1] + [int(x < 1.0 - lam) for x in u[1:]]
    return SlotFlags(tuple(flags), float(lam))


def _draw(law: np.ndarray, cdf: np.ndarray, rng: np.random.Generator) -> int:
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), law.size - 1))


class SlotLaws:
    """Cached slot laws for one (source, schedule, lambda).

    Prefix-dependent laws are keyed on the last ``order`` symbols, which is
    all a Markov source remembers.
    """

    def __init__(self, source: MarkovSource, schedule: SlotSchedule, lam: float):
        self.source, self.schedule, self.lam = source, schedule, lam
        self.p_T = marginal_PT(source, schedule.T)
        self._cdf_T = np.cumsum(self.p_T.probabilities)
        self._residual: dict = {}
        self._bridge: dict = {}
        self._tail: dict = {}

    def _key(self, prefix: Sequence[int]) -> tuple[int, ...]:
        m = self.source.order
        return tuple(prefix[-m:]) if len(prefix) >= m else ("short",) + tuple(prefix)

    def residual(self, prefix: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        key = self._key(prefix)
        if key not in self._residual:
            if cylinder_probability(self.source, prefix) <= 0:
                raise PsimixError("simulated prefix has probability zero")
            cond = conditional_law(self.source, prefix, self.schedule.tau, self.schedule.T)
            r = _residual(cond, self.p_T, self.lam).probabilities
            self._residual[key] = (r, np.cumsum(r))
        return self._residual[key]

    def a_law(self, prefix: Sequence[int], good: bool | None) -> np.ndarray:
        """Law of the next A-slot; ``good=None`` averages over the flag."""
        if good:
            return self.p_T.probabilities
        r = self.residual(prefix)[0]
        if good is None:
            return (1.0 - self.lam) * self.p_T.probabilities + self.lam * r
        return r

    def bridge(self, prefix: Sequence[int], a: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Law of the B-slot between ``prefix`` and the already drawn A-slot ``a``."""
        src = self.source
        K, m, tau = src.n_symbols, src.order, self.schedule.tau
        head = tuple(a[:m])
        key = (self._key(prefix), head)
        if key not in self._bridge:
            ctx = list(prefix[-m:]) if len(prefix) >= m else list(prefix)
            w = np.empty(K**tau)
            for code in range(K**tau):
                word = ctx + list(decode(code, tau, K)) + list(head)
                w[code] = cylinder_probability(src, word)
            if w.sum() <= 0:
                raise PsimixError("no bridge has positive probability")
            w /= w.sum()
            self._bridge[key] = (w, np.cumsum(w))
        return self._bridge[key]

    def tail(self, prefix: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Law of the final B-slot given everything before it."""
        key = self._key(prefix)
        if key not in self._tail:
            p = conditional_law(self.source, prefix, 0, self.schedule.tau).probabilities
            self._tail[key] = (p, np.cumsum(p))
        return self._tail[key]


def _source_lambda(source: MarkovSource, tau: int) -> float:
    return psi_markov(source, tau)


def _check_flags(source, schedule, flags, laws=None) -> SlotLaws:
    if flags.k != schedule.k or flags.flags[0] != 1:
        raise ValueError("flags must have length k and start with C_1 = 1")
    if laws is not None:
        return laws
    lam = _source_lambda(source, schedule.tau)
    if abs(flags.lam - lam) > LAMBDA_TOL:
        raise InconsistentLambda(f"flags drawn with lambda={flags.lam}, source has psi={lam}")
    return SlotLaws(source, schedule, flags.lam)


def simulate_sequence(
    source: MarkovSource,
    schedule: SlotSchedule,
    flags: SlotFlags,
    seed: int,
    codeword: int = 0,
    laws: SlotLaws | None = None,
) -> np.ndarray:
    """One realisation of X_1^n generated slot by slot.

    ``codeword`` selects an independent random stream under ``seed``.
    Pass ``laws`` to reuse caches across calls (the lambda check is then
    skipped, since the caller built the laws).
    """
    laws = _check_flags(source, schedule, flags, laws)
    rng = _rng(seed, CODEWORD_STREAM, codeword)
    K, T, tau, k = source.n_symbols, schedule.T, schedule.tau, schedule.k
    x = np.empty(schedule.n, dtype=np.int64)
    filled = 0  # x[:filled] is the contiguous prefix generated so far

    def put(sl: slice, code: int, width: int):
        x[sl] = decode(code, width, K)

    put(schedule.a_slice(1), _draw(laws.p_T.probabilities, laws._cdf_T, rng), T)
    filled = T
    for i in range(2, k + 1):
        prefix = x[:filled]
        if flags.flags[i - 1]:
            law, cdf = laws.p_T.probabilities, laws._cdf_T
        else:
            law, cdf = laws.residual(prefix)
        put(schedule.a_slice(i), _draw(law, cdf, rng), T)
        if tau:
            a = x[schedule.a_slice(i)]
            law, cdf = laws.bridge(prefix, a)
            put(schedule.b_slice(i - 1), _draw(law, cdf, rng), tau)
        filled = schedule.a_slice(i).stop
    if tau:
        law, cdf = laws.tail(x[:filled])
        put(schedule.b_slice(k), _draw(law, cdf, rng), tau)
    return x


def exact_simulated_law(
    source: MarkovSource,
    schedule: SlotSchedule,
    flags: SlotFlags | None = None,
    lam: float | None = None,
    cap: int | None = None,
) -> CylinderLaw:
    """Law of the simulator's output, computed by exact enumeration.

    With ``flags=None`` the flags are averaged out, and the result should
    equal the source's own law of X_1^n.  With fixed ``flags`` the result
    is the conditional law given those flags.
    """
    K, T, tau, k = source.n_symbols, schedule.T, schedule.tau, schedule.k
    _check_cap(K**schedule.n, cap)
    if lam is None:
        lam = flags.lam if flags is not None else _source_lambda(source, tau)
    laws = SlotLaws(source, schedule, lam)
    dist = {decode(c, T, K): p for c, p in enumerate(laws.p_T.probabilities) if p > 0}
    for i in range(2, k + 1):
        good = None if flags is None else bool(flags.flags[i - 1])
        nxt: dict[tuple[int, ...], float] = {}
        for prefix, p in dist.items():
            a_law = laws.a_law(prefix, good)
            for ca in np.flatnonzero(a_law > 0):
                a = decode(int(ca), T, K)
                if tau:
                    b_law = laws.bridge(prefix, a)[0]
                    for cb in np.flatnonzero(b_law > 0):
                        word = prefix + decode(int(cb), tau, K) + a
                        nxt[word] = nxt.get(word, 0.0) + p * a_law[ca] * b_law[cb]
                else:
                    word = prefix + a
                    nxt[word] = nxt.get(word, 0.0) + p * a_law[ca]
        dist = nxt
    probs = np.zeros(K**schedule.n)
    for prefix, p in dist.items():
        if tau:
            t_law = laws.tail(prefix)[0]
            base = encode(prefix, K) * K**tau
            probs[base : base + K**tau] += p * t_law
        else:
            probs[encode(prefix, K)] += p
    return CylinderLaw(schedule.n, K, probs)


def generate_codebook(
    source: MarkovSource,
    schedule: SlotSchedule,
    flags: SlotFlags,
    M: int,
    seed: int,
    laws: SlotLaws | None = None,
) -> np.ndarray:
    """M independent simulated sequences sharing one flag vector, shape (M, n)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    laws = _check_flags(source, schedule, flags, laws)
    return np.stack(
        [simulate_sequence(source, schedule, flags, seed, codeword=c, laws=laws) for c in range(M)]
    )


def codebook_header(schedule: SlotSchedule, flags: SlotFlags, seed: int) -> str:
    bits = "".join(str(c) for c in flags.flags)
    return (
        f"# T={schedule.T} tau={schedule.tau} k={schedule.k} "
        f"lambda={flags.lam!r} seed={seed} flags={bits}"
    )


def write_codebook(
    path: str | Path,
    source: MarkovSource,
    schedule: SlotSchedule,
    flags: SlotFlags,
    seed: int,
    codebook: np.ndarray,
) -> None:
    lines = [codebook_header(schedule, flags, seed)]
    lines += [" ".join(source.states[s] for s in row) for row in np.atleast_2d(codebook)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_codebook(path: str | Path, source: MarkovSource):
    """Inverse of :func:`write_codebook`: (header fields, codebook array)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = dict(item.split("=", 1) for item in text[0].lstrip("# ").split())
    rows = [[source.index(s) for s in line.split()] for line in text[1:] if line.strip()]
    return header, np.array(rows, dtype=np.int64)
