"""Monte Carlo random coding over a memoryless channel.

Codewords are independent runs of the slot simulator sharing one flag
vector.  The decoder looks only at the first ``N`` good A-slots and
accepts the unique codeword whose summed block distortion to the channel
output is at most ``N * D_slot``.  An alternative decoder picks the
codeword of least distortion.

When the codebook has ``M = 2^floor(nR)`` entries the decoder outcome
depends on the competitors only through whether any of them passes the
test.  Good slots of a codeword are i.i.d. draws from the window law, so
given the channel output the probability ``q`` that one competitor
passes is an exact convolution of per-slot distortion laws, and the
probability that none of ``M - 1`` passes is ``(1 - q)^(M - 1)``.  Large
codebooks are simulated this way; small ones are drawn explicitly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .bounds import good_slot_count
from .errors import ConfigError, ConfigMismatch
from .mixing import psi_markov
from .process import (
    MarkovSource,
    all_words,
    chain_from_dict,
    encode,
    load_chain,
    marginal_PT,
    sample_path,
)
from .ratedist import DistortionMeasure
from .simulate import (
    SlotFlags,
    SlotLaws,
    SlotSchedule,
    _rng,
    draw_flags,
    generate_codebook,
    simulate_sequence,
)

ROW_TOL = 1e-12
BATCH = 100
EXPLICIT_LIMIT = 1024
LATTICE_DENOMINATOR = 10_000
TRIAL_STREAM = 2

OUTCOMES = ("correct", "erasure", "confusion")


@dataclass(frozen=True, eq=False)
class MemorylessChannel:
    """Per-letter transition table c(y | x), applied independently per symbol."""

    table: np.ndarray

    def __post_init__(self):
        c = np.array(self.table, dtype=float)
        if c.ndim != 2 or c.min() < 0 or np.any(np.abs(c.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("channel rows must be probability vectors")
        c.flags.writeable = False
        object.__setattr__(self, "table", c)
        object.__setattr__(self, "_cdf", np.cumsum(c, axis=1))

    @property
    def n_inputs(self) -> int:
        return self.table.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.table.shape[1]

    def apply(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        u = rng.random(x.shape)
        y = (u[..., None] >= self._cdf[x]).sum(axis=-1)
        return np.minimum(y, self.n_outputs - 1)


def bsc(q: float) -> MemorylessChannel:
    return MemorylessChannel([[1 - q, q], [q, 1 - q]])


def noiseless(n_symbols: int) -> MemorylessChannel:
    return MemorylessChannel(np.eye(n_symbols))


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + level / 2))
    p = successes / trials
    den = 1 + z * z / trials
    mid = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass(frozen=True)
class DirectCheck:
    omega: float
    excess: int
    trials: int
    ci_low: float
    ci_high: float


def direct_communication_check(
    source: MarkovSource,
    channel: MemorylessChannel,
    d: DistortionMeasure,
    D: float,
    n: int,
    trials: int,
    seed: int,
) -> DirectCheck:
    """Empirical frequency of (1/n) d^n(X^n, Y^n) > D."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    rng = _rng(seed, TRIAL_STREAM)
    excess = 0
    for start in range(0, trials, BATCH):
        size = min(BATCH, trials - start)
        x = sample_path(source, n, rng, size)
        y = channel.apply(x, rng)
        dist = d.table[x, y].sum(axis=1) / n
        excess += int(np.count_nonzero(dist > D + 1e-12))
    lo, hi = wilson_interval(excess, trials)
    return DirectCheck(excess / trials, excess, trials, lo, hi)


def _lattice(table: np.ndarray) -> tuple[np.ndarray, Fraction]:
    """Integer distortion table and unit with table = unit * integers."""
    fracs = [Fraction(float(v)).limit_denominator(LATTICE_DENOMINATOR) for v in table.ravel()]
    if any(abs(float(f) - v) > 1e-12 for f, v in zip(fracs, table.ravel())):
        raise ConfigError("distortion values must be rationals with small denominators")
    den = math.lcm(*(f.denominator for f in fracs))
    nums = [f.numerator * (den // f.denominator) for f in fracs]
    g = math.gcd(*nums) or 1
    unit = Fraction(g, den)
    ints = np.array([v // g for v in nums], dtype=np.int64).reshape(table.shape)
    return ints, unit


class SlotDecoder:
    """Good-slot distortion tests for one (source, schedule, flags, threshold).

    ``threshold`` is the integer lattice bound on the summed block
    distortion over the first ``N`` good slots.
    """

    def __init__(self, source, d, schedule, flags, N, D_slot, cap=None):
        self.schedule, self.flags, self.N = schedule, flags, N
        good = flags.good_slots()
        self.enough = len(good) >= N
        self.slots = good[:N]
        ints, unit = _lattice(d.table)
        self.ints, self.unit = ints, unit
        self.threshold = math.floor(N * D_slot / float(unit) + 1e-9)
        self.K = source.n_symbols
        self.p_T = marginal_PT(source, schedule.T, cap).probabilities
        self._words = None
        self._pmf: dict[int, np.ndarray] = {}

    def slot_matrix(self, x: np.ndarray) -> np.ndarray:
        """The good-slot symbols of one or more sequences, shape (..., N, T)."""
        x = np.asarray(x)
        return np.stack([x[..., self.schedule.a_slice(i)] for i in self.slots], axis=-2)

    def distortion(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Integer summed good-slot distortion between codewords ``x`` and output ``y``."""
        xs, ys = self.slot_matrix(x), self.slot_matrix(y)
        return self.ints[xs, ys].sum(axis=(-1, -2))

    def _slot_pmf(self, y_word: np.ndarray) -> np.ndarray:
        code = encode(y_word, self.K)
        if code not in self._pmf:
            if self._words is None:
                self._words = all_words(self.schedule.T, self.K)
            dist = self.ints[self._words, np.asarray(y_word)[None, :]].sum(axis=1)
            self._pmf[code] = np.bincount(dist, weights=self.p_T)
        return self._pmf[code]

    def log_pass_probability(self, y: np.ndarray, bound: int) -> float:
        """log P(a fresh codeword's summed distortion to ``y`` is <= bound)."""
        if bound < 0:
            return -math.inf
        acc = np.array([1.0])
        log_scale = 0.0
        for row in self.slot_matrix(y):
            acc = np.convolve(acc, self._slot_pmf(row))[: bound + 1]
            top = acc.max()
            if top == 0.0:
                return -math.inf
            acc /= top
            log_scale += math.log(top)
        return log_scale + math.log(acc.sum())


def _log_none_pass(log_others: float, log_q: float) -> float:
    """log of (1 - q)^(M - 1) given log(M - 1) and log q."""
    if log_q == -math.inf or log_others == -math.inf:
        return 0.0
    if log_q >= 0.0:
        return -math.inf
    # (M - 1) * log1p(-q), kept in logs since M may exceed float range
    return -math.exp(log_others + math.log(-math.log1p(-math.exp(log_q))))


def _log_others(log2_M: int) -> float:
    """log(M - 1) for M = 2^log2_M."""
    if log2_M == 0:
        return -math.inf
    return log2_M * math.log(2.0) + math.log1p(-(2.0 ** -log2_M))


def _outcome(own_ok: bool, any_other: bool) -> str:
    if own_ok and not any_other:
        return "correct"
    if not own_ok and not any_other:
        return "erasure"
    return "confusion"


def run_trial(
    source: MarkovSource,
    channel: MemorylessChannel,
    schedule: SlotSchedule,
    flags: SlotFlags,
    codebook: np.ndarray,
    message: int,
    D_slot: float,
    seed: int,
    d: DistortionMeasure | None = None,
    N: int | None = None,
    decoder: str = "threshold",
) -> str:
    """Send ``codebook[message]`` through ``channel`` and decode.

    The decoder shares ``flags`` with the encoder.  Returns one of
    ``correct``, ``erasure`` (nothing accepted or too few good slots) or
    ``confusion`` (a wrong or ambiguous decision).
    """
    codebook = np.atleast_2d(codebook)
    if codebook.shape[1] != schedule.n or flags.k != schedule.k:
        raise ConfigMismatch("codebook, flags and schedule disagree on block length")
    if channel.n_inputs != source.n_symbols:
        raise ConfigMismatch("channel input alphabet differs from the source alphabet")
    if not 0 <= message < codebook.shape[0]:
        raise ValueError("message index out of range")
    d = DistortionMeasure.hamming(source.n_symbols) if d is None else d
    if N is None:
        N = good_slot_count(schedule.k, flags.lam, 0.0).N
    dec = SlotDecoder(source, d, schedule, flags, N, D_slot)
    if not dec.enough:
        return "erasure"
    y = channel.apply(codebook[message], _rng(seed, TRIAL_STREAM))
    dist = dec.distortion(codebook, y)
    own = dist[message]
    others = np.delete(dist, message)
    if decoder == "min_distortion":
        return "correct" if np.all(others > own) else "confusion"
    return _outcome(own <= dec.threshold, bool(np.any(others <= dec.threshold)))


@dataclass(frozen=True)
class CodesimConfig:
    source: MarkovSource
    channel: MemorylessChannel
    T: int
    tau: int
    beta: float
    D: float
    rate: float
    k_list: tuple[int, ...]
    trials: int
    seed: int
    d: DistortionMeasure
    decoder: str = "threshold"
    raw: dict = field(default_factory=dict, compare=False)


def _channel_from(raw) -> MemorylessChannel:
    if isinstance(raw, Mapping):
        kind = raw.get("type")
        if kind == "bsc":
            return bsc(float(raw["q"]))
        if kind == "noiseless":
            return noiseless(int(raw["n_symbols"]))
        if "table" in raw:
            return MemorylessChannel(raw["table"])
        raise ConfigError(f"unknown channel {raw!r}")
    return MemorylessChannel(raw)


def config_from_dict(raw: Mapping, base_dir: str | Path = ".") -> CodesimConfig:
    try:
        src = raw["source"]
        if isinstance(src, str):
            source = load_chain(Path(base_dir) / src)
        else:
            source = chain_from_dict(src)
        channel = _channel_from(raw["channel"])
        d = raw.get("distortion")
        d = DistortionMeasure.hamming(source.n_symbols) if d is None else DistortionMeasure(d)
        decoder = raw.get("decoder", "threshold")
        if decoder not in ("threshold", "min_distortion"):
            raise ConfigError(f"unknown decoder {decoder!r}")
        return CodesimConfig(
            source, channel, int(raw["T"]), int(raw["tau"]), float(raw["beta"]),
            float(raw["D"]), float(raw["rate"]), tuple(int(k) for k in raw["k_list"]),
            int(raw["trials"]), int(raw["seed"]), d, decoder, dict(raw),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad experiment config: {e}") from e


def load_config(path: str | Path) -> CodesimConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read experiment config {path}: {e}") from e
    return config_from_dict(raw, Path(path).parent)


@dataclass(frozen=True)
class TrialBatch:
    """Outcome counts for one block length."""

    k: int
    n: int
    N_good: int
    M_log2: int
    trials: int
    correct: int
    erasure: int
    confusion: int
    explicit: bool

    @property
    def error_rate(self) -> float:
        return 1.0 - self.correct / self.trials

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.trials - self.correct, self.trials)

    def row(self):
        lo, hi = self.ci
        return (self.k, self.n, self.N_good, self.trials, self.correct, self.erasure,
                self.confusion, self.error_rate, lo, hi)


RESULT_COLUMNS = (
    "k", "n", "N_good", "trials", "correct", "erasure", "confusion",
    "error_rate", "ci_low", "ci_high",
)


def _batch_seed(seed: int, k: int, batch: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(k, batch)).generate_state(1)[0])


def simulate_block_length(
    cfg: CodesimConfig, k: int, explicit_limit: int = EXPLICIT_LIMIT
) -> TrialBatch:
    """Run ``cfg.trials`` coding trials at ``k`` slots.

    Flags (and, for explicit codebooks, the codebook) are redrawn every
    100 trials.  With more than ``explicit_limit`` codewords the
    competitors are handled through the exact pass probability.
    """
    if cfg.channel.n_inputs != cfg.source.n_symbols:
        raise ConfigMismatch("channel input alphabet differs from the source alphabet")
    if cfg.channel.n_outputs != cfg.d.table.shape[1]:
        raise ConfigMismatch("channel output alphabet differs from the distortion table")
    schedule = SlotSchedule(cfg.T, cfg.tau, k)
    lam = psi_markov(cfg.source, cfg.tau)
    slots = good_slot_count(k, lam, cfg.beta)
    good = 1.0 - lam - cfg.beta
    D_slot = (cfg.T + cfg.tau) * cfg.D / good
    log2_M = math.floor(schedule.n * cfg.rate + 1e-9)
    explicit = log2_M <= math.log2(explicit_limit)
    laws = SlotLaws(cfg.source, schedule, lam)
    counts = dict.fromkeys(OUTCOMES, 0)
    log_others = _log_others(log2_M)
    for b, start in enumerate(range(0, cfg.trials, BATCH)):
        size = min(BATCH, cfg.trials - start)
        bseed = _batch_seed(cfg.seed, k, b)
        flags = draw_flags(k, lam, bseed)
        dec = SlotDecoder(cfg.source, cfg.d, schedule, flags, slots.N, D_slot)
        if explicit:
            book = generate_codebook(cfg.source, schedule, flags, 2**log2_M, bseed, laws)
        for j in range(size):
            rng = _rng(bseed, TRIAL_STREAM, j)
            if not dec.enough:
                counts["erasure"] += 1
                continue
            if explicit:
                m = int(rng.integers(book.shape[0]))
                x = book[m]
            else:
                x = simulate_sequence(cfg.source, schedule, flags, bseed, codeword=j, laws=laws)
            y = cfg.channel.apply(x, rng)
            if explicit:
                dist = dec.distortion(book, y)
                own, others = dist[m], np.delete(dist, m)
                if cfg.decoder == "min_distortion":
                    outcome = "correct" if np.all(others > own) else "confusion"
                else:
                    outcome = _outcome(
                        own <= dec.threshold, bool(np.any(others <= dec.threshold))
                    )
            else:
                own = int(dec.distortion(x, y))
                bound = own if cfg.decoder == "min_distortion" else dec.threshold
                p_none = math.exp(_log_none_pass(log_others, dec.log_pass_probability(y, bound)))
                any_other = bool(rng.random() >= p_none)
                if cfg.decoder == "min_distortion":
                    outcome = "confusion" if any_other else "correct"
                else:
                    outcome = _outcome(own <= dec.threshold, any_other)
            counts[outcome] += 1
    return TrialBatch(
        k, schedule.n, slots.N, log2_M, cfg.trials,
        counts["correct"], counts["erasure"], counts["confusion"], explicit,
    )


def error_curve(cfg: CodesimConfig, k_list: Sequence[int] | None = None, **kw) -> list[TrialBatch]:
    """Error rate with Wilson intervals for each block length."""
    return [simulate_block_length(cfg, k, **kw) for k in (k_list or cfg.k_list)]
