"""Achievable-rate bound for slotted coding and its convergence terms.

A code for the block source on ``T``-slots separated by ``tau``-gaps
spends a fraction ``1 - lam - beta`` of its slots on good (i.i.d.)
blocks.  The resulting rate, in bits per channel use, is

    R_bound = (1 - lam - beta) / (T + tau) * R_T((T + tau) D')

with ``D' = D / (1 - lam - beta)`` and ``R_T`` the block rate-distortion
function of the window law.  Its distance to the per-letter limit splits
into four terms T1..T4 that telescope exactly:

    T1 = (1 - lam - beta - 1) / (T + tau) * R_T((T + tau) D')
    T2 = (1 / (T + tau) - 1 / T) * R_T((T + tau) D')
    T3 = (R_T((T + tau) D') - R_T(T D')) / T
    T4 = R_T(T D') / T - limit

The limit is not computable; the largest T in a sweep stands in for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import BadInterval, InfeasibleParameters
from .mixing import psi_markov
from .process import MarkovSource
from .ratedist import DEFAULT_TOL, DistortionMeasure, rd_block

FLOOR_TOL = 1e-9
ENVELOPE_TOL = 1e-9


def _check_fraction(lam: float, beta: float) -> float:
    if beta < 0 or lam < 0:
        raise InfeasibleParameters("lambda and beta must be nonnegative")
    good = 1.0 - lam - beta
    if good <= 0:
        raise InfeasibleParameters(f"lambda + beta = {lam + beta} >= 1")
    return good


@dataclass(frozen=True)
class GoodSlots:
    """Guaranteed number of good slots out of ``k``.

    ``N`` is ``floor((1 - lam - beta) k) + 1`` capped at ``k``; ``clamped``
    records when the cap was hit (only when ``lam = beta = 0``).
    ``ratio_ok`` checks ``N / ((T + tau) k) >= (1 - lam - beta) / (T + tau)``,
    which needs only ``N >= (1 - lam - beta) k``.
    """

    N: int
    k: int
    clamped: bool
    ratio_ok: bool


def good_slot_count(k: int, lam: float, beta: float) -> GoodSlots:
    if k < 1:
        raise ValueError("k must be >= 1")
    good = _check_fraction(lam, beta)
    # a small tolerance keeps 1 - 0.16 - 0.04 = 0.7999.. from flooring to 7
    N = math.floor(good * k + FLOOR_TOL) + 1
    clamped = N > k
    N = min(N, k)
    return GoodSlots(N, k, clamped, N >= good * k - FLOOR_TOL)


@dataclass(frozen=True)
class Terms:
    T1: float
    T2: float
    T3: float
    T4: float | None
    T1_bound: float
    T2_bound: float
    T3_bound: float

    @property
    def within(self) -> bool:
        """True when T1..T3 sit inside their envelopes."""
        return (
            abs(self.T1) <= self.T1_bound + ENVELOPE_TOL
            and abs(self.T2) <= self.T2_bound + ENVELOPE_TOL
            and abs(self.T3) <= self.T3_bound + ENVELOPE_TOL
        )


@dataclass(frozen=True)
class BoundReport:
    """One evaluation of the slotted achievable rate.

    Rates are in bits: ``R_bound`` per channel use, ``rd_block`` per
    T-block.  ``proxy`` is the finite-T stand-in for the limit and
    ``gap_bound`` is ``(lam + beta) log|X| + |T2| + |T3| + |T4|``.
    """

    T: int
    tau: int
    beta: float
    D: float
    lam: float
    feasible: bool = True
    D_prime: float = math.nan
    R_bound: float = math.nan
    rd_block: float = math.nan
    terms: Terms | None = None
    proxy: float | None = None
    proxy_T: int | None = None
    gap_bound: float = math.nan
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def gap(self) -> float:
        if self.proxy is None:
            return math.nan
        return abs(self.R_bound - self.proxy)


class _RDCache:
    """Memoised block rate-distortion values R_T(D_block) in bits."""

    def __init__(self, source, d, tol, cap):
        self.source, self.d, self.tol, self.cap = source, d, tol, cap
        self._values: dict[tuple[int, float], float] = {}

    def __call__(self, T: int, D_block: float) -> float:
        key = (T, float(D_block))
        if key not in self._values:
            self._values[key] = rd_block(self.source, T, D_block, self.d, self.tol, self.cap)
        return self._values[key]


def _log_alphabet(source: MarkovSource) -> float:
    return math.log2(source.n_symbols)


def _evaluate(source, D, T, tau, beta, rd, proxy_T=None) -> BoundReport:
    if D < 0:
        raise ValueError("D must be >= 0")
    if T < 1 or tau < 0:
        raise ValueError("need T >= 1 and tau >= 0")
    lam = psi_markov(source, tau)
    good = _check_fraction(lam, beta)
    Dp = D / good
    R_wide = rd(T, (T + tau) * Dp)
    R_narrow = R_wide if tau == 0 or D == 0 else rd(T, T * Dp)
    R_bound = good / (T + tau) * R_wide
    log_x = _log_alphabet(source)
    proxy = None
    T4 = None
    if proxy_T is not None:
        proxy = rd(proxy_T, proxy_T * Dp) / proxy_T
        T4 = R_narrow / T - proxy
    terms = Terms(
        T1=-(lam + beta) / (T + tau) * R_wide,
        T2=(1.0 / (T + tau) - 1.0 / T) * R_wide,
        T3=(R_wide - R_narrow) / T,
        T4=T4,
        T1_bound=(lam + beta) * log_x,
        T2_bound=tau / T * log_x,
        T3_bound=tau / T * log_x,
    )
    eps = abs(terms.T2) + abs(terms.T3) + (abs(T4) if T4 is not None else 0.0)
    return BoundReport(
        T, tau, beta, D, lam, True, Dp, R_bound, R_wide, terms, proxy, proxy_T,
        (lam + beta) * log_x + eps,
    )


def achievable_rate(
    source: MarkovSource,
    D: float,
    T: int,
    tau: int,
    beta: float,
    d: DistortionMeasure | None = None,
    tol: float = DEFAULT_TOL,
    cap: int | None = None,
) -> BoundReport:
    """Slotted achievable rate in bits per channel use."""
    return _evaluate(source, D, T, tau, beta, _RDCache(source, d, tol, cap))


def term_decomposition(
    source: MarkovSource,
    D: float,
    T: int,
    tau: int,
    beta: float,
    proxy_T: int | None = None,
    d: DistortionMeasure | None = None,
    tol: float = DEFAULT_TOL,
    cap: int | None = None,
) -> BoundReport:
    """The bound together with T1..T4; T4 uses ``proxy_T`` (default ``T``)."""
    return _evaluate(
        source, D, T, tau, beta, _RDCache(source, d, tol, cap), T if proxy_T is None else proxy_T
    )


def convex_gap_bound(K: float, a: float, a_prime: float) -> float:
    """(K / a)(a' - a), bounding |f(a) - f(a')| for convex non-increasing f >= 0 with f(0) = K."""
    if not 0 < a <= a_prime:
        raise BadInterval(f"need 0 < a <= a', got a={a}, a'={a_prime}")
    if K < 0:
        raise BadInterval("K must be >= 0")
    return K / a * (a_prime - a)


def convergence_sweep(
    source: MarkovSource,
    D: float,
    T_list: Sequence[int],
    tau_list: Sequence[int],
    beta_list: Sequence[float],
    d: DistortionMeasure | None = None,
    tol: float = DEFAULT_TOL,
    cap: int | None = None,
) -> list[BoundReport]:
    """Bound reports over a parameter grid, sorted by (T, tau, beta).

    T4 and the gap in every row are measured against the largest T of the
    grid, evaluated at that row's D'.  Rows with ``lam + beta >= 1`` are
    kept with ``feasible=False`` and no numbers.
    """
    rd = _RDCache(source, d, tol, cap)
    proxy_T = max(T_list)
    rows = []
    for T in sorted(set(T_list)):
        for tau in sorted(set(tau_list)):
            for beta in sorted(set(beta_list)):
                try:
                    rows.append(_evaluate(source, D, T, tau, beta, rd, proxy_T))
                except InfeasibleParameters:
                    rows.append(BoundReport(T, tau, beta, D, psi_markov(source, tau), False))
    return rows


SWEEP_COLUMNS = (
    "T", "tau", "beta", "lambda_tau", "D", "Dprime", "R_bound_bits",
    "T1", "T2", "T3", "T4", "gap_bound", "feasible",
)


def sweep_rows(reports: Sequence[BoundReport]):
    rows = []
    for r in reports:
        if not r.feasible:
            rows.append((r.T, r.tau, r.beta, r.lam, r.D) + ("",) * 7 + (0,))
            continue
        t = r.terms
        rows.append(
            (r.T, r.tau, r.beta, r.lam, r.D, r.D_prime, r.R_bound,
             t.T1, t.T2, t.T3, "" if t.T4 is None else t.T4, r.gap_bound, 1)
        )
    return rows
