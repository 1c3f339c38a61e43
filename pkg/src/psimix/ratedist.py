"""Distortion measures and rate-distortion functions of block sources.

The block (vector i.i.d.) source draws T-words i.i.d. from a window law
and measures distortion with the additive extension ``d_T``.  Its
rate-distortion function is computed by Blahut-Arimoto alternating
minimisation at fixed slope, with bisection on the slope to reach a
target distortion.  Internally everything is in nats; reported rates are
in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DInfeasible, LengthMismatch, NotConverged, ZeroDistortionAmbiguous
from .process import CylinderLaw, MarkovSource, _check_cap, all_words, marginal_PT

LN2 = math.log(2.0)
DEFAULT_TOL = 1e-7
MAX_ITER = 100_000
MAX_BISECT = 200


def entropy_bits(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def binary_entropy(p: float) -> float:
    return entropy_bits([p, 1.0 - p])


@dataclass(frozen=True, eq=False)
class DistortionMeasure:
    """Per-letter distortion table d(x, y) >= 0 with d(x, x) = 0."""

    table: np.ndarray

    def __post_init__(self):
        d = np.array(self.table, dtype=float)
        if d.ndim != 2 or not np.all(np.isfinite(d)) or d.min() < 0:
            raise ValueError("distortion table must be a finite nonnegative matrix")
        n = min(d.shape)
        if np.any(d[np.arange(n), np.arange(n)] != 0):
            raise ValueError("d(x, x) must be 0")
        d.flags.writeable = False
        object.__setattr__(self, "table", d)

    @classmethod
    def hamming(cls, n_symbols: int) -> "DistortionMeasure":
        return cls(1.0 - np.eye(n_symbols))

    @property
    def unambiguous(self) -> bool:
        """True when only x = y has zero distortion."""
        d = self.table
        off = ~np.eye(*d.shape, dtype=bool)
        return bool(np.all(d[off] > 0))

    def block(self, T: int, cap: int | None = None) -> np.ndarray:
        """The matrix d_T(s, t) over all pairs of T-words."""
        nx, ny = self.table.shape
        _check_cap(nx**T * ny**T, cap)
        S, U = all_words(T, nx), all_words(T, ny)
        out = np.zeros((nx**T, ny**T))
        for i in range(T):
            out += self.table[S[:, i][:, None], U[:, i][None, :]]
        return out


def block_distortion(d: DistortionMeasure, s: Sequence[int], t: Sequence[int]) -> float:
    if len(s) != len(t):
        raise LengthMismatch(f"words of length {len(s)} and {len(t)}")
    return float(sum(d.table[a, b] for a, b in zip(s, t)))


@dataclass(frozen=True, eq=False)
class RDPoint:
    """One point of a rate-distortion function.

    ``D`` and ``R`` are per block when ``per_letter`` is false, otherwise
    per letter.  ``slope`` is dR/dD in bits per unit distortion and ``W``
    is the test channel reaching the point.
    """

    D: float
    R: float
    W: np.ndarray | None
    slope: float
    iterations: int
    T: int = 1
    per_letter: bool = False
    gap: float = 0.0


@dataclass
class _Fixed:
    beta: float
    q: np.ndarray
    W: np.ndarray
    D: float
    I: float
    lower_offset: float  # R(D) >= lower_offset - beta * D for every D
    iterations: int


def _mutual_information(p, W) -> float:
    q = p @ W
    with np.errstate(divide="ignore", invalid="ignore"):
        # entries whose output mass underflowed contribute nothing
        terms = np.where((W > 0) & (q[None, :] > 0), W * np.log(W / q[None, :]), 0.0)
    return float(p @ terms.sum(axis=1))


def _ba_fixed_slope(p, d, beta, q0, tol, max_iter) -> _Fixed:
    """Blahut-Arimoto at slope -beta.

    Stops when the upper/lower bound gap drops below ``tol`` or after
    ``max_iter`` steps.  Either way the returned channel gives an
    achievable (D, I) pair and ``lower_offset`` a valid lower line, so
    callers certify accuracy themselves.
    """
    dmin = d.min(axis=1, keepdims=True)
    A = np.exp(-beta * (d - dmin))  # row rescaling leaves W and c unchanged
    # keep every output alive; a zero in a warm start is never revived
    q = 0.999 * q0 + 0.001 / q0.size
    it = 0
    while it < max_iter:
        it += 1
        z = A @ q
        c = A.T @ (p / z)
        logc = np.log(np.maximum(c, 1e-300))
        q_next = q * c
        gap = float(logc.max() - q_next @ logc)
        q = q_next / q_next.sum()
        q[q < 1e-280] = 0.0  # subnormal arithmetic is very slow
        if gap < tol:
            break
    z = A @ q
    W = A * q[None, :] / z[:, None]
    D = float(p @ (W * d).sum(axis=1))
    c = A.T @ (p / z)
    # log sum_y q e^{-beta d} = log z - beta * dmin
    lower_offset = float(-(p @ (np.log(z) - beta * dmin[:, 0])) - np.log(c.max()))
    return _Fixed(beta, q, W, D, _mutual_information(p, W), lower_offset, it)


STEP_BUDGET = 5000


def blahut_arimoto(
    source_law,
    d_T,
    target_D: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
) -> RDPoint:
    """R(target_D) of an i.i.d. source with law ``source_law`` under ``d_T``.

    Bisects the slope until two fixed-slope solutions bracket the target.
    The returned test channel is their mixture, which meets the target
    distortion exactly; its rate is certified to lie within ``tol`` nats
    of the rate-distortion function by the Blahut lower bound.
    """
    p = np.asarray(source_law.probabilities if isinstance(source_law, CylinderLaw) else source_law, float)
    d = np.asarray(d_T, dtype=float)
    if target_D < 0:
        raise DInfeasible("target distortion must be nonnegative")
    keep = p > 0
    p_s, d_s = p[keep], d[keep]
    d_min = float(p_s @ d_s.min(axis=1))
    if target_D < d_min - 1e-12:
        raise DInfeasible(f"target {target_D} below minimum achievable distortion {d_min}")
    ny = d.shape[1]
    col = p_s @ d_s
    y_star = int(np.argmin(col))
    d_max = float(col[y_star])

    def full_W(Ws):
        W = np.zeros((p.size, ny))
        W[keep] = Ws
        W[~keep] = np.eye(ny)[y_star]
        return W

    if target_D >= d_max:
        W = np.zeros((p_s.size, ny))
        W[:, y_star] = 1.0
        return RDPoint(target_D, 0.0, full_W(W), 0.0, 0)
    if target_D <= d_min + 1e-15:
        zero = d_s == d_s.min(axis=1, keepdims=True)
        if np.any(zero.sum(axis=1) > 1):
            raise ZeroDistortionAmbiguous("several reproductions reach the minimum distortion")
        W = zero.astype(float)
        return RDPoint(target_D, _mutual_information(p_s, W) / LN2, full_W(W), -math.inf, 0)

    inner = tol / 10
    budget = min(STEP_BUDGET, max_iter)
    W0 = np.zeros((p_s.size, ny))
    W0[:, y_star] = 1.0
    pool = [_Fixed(0.0, np.full(ny, 1.0 / ny), W0, d_max, 0.0, 0.0, 0)]
    total = 0
    lower = 0.0

    def run(beta, q0, steps):
        nonlocal total, lower
        pt = _ba_fixed_slope(p_s, d_s, beta, q0, inner, steps)
        total += pt.iterations
        lower = max(lower, pt.lower_offset - pt.beta * target_D)
        pool.append(pt)
        return pt

    def best_chord():
        # every iterate is an achievable (D, I) pair, so any chord across
        # the target is an upper bound on R(target)
        below = [pt for pt in pool if pt.D <= target_D]
        above = [pt for pt in pool if pt.D > target_D]
        best = (math.inf, None, None, 1.0)
        for h in below:
            for l in above:
                theta = (l.D - target_D) / (l.D - h.D)
                val = theta * h.I + (1 - theta) * l.I
                if val < best[0]:
                    best = (val, h, l, theta)
        return best

    def bracket():
        b_lo = max((pt for pt in pool if pt.D > target_D), key=lambda pt: pt.beta)
        b_hi = min((pt for pt in pool if pt.D <= target_D), key=lambda pt: pt.beta)
        return b_lo, b_hi

    beta = 1.0
    while run(beta, pool[-1].q, budget).D > target_D:
        beta *= 2.0
        if beta * float(d_s.max()) > 600.0 or not np.isfinite(pool[-1].D):
            raise NotConverged("could not bracket the target distortion")

    polished = set()
    for _ in range(MAX_BISECT):
        upper, h, l, theta = best_chord()
        if upper - lower < tol:
            break
        b_lo, b_hi = bracket()
        if b_lo.beta < b_hi.beta and b_hi.beta - b_lo.beta > 1e-9 * b_hi.beta:
            run(0.5 * (b_lo.beta + b_hi.beta), b_hi.q, budget)
            continue
        # slopes have met; spend the full budget on the bracketing points
        todo = [pt for pt in (b_lo, b_hi) if pt.beta > 0 and pt.beta not in polished]
        if not todo:
            raise NotConverged(f"rate gap {upper - lower:.3e} nats exceeds tol {tol}")
        for pt in todo:
            polished.add(pt.beta)
            run(pt.beta, pt.q, max_iter)
    else:
        raise NotConverged("slope bisection did not close the rate gap")
    W = theta * h.W + (1 - theta) * l.W
    R = _mutual_information(p_s, W)
    return RDPoint(
        target_D, R / LN2, full_W(W), -h.beta / LN2, total, gap=max(R - lower, 0.0) / LN2
    )


def _measure(source: MarkovSource, d: DistortionMeasure | None) -> DistortionMeasure:
    return DistortionMeasure.hamming(source.n_symbols) if d is None else d


def rd_vector_source(
    source: MarkovSource,
    T: int,
    D_per_letter: float,
    d: DistortionMeasure | None = None,
    tol: float = DEFAULT_TOL,
    cap: int | None = None,
) -> RDPoint:
    """(1/T) R_{X^T}(T D) in bits per letter, on the window law of the source."""
    d = _measure(source, d)
    law = marginal_PT(source, T, cap)
    if D_per_letter == 0:
        if not d.unambiguous:
            raise ZeroDistortionAmbiguous("d(x, y) = 0 for some x != y")
        n = law.probabilities.size
        return RDPoint(0.0, entropy_bits(law.probabilities) / T, np.eye(n), -math.inf, 0, T, True)
    pt = blahut_arimoto(law, d.block(T, cap), T * D_per_letter, tol)
    return RDPoint(D_per_letter, pt.R / T, pt.W, pt.slope, pt.iterations, T, True, pt.gap / T)


def rd_block(source: MarkovSource, T: int, D_block: float, d=None, tol=DEFAULT_TOL, cap=None) -> float:
    """R_{X^T}(D_block) in bits per T-block."""
    return rd_vector_source(source, T, D_block / T, d, tol, cap).R * T


def rd_limit_estimate(
    source: MarkovSource,
    D: float,
    T_list: Sequence[int],
    d: DistortionMeasure | None = None,
    tol: float = DEFAULT_TOL,
) -> list[RDPoint]:
    """Finite-T terms (1/T) R_{X^T}(T D); the rate-distortion function is their limit."""
    return [rd_vector_source(source, T, D, d, tol) for T in T_list]


def rd_curve(source_law, d_T, n_points: int, tol: float = DEFAULT_TOL) -> list[RDPoint]:
    """R(D) on an even grid of n_points distortions from 0 to D_max."""
    p = np.asarray(source_law.probabilities if isinstance(source_law, CylinderLaw) else source_law, float)
    d = np.asarray(d_T, dtype=float)
    keep = p > 0
    d_max = float((p[keep] @ d[keep]).min())
    d_min = float(p[keep] @ d[keep].min(axis=1))
    return [blahut_arimoto(p, d, D, tol) for D in np.linspace(d_min, d_max, n_points)]


def rd_rows(points: Sequence[RDPoint]):
    """CSV rows (T, D_per_letter, R_bits_per_letter, slope, iterations)."""
    rows = []
    for pt in points:
        scale = 1 if pt.per_letter else pt.T
        rows.append((pt.T, pt.D / scale, pt.R / scale, pt.slope, pt.iterations))
    return rows
