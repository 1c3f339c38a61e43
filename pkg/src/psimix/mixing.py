"""psi-mixing coefficients and the mixture decomposition of conditional laws.

For a stationary first-order chain with stationary law ``pi`` and ``k``-step
kernel ``P^k``, every ratio ``P(A, B) / (P(A) P(B))`` between a past event
``A`` (ending at time ``t``) and a future event ``B`` (starting at time
``t + tau + 1``) is a convex combination of the singleton ratios
``P^{tau+1}(i, j) / pi(j)``, so

    psi(tau) = max_{i, j} |P^{tau+1}(i, j) / pi(j) - 1|.

:func:`psi_brute_force` checks this against an exhaustive search over
finite-horizon events.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapExceeded, NotAperiodic, NotIrreducible, PsimixError
from .process import (
    CylinderLaw,
    MarkovSource,
    _check_cap,
    all_words,
    block_process,
    check_irreducible_aperiodic,
    conditional_law,
    cylinder_probability,
    marginal_PT,
)

ATOM_CAP = 12
RESIDUAL_CLAMP = 1e-12


@dataclass(frozen=True)
class MixingProfile:
    tau_max: int
    lambdas: tuple[float, ...]

    def __getitem__(self, tau: int) -> float:
        return self.lambdas[tau]

    def rows(self):
        return [(tau, lam) for tau, lam in enumerate(self.lambdas)]


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    t: int
    tau: int
    T: int
    prefix: tuple[int, ...]
    conditional: CylinderLaw | None
    p_T: CylinderLaw
    residual: CylinderLaw | None
    lam: float
    max_identity_error: float
    skipped: bool = False


@dataclass(frozen=True)
class CesaroCheck:
    average: float
    target: float
    gap: float
    bound: float | None = None


def _support_kernel(source: MarkovSource) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and stationary law restricted to states with positive mass."""
    if source.order != 1:
        raise ValueError(
            "closed-form psi needs a first-order chain; block an order-m source first"
        )
    keep = np.flatnonzero(source.stationary > 0)
    P = source.transition[np.ix_(keep, keep)]
    report = check_irreducible_aperiodic(P)
    if not report.irreducible:
        raise NotIrreducible("chain is not irreducible on its stationary support")
    if not report.aperiodic:
        raise NotAperiodic(f"chain has period {report.period}")
    return P, source.stationary[keep]


PSI_SNAP = 1e-13


def _psi_from_power(Pk: np.ndarray, pi: np.ndarray) -> float:
    psi = float(np.max(np.abs(Pk / pi[None, :] - 1.0)))
    return 0.0 if psi < PSI_SNAP else psi  # independent rows leave only roundoff


def psi_markov(source: MarkovSource, tau: int) -> float:
    """psi(tau) of a stationary, irreducible, aperiodic first-order chain."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    P, pi = _support_kernel(source)
    return _psi_from_power(np.linalg.matrix_power(P, tau + 1), pi)


def lambda_profile(source: MarkovSource, tau_max: int) -> MixingProfile:
    """The mixing sequence lambda_tau = psi(tau) for tau = 0..tau_max."""
    P, pi = _support_kernel(source)
    lambdas = []
    Pk = P.copy()
    for _ in range(tau_max + 1):
        lambdas.append(_psi_from_power(Pk, pi))
        Pk = Pk @ P
    return MixingProfile(tau_max, tuple(lambdas))


def window_joint(source: MarkovSource, t: int, tau: int, T: int, cap=None) -> np.ndarray:
    """Matrix of P(X_1^t = a, X_{t+tau+1}^{t+tau+T} = b), rows a, columns b."""
    K = source.n_symbols
    _check_cap(K**t * K**T, cap)
    J = np.zeros((K**t, K**T))
    for code, a in enumerate(all_words(t, K)):
        pa = cylinder_probability(source, a)
        if pa > 0:
            J[code] = pa * conditional_law(source, a, tau, T, cap).probabilities
    return J


def _subsets(n: int) -> np.ndarray:
    """Indicator rows of every nonempty subset of n atoms."""
    codes = np.arange(1, 2**n)
    return ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(float)


def psi_brute_force(
    source: MarkovSource,
    tau: int,
    t: int,
    T: int,
    atom_cap: int = ATOM_CAP,
    chunk: int = 512,
) -> float:
    """Exhaustive sup of |P(A, B) / (P(A) P(B)) - 1| over A in X^t, B in X^T.

    The windows are X_1^t and X_{t+tau+1}^{t+tau+T}.  Only atoms with
    positive probability enter the enumeration; atoms of probability zero
    never change any of the three probabilities.
    """
    K = source.n_symbols
    if K**t > atom_cap or K**T > atom_cap:
        raise CapExceeded(f"{K ** t} x {K ** T} atoms exceed the cap of {atom_cap}")
    J = window_joint(source, t, tau, T)
    pa_all = J.sum(axis=1)
    pb_all = marginal_PT(source, T).probabilities
    rows, cols = np.flatnonzero(pa_all > 0), np.flatnonzero(pb_all > 0)
    J = J[np.ix_(rows, cols)]
    SB = _subsets(len(cols))
    PB = SB @ pb_all[cols]
    JB = J @ SB.T
    SA = _subsets(len(rows))
    PA = SA @ pa_all[rows]
    best = 0.0
    for start in range(0, SA.shape[0], chunk):
        sl = slice(start, start + chunk)
        joint = SA[sl] @ JB
        ratio = joint / (PA[sl, None] * PB[None, :])
        best = max(best, float(np.max(np.abs(ratio - 1.0))))
    return best


def residual_distribution(
    source: MarkovSource,
    prefix: Sequence[int],
    tau: int,
    T: int,
    lam: float | None = None,
) -> CylinderLaw:
    """Residual law P' with conditional = (1 - lam) P_T + lam P'.

    ``lam`` defaults to psi(tau).  When ``lam`` is 0 the residual is
    arbitrary and P_T is returned.
    """
    if lam is None:
        lam = psi_markov(source, tau)
    cond = conditional_law(source, prefix, tau, T)
    p_T = marginal_PT(source, T)
    return _residual(cond, p_T, lam)


def _residual(cond: CylinderLaw, p_T: CylinderLaw, lam: float) -> CylinderLaw:
    if lam == 0.0:
        return p_T
    r = (cond.probabilities - (1.0 - lam) * p_T.probabilities) / lam
    if r.min() < -RESIDUAL_CLAMP:
        raise PsimixError(
            f"residual has mass {r.min():.3e} < 0; lambda={lam} is below the mixing coefficient"
        )
    r = np.clip(r, 0.0, None)
    return CylinderLaw(cond.horizon, cond.n_symbols, r / r.sum())


def verify_decomposition(
    source: MarkovSource, t: int, tau: int, T: int, lam: float | None = None, cap=None
) -> list[DecompositionReport]:
    """Check the mixture identity for every prefix in X^t."""
    K = source.n_symbols
    _check_cap(K**t, cap)
    if lam is None:
        lam = psi_markov(source, tau)
    p_T = marginal_PT(source, T, cap)
    reports = []
    for a in all_words(t, K):
        prefix = tuple(int(x) for x in a)
        if cylinder_probability(source, prefix) <= 0:
            reports.append(
                DecompositionReport(t, tau, T, prefix, None, p_T, None, lam, 0.0, skipped=True)
            )
            continue
        cond = conditional_law(source, prefix, tau, T, cap)
        res = _residual(cond, p_T, lam)
        recon = (1.0 - lam) * p_T.probabilities + lam * res.probabilities
        err = float(np.max(np.abs(recon - cond.probabilities)))
        reports.append(DecompositionReport(t, tau, T, prefix, cond, p_T, res, lam, err))
    return reports


def decomposition_rows(reports: Sequence[DecompositionReport], source: MarkovSource):
    return [
        (r.t, r.tau, r.T, source.label(r.prefix, " "), "skipped" if r.skipped else r.max_identity_error)
        for r in reports
    ]


def ergodic_cesaro_check(
    source: MarkovSource, a: Sequence[int], b: Sequence[int], N: int
) -> CesaroCheck:
    """Cesaro average of P(X_1^t = a, X_{tau+1}^{tau+T} = b) over tau < N.

    Overlapping windows (tau < t) are scored as the cylinder probability of
    the merged word, or 0 when ``a`` and ``b`` disagree on the overlap.
    For first-order mixing chains ``bound`` is the finite-N envelope
    ``(|C - t P(a) P(b)| + P(a) P(b) sum_{s < N-t} psi(s)) / N``, with C
    the overlapping-window mass.
    """
    a, b = tuple(a), tuple(b)
    t, T = len(a), len(b)
    pa = cylinder_probability(source, a)
    pb = cylinder_probability(source, b)
    target = pa * pb
    if pa == 0.0:
        return CesaroCheck(0.0, 0.0, 0.0, 0.0)
    total, overlap_mass = 0.0, 0.0
    for tau in range(N):
        if tau < t:
            length = max(t, tau + T)
            merged = [None] * length
            merged[:t] = a
            clash = False
            for j, s in enumerate(b):
                if merged[tau + j] is not None and merged[tau + j] != s:
                    clash = True
                    break
                merged[tau + j] = s
            p = 0.0 if clash else cylinder_probability(source, merged)
            overlap_mass += p
        else:
            p = pa * conditional_law(source, a, tau - t, T)[b]
        total += p
    average = total / N
    bound = None
    if source.order == 1:
        try:
            lams = lambda_profile(source, max(N - t - 1, 0)).lambdas if N > t else ()
        except (NotIrreducible, NotAperiodic):
            lams = None
        if lams is not None:
            n_far = max(N - t, 0)
            bound = (abs(overlap_mass - min(t, N) * target) + target * sum(lams[:n_far])) / N
    return CesaroCheck(average, target, abs(average - target), bound)


@dataclass(frozen=True)
class BlockedPsi:
    psi_parent: float
    psi_block: float


def blocked_psi_comparison(source: MarkovSource, L: int, tau: int) -> BlockedPsi:
    """psi of the parent chain against psi of its L-block chain at the same tau."""
    return BlockedPsi(psi_markov(source, tau), psi_markov(block_process(source, L), tau))
