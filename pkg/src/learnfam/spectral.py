"""Spectral estimation of the sufficient statistic.

The fitted statistic is ``T(x) = beta' S(x)`` where ``beta`` maximises the
Rayleigh quotient ``beta' A beta / beta' W beta`` of the between- and
within-group matrices.  We whiten symmetrically with the eigenbasis of
``W + ridge*I``, eigendecompose the whitened between matrix and map the
leading eigenvectors back.  The same eigenvalues form the scree.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, eval_basis
from .data import Dataset
from .errors import InvalidB, RankDeficientBasis, SingularWithin
from .scan import GroupAccumulator, MomentSummary, finalize, scan

log = logging.getLogger(__name__)

RIDGE_FACTOR = 1e-8
RANK_TOL = 1e-12
TIE_TOL = 1e-10
SIGN_TOL = 1e-12


@dataclass
class FittedFamily:
    """Fitted sufficient statistic(s) over a basis.

    Component ``j`` evaluates to ``scales[j] * (coefficients[j] @ S(x) - offsets[j])``,
    which has mean 0 and variance 1 over the pooled training data.
    """

    basis: BasisSpec
    coefficients: np.ndarray  # (k, d)
    offsets: np.ndarray  # (k,)
    scales: np.ndarray  # (k,)
    eigenvalues: np.ndarray  # (d,), descending
    ridge: float = 0.0
    flags: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.coefficients.shape[0])

    def __call__(self, x, component: int = 0):
        return eval_T(self, x, component)


def rayleigh_quotient(summary: MomentSummary, beta) -> float:
    beta = np.asarray(beta, dtype=float)
    return float(beta @ summary.between @ beta / (beta @ summary.within @ beta))


def fit_sufficient_statistic(summary: MomentSummary, k: int = 1, ridge: float | None = None) -> FittedFamily:
    W, A, d = summary.within, summary.between, summary.d
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")
    if not float(np.trace(W)) > 0:
        raise SingularWithin("within-group covariance is zero")
    flags: list[str] = []
    if ridge is None:
        # default ridge is applied where the pooled covariance is the
        # identity, so the fit does not depend on how the basis is written
        R = _standardizer(summary.pooled_cov, flags)
        W0 = R.T @ W @ R
        ridge = RIDGE_FACTOR * float(np.trace(W0)) / W0.shape[0]
        P0 = _whitener(W0, ridge, k, flags)
        P = R @ P0
        ridge_space = "standardized"
    else:
        P = _whitener(W, ridge, k, flags)
        ridge_space = "basis"
    C = P.T @ A @ P
    lam, U = np.linalg.eigh(0.5 * (C + C.T))
    lam, U = lam[::-1], U[:, ::-1]
    lam = np.clip(lam, 0.0, None)
    U = _orient(U)
    U, tie = _break_ties(lam, U, k)
    if tie:
        flags.append("eigenvalue_tie")

    betas = (P @ U[:, :k]).T
    cov = summary.pooled_cov
    coefs, offs, scales = [], [], []
    for j, beta in enumerate(betas):
        var = float(beta @ cov @ beta)
        if not var > 0:
            raise SingularWithin("fitted statistic has zero pooled variance")
        sign, fallback = _sign(beta, var, summary)
        if fallback:
            flags.append(f"sign_fallback[{j}]")
        beta = sign * beta
        coefs.append(beta)
        offs.append(float(beta @ summary.grand_mean))
        scales.append(1.0 / np.sqrt(var))

    scree = np.zeros(d)
    scree[: lam.size] = lam
    return FittedFamily(
        basis=summary.basis,
        coefficients=np.array(coefs),
        offsets=np.array(offs),
        scales=np.array(scales),
        eigenvalues=scree,
        ridge=float(ridge),
        flags=tuple(flags),
        meta={"m": summary.m, "n_total": summary.n_total, "d": d, "ridge_space": ridge_space},
    )


def _standardizer(cov: np.ndarray, flags: list) -> np.ndarray:
    """Map R with R' cov R = I on the non-degenerate part of ``cov``."""
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    keep = w > RANK_TOL * max(w.max(), 0.0)
    if not keep.any():
        raise SingularWithin("pooled covariance of the basis is zero")
    if not keep.all():
        # collinear basis: work in the non-degenerate subspace
        flags.append(f"dropped_directions={int((~keep).sum())}")
        log.warning("basis is rank deficient; dropping %d direction(s)", (~keep).sum())
    return V[:, keep] / np.sqrt(w[keep])


def _whitener(W: np.ndarray, ridge: float, k: int, flags: list) -> np.ndarray:
    """P with P' (W + ridge I) P = I, restricted to informative directions."""
    w_raw, V = np.linalg.eigh(W)
    keep = w_raw > RANK_TOL * w_raw.max()
    if not keep.all():
        flags.append(f"dropped_within_directions={int((~keep).sum())}")
        log.warning("within matrix is singular; dropping %d direction(s)", (~keep).sum())
    if keep.sum() < k:
        raise RankDeficientBasis(f"only {keep.sum()} informative directions for k={k}")
    if np.any(w_raw[keep] + ridge <= 0):
        raise SingularWithin("W + ridge*I is not positive definite")
    return V[:, keep] / np.sqrt(w_raw[keep] + ridge)


def _orient(U: np.ndarray) -> np.ndarray:
    # eigh's sign is arbitrary; make the largest-magnitude entry positive
    idx = np.argmax(np.abs(U), axis=0)
    return U * np.sign(U[idx, np.arange(U.shape[1])])


def _break_ties(lam, U, k):
    """Reorder tied leading eigenvectors lexicographically (largest first)."""
    tie = False
    j = 0
    while j < min(k, lam.size):
        end = j + 1
        while end < lam.size and abs(lam[end] - lam[j]) <= TIE_TOL * max(1.0, abs(lam[j])):
            end += 1
        if end - j > 1:
            tie = True
            cols = list(range(j, end))
            cols.sort(key=lambda c: tuple(-U[:, c]))
            U = U.copy()
            U[:, j:end] = U[:, cols]
        j = end
    return U, tie


def _sign(beta, var, summary):
    """+1/-1 making corr(T, x) > 0 on pooled data; fallback on a degenerate correlation."""
    if summary.cov_xs is not None and summary.x_var and summary.x_var > 0:
        corr = float(beta @ summary.cov_xs) / np.sqrt(var * summary.x_var)
        if abs(corr) > SIGN_TOL:
            return (1.0 if corr > 0 else -1.0), False
    j = int(np.argmax(np.abs(beta)))
    return (1.0 if beta[j] >= 0 else -1.0), True


def eval_T(fit: FittedFamily, x, component: int = 0):
    if not 0 <= component < fit.k:
        raise IndexError(f"component {component} out of range for k={fit.k}")
    s = eval_basis(fit.basis, x)
    return fit.scales[component] * (s @ fit.coefficients[component] - fit.offsets[component])


def scree(fit: FittedFamily) -> np.ndarray:
    return fit.eigenvalues.copy()


def align_sign(fit: FittedFamily, reference: FittedFamily, cov: np.ndarray) -> FittedFamily:
    """Flip ``fit`` so its leading component correlates positively with ``reference``'s."""
    c = float(fit.coefficients[0] @ cov @ reference.coefficients[0])
    if c >= 0:
        return fit
    return FittedFamily(
        fit.basis, -fit.coefficients, -fit.offsets, fit.scales, fit.eigenvalues,
        fit.ridge, fit.flags + ("bootstrap_flipped",), dict(fit.meta),
    )


def fit_from_accumulators(accs: list[GroupAccumulator], spec: BasisSpec, k: int = 1, ridge=None) -> FittedFamily:
    summary = finalize(accs)
    summary.basis = spec
    return fit_sufficient_statistic(summary, k=k, ridge=ridge)


def bootstrap_T(dataset: Dataset, spec: BasisSpec, B: int, seed: int, k: int = 1) -> list[FittedFamily]:
    """Group-level bootstrap refits, sign-aligned to the full-data fit."""
    if B < 1:
        raise InvalidB(f"B must be >= 1, got {B}")
    accs = scan(dataset, spec)
    full_summary = finalize(accs)
    full_summary.basis = spec
    full = fit_sufficient_statistic(full_summary, k=k)
    cov = full_summary.pooled_cov
    m = len(accs)
    fits = []
    for child in np.random.SeedSequence(seed).spawn(B):
        rng = np.random.default_rng(child)
        while True:
            idx = rng.integers(0, m, size=m)
            if np.unique(idx).size >= 2:
                break
        fits.append(align_sign(resample_fit(accs, idx, spec, k), full, cov))
    return fits


def resample_fit(accs, idx, spec: BasisSpec, k: int = 1) -> FittedFamily:
    return fit_from_accumulators([accs[i] for i in idx], spec, k=k)
