"""Binned Poisson GLM for the base measure and the fitted discrete family.

Counts ``N[i, b]`` of group ``i`` in bin ``b`` are modelled as Poisson with
``log E N[i, b] = alpha[i] + zeta[b] + theta[i] * T(x[b])``.  The model is
fitted by Newton's method (IRLS for the canonical log link).  The group
parameters form independent 2x2 blocks that couple only through the bin
effects, so each step solves a Schur complement system in the bin
effects alone.

Group dummies, bin dummies and the interaction are collinear in two
directions.  During fitting two bin effects are held fixed; afterwards the
solution is moved to ``sum_i n_i theta_i = 0`` and ``sum_b exp(zeta_b) = 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .errors import EmptyData, NotConverged, TooFewBins
from .spectral import FittedFamily, eval_T

log = logging.getLogger(__name__)

DEFAULT_NBINS = 100


@dataclass
class BinnedCounts:
    edges: np.ndarray  # (B + 1,)
    x: np.ndarray  # (B,) within-bin means
    counts: np.ndarray  # (m, B)
    labels: tuple[str, ...] = ()

    @property
    def nbins(self) -> int:
        return int(self.x.size)

    @property
    def group_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def bin_data(dataset: Dataset, nbins: int = DEFAULT_NBINS) -> BinnedCounts:
    """Equal-count bins over the pooled data; tied values always share a bin."""
    if nbins < 2:
        raise TooFewBins(f"nbins must be >= 2, got {nbins}")
    if dataset.values.size == 0 or dataset.n_total == 0:
        raise EmptyData("cannot bin an empty dataset")
    uniq, inv = np.unique(dataset.values, return_inverse=True)
    wu = np.bincount(inv, weights=dataset.w, minlength=uniq.size).astype(np.int64)
    present = wu > 0
    total = int(wu.sum())
    start = np.cumsum(wu) - wu
    raw_bin = (start * nbins) // total
    raw_bin[~present] = -1
    occupied = np.unique(raw_bin[present])
    relabel = np.full(nbins, -1, dtype=np.int64)
    relabel[occupied] = np.arange(occupied.size)
    ubin = np.where(present, relabel[np.clip(raw_bin, 0, None)], -1)
    B = occupied.size

    sel = present
    wsum = np.bincount(ubin[sel], weights=wu[sel], minlength=B)
    x = np.bincount(ubin[sel], weights=(wu * uniq)[sel], minlength=B) / wsum
    lo = np.full(B, np.inf)
    hi = np.full(B, -np.inf)
    np.minimum.at(lo, ubin[sel], uniq[sel])
    np.maximum.at(hi, ubin[sel], uniq[sel])
    x = np.clip(x, lo, hi)
    edges = np.r_[lo[0], 0.5 * (hi[:-1] + lo[1:]), hi[-1]]

    obs_bin = ubin[inv]
    counts = np.bincount(
        dataset.group * B + obs_bin, weights=dataset.w, minlength=dataset.m * B
    ).reshape(dataset.m, B).astype(np.int64)
    return BinnedCounts(edges, x, counts, dataset.labels)


@dataclass
class BaseMeasure:
    x: np.ndarray
    zeta: np.ndarray  # -inf marks bins dropped for being empty everywhere
    t: np.ndarray  # fitted statistic at x, as used in the GLM
    alpha: np.ndarray
    theta: np.ndarray
    labels: tuple[str, ...] = ()
    loglik: float = float("nan")
    iterations: int = 0
    grad_norm: float = float("nan")
    converged: bool = False
    flags: tuple[str, ...] = ()
    constraints: tuple[str, ...] = ("sum_i n_i theta_i = 0", "sum_b exp(zeta_b) = 1")

    @property
    def p0(self) -> np.ndarray:
        return np.exp(self.zeta)

    def fitted_means(self) -> np.ndarray:
        return np.exp(self.alpha[:, None] + self.zeta[None, :] + self.theta[:, None] * self.t[None, :])


# -- GLM pieces (exposed for gradient checks) --------------------------------


def poisson_loglik(N, t, alpha, zeta, theta) -> float:
    eta = alpha[:, None] + zeta[None, :] + theta[:, None] * t[None, :]
    return float(np.sum(N * eta - np.exp(eta)))


def poisson_gradient(N, t, alpha, zeta, theta):
    """Gradient of ``poisson_loglik`` w.r.t. (alpha, zeta, theta)."""
    eta = alpha[:, None] + zeta[None, :] + theta[:, None] * t[None, :]
    R = N - np.exp(eta)
    return R.sum(axis=1), R.sum(axis=0), R @ t


def fit_base_measure(
    binned: BinnedCounts,
    fit: FittedFamily | None = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    t: np.ndarray | None = None,
) -> BaseMeasure:
    """Maximum-likelihood base measure given the fitted statistic.

    ``t`` overrides ``eval_T(fit, binned.x)`` (used for simulation tests).
    """
    if t is None:
        t = eval_T(fit, binned.x)
    t = np.asarray(t, dtype=float)
    N_all = binned.counts.astype(float)
    flags = []
    live = N_all.sum(axis=0) > 0
    if not live.all():
        flags.append(f"separation_dropped_bins={int((~live).sum())}")
        log.warning("%d bin(s) empty in every group; given zero mass", (~live).sum())
    N = N_all[:, live]
    tl = t[live]
    n_i = N.sum(axis=1)
    if np.any(n_i <= 0):
        raise EmptyData("every group needs at least one observation")
    m, B = N.shape

    free_theta = np.ptp(tl) > 1e-12 if B > 1 else False
    fixed = [int(np.argmin(tl)), int(np.argmax(tl))] if free_theta else [0]
    fixed = sorted(set(fixed))
    F = np.setdiff1d(np.arange(B), fixed)

    alpha = np.log(n_i)
    zeta = np.log(N.sum(axis=0) / N.sum())
    theta = np.zeros(m)
    ll = poisson_loglik(N, tl, alpha, zeta, theta)
    converged = False
    it = 0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        da, dz, dth = _newton_step(N, tl, alpha, zeta, theta, F, free_theta)
        step = 1.0
        for _ in range(60):
            a1, z1, th1 = alpha + step * da, zeta + step * dz, theta + step * dth
            ll1 = poisson_loglik(N, tl, a1, z1, th1)
            if ll1 >= ll - 1e-12 * abs(ll):
                break
            step *= 0.5
        rel = abs(ll1 - ll) / (abs(ll) + 1.0)
        alpha, zeta, theta, ll = a1, z1, th1, max(ll1, ll)
        g = poisson_gradient(N, tl, alpha, zeta, theta)
        gnorm = max(np.abs(g[0]).max(), np.abs(g[1]).max(), np.abs(g[2]).max() if free_theta else 0.0)
        if gnorm < 1e-8 or (rel < tol and step == 1.0):
            converged = True
            break

    # move to the reporting constraints
    if free_theta:
        c = float(n_i @ theta / n_i.sum())
        theta = theta - c
        zeta = zeta + c * tl
    L = logsumexp(zeta)
    zeta = zeta - L
    alpha = alpha + L

    zeta_full = np.full(t.size, -np.inf)
    zeta_full[live] = zeta
    bm = BaseMeasure(
        x=binned.x.copy(), zeta=zeta_full, t=t, alpha=alpha, theta=theta, labels=binned.labels,
        loglik=ll, iterations=it, grad_norm=float(gnorm), converged=converged, flags=tuple(flags),
    )
    if not converged:
        raise NotConverged(f"IRLS did not converge in {max_iter} iterations (grad {gnorm:.3g})", bm)
    return bm


def _newton_step(N, t, alpha, zeta, theta, F, free_theta):
    eta = alpha[:, None] + zeta[None, :] + theta[:, None] * t[None, :]
    mu = np.exp(eta)
    R = N - mu
    m = N.shape[0]
    g_u = np.stack([R.sum(axis=1), R @ t], axis=1)  # (m, 2)
    g_z = R.sum(axis=0)
    a = mu.sum(axis=1)
    b = mu @ t
    c = mu @ (t * t)
    if free_theta:
        det = a * c - b * b
        Dinv = np.empty((m, 2, 2))
        Dinv[:, 0, 0] = c / det
        Dinv[:, 1, 1] = a / det
        Dinv[:, 0, 1] = Dinv[:, 1, 0] = -b / det
        C = np.stack([mu, mu * t[None, :]], axis=1)  # (m, 2, B)
    else:
        Dinv = (1.0 / a)[:, None, None]
        C = mu[:, None, :]
        g_u = g_u[:, :1]
    CF = C[:, :, F]
    E = np.einsum("ikl,ilb->ikb", Dinv, CF)
    k = CF.shape[1]
    S = np.diag(mu.sum(axis=0)[F]) - CF.reshape(m * k, -1).T @ E.reshape(m * k, -1)
    Dg = np.einsum("ikl,il->ik", Dinv, g_u)
    rhs = g_z[F] - np.einsum("ikb,ik->b", CF, Dg)
    dzF = np.linalg.solve(0.5 * (S + S.T), rhs)
    du = np.einsum("ikl,il->ik", Dinv, g_u - np.einsum("ikb,b->ik", CF, dzF))
    dz = np.zeros_like(zeta)
    dz[F] = dzF
    dth = du[:, 1] if free_theta else np.zeros(m)
    return du[:, 0], dz, dth


# -- the fitted discrete family -----------------------------------------------


def _stat(bm: BaseMeasure, fit: FittedFamily | None) -> np.ndarray:
    return bm.t if fit is None else eval_T(fit, bm.x)


def log_masses(bm: BaseMeasure, t: np.ndarray, theta) -> np.ndarray:
    """Log masses at each theta (shape (..., B)); +-inf theta gives the limiting point mass."""
    theta = np.asarray(theta, dtype=float)
    th = theta[..., None]
    live = np.isfinite(bm.zeta)
    finite = np.isfinite(th)
    logits = np.where(finite, bm.zeta + np.where(finite, th, 0.0) * t, -np.inf)
    if not np.all(finite):
        tmax, tmin = t[live].max(), t[live].min()
        top = np.where(live & (t == tmax), bm.zeta, -np.inf)
        bot = np.where(live & (t == tmin), bm.zeta, -np.inf)
        logits = np.where(th == np.inf, top, np.where(th == -np.inf, bot, logits))
    return logits - logsumexp(logits, axis=-1, keepdims=True)


def log_partition(bm: BaseMeasure, fit: FittedFamily | None, theta) -> np.ndarray:
    t = _stat(bm, fit)
    return logsumexp(bm.zeta + np.asarray(theta, dtype=float)[..., None] * t, axis=-1)


def density(bm: BaseMeasure, fit: FittedFamily | None, theta) -> np.ndarray:
    """Masses over ``bm.x`` of the fitted family member at ``theta``."""
    return np.exp(log_masses(bm, _stat(bm, fit), theta))


def moments(bm: BaseMeasure, t: np.ndarray, theta):
    """Mean/variance of T and X and Cov(X, T) under the family at ``theta``."""
    p = np.exp(log_masses(bm, t, theta))
    x = bm.x
    mt = p @ t
    mx = p @ x
    vt = p @ (t * t) - mt**2
    cxt = p @ (x * t) - mx * mt
    return mt, np.maximum(vt, 0.0), mx, cxt


def mean_map(bm: BaseMeasure, fit: FittedFamily | None, theta):
    """E_theta[X] under the fitted discrete family."""
    return density(bm, fit, theta) @ bm.x


def mean_map_derivative(bm: BaseMeasure, fit: FittedFamily | None, theta):
    """d/dtheta E_theta[X] = Cov_theta(X, T)."""
    return moments(bm, _stat(bm, fit), theta)[3]
