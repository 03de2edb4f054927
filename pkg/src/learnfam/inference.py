"""Two-sample tests, efficiency estimates and intervals in the fitted family."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .basemeasure import BaseMeasure, log_masses, mean_map, moments
from .data import Dataset
from .errors import DegenerateVariance
from .spectral import FittedFamily, eval_T

Statistic = Callable[[np.ndarray], np.ndarray]

TIE_RTOL = 1e-10


@dataclass
class TestResult:
    statistic: float
    method: str
    p_one: float
    p_two: float
    alpha: float
    alternative: str = "greater"
    nperm: int | None = None
    seed: int | None = None

    __test__ = False  # not a pytest class

    @property
    def decision(self) -> bool:
        p = self.p_one if self.alternative == "greater" else self.p_two
        return bool(p <= self.alpha)


@dataclass
class Interval:
    lower: float
    upper: float
    level: float
    target: str = "theta"
    estimate: float = float("nan")
    flags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("interval lower bound exceeds upper bound")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _apply(U: Statistic | None, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x if U is None else np.asarray(U(x), dtype=float)


def delta_stat(sample1, sample2, U: Statistic | None = None) -> float:
    """Standardised difference in means of U with pooled (n1+n2-2) variance."""
    u1, u2 = _apply(U, sample1), _apply(U, sample2)
    n1, n2 = u1.size, u2.size
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs at least 2 observations")
    return _delta(u1, u2)


def _delta(u1, u2) -> float:
    n1, n2 = u1.size, u2.size
    both = np.concatenate([u1, u2])
    if np.ptp(both) == 0:
        raise DegenerateVariance("all statistic values are equal")
    ss = np.sum((u1 - u1.mean()) ** 2) + np.sum((u2 - u2.mean()) ** 2)
    var = ss / (n1 + n2 - 2)
    if not var > 0:
        raise DegenerateVariance("pooled variance is zero")
    return float(math.sqrt(n1 * n2 / ((n1 + n2) * var)) * (u1.mean() - u2.mean()))


def permutation_deltas(u: np.ndarray, n1: int, nperm: int, rng: np.random.Generator, chunk: int = 256) -> np.ndarray:
    """Delta for ``nperm`` random relabellings of the pooled values ``u``."""
    n = u.size
    n2 = n - n1
    u = u - u.mean()
    u2 = u * u
    tot, tot2 = u.sum(), u2.sum()
    out = np.empty(nperm)
    base = np.arange(n)
    for start in range(0, nperm, chunk):
        c = min(chunk, nperm - start)
        idx = rng.permuted(np.broadcast_to(base, (c, n)), axis=1)[:, :n1]
        s1 = u[idx].sum(axis=1)
        q1 = u2[idx].sum(axis=1)
        s2, q2 = tot - s1, tot2 - q1
        ss = (q1 - s1 * s1 / n1) + (q2 - s2 * s2 / n2)
        var = ss / (n - 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[start:start + c] = np.sqrt(n1 * n2 / (n * var)) * (s1 / n1 - s2 / n2)
    return out


def permutation_test(
    sample1, sample2, U: Statistic | None = None, nperm: int = 999, alpha: float = 0.05,
    seed: int = 0, alternative: str = "greater",
) -> TestResult:
    if nperm < 99:
        raise ValueError("nperm must be >= 99")
    u1, u2 = _apply(U, sample1), _apply(U, sample2)
    if u1.size < 2 or u2.size < 2:
        raise ValueError("each sample needs at least 2 observations")
    obs = _delta(u1, u2)
    perm = permutation_deltas(np.concatenate([u1, u2]), u1.size, nperm, np.random.default_rng(seed))
    slack = TIE_RTOL * max(1.0, abs(obs))
    k_one = int(np.sum(perm >= obs - slack))
    k_two = int(np.sum(np.abs(perm) >= abs(obs) - slack))
    return TestResult(
        statistic=obs, method="perm", p_one=(1 + k_one) / (nperm + 1), p_two=(1 + k_two) / (nperm + 1),
        alpha=alpha, alternative=alternative, nperm=nperm, seed=seed,
    )


def z_test(sample1, sample2, U: Statistic | None = None, alpha: float = 0.05, alternative: str = "greater") -> TestResult:
    d = delta_stat(sample1, sample2, U)
    return TestResult(
        statistic=d, method="z", p_one=float(stats.norm.sf(d)), p_two=float(min(1.0, 2 * stats.norm.sf(abs(d)))),
        alpha=alpha, alternative=alternative,
    )


def relative_efficiency(U: Statistic | None, V: Statistic | None, reference_sample, weights=None) -> float:
    """Squared correlation of U(X) and V(X) over a (weighted) reference sample."""
    u, v = _apply(U, reference_sample), _apply(V, reference_sample)
    w = np.ones(u.size) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    du, dv = u - w @ u, v - w @ v
    vu, vv = w @ (du * du), w @ (dv * dv)
    if not (vu > 0 and vv > 0):
        raise DegenerateVariance("statistic has zero variance on the reference sample")
    return float((w @ (du * dv)) ** 2 / (vu * vv))


def between_within_ratio(dataset: Dataset, U: Statistic | None) -> float:
    """Between/within variance ratio of a scalar statistic across groups."""
    u = _apply(U, dataset.values)
    w = dataset.w.astype(float)
    n = np.bincount(dataset.group, weights=w, minlength=dataset.m)
    s = np.bincount(dataset.group, weights=w * u, minlength=dataset.m)
    q = np.bincount(dataset.group, weights=w * u * u, minlength=dataset.m)
    keep = n > 0
    n, s, q = n[keep], s[keep], q[keep]
    m, ntot = n.size, n.sum()
    means = s / n
    grand = s.sum() / ntot
    between = np.sum(n * (means - grand) ** 2) / (m - 1)
    within = np.sum(q - n * means**2) / (ntot - m)
    if not within > 0:
        raise DegenerateVariance("within-group variance is zero")
    return float(between / within)


def signal_efficiency(dataset: Dataset, U: Statistic | None, V: Statistic | None) -> float:
    """Data-driven Pitman efficiency of U relative to V.

    The between/within ratio of a statistic is about ``1 + c * rho^2`` with
    ``rho`` its correlation to the true score and ``c`` common to all
    statistics, so the ratio of excess signal estimates ``rho_U^2 / rho_V^2``
    without knowing the score.
    """
    fu = between_within_ratio(dataset, U) - 1.0
    fv = between_within_ratio(dataset, V) - 1.0
    if not fv > 0:
        raise DegenerateVariance("reference statistic carries no between-group signal")
    return float(fu / fv)


# -- intervals ------------------------------------------------------------------


def _solve_theta(bm: BaseMeasure, t: np.ndarray, targets: np.ndarray, xtol: float = 1e-10) -> np.ndarray:
    """Vectorised bracketed bisection for E_theta[T] = target (targets inside the range)."""
    targets = np.asarray(targets, dtype=float)
    lo = np.full(targets.shape, -1.0)
    hi = np.full(targets.shape, 1.0)
    for _ in range(60):
        bad = moments(bm, t, lo)[0] > targets
        if not bad.any():
            break
        lo = np.where(bad, 2 * lo, lo)
    for _ in range(60):
        bad = moments(bm, t, hi)[0] < targets
        if not bad.any():
            break
        hi = np.where(bad, 2 * hi, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = moments(bm, t, mid)[0] > targets
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.all(hi - lo <= xtol):
            break
    return 0.5 * (lo + hi)


def theta_intervals(bm: BaseMeasure, t: np.ndarray, t_means, ns, alpha: float = 0.05, t_sds=None):
    """Wald intervals for many samples summarised by their mean of T and size.

    Returns ``(estimate, lower, upper, outside)`` arrays.  Where the sample
    mean is outside the achievable range of E_theta[T], the estimate is
    infinite, the interval is one-sided and ``outside`` is True.
    """
    t_means = np.atleast_1d(np.asarray(t_means, dtype=float))
    ns = np.broadcast_to(np.asarray(ns, dtype=float), t_means.shape)
    live = np.isfinite(bm.zeta)
    tmin, tmax = t[live].min(), t[live].max()
    z = stats.norm.ppf(1 - alpha / 2)
    inside = (t_means > tmin) & (t_means < tmax)
    est = np.where(t_means >= tmax, np.inf, -np.inf)
    lower = np.full(t_means.shape, -np.inf)
    upper = np.full(t_means.shape, np.inf)
    if inside.any():
        th = _solve_theta(bm, t, t_means[inside])
        se = 1.0 / np.sqrt(ns[inside] * moments(bm, t, th)[1])
        est[inside] = th
        lower[inside] = th - z * se
        upper[inside] = th + z * se
    out = ~inside
    if out.any():
        sds = np.ones(t_means.shape) if t_sds is None else np.broadcast_to(np.asarray(t_sds, float), t_means.shape)
        shift = z * sds[out] / np.sqrt(ns[out])
        high = t_means[out] >= tmax
        # one-sided bound from the mean shifted back toward the interior
        tgt = np.where(high, t_means[out] - shift, t_means[out] + shift)
        ok = (tgt > tmin) & (tgt < tmax)
        bound = np.full(tgt.shape, np.nan)
        if ok.any():
            bound[ok] = _solve_theta(bm, t, tgt[ok])
        lo_out = np.where(high, np.where(ok, bound, -np.inf), -np.inf)
        hi_out = np.where(high, np.inf, np.where(ok, bound, np.inf))
        lower[out] = lo_out
        upper[out] = hi_out
    return est, lower, upper, out


def theta_interval(sample, fit: FittedFamily, bm: BaseMeasure, alpha: float = 0.05) -> Interval:
    """Moment-matching estimate of theta with a Wald interval from the fitted family."""
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("sample is empty")
    ts = eval_T(fit, sample)
    t = eval_T(fit, bm.x)
    sd = float(ts.std(ddof=1)) if ts.size > 1 else 1.0
    est, lo, hi, out = theta_intervals(bm, t, ts.mean(), ts.size, alpha, sd)
    flags = ("mean_outside_range",) if out[0] else ()
    return Interval(float(lo[0]), float(hi[0]), 1 - alpha, "theta", float(est[0]), flags)


def _check_points(lo: float, hi: float) -> np.ndarray:
    a = lo if np.isfinite(lo) else (hi - 50.0 if np.isfinite(hi) else -50.0)
    b = hi if np.isfinite(hi) else (lo + 50.0 if np.isfinite(lo) else 50.0)
    return np.array([a, 0.5 * (a + b), b])


def mu_interval(theta_int: Interval, bm: BaseMeasure, fit: FittedFamily | None = None, grid: int = 201) -> Interval:
    """Map a theta interval to one for E_theta[X] through the mean map."""
    t = bm.t if fit is None else eval_T(fit, bm.x)
    lo, hi = theta_int.lower, theta_int.upper
    ends = mean_map_t(bm, t, np.array([lo, hi]))
    est = float(mean_map_t(bm, t, np.array([theta_int.estimate]))[0]) if np.isfinite(theta_int.estimate) else float("nan")
    flags = tuple(theta_int.flags)
    if lo == hi:
        return Interval(ends[0], ends[1], theta_int.level, "mu", est, flags)
    slope = moments(bm, t, _check_points(lo, hi))[3]
    if np.all(slope > 0):
        a, b = ends
    elif np.all(slope < 0):
        b, a = ends
    else:
        pts = np.linspace(*_check_points(lo, hi)[[0, 2]], grid)
        vals = np.r_[mean_map_t(bm, t, pts), ends]
        a, b = vals.min(), vals.max()
        flags = flags + ("non_monotone_map",)
    return Interval(float(a), float(b), theta_int.level, "mu", est, flags)


def mean_map_t(bm: BaseMeasure, t: np.ndarray, theta) -> np.ndarray:
    return np.exp(log_masses(bm, t, theta)) @ bm.x


def t_interval(sample, alpha: float = 0.05) -> Interval:
    """Classical one-sample t-interval for the mean."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    half = stats.t.ppf(1 - alpha / 2, n - 1) * x.std(ddof=1) / math.sqrt(n)
    return Interval(x.mean() - half, x.mean() + half, 1 - alpha, "mu", float(x.mean()))


# -- paired comparison of procedures ----------------------------------------------


def mcnemar(rejections_a, rejections_b) -> float:
    """Exact two-sided McNemar p-value on the discordant pairs."""
    a = np.asarray(rejections_a, dtype=bool)
    b = np.asarray(rejections_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("rejection sequences must have equal length")
    n01 = int(np.sum(a & ~b))
    n10 = int(np.sum(~a & b))
    n = n01 + n10
    if n == 0:
        return 1.0
    k = min(n01, n10)
    tail = sum(math.comb(n, j) for j in range(k + 1))
    return float(min(Fraction(1), Fraction(2 * tail, 2**n)))


__all__ = [
    "Interval", "TestResult", "between_within_ratio", "delta_stat", "mcnemar", "mean_map",
    "mu_interval", "permutation_test", "relative_efficiency", "signal_efficiency",
    "t_interval", "theta_interval", "theta_intervals", "z_test",
]
