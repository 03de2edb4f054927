"""End-to-end replication studies on the synthetic families.

Each study simulates data, fits the family, computes intervals and the
efficiency table, and returns a :class:`Study` holding metrics plus the
arrays needed for plot exports.  Correlations "under p0" are taken by
quadrature against the known pooled population law.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .basemeasure import BaseMeasure, BinnedCounts, bin_data, fit_base_measure
from .basis import BasisSpec, make_spline_basis
from .data import Dataset
from .inference import (
    Interval, mcnemar, mu_interval, relative_efficiency, signal_efficiency, t_interval, theta_intervals, z_test,
)
from .scan import MomentSummary, summarize
from .sim import LAPLACE_STUDY, LOGGAMMA_STUDY, SimConfig, generate, group_rng, loggamma_mean, population_grid, true_score
from .spectral import FittedFamily, eval_T, fit_sufficient_statistic

log = logging.getLogger(__name__)


@dataclass
class Pipeline:
    spec: BasisSpec
    summary: MomentSummary
    fit: FittedFamily
    binned: BinnedCounts
    bm: BaseMeasure


@dataclass
class Study:
    name: str
    config: SimConfig
    data: Dataset
    pipe: Pipeline
    metrics: dict = field(default_factory=dict)
    table: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)


def fit_pipeline(data: Dataset, df: int = 11, nbins: int = 100, k: int = 1, workers: int = 1) -> Pipeline:
    spec = make_spline_basis(df, data.values)
    summary = summarize(data, spec, workers=workers)
    fit = fit_sufficient_statistic(summary, k=k)
    binned = bin_data(data, nbins)
    bm = fit_base_measure(binned, fit)
    return Pipeline(spec, summary, fit, binned, bm)


def symmetric_log1p(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.log1p(np.abs(x))


def candidate_statistics(family: str) -> dict:
    """The comparison statistics of the efficiency table."""
    log_stat = np.log1p if family == "loggamma" else symmetric_log1p
    return {"identity": None, "log1p": log_stat, "true": lambda x: true_score(family, x)}


def efficiency_table(study_family: str, cfg: SimConfig, fit: FittedFamily, data: Dataset) -> tuple[dict, float]:
    """Efficiency of each statistic relative to the fitted one.

    ``oracle``: corr^2(U, T) / corr^2(T_hat, T) under the population law.
    ``signal``: data-driven ratio of between-group signal (no truth needed).
    ``corr_fitted``: corr^2(U, T_hat) over the pooled sample.
    """
    x, w = population_grid(cfg)
    truth = true_score(study_family, x)
    t_hat = eval_T(fit, x)
    rho2 = _wcorr2(t_hat, truth, w)
    table = {}
    for name, U in candidate_statistics(study_family).items():
        u = x if U is None else U(x)
        table[name] = {
            "oracle": _wcorr2(u, truth, w) / rho2,
            "signal": signal_efficiency(data, U, fit),
            "corr_fitted": relative_efficiency(U, fit, data.values),
        }
    return table, rho2


def _wcorr2(a, b, w) -> float:
    w = w / w.sum()
    da, db = a - w @ a, b - w @ b
    return float((w @ (da * db)) ** 2 / ((w @ (da * da)) * (w @ (db * db))))


def _group_t_means(fit: FittedFamily, data: Dataset):
    T = eval_T(fit, data.values)
    n = data.group_counts().astype(float)
    w = data.w
    means = np.bincount(data.group, weights=w * T, minlength=data.m) / n
    sq = np.bincount(data.group, weights=w * T * T, minlength=data.m)
    sds = np.sqrt(np.maximum(sq - n * means**2, 0.0) / np.maximum(n - 1, 1))
    return means, n, sds


def run_laplace_study(seed: int = 0, alpha: float = 0.05, workers: int = 1, **overrides) -> Study:
    cfg = dataclasses.replace(LAPLACE_STUDY, seed=seed, **overrides)
    t0 = time.perf_counter()
    data = generate(cfg)
    pipe = fit_pipeline(data, workers=workers)
    t_b = eval_T(pipe.fit, pipe.bm.x)
    means, n, sds = _group_t_means(pipe.fit, data)
    est, lo, hi, out = theta_intervals(pipe.bm, t_b, means, n, alpha, sds)
    truth = data.theta
    covered = (lo <= truth) & (truth <= hi)
    t_ints = [t_interval(g, alpha) for g in data.split()]
    t_lo = np.array([iv.lower for iv in t_ints])
    t_hi = np.array([iv.upper for iv in t_ints])
    width = float(np.mean(hi - lo))
    t_width = float(np.mean(t_hi - t_lo))
    table, rho2 = efficiency_table("laplace", cfg, pipe.fit, data)
    pooled_rho2 = relative_efficiency(pipe.fit, lambda v: np.sign(v), data.values)
    study = Study("laplace", cfg, data, pipe, table=table)
    study.metrics = {
        "m": data.m,
        "n_total": data.n_total,
        "df": pipe.spec.df,
        "rho2": rho2,
        "rho2_pooled_sample": pooled_rho2,
        "theta_coverage": float(covered.mean()),
        "theta_misses": int((~covered).sum()),
        "mean_width": width,
        "t_mean_width": t_width,
        "t_coverage": float(np.mean((t_lo <= truth) & (truth <= t_hi))),
        "width_reduction": 1.0 - width / t_width,
        "outside_range": int(out.sum()),
        "eigenvalues": pipe.fit.eigenvalues.tolist(),
        "glm_iterations": pipe.bm.iterations,
        "runtime_s": time.perf_counter() - t0,
    }
    study.intervals = {"truth": truth, "estimate": est, "lower": lo, "upper": hi, "t_lower": t_lo, "t_upper": t_hi}
    return study


def run_loggamma_study(seed: int = 0, alpha: float = 0.05, workers: int = 1, **overrides) -> Study:
    cfg = dataclasses.replace(LOGGAMMA_STUDY, seed=seed, **overrides)
    t0 = time.perf_counter()
    data = generate(cfg)
    pipe = fit_pipeline(data, workers=workers)
    t_b = eval_T(pipe.fit, pipe.bm.x)
    means, n, sds = _group_t_means(pipe.fit, data)
    est, lo, hi, _ = theta_intervals(pipe.bm, t_b, means, n, alpha, sds)
    mu_true = loggamma_mean(data.theta)
    mu_ints = [mu_interval(Interval(a, b, 1 - alpha, "theta", e), pipe.bm) for a, b, e in zip(lo, hi, est)]
    t_ints = [t_interval(g, alpha) for g in data.split()]
    mu_lo = np.array([iv.lower for iv in mu_ints])
    mu_hi = np.array([iv.upper for iv in mu_ints])
    t_lo = np.array([iv.lower for iv in t_ints])
    t_hi = np.array([iv.upper for iv in t_ints])
    covered = (mu_lo <= mu_true) & (mu_true <= mu_hi)
    table, rho2 = efficiency_table("loggamma", cfg, pipe.fit, data)
    pooled_rho2 = relative_efficiency(pipe.fit, lambda v: true_score("loggamma", v), data.values)
    study = Study("loggamma", cfg, data, pipe, table=table)
    study.metrics = {
        "m": data.m,
        "n_total": data.n_total,
        "df": pipe.spec.df,
        "rho2": rho2,
        "rho2_pooled_sample": pooled_rho2,
        "mu_coverage": float(covered.mean()),
        "mu_misses": int((~covered).sum()),
        "t_coverage": float(np.mean((t_lo <= mu_true) & (mu_true <= t_hi))),
        "mean_width": float(np.mean(mu_hi - mu_lo)),
        "t_mean_width": float(np.mean(t_hi - t_lo)),
        "width_ratio": float(np.mean(t_hi - t_lo) / np.mean(mu_hi - mu_lo)),
        "non_monotone_maps": int(sum("non_monotone_map" in iv.flags for iv in mu_ints)),
        "eigenvalues": pipe.fit.eigenvalues.tolist(),
        "glm_iterations": pipe.bm.iterations,
        "runtime_s": time.perf_counter() - t0,
    }
    study.intervals = {
        "truth": mu_true, "estimate": np.array([iv.estimate for iv in mu_ints]),
        "lower": mu_lo, "upper": mu_hi, "t_lower": t_lo, "t_upper": t_hi,
    }
    return study


def run_study(name: str, seed: int = 0, **kw) -> Study:
    if name == "laplace":
        return run_laplace_study(seed, **kw)
    if name == "loggamma":
        return run_loggamma_study(seed, **kw)
    raise ValueError(f"unknown study {name!r}")


def loggamma_arm(seed: int, index: int, theta: float, n: int) -> np.ndarray:
    """One arm of a synthetic log-gamma experiment on its own substream."""
    rng = group_rng(seed, index)
    return np.exp(rng.gamma(theta, 0.4, size=n))


def power_study(
    fit: FittedFamily, experiments: int = 300, n: int = 500, theta: float = 3.0, effect: float = 0.2,
    alpha: float = 0.05, seed: int = 10_000,
) -> dict:
    """Paired comparison of the fitted-statistic and raw-mean z-tests.

    Each experiment compares an arm at ``theta + effect`` with one at
    ``theta``; both one-sided tests see the same data.
    """
    rej_fit = np.zeros(experiments, dtype=bool)
    rej_raw = np.zeros(experiments, dtype=bool)
    p_fit = np.empty(experiments)
    p_raw = np.empty(experiments)
    for e in range(experiments):
        a = loggamma_arm(seed, 2 * e, theta + effect, n)
        b = loggamma_arm(seed, 2 * e + 1, theta, n)
        r1 = z_test(a, b, fit, alpha)
        r2 = z_test(a, b, None, alpha)
        rej_fit[e], rej_raw[e] = r1.decision, r2.decision
        p_fit[e], p_raw[e] = r1.p_one, r2.p_one
    return {
        "experiments": experiments,
        "rejections_fitted": int(rej_fit.sum()),
        "rejections_identity": int(rej_raw.sum()),
        "mcnemar_p": mcnemar(rej_fit, rej_raw),
        "p_fitted": p_fit,
        "p_identity": p_raw,
    }


def null_deltas(fit: FittedFamily, reps: int = 2000, n: int = 10_000, theta: float = 3.0, seed: int = 20_000) -> np.ndarray:
    """Delta of the fitted statistic for ``reps`` null experiments (both arms at ``theta``)."""
    from .inference import delta_stat

    out = np.empty(reps)
    for r in range(reps):
        out[r] = delta_stat(loggamma_arm(seed, 2 * r, theta, n), loggamma_arm(seed, 2 * r + 1, theta, n), fit)
    return out
