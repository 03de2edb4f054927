"""One-pass, mergeable between/within moment accumulation.

Accumulators keep plain sums of ``S(x) - pivot`` and of their outer
products, so merging is exact addition and the between/within matrices
follow directly from the sums.  The pivot is a fixed vector owned by the
basis; subtracting it keeps the one-pass within-group formula away from
catastrophic cancellation.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, eval_basis
from .data import Dataset
from .errors import GroupMismatch, InsufficientGroups, NoWithinDf, NonFiniteInput, SpecMismatch

log = logging.getLogger(__name__)

BLOCK_SIZE = 1 << 14
PSD_TOL = 1e-8


@dataclass
class GroupAccumulator:
    group: str
    version: str
    pivot: np.ndarray = field(repr=False)
    count: int = 0
    sum_s: np.ndarray = field(default=None, repr=False)
    sum_ss: np.ndarray = field(default=None, repr=False)
    sum_x: float = 0.0
    sum_x2: float = 0.0
    sum_xs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        d = self.pivot.size
        if self.sum_s is None:
            self.sum_s = np.zeros(d)
        if self.sum_ss is None:
            self.sum_ss = np.zeros((d, d))
        if self.sum_xs is None:
            self.sum_xs = np.zeros(d)

    @classmethod
    def empty(cls, group, spec: BasisSpec) -> GroupAccumulator:
        return cls(str(group), spec.version, spec.pivot)

    @property
    def d(self) -> int:
        return self.pivot.size

    @property
    def raw_sum(self) -> np.ndarray:
        """Sum of S(x) over the group."""
        return self.sum_s + self.count * self.pivot

    @property
    def raw_outer(self) -> np.ndarray:
        """Sum of S(x) S(x)' over the group."""
        p, s = self.pivot, self.sum_s
        return self.sum_ss + np.outer(s, p) + np.outer(p, s) + self.count * np.outer(p, p)

    def copy(self) -> GroupAccumulator:
        return GroupAccumulator(
            self.group, self.version, self.pivot, self.count, self.sum_s.copy(),
            self.sum_ss.copy(), self.sum_x, self.sum_x2, self.sum_xs.copy(),
        )


def accumulate(acc: GroupAccumulator, x: float, spec: BasisSpec, weight: int = 1) -> GroupAccumulator:
    """Return a new accumulator with ``weight`` copies of ``x`` added."""
    if not np.isfinite(x):
        raise NonFiniteInput(f"cannot accumulate {x!r}")
    if spec.version != acc.version:
        raise SpecMismatch("accumulator was built with a different basis")
    s = eval_basis(spec, x) - acc.pivot
    out = acc.copy()
    out.count += weight
    out.sum_s += weight * s
    out.sum_ss += weight * np.outer(s, s)
    out.sum_x += weight * x
    out.sum_x2 += weight * x * x
    out.sum_xs += weight * x * s
    return out


def merge(a: GroupAccumulator, b: GroupAccumulator) -> GroupAccumulator:
    if a.version != b.version:
        raise SpecMismatch(f"basis versions differ: {a.version} vs {b.version}")
    if a.group != b.group:
        raise GroupMismatch(f"cannot merge group {a.group!r} into {b.group!r}")
    return GroupAccumulator(
        a.group, a.version, a.pivot, a.count + b.count, a.sum_s + b.sum_s,
        a.sum_ss + b.sum_ss, a.sum_x + b.sum_x, a.sum_x2 + b.sum_x2, a.sum_xs + b.sum_xs,
    )


@dataclass
class MomentSummary:
    """Scan output: group means and the between (A) / within (W) matrices."""

    counts: np.ndarray
    group_means: np.ndarray
    grand_mean: np.ndarray
    between: np.ndarray
    within: np.ndarray
    labels: tuple[str, ...] = ()
    basis: BasisSpec | None = None
    # pooled moments of x itself, used for the sign convention
    x_mean: float | None = None
    x_var: float | None = None
    cov_xs: np.ndarray | None = None

    @property
    def m(self) -> int:
        return int(self.counts.size)

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())

    @property
    def d(self) -> int:
        return int(self.grand_mean.size)

    @property
    def pooled_cov(self) -> np.ndarray:
        """Sample covariance (ddof=1) of S over all observations pooled."""
        n, m = self.n_total, self.m
        return ((n - m) * self.within + (m - 1) * self.between) / (n - 1)


def finalize(accs) -> MomentSummary:
    accs = [a for a in accs if a.count > 0]
    if len(accs) < 2:
        raise InsufficientGroups(f"need at least 2 nonempty groups, got {len(accs)}")
    versions = {a.version for a in accs}
    if len(versions) != 1:
        raise SpecMismatch("accumulators come from different bases")
    pivot = accs[0].pivot
    n = np.array([a.count for a in accs], dtype=np.int64)
    m, n_tot = n.size, int(n.sum())
    if n_tot - m < 1:
        raise NoWithinDf("every group has a single observation; within-group df is zero")
    sums = np.stack([a.sum_s for a in accs])
    outer = np.sum([a.sum_ss for a in accs], axis=0)
    means = sums / n[:, None]
    grand = sums.sum(axis=0) / n_tot
    dev = means - grand
    between = (dev.T * n) @ dev / (m - 1)
    within = (outer - (means.T * n) @ means) / (n_tot - m)
    between = 0.5 * (between + between.T)
    within = _truncate_psd(0.5 * (within + within.T))

    sx = sum(a.sum_x for a in accs)
    sx2 = sum(a.sum_x2 for a in accs)
    sxs = np.sum([a.sum_xs for a in accs], axis=0)
    x_mean = sx / n_tot
    x_var = (sx2 - n_tot * x_mean**2) / (n_tot - 1)
    cov_xs = (sxs - sx * sums.sum(axis=0) / n_tot) / (n_tot - 1)
    return MomentSummary(
        counts=n,
        group_means=means + pivot,
        grand_mean=grand + pivot,
        between=between,
        within=within,
        labels=tuple(a.group for a in accs),
        x_mean=float(x_mean),
        x_var=float(max(x_var, 0.0)),
        cov_xs=cov_xs,
    )


def _truncate_psd(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(mat)
    if w.min() >= 0:
        return mat
    tol = PSD_TOL * max(np.trace(mat), 0.0)
    if w.min() < -tol:
        log.warning("within matrix has eigenvalue %.3g below tolerance; clipping", w.min())
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T


# -- vectorised scan ---------------------------------------------------------


def _scan_block(values, weights, group, spec):
    """Per-group partial sums for one contiguous, group-sorted block."""
    s = eval_basis(spec, values) - spec.pivot
    starts = np.flatnonzero(np.r_[True, group[1:] != group[:-1]])
    wf = weights.astype(float)
    ws = s * wf[:, None]
    outer = ws[:, :, None] * s[:, None, :]
    wx = wf * values
    return (
        group[starts],
        np.add.reduceat(weights, starts),
        np.add.reduceat(ws, starts, axis=0),
        np.add.reduceat(outer, starts, axis=0),
        np.add.reduceat(wx, starts),
        np.add.reduceat(wx * values, starts),
        np.add.reduceat(s * wx[:, None], starts, axis=0),
    )


def _scan_block_args(args):
    return _scan_block(*args)


def scan(dataset: Dataset, spec: BasisSpec, workers: int = 1, block_size: int = BLOCK_SIZE) -> list[GroupAccumulator]:
    """Accumulate every group of ``dataset`` in one pass.

    Blocks are fixed by ``block_size`` and merged in block order, so the
    result is bit-identical for any ``workers``.
    """
    order = np.argsort(dataset.group, kind="stable")
    values = dataset.values[order]
    group = dataset.group[order]
    weights = dataset.w[order]
    m, d = dataset.m, spec.df
    cnt = np.zeros(m, dtype=np.int64)
    s1 = np.zeros((m, d))
    s2 = np.zeros((m, d, d))
    x1 = np.zeros(m)
    x2 = np.zeros(m)
    xs = np.zeros((m, d))
    tasks = [
        (values[i:i + block_size], weights[i:i + block_size], group[i:i + block_size], spec)
        for i in range(0, values.size, block_size)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_scan_block_args, tasks, chunksize=max(1, len(tasks) // (4 * workers)))
            parts = list(parts)
    else:
        parts = map(_scan_block_args, tasks)
    for g, c, a1, a2, b1, b2, b3 in parts:
        cnt[g] += c
        s1[g] += a1
        s2[g] += a2
        x1[g] += b1
        x2[g] += b2
        xs[g] += b3
    return [
        GroupAccumulator(
            dataset.labels[i], spec.version, spec.pivot, int(cnt[i]), s1[i], s2[i],
            float(x1[i]), float(x2[i]), xs[i],
        )
        for i in range(m)
    ]


def summarize(dataset: Dataset, spec: BasisSpec, workers: int = 1) -> MomentSummary:
    """``scan`` followed by ``finalize``, with the basis attached."""
    summary = finalize(scan(dataset, spec, workers=workers))
    summary.basis = spec
    return summary
