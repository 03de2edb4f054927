"""Choosing the basis by held-out rejection counts.

Groups are split into folds.  For each candidate basis and fold the
statistic is fitted on the other folds, and the held-out groups are paired
consecutively (in group order) into two-sample pseudo-experiments tested at
level ``alpha``.  Under a null pair the rejection rate is ``alpha`` whatever
the fit, so more held-out rejections means more power.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, make_spline_basis
from .data import Dataset
from .errors import InsufficientGroups
from .scan import summarize
from .spectral import FittedFamily, fit_sufficient_statistic
from .inference import z_test

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    kind: str  # "spline" or "piecewise"
    df: int
    piecewise: BasisSpec | None = None

    @classmethod
    def spline(cls, df: int) -> Candidate:
        return cls("spline", int(df))

    @classmethod
    def from_spec(cls, spec: BasisSpec) -> Candidate:
        return cls("piecewise", spec.df, spec)

    def basis_for(self, training: Dataset) -> BasisSpec:
        if self.kind == "spline":
            return make_spline_basis(self.df, training.values)
        return self.piecewise

    @property
    def name(self) -> str:
        return self.kind if self.piecewise is None else f"piecewise:{self.piecewise.version}"


@dataclass
class CvReport:
    candidates: list[Candidate]
    rejections: list[int]
    chosen: int
    seed: int
    folds: int
    alpha: float
    assignment: np.ndarray  # fold index of each group
    pairs: int = 0
    per_fold: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=int))

    @property
    def best(self) -> Candidate:
        return self.candidates[self.chosen]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["basis", "df", "rejections", "chosen"])
            for i, (c, r) in enumerate(zip(self.candidates, self.rejections)):
                w.writerow([c.name, c.df, r, int(i == self.chosen)])


def fold_assignment(m: int, folds: int, seed: int) -> np.ndarray:
    """Balanced random fold labels for ``m`` groups."""
    perm = np.random.default_rng(seed).permutation(m)
    out = np.empty(m, dtype=np.int64)
    out[perm] = np.arange(m) % folds
    return out


def fit_fold(dataset: Dataset, candidate: Candidate, train_groups) -> FittedFamily:
    """Fit the candidate on ``train_groups`` only."""
    train = dataset.subset(train_groups)
    spec = candidate.basis_for(train)
    return fit_sufficient_statistic(summarize(train, spec), k=1)


def held_out_pairs(test_groups) -> list[tuple[int, int]]:
    g = np.sort(np.asarray(test_groups))
    return [(int(g[i]), int(g[i + 1])) for i in range(0, g.size - 1, 2)]


def _fold_rejections(args) -> int:
    dataset, candidate, train, test, alpha = args
    fit = fit_fold(dataset, candidate, train)
    held = dataset.subset(test).split()
    pos = {g: i for i, g in enumerate(test)}
    hits = 0
    for a, b in held_out_pairs(test):
        res = z_test(held[pos[a]], held[pos[b]], fit, alpha, alternative="two-sided")
        hits += bool(res.decision)
    return hits


def cross_validate(
    dataset: Dataset, candidates, folds: int = 5, alpha: float = 0.05, seed: int = 0, workers: int = 1,
) -> CvReport:
    candidates = list(candidates)
    if len(candidates) < 2:
        raise ValueError("need at least two candidates")
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    m = dataset.m
    if m < 2 * folds:
        raise InsufficientGroups(f"{folds} folds need at least {2 * folds} groups, got {m}")
    assign = fold_assignment(m, folds, seed)
    groups = np.arange(m)
    jobs = []
    for c in candidates:
        for f in range(folds):
            jobs.append((dataset, c, groups[assign != f], groups[assign == f], alpha))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            hits = list(ex.map(_fold_rejections, jobs))
    else:
        hits = [_fold_rejections(j) for j in jobs]
    per_fold = np.array(hits, dtype=int).reshape(len(candidates), folds)
    totals = per_fold.sum(axis=1)
    # ties go to the smallest df, then to the earliest candidate
    chosen = min(range(len(candidates)), key=lambda i: (-totals[i], candidates[i].df, i))
    pairs = sum(len(held_out_pairs(groups[assign == f])) for f in range(folds))
    log.info("cv rejections %s over %d pairs; chose %d", totals.tolist(), pairs, chosen)
    return CvReport(candidates, totals.tolist(), chosen, seed, folds, alpha, assign, pairs, per_fold)
