"""Grouped observations and the two CSV ingestion formats."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyData, NonFiniteInput, ParseError


@dataclass
class Dataset:
    """Flat storage of observations tagged by group.

    ``group[j]`` indexes into ``labels``.  ``weights`` (integer counts) is
    set for pre-binned input, where each row stands for ``weight`` copies of
    its representative value.  ``theta`` holds simulation ground truth.
    """

    values: np.ndarray
    group: np.ndarray
    labels: tuple[str, ...]
    weights: np.ndarray | None = None
    theta: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.group = np.asarray(self.group, dtype=np.intp)
        if self.values.shape != self.group.shape:
            raise ValueError("values and group must have the same length")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.int64)
            if np.any(self.weights < 0):
                raise ValueError("weights must be nonnegative")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteInput("dataset contains non-finite values")

    @classmethod
    def from_groups(cls, groups, labels=None, theta=None) -> Dataset:
        groups = [np.asarray(g, dtype=float).ravel() for g in groups]
        if labels is None:
            labels = tuple(str(i) for i in range(len(groups)))
        values = np.concatenate(groups) if groups else np.empty(0)
        gid = np.repeat(np.arange(len(groups)), [g.size for g in groups])
        return cls(values, gid, tuple(labels), theta=None if theta is None else np.asarray(theta, float))

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def w(self) -> np.ndarray:
        return np.ones(self.values.size, dtype=np.int64) if self.weights is None else self.weights

    def group_counts(self) -> np.ndarray:
        return np.bincount(self.group, weights=self.w, minlength=self.m).astype(np.int64)

    @property
    def n_total(self) -> int:
        return int(self.w.sum())

    def group_values(self, i: int) -> np.ndarray:
        """Observations of group ``i`` (weighted rows expanded)."""
        mask = self.group == i
        v = self.values[mask]
        return v if self.weights is None else np.repeat(v, self.weights[mask])

    def split(self) -> list[np.ndarray]:
        """Observations of every group, in label order (one pass)."""
        order = np.argsort(self.group, kind="stable")
        v = self.values[order]
        if self.weights is not None:
            w = self.weights[order]
            v = np.repeat(v, w)
            counts = np.bincount(self.group[order], weights=w, minlength=self.m).astype(np.int64)
        else:
            counts = np.bincount(self.group, minlength=self.m)
        return np.split(v, np.cumsum(counts)[:-1])

    def subset(self, groups) -> Dataset:
        """Restrict to the given group indices, relabelled in the given order."""
        groups = np.asarray(groups, dtype=np.intp)
        remap = np.full(self.m, -1, dtype=np.intp)
        remap[groups] = np.arange(groups.size)
        keep = remap[self.group] >= 0
        return Dataset(
            self.values[keep],
            remap[self.group[keep]],
            tuple(self.labels[g] for g in groups),
            None if self.weights is None else self.weights[keep],
            None if self.theta is None else self.theta[groups],
        )


def _open_rows(path):
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, [c.strip() for c in row]


def _float(s: str, lineno: int) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"not a number: {s!r}", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value: {s!r}", lineno)
    return v


def _build(rows_groups, values, weights=None) -> Dataset:
    if not values:
        raise EmptyData("no observations in input")
    labels: dict[str, int] = {}
    gid = [labels.setdefault(g, len(labels)) for g in rows_groups]
    return Dataset(np.asarray(values), np.asarray(gid), tuple(labels), None if weights is None else np.asarray(weights))


def read_raw_csv(path) -> Dataset:
    """``group_id,value`` rows; an optional header line is skipped."""
    groups, values = [], []
    for lineno, row in _open_rows(path):
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", lineno)
        if lineno == 1 and not groups and _is_header(row[1]):
            continue
        groups.append(row[0])
        values.append(_float(row[1], lineno))
    return _build(groups, values)


def read_binned_csv(path) -> Dataset:
    """``group_id,bin_left,bin_right,count`` rows; the bin midpoint represents each bin."""
    groups, values, weights = [], [], []
    for lineno, row in _open_rows(path):
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
        if lineno == 1 and not groups and _is_header(row[1]):
            continue
        left, right = _float(row[1], lineno), _float(row[2], lineno)
        if right < left:
            raise ParseError("bin_right < bin_left", lineno)
        try:
            count = int(row[3])
        except ValueError:
            raise ParseError(f"count is not an integer: {row[3]!r}", lineno) from None
        if count < 0:
            raise ParseError("negative count", lineno)
        groups.append(row[0])
        values.append(0.5 * (left + right))
        weights.append(count)
    return _build(groups, values, weights)


def read_sample(path) -> np.ndarray:
    """One sample: a ``value`` column, or ``group_id,value`` rows (all pooled)."""
    values = []
    for lineno, row in _open_rows(path):
        if len(row) not in (1, 2):
            raise ParseError(f"expected 1 or 2 fields, got {len(row)}", lineno)
        if not values and _is_header(row[-1]):
            continue
        values.append(_float(row[-1], lineno))
    if not values:
        raise EmptyData(f"no observations in {path}")
    return np.asarray(values)


def read_dataset(path, fmt: str = "raw") -> Dataset:
    if fmt == "raw":
        return read_raw_csv(path)
    if fmt == "binned":
        return read_binned_csv(path)
    raise ValueError(f"unknown format {fmt!r}")


def _is_header(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return True
    return False


def write_raw_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["group_id", "value"])
        for g, v in zip(dataset.group, dataset.values):
            out.writerow([dataset.labels[g], repr(float(v))])


def write_truth_csv(dataset: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["group_id", "theta_true"])
        for lab, t in zip(dataset.labels, dataset.theta):
            out.writerow([lab, repr(float(t))])
