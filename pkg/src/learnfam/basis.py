"""Bounded one-dimensional function bases S(x).

Two kinds are supported:

``spline``
    Natural cubic spline without intercept (the same space as R's
    ``ns(x, df)``): ``df - 1`` interior knots at equally spaced quantiles
    of the training values, boundary knots at the 0.5% / 99.5% quantiles.
    Evaluation clamps ``x`` into the boundary interval, so every basis
    function is constant beyond it and therefore bounded.

``piecewise``
    A user-supplied table of breakpoints and per-interval polynomial
    coefficients (ascending powers of ``x - left_breakpoint``), also
    clamped to the outer breakpoints.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline

from .errors import InvalidDf, NonFiniteInput, TooFewDistinctValues

log = logging.getLogger(__name__)

DEFAULT_DF = 11
CLAMP_QUANTILES = (0.005, 0.995)
SPLINE_ORDER = 3


@dataclass(frozen=True, eq=False)
class BasisSpec:
    kind: str
    df: int
    knots: tuple[float, ...]
    boundary: tuple[float, float]
    # piecewise only: shape (df, len(knots) + 1, degree + 1)
    coefficients: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("spline", "piecewise"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        lo, hi = self.boundary
        if not lo < hi:
            raise ValueError("boundary lower must be < upper")
        k = np.asarray(self.knots, dtype=float)
        if k.size and (np.any(np.diff(k) <= 0) or k[0] <= lo or k[-1] >= hi):
            raise ValueError("knots must be strictly increasing and inside the boundary")
        if self.kind == "piecewise":
            c = np.asarray(self.coefficients, dtype=float)
            if c.ndim != 3 or c.shape[0] != self.df or c.shape[1] != len(self.knots) + 1:
                raise ValueError("piecewise coefficients must have shape (df, n_intervals, degree+1)")
            object.__setattr__(self, "coefficients", c)
        elif self.df != len(self.knots) + 1:
            raise ValueError("spline df must equal number of interior knots + 1")

    def __eq__(self, other):
        return isinstance(other, BasisSpec) and self.version == other.version

    def __hash__(self):
        return hash(self.version)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.r_[self.boundary[0], self.knots, self.boundary[1]]

    @cached_property
    def version(self) -> str:
        payload = json.dumps(self.to_dict(include_version=False), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @cached_property
    def _natural_projection(self) -> np.ndarray:
        # B-spline coefficients -> natural spline basis (f'' = 0 at both ends).
        t = self._bspline_knots
        nb = len(t) - SPLINE_ORDER - 1
        lo, hi = self.boundary
        d2 = BSpline(t, np.eye(nb), SPLINE_ORDER).derivative(2)
        const = np.vstack([d2(lo), d2(hi)])[:, 1:]  # drop intercept column
        q, _ = np.linalg.qr(const.T, mode="complete")
        return q[:, 2:]

    @cached_property
    def _bspline_knots(self) -> np.ndarray:
        lo, hi = self.boundary
        return np.r_[[lo] * (SPLINE_ORDER + 1), self.knots, [hi] * (SPLINE_ORDER + 1)]

    @cached_property
    def pivot(self) -> np.ndarray:
        """Basis value near the data centre, subtracted by accumulators."""
        b = self.breakpoints
        return eval_basis(self, float(b[len(b) // 2]))

    def to_dict(self, include_version: bool = True) -> dict:
        out = {
            "kind": self.kind,
            "df": int(self.df),
            "knots": [float(v) for v in self.knots],
            "boundary": [float(v) for v in self.boundary],
        }
        if self.coefficients is not None:
            out["coefficients"] = self.coefficients.tolist()
        if include_version:
            out["version"] = self.version
        return out

    @classmethod
    def from_dict(cls, d: dict) -> BasisSpec:
        coef = d.get("coefficients")
        spec = cls(
            kind=d["kind"],
            df=int(d["df"]),
            knots=tuple(float(v) for v in d["knots"]),
            boundary=(float(d["boundary"][0]), float(d["boundary"][1])),
            coefficients=None if coef is None else np.asarray(coef, dtype=float),
        )
        if "version" in d and d["version"] != spec.version:
            raise ValueError("basis version tag does not match its contents")
        return spec


def make_spline_basis(df: int, training_values) -> BasisSpec:
    """Natural cubic spline basis with ``df`` functions fitted to ``training_values``."""
    if df < 2:
        raise InvalidDf(f"df must be >= 2, got {df}")
    v = np.asarray(training_values, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("training values must be finite")
    n_distinct = np.unique(v).size
    if n_distinct < df + 2:
        raise TooFewDistinctValues(f"need at least {df + 2} distinct values, got {n_distinct}")
    lo, hi = np.quantile(v, CLAMP_QUANTILES)
    probs = np.arange(1, df) / df
    knots = np.unique(np.quantile(v, probs))
    knots = knots[(knots > lo) & (knots < hi)]
    if knots.size != df - 1:
        log.warning("tied quantile knots: basis has %d functions instead of %d", knots.size + 1, df)
    if not lo < hi:
        raise TooFewDistinctValues("clamp quantiles coincide; data too concentrated")
    return BasisSpec("spline", int(knots.size + 1), tuple(knots.tolist()), (float(lo), float(hi)))


def make_piecewise_basis(breakpoints, coefficients) -> BasisSpec:
    """Wrap a user table. ``coefficients[f, j, p]`` multiplies ``(x - breakpoints[j]) ** p``."""
    b = np.asarray(breakpoints, dtype=float)
    c = np.asarray(coefficients, dtype=float)
    if b.ndim != 1 or b.size < 2:
        raise ValueError("need at least two breakpoints")
    return BasisSpec("piecewise", int(c.shape[0]), tuple(b[1:-1].tolist()), (float(b[0]), float(b[-1])), c)


def eval_basis(spec: BasisSpec, x) -> np.ndarray:
    """Evaluate S at ``x`` (scalar -> shape (d,), array -> shape (n, d))."""
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa).ravel()
    if not np.all(np.isfinite(xa)):
        raise NonFiniteInput("basis evaluation requires finite x")
    xc = np.clip(xa, *spec.boundary)
    if spec.kind == "spline":
        dm = BSpline.design_matrix(xc, spec._bspline_knots, SPLINE_ORDER).toarray()
        out = dm[:, 1:] @ spec._natural_projection
    else:
        out = _eval_piecewise(spec, xc)
    return out[0] if scalar else out


def _eval_piecewise(spec: BasisSpec, x: np.ndarray) -> np.ndarray:
    b = spec.breakpoints
    j = np.clip(np.searchsorted(b, x, side="right") - 1, 0, len(b) - 2)
    dx = x - b[j]
    c = spec.coefficients[:, j, :]  # (d, n, p+1)
    acc = c[:, :, -1].copy()
    for p in range(c.shape[2] - 2, -1, -1):
        acc = acc * dx + c[:, :, p]
    return acc.T
