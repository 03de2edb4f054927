"""Model files and plot-data exports.

A model file is one JSON document.  Python writes floats with their
shortest round-trip repr, so loading reproduces every number exactly;
non-finite values (dropped bins carry ``zeta = -inf``) are stored as the
strings ``"inf"``, ``"-inf"`` and ``"nan"``.  The file holds no clock time,
so fitting the same input twice gives byte-identical output.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basemeasure import BaseMeasure, density
from .basis import BasisSpec
from .errors import ModelFileError
from .spectral import FittedFamily, eval_T

FORMAT = "learnfam-model"
FORMAT_VERSION = 1


@dataclass
class ModelFile:
    basis: BasisSpec
    family: FittedFamily
    base_measure: BaseMeasure | None = None
    meta: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def flags(self) -> tuple[str, ...]:
        bm = () if self.base_measure is None else self.base_measure.flags
        return tuple(self.family.flags) + tuple(bm)


def _enc(v):
    if isinstance(v, np.ndarray):
        return [_enc(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_enc(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _enc(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _floats(v) -> np.ndarray:
    def conv(x):
        if isinstance(x, list):
            return [conv(y) for y in x]
        return float(x)  # float("-inf") etc. parse the string forms

    return np.asarray(conv(v), dtype=float)


def model_to_dict(model: ModelFile) -> dict:
    fam = model.family
    out = {
        "format": FORMAT,
        "version": model.version,
        "basis": _enc(model.basis.to_dict()),
        "family": {
            "coefficients": _enc(fam.coefficients),
            "offsets": _enc(fam.offsets),
            "scales": _enc(fam.scales),
            "eigenvalues": _enc(fam.eigenvalues),
            "ridge": _enc(fam.ridge),
            "flags": list(fam.flags),
            "meta": _enc(fam.meta),
        },
        "meta": _enc(model.meta),
    }
    bm = model.base_measure
    if bm is not None:
        out["base_measure"] = {
            "x": _enc(bm.x), "zeta": _enc(bm.zeta), "t": _enc(bm.t),
            "alpha": _enc(bm.alpha), "theta": _enc(bm.theta), "labels": list(bm.labels),
            "loglik": _enc(bm.loglik), "iterations": int(bm.iterations), "grad_norm": _enc(bm.grad_norm),
            "converged": bool(bm.converged), "flags": list(bm.flags), "constraints": list(bm.constraints),
        }
    return out


def model_from_dict(d: dict) -> ModelFile:
    try:
        if d.get("format") != FORMAT:
            raise ModelFileError("not a learnfam model file")
        if d.get("version") != FORMAT_VERSION:
            raise ModelFileError(f"unsupported model file version {d.get('version')!r}")
        basis = BasisSpec.from_dict(d["basis"])
        f = d["family"]
        fam = FittedFamily(
            basis=basis,
            coefficients=_floats(f["coefficients"]).reshape(len(f["coefficients"]), -1),
            offsets=_floats(f["offsets"]),
            scales=_floats(f["scales"]),
            eigenvalues=_floats(f["eigenvalues"]),
            ridge=float(f["ridge"]),
            flags=tuple(f["flags"]),
            meta=dict(f["meta"]),
        )
        bm = None
        if "base_measure" in d:
            b = d["base_measure"]
            bm = BaseMeasure(
                x=_floats(b["x"]), zeta=_floats(b["zeta"]), t=_floats(b["t"]),
                alpha=_floats(b["alpha"]), theta=_floats(b["theta"]), labels=tuple(b["labels"]),
                loglik=float(b["loglik"]), iterations=int(b["iterations"]), grad_norm=float(b["grad_norm"]),
                converged=bool(b["converged"]), flags=tuple(b["flags"]), constraints=tuple(b["constraints"]),
            )
        return ModelFile(basis, fam, bm, dict(d.get("meta", {})), int(d["version"]))
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc


def dumps_model(model: ModelFile) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_model(model: ModelFile, path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path) -> ModelFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ModelFileError("model file must hold a JSON object")
    return model_from_dict(d)


# -- CSV exports -------------------------------------------------------------


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def export_scree(fit: FittedFamily, path) -> None:
    _write_rows(path, ["component", "eigenvalue"], ((j + 1, lam) for j, lam in enumerate(fit.eigenvalues)))


def export_curve(fit: FittedFamily, path, grid: int = 401, lo=None, hi=None) -> None:
    """(x, T(x)) on a grid spanning the clamp range, with a margin beyond it."""
    a, b = fit.basis.boundary
    pad = 0.05 * (b - a)
    x = np.linspace(a - pad if lo is None else lo, b + pad if hi is None else hi, grid)
    _write_rows(path, ["x", "T"], zip(x, eval_T(fit, x)))


def export_base_measure(bm: BaseMeasure, path) -> None:
    _write_rows(path, ["x", "t", "zeta", "p0"], zip(bm.x, bm.t, bm.zeta, bm.p0))


def export_densities(bm: BaseMeasure, thetas, path) -> None:
    rows = []
    for th in thetas:
        p = density(bm, None, th)
        rows.extend((float(th), x, q) for x, q in zip(bm.x, p))
    _write_rows(path, ["theta", "x", "mass"], rows)


def export_intervals(intervals: dict, path) -> None:
    keys = ["truth", "estimate", "lower", "upper", "t_lower", "t_upper"]
    rows = ((i, *(intervals[k][i] for k in keys)) for i in range(len(intervals["truth"])))
    _write_rows(path, ["group", *keys], rows)


def export_table(table: dict, path) -> None:
    rows = []
    for stat, vals in table.items():
        rows.append((stat, *(vals[k] for k in ("oracle", "signal", "corr_fitted"))))
    _write_rows(path, ["statistic", "re_oracle", "re_signal", "corr2_fitted"], rows)
