"""Command-line entry point: ``learnfam {fit,test,replicate,cv,simulate}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .basemeasure import DEFAULT_NBINS, bin_data, fit_base_measure
from .basis import DEFAULT_DF, BasisSpec, make_piecewise_basis, make_spline_basis
from .data import read_dataset, read_sample, write_raw_csv, write_truth_csv
from .errors import LearnfamError, UsageError
from .inference import delta_stat, permutation_test, z_test
from .modelsel import Candidate, cross_validate
from .scan import summarize
from .sim import SimConfig, generate
from .spectral import fit_sufficient_statistic

log = logging.getLogger("learnfam")


def load_basis_file(path) -> BasisSpec:
    """A JSON basis: either a serialized BasisSpec or ``{"breakpoints", "coefficients"}``."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read basis file {path}: {exc}") from exc
    try:
        if "kind" in d:
            return BasisSpec.from_dict(d)
        return make_piecewise_basis(d["breakpoints"], d["coefficients"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad basis file {path}: {exc}") from exc


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def cmd_fit(args) -> int:
    data = read_dataset(args.input, args.format)
    if args.basis == "file":
        if not args.basis_file:
            raise UsageError("--basis file needs --basis-file")
        spec = load_basis_file(args.basis_file)
    else:
        spec = make_spline_basis(args.df, data.values)
    summary = summarize(data, spec, workers=args.workers)
    fit = fit_sufficient_statistic(summary, k=args.k, ridge=args.ridge)
    bm = None
    if args.nbins > 0:
        if args.k > 1:
            log.warning("base measure uses the leading component only")
        bm = fit_base_measure(bin_data(data, args.nbins), fit)
    meta = {"m": data.m, "n_total": data.n_total, "d": spec.df, "k": args.k, "seed": args.seed,
            "input_format": args.format, "flags": list(fit.flags) + ([] if bm is None else list(bm.flags))}
    model = io.ModelFile(spec, fit, bm, meta)
    out = Path(args.out)
    io.save_model(model, out)
    io.export_scree(fit, _sidecar(out, "_scree.csv"))
    io.export_curve(fit, _sidecar(out, "_curve.csv"))
    if bm is not None:
        io.export_base_measure(bm, _sidecar(out, "_base.csv"))
    lam = fit.eigenvalues
    print(f"fitted d={spec.df} k={args.k} on m={data.m} groups, n={data.n_total}; "
          f"lambda1={lam[0]:.6g} lambda2={lam[1] if lam.size > 1 else float('nan'):.6g}")
    print(f"model written to {out}")
    return 0


def cmd_test(args) -> int:
    model = io.load_model(args.model)
    a, b = read_sample(args.sample_a), read_sample(args.sample_b)
    fit = model.family
    if args.method == "perm":
        res = permutation_test(a, b, fit, args.nperm, args.alpha, args.seed, args.alternative)
    else:
        res = z_test(a, b, fit, args.alpha, args.alternative)
    others = {"identity": delta_stat(a, b, None), "log1p": delta_stat(a, b, _log1p_stat)}
    p = res.p_one if args.alternative == "greater" else res.p_two
    print(f"method={res.method} delta_T={res.statistic:.6g} p={p:.6g} reject={res.decision}")
    for name, d in others.items():
        print(f"delta_{name}={d:.6g}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["statistic", "delta", "method", "p_one", "p_two", "alpha", "reject"])
            w.writerow(["fitted", repr(res.statistic), res.method, repr(res.p_one), repr(res.p_two), args.alpha,
                        int(res.decision)])
            for name, d in others.items():
                w.writerow([name, repr(d), "", "", "", "", ""])
    return 0


def _log1p_stat(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.log1p(np.abs(x))


def cmd_replicate(args) -> int:
    from .replicate import power_study, run_study

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    study = run_study(args.study, seed=args.seed, alpha=args.alpha, workers=args.workers)
    pipe = study.pipe
    io.save_model(io.ModelFile(pipe.spec, pipe.fit, pipe.bm, {"study": args.study, "seed": args.seed}),
                  out / "model.json")
    io.export_scree(pipe.fit, out / "scree.csv")
    io.export_curve(pipe.fit, out / "curve.csv")
    io.export_base_measure(pipe.bm, out / "base_measure.csv")
    spread = 2.0 * float(np.std(pipe.bm.theta))
    io.export_densities(pipe.bm, [-spread, 0.0, spread], out / "densities.csv")
    io.export_intervals(study.intervals, out / "intervals.csv")
    io.export_table(study.table, out / "table1.csv")
    metrics = dict(study.metrics)
    metrics["efficiency"] = study.table
    if args.study == "loggamma":
        power = power_study(pipe.fit, seed=args.seed + 10_000)
        metrics["power"] = {k: v for k, v in power.items() if not k.startswith("p_")}
    (out / "metrics.json").write_text(json.dumps(io._enc(metrics), indent=1, sort_keys=True) + "\n")
    for key in ("rho2", "theta_coverage", "theta_misses", "mu_coverage", "mean_width", "t_mean_width", "width_ratio"):
        if key in metrics:
            print(f"{key}={metrics[key]:.6g}")
    for stat, vals in study.table.items():
        print(f"RE[{stat}]={vals['oracle']:.4f}")
    print(f"outputs in {out}")
    return 0


def cmd_cv(args) -> int:
    data = read_dataset(args.input, args.format)
    cands = [Candidate.spline(int(d)) for d in args.dfs.split(",") if d.strip()]
    cands += [Candidate.from_spec(load_basis_file(p)) for p in args.basis_file or []]
    if len(cands) < 2:
        raise UsageError("need at least two candidates (--dfs and/or --basis-file)")
    rep = cross_validate(data, cands, folds=args.folds, alpha=args.alpha, seed=args.seed, workers=args.workers)
    for i, (c, r) in enumerate(zip(rep.candidates, rep.rejections)):
        print(f"{c.name} df={c.df} rejections={r}{' *' if i == rep.chosen else ''}")
    if args.out:
        rep.to_csv(args.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = SimConfig(args.family, args.m, args.n, args.theta_mean, args.theta_sd, args.seed)
    data = generate(cfg)
    out = Path(args.out)
    write_raw_csv(data, out)
    write_truth_csv(data, _sidecar(out, "_truth.csv"))
    print(f"wrote {data.n_total} observations in {data.m} groups to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="learnfam", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, workers=True):
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if workers:
            sp.add_argument("--workers", type=int, default=1)

    f = sub.add_parser("fit", help="fit the sufficient statistic and base measure")
    f.add_argument("--input", required=True)
    f.add_argument("--format", choices=["raw", "binned"], default="raw")
    f.add_argument("--basis", choices=["spline", "file"], default="spline")
    f.add_argument("--basis-file")
    f.add_argument("--df", type=int, default=DEFAULT_DF)
    f.add_argument("--k", type=int, default=1)
    f.add_argument("--ridge", type=float, default=None)
    f.add_argument("--nbins", type=int, default=DEFAULT_NBINS, help="0 skips the base measure")
    f.add_argument("--out", required=True)
    common(f)
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("test", help="two-sample test with a fitted model")
    t.add_argument("--model", required=True)
    t.add_argument("sample_a")
    t.add_argument("sample_b")
    t.add_argument("--method", choices=["perm", "z"], default="perm")
    t.add_argument("--alternative", choices=["greater", "two-sided"], default="greater")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--nperm", type=int, default=999)
    t.add_argument("--out")
    common(t, workers=False)
    t.set_defaults(func=cmd_test)

    r = sub.add_parser("replicate", help="run a simulation study end to end")
    r.add_argument("study", choices=["laplace", "loggamma"])
    r.add_argument("--alpha", type=float, default=0.05)
    r.add_argument("--out", required=True)
    common(r)
    r.set_defaults(func=cmd_replicate)

    c = sub.add_parser("cv", help="choose a basis by held-out rejections")
    c.add_argument("--input", required=True)
    c.add_argument("--format", choices=["raw", "binned"], default="raw")
    c.add_argument("--dfs", default="3,7,11", help="comma-separated spline df candidates")
    c.add_argument("--basis-file", action="append", help="piecewise candidate (repeatable)")
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--out")
    common(c)
    c.set_defaults(func=cmd_cv)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("family", choices=["laplace", "loggamma"])
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--theta-mean", type=float, default=None)
    s.add_argument("--theta-sd", type=float, default=None)
    s.add_argument("--out", required=True)
    common(s, workers=False)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "simulate":
        defaults = {"laplace": (0.0, 0.1), "loggamma": (3.0, 0.5)}[args.family]
        args.theta_mean = defaults[0] if args.theta_mean is None else args.theta_mean
        args.theta_sd = defaults[1] if args.theta_sd is None else args.theta_sd
    try:
        return args.func(args)
    except LearnfamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # bad option values that got past argparse
        print(f"error: {exc}", file=sys.stderr)
        return UsageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
