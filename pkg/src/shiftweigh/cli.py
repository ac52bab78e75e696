"""Command-line surface.

Subcommands: ``weights`` (solve for importance weights), ``estimate``
(point estimate of the deployment mean), ``bound`` (closed-form
confidence bounds), ``experiment`` (synthetic-scenario harness),
``rank`` (classifier ranking under shift), ``export`` (write a sampled
scenario dataset to CSV).

Exit codes: 0 success, 2 invalid input or out-of-domain parameters,
1 internal failure.  Errors are emitted as a one-line JSON object on
stderr: {"error": {"type": ..., "message": ...}}.  Results go to stdout
as JSON with a stable field order; files are written where flags say.
Set SHIFTWEIGH_LOG=DEBUG|INFO|WARNING to control logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import dataio
from .bounds import (
    BoundInputs,
    InRkhs,
    LogApprox,
    PluginPoly,
    PolyApprox,
    evaluate_bound,
)
from .errors import DomainError, InputError
from .estimators import (
    kde_ratio_estimate,
    kmm_estimate,
    oracle_estimate,
    plugin_estimate,
    rank_classifiers,
)
from .kernels import KernelSpec
from .kmm import assemble_qp, solve_kmm
from .scenarios import (
    EstimatorConfig,
    compare_estimators,
    get_scenario,
    measure_coverage,
    sweep_rates,
)

log = logging.getLogger("shiftweigh.cli")

_ESTIMATOR_FLAG = {"kmm": "kmm", "plugin": "plugin", "kde": "kde_ratio",
                   "oracle": "oracle"}


class _Parser(argparse.ArgumentParser):
    """argparse that reports errors in the machine-readable format."""

    def error(self, message):
        _emit_error("InputError", message)
        raise SystemExit(2)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}}))
    sys.stderr.write("\n")


def _print_json(obj, out_path: str | None = None) -> None:
    text = json.dumps(obj, indent=2)
    sys.stdout.write(text + "\n")
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")


def _load_kernel(value: str) -> KernelSpec:
    text = value.strip()
    if not text.startswith("{"):
        try:
            with open(text) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read kernel file {value!r}: {exc}") from exc
    return KernelSpec.from_json(text)


def _parse_range(value: str | None):
    if value is None:
        return None
    parts = value.split(",")
    if len(parts) != 2:
        raise InputError("range must be 'min,max'")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise InputError(f"cannot parse range {value!r}") from None


def _parse_grid(value: str) -> list[int]:
    try:
        grid = [int(p) for p in value.split(",") if p.strip()]
    except ValueError:
        raise InputError(f"cannot parse n-grid {value!r}") from None
    if not grid:
        raise InputError("n-grid is empty")
    return grid


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shiftweigh", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weights", parents=[], help="solve for importance weights")
    w.add_argument("train_csv")
    w.add_argument("test_csv")
    w.add_argument("--kernel", required=True, help="kernel JSON or path to it")
    w.add_argument("--B", type=float, required=True, help="weight cap, >= 1")
    w.add_argument("--tol", type=float, default=1e-8)
    w.add_argument("--max-iter", type=int, default=None)
    w.add_argument("--out", required=True, help="weights CSV path")

    e = sub.add_parser("estimate", help="estimate the deployment mean outcome")
    e.add_argument("train_csv")
    e.add_argument("test_csv")
    e.add_argument("--estimator", choices=sorted(_ESTIMATOR_FLAG), default="kmm")
    e.add_argument("--kernel", help="kernel JSON or path (kmm, plugin)")
    e.add_argument("--B", type=float, help="weight cap (kmm, kde)")
    e.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="ridge parameter (plugin); default n_tr^(-2/3)")
    e.add_argument("--bandwidth-tr", type=float, default=None)
    e.add_argument("--bandwidth-te", type=float, default=None)
    e.add_argument("--label-range", default=None, help="'min,max' if labels leave [0,1]")
    e.add_argument("--tol", type=float, default=1e-8)
    e.add_argument("--max-iter", type=int, default=None)
    e.add_argument("--out", default=None, help="also write the report JSON here")

    b = sub.add_parser("bound", help="evaluate a finite-sample confidence bound")
    b.add_argument("--regime", required=True,
                   choices=["in-rkhs", "poly", "log", "plugin"])
    b.add_argument("--B", type=float, required=True)
    b.add_argument("--C", type=float, required=True)
    b.add_argument("--delta", type=float, required=True)
    b.add_argument("--n-tr", type=int, required=True)
    b.add_argument("--n-te", type=int, required=True)
    b.add_argument("--norm-m", type=float, default=None, help="RKHS norm (in-rkhs)")
    b.add_argument("--c2", type=float, default=None, help="poly decay constant")
    b.add_argument("--theta", type=float, default=None, help="poly smoothness")
    b.add_argument("--c-inf", type=float, default=None, help="log decay constant")
    b.add_argument("--s", type=float, default=None, help="log smoothness")
    b.add_argument("--c1", type=float, default=None, help="plug-in constant")
    b.add_argument("--out", default=None)

    x = sub.add_parser("experiment", help="run a synthetic-scenario experiment")
    x.add_argument("--scenario", required=True)
    x.add_argument("--estimators", default="kmm",
                   help="comma list from {kmm,plugin,kde,oracle}")
    x.add_argument("--n-grid", default="250,500,1000,2000,4000")
    x.add_argument("--reps", type=int, default=100)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--n-te", type=int, default=None,
                   help="default: 10x the largest grid n (sweep/compare), n_tr (coverage)")
    x.add_argument("--coverage", action="store_true",
                   help="measure bound coverage instead of rates")
    x.add_argument("--delta", type=float, default=0.05)
    x.add_argument("--B", type=float, default=None, help="override the exact weight cap")
    x.add_argument("--tol", type=float, default=1e-6)
    x.add_argument("--threads", type=int, default=1)
    x.add_argument("--outdir", required=True)

    r = sub.add_parser("rank", help="rank classifiers by reweighted loss")
    r.add_argument("train_csv")
    r.add_argument("losses_csv")
    r.add_argument("test_csv")
    r.add_argument("--kernel", required=True)
    r.add_argument("--B", type=float, required=True)
    r.add_argument("--loss-range", default=None)
    r.add_argument("--tol", type=float, default=1e-8)
    r.add_argument("--max-iter", type=int, default=None)
    r.add_argument("--out", default=None)

    ex = sub.add_parser("export", help="write a sampled scenario dataset to CSV")
    ex.add_argument("--scenario", required=True)
    ex.add_argument("--n-tr", type=int, required=True)
    ex.add_argument("--n-te", type=int, required=True)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--outdir", required=True)

    return p


def cmd_weights(args) -> int:
    spec = _load_kernel(args.kernel)
    train, info = dataio.read_dataset(args.train_csv)
    test, _ = dataio.read_dataset(
        args.test_csv, feature_order=info["feature_names"]
    )
    problem = assemble_qp(spec, train.X, test.X, args.B)
    w = solve_kmm(problem, tol=args.tol, max_iter=args.max_iter)
    log.info("weights solved: iterations=%d residual=%.3e", w.iterations, w.residual)
    dataio.write_weights_csv(args.out, w.beta)
    _print_json({
        "n_tr": train.n,
        "n_te": test.n,
        "B": args.B,
        "lhat": w.objective_value,
        "iterations": w.iterations,
        "converged": w.converged,
        "residual": w.residual,
        "mean_beta": float(w.beta.mean()),
        "min_beta": float(w.beta.min()),
        "max_beta": float(w.beta.max()),
        "weights_csv": args.out,
    })
    return 0


def cmd_estimate(args) -> int:
    kind = _ESTIMATOR_FLAG[args.estimator]
    label_range = _parse_range(args.label_range)
    train, info = dataio.read_dataset(
        args.train_csv, require_labels=True, label_range=label_range
    )
    test, _ = dataio.read_dataset(
        args.test_csv, feature_order=info["feature_names"]
    )
    if kind == "kmm":
        spec = _require(args.kernel, "--kernel")
        B = _require(args.B, "--B")
        report = kmm_estimate(
            train, test.X, _load_kernel(spec), B,
            tol=args.tol, max_iter=args.max_iter,
        )
    elif kind == "plugin":
        spec = _require(args.kernel, "--kernel")
        report = plugin_estimate(train, test.X, _load_kernel(spec), lam=args.lam)
    elif kind == "kde_ratio":
        B = _require(args.B, "--B")
        report = kde_ratio_estimate(
            train, test.X, B,
            bandwidth_tr=args.bandwidth_tr, bandwidth_te=args.bandwidth_te,
        )
    else:
        if info["beta_true"] is None:
            raise InputError(
                "the oracle estimator needs a 'beta_true' column in the "
                "training CSV"
            )
        report = oracle_estimate(train, info["beta_true"])
    _print_json(report.to_dict(), args.out)
    return 0


def _require(value, flag: str):
    if value is None:
        raise InputError(f"{flag} is required for this estimator")
    return value


def cmd_bound(args) -> int:
    if args.regime == "in-rkhs":
        regime = InRkhs(_require(args.norm_m, "--norm-m"))
    elif args.regime == "poly":
        regime = PolyApprox(_require(args.c2, "--c2"), _require(args.theta, "--theta"))
    elif args.regime == "log":
        regime = LogApprox(_require(args.c_inf, "--c-inf"), _require(args.s, "--s"))
    else:
        regime = PluginPoly(_require(args.c1, "--c1"), _require(args.theta, "--theta"))
    value = evaluate_bound(BoundInputs(
        B=args.B, C=args.C, delta=args.delta,
        n_tr=args.n_tr, n_te=args.n_te, regime=regime,
    ))
    _print_json(value.to_dict(), args.out)
    return 0


def cmd_experiment(args) -> int:
    scenario = get_scenario(args.scenario)
    grid = _parse_grid(args.n_grid)
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    if args.threads < 1:
        raise InputError("--threads must be at least 1")
    kinds = []
    for name in args.estimators.split(","):
        name = name.strip()
        if name not in _ESTIMATOR_FLAG:
            raise InputError(
                f"unknown estimator {name!r}; choose from "
                f"{sorted(_ESTIMATOR_FLAG)}"
            )
        kinds.append(_ESTIMATOR_FLAG[name])
    os.makedirs(args.outdir, exist_ok=True)
    trials_path = os.path.join(args.outdir, "trials.csv")
    summary: dict = {"scenario": scenario.describe()}

    if args.coverage:
        n_tr = grid[0]
        n_te = args.n_te if args.n_te is not None else n_tr
        config = EstimatorConfig(kind="kmm", B=args.B, tol=args.tol)
        result = measure_coverage(
            scenario, n_tr=n_tr, n_te=n_te, delta=args.delta, reps=args.reps,
            master_seed=args.seed, config=config, threads=args.threads,
        )
        dataio.write_trials_csv(trials_path, result.records)
        cov_path = os.path.join(args.outdir, "coverage.json")
        with open(cov_path, "w") as fh:
            json.dump(result.to_dict(), fh, indent=2)
            fh.write("\n")
        summary["coverage"] = result.to_dict()
        summary["files"] = [trials_path, cov_path]
    elif len(kinds) == 1:
        config = EstimatorConfig(kind=kinds[0], B=args.B, tol=args.tol)
        result = sweep_rates(
            scenario, config, grid, reps=args.reps, master_seed=args.seed,
            n_te=args.n_te, threads=args.threads,
        )
        dataio.write_trials_csv(trials_path, result.records)
        fit_path = os.path.join(args.outdir, "rate_fit.json")
        with open(fit_path, "w") as fh:
            json.dump(result.fit.to_dict(), fh, indent=2)
            fh.write("\n")
        summary["rate_fit"] = result.fit.to_dict()
        summary["files"] = [trials_path, fit_path]
    else:
        result = compare_estimators(
            scenario, grid, reps=args.reps, master_seed=args.seed,
            estimators=tuple(kinds), n_te=args.n_te, threads=args.threads,
        )
        dataio.write_trials_csv(trials_path, result.records)
        med_path = os.path.join(args.outdir, "medians.csv")
        dataio.write_medians_csv(med_path, result)
        summary["medians"] = result.to_dict()
        summary["files"] = [trials_path, med_path]
    _print_json(summary)
    return 0


def cmd_rank(args) -> int:
    spec = _load_kernel(args.kernel)
    train, info = dataio.read_dataset(args.train_csv)
    test, _ = dataio.read_dataset(
        args.test_csv, feature_order=info["feature_names"]
    )
    Z, names = dataio.read_losses(args.losses_csv)
    if Z.shape[0] != train.n:
        raise InputError(
            f"loss rows ({Z.shape[0]}) do not match training rows ({train.n})"
        )
    result = rank_classifiers(
        train.X, Z, test.X, spec, args.B,
        loss_range=_parse_range(args.loss_range),
        tol=args.tol, max_iter=args.max_iter,
    )
    for entry in result.entries:
        entry["classifier"] = names[entry["classifier_index"]]
    _print_json(result.to_dict(), args.out)
    return 0


def cmd_export(args) -> int:
    scenario = get_scenario(args.scenario)
    if args.n_tr < 1 or args.n_te < 1:
        raise InputError("--n-tr and --n-te must be at least 1")
    os.makedirs(args.outdir, exist_ok=True)
    train_path = os.path.join(args.outdir, "train.csv")
    test_path = os.path.join(args.outdir, "test.csv")
    dataio.export_scenario_csv(
        scenario, args.n_tr, args.n_te, args.seed, train_path, test_path
    )
    _print_json({
        "scenario": scenario.describe(),
        "train_csv": train_path,
        "test_csv": test_path,
        "n_tr": args.n_tr,
        "n_te": args.n_te,
        "seed": args.seed,
    })
    return 0


_COMMANDS = {
    "weights": cmd_weights,
    "estimate": cmd_estimate,
    "bound": cmd_bound,
    "experiment": cmd_experiment,
    "rank": cmd_rank,
    "export": cmd_export,
}


def main(argv=None) -> int:
    level = os.environ.get("SHIFTWEIGH_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (InputError, DomainError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # internal failure
        log.exception("internal error")
        _emit_error(type(exc).__name__, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
