"""Command-line entry point: ``boostvi run | probe | plotdata``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 probe failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .boosting import FwConfig, Variant
from .densities import BaseDensity, Family, Mixture, QuadratureGrid, kl_gaussian_closed
from .harness import DENSITY_GRID, ExperimentConfig, run_experiment
from .lmo import LambdaSchedule, LmoConfig
from .probes import (
    PROBE_GRID,
    curvature_probe_suite,
    default_probe_suite,
    entropy_bound_probe,
    gap_bound_probe,
    gaussian_pair_grid,
)
from .boosting import curvature_probe

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PROBE = 3

VARIANTS = {
    "fixed": Variant.FIXED_STEP,
    "linesearch": Variant.LINE_SEARCH,
    "fullycorrective": Variant.FULLY_CORRECTIVE,
}


class CliError(Exception):
    """Configuration error; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _parse_lambda(text: str) -> LambdaSchedule:
    if text == "sqrt":
        return LambdaSchedule(kind="inverse_sqrt")
    if text.startswith("const:"):
        try:
            return LambdaSchedule(kind="constant", value=float(text.split(":", 1)[1]))
        except ValueError as e:
            raise CliError(f"bad lambda value in {text!r}: {e}")
    raise CliError(f"invalid --lambda {text!r}: expected 'sqrt' or 'const:<v>'")


def build_parser() -> _Parser:
    parser = _Parser(prog="boostvi", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    run = sub.add_parser("run", help="run a boosting experiment")
    run.add_argument("--config", help="JSON config file; flags override its keys")
    run.add_argument("--model", help="bimodal | logistic | matrix_factorization")
    run.add_argument("--data", help="CSV dataset path")
    run.add_argument("--variant", help="fixed | linesearch | fullycorrective")
    run.add_argument("--iters", type=int, help="number of boosting iterations")
    run.add_argument("--mc-samples", type=int, help="Monte-Carlo samples per LMO step")
    run.add_argument("--lmo-steps", type=int, help="gradient steps per LMO solve")
    run.add_argument("--lambda", dest="lambda_", help="sqrt | const:<v>")
    run.add_argument("--delta", type=float, help="assumed LMO accuracy in (0, 1]")
    run.add_argument("--gap-tol", type=float, help="duality-gap stopping tolerance")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--n-seeds", type=int, help="number of seeds to aggregate")
    run.add_argument("--family", help="gaussian | laplace")
    run.add_argument("--out", help="output directory")

    probe = sub.add_parser("probe", help="run theory probes")
    probe.add_argument("--probe", default="all",
                       choices=["all", "entropy", "curvature", "gap"])
    probe.add_argument("--gamma", type=float, default=None,
                       help="single blend weight for the curvature probe")
    probe.add_argument("--scale-floor", type=float, default=1e-3)
    probe.add_argument("--seed", type=int, default=0)

    plot = sub.add_parser("plotdata", help="emit plottable CSVs from a run directory")
    plot.add_argument("--run", required=True, help="existing run directory")
    plot.add_argument("--out", help="output directory (defaults to the run directory)")
    return parser


_FLAG_KEYS = {
    "model": "model",
    "data": "data_path",
    "variant": "variant",
    "iters": "iters",
    "mc_samples": "mc_samples",
    "lmo_steps": "lmo_steps",
    "lambda_": "lambda",
    "delta": "delta",
    "gap_tol": "gap_tol",
    "seed": "seed",
    "n_seeds": "n_seeds",
    "family": "family",
    "out": "out",
}


def _experiment_config(args) -> ExperimentConfig:
    settings = {}
    if args.config:
        if not os.path.exists(args.config):
            raise CliError(f"config file not found: {args.config}")
        try:
            with open(args.config) as fh:
                settings = json.load(fh)
        except json.JSONDecodeError as e:
            raise CliError(f"config file is not valid JSON: {e}")
        if not isinstance(settings, dict):
            raise CliError("config file must hold a JSON object")
        unknown = set(settings) - set(_FLAG_KEYS.values()) - {"model_params", "split_fraction"}
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            settings[key] = val

    model = settings.get("model", "bimodal")
    if model not in ("bimodal", "logistic", "matrix_factorization"):
        raise CliError(f"invalid model {model!r}")
    variant_key = settings.get("variant", "fixed")
    if variant_key not in VARIANTS:
        raise CliError(f"invalid variant {variant_key!r}: expected one of {sorted(VARIANTS)}")
    family = settings.get("family", "gaussian")
    if family not in ("gaussian", "laplace"):
        raise CliError(f"invalid family {family!r}")
    schedule = settings.get("lambda", "sqrt")
    if isinstance(schedule, str):
        schedule = _parse_lambda(schedule)
    else:
        raise CliError("invalid lambda: expected a string like 'sqrt' or 'const:0.5'")
    delta = float(settings.get("delta", 1.0))
    if not 0.0 < delta <= 1.0:
        raise CliError("invalid delta: must lie in (0, 1]")
    try:
        lmo = LmoConfig(
            family=Family(family),
            n_mc_samples=int(settings.get("mc_samples", 32)),
            n_steps=int(settings.get("lmo_steps", 2000)),
            lambda_schedule=schedule,
            seed=int(settings.get("seed", 0)),
        )
        fw = FwConfig(
            variant=VARIANTS[variant_key],
            max_iters=int(settings.get("iters", 10)),
            delta=delta,
            gap_tolerance=float(settings.get("gap_tol", 0.0)),
            seed=int(settings.get("seed", 0)),
            lmo=lmo,
        )
        return ExperimentConfig(
            model=model,
            model_params=settings.get("model_params", {}),
            data_path=settings.get("data_path"),
            split_fraction=float(settings.get("split_fraction", 0.7)),
            n_seeds=int(settings.get("n_seeds", 1)),
            fw=fw,
            out_dir=settings.get("out"),
        )
    except (TypeError, ValueError) as e:
        raise CliError(str(e))


def _progress_line(record):
    gap = "-" if record.gap_estimate is None else f"{record.gap_estimate:.4f}"
    print(
        f"t={record.t} gamma={record.gamma:.3f} gap={gap} train_ll={record.train_ll:.4f}"
    )


def cmd_run(args) -> int:
    cfg = _experiment_config(args)
    if cfg.out_dir is None:
        raise CliError("missing required flag: --out")
    summary = run_experiment(cfg, progress=_progress_line)
    for key in sorted(summary.mean):
        print(f"{key}: {summary.mean[key]:.6f} +/- {summary.std[key]:.6f}")
    return EXIT_OK


def cmd_probe(args) -> int:
    if args.probe == "curvature" and args.gamma is not None:
        # endpoint inspection: print the probe values for one gamma
        for s, q in gaussian_pair_grid():
            (value,) = curvature_probe(s, q, [args.gamma], PROBE_GRID)
            print(
                f"s=N({s.loc[0]:+.1f},{s.scale[0]:.1f}) "
                f"q=N({q.atoms[0].loc[0]:+.1f},{q.atoms[0].scale[0]:.1f}) "
                f"(2/g^2)KL={value:.6f}"
            )
        return EXIT_OK
    try:
        if args.probe == "entropy":
            results = entropy_bound_probe(args.scale_floor)
        elif args.probe == "curvature":
            results = curvature_probe_suite()
        elif args.probe == "gap":
            results = gap_bound_probe(seed=args.seed)
        else:
            results = default_probe_suite(scale_floor=args.scale_floor, seed=args.seed)
    except ValueError as e:
        raise CliError(str(e))
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        ok = ok and r.passed
        print(f"{r.name:<{width}}  {status}  {r.detail}")
    return EXIT_OK if ok else EXIT_PROBE


def _mixture_from_dict(d: dict) -> Mixture:
    atoms = [
        BaseDensity(Family(a["family"]), a["loc"], a["scale"]) for a in d["atoms"]
    ]
    return Mixture.from_unnormalized(atoms, d["weights"])


def cmd_plotdata(args) -> int:
    run_dir = args.run
    trace_path = os.path.join(run_dir, "trace.json")
    summary_path = os.path.join(run_dir, "summary.json")
    if not (os.path.isdir(run_dir) and os.path.exists(trace_path) and os.path.exists(summary_path)):
        raise CliError(f"not a run directory (missing trace.json/summary.json): {run_dir}")
    out_dir = args.out or run_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(trace_path) as fh:
        traces = json.load(fh)["traces"]
    with open(summary_path) as fh:
        config = json.load(fh)["config"]

    trace = traces[0]
    series_path = os.path.join(out_dir, "plot_series.csv")
    with open(series_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "gamma", "kl", "gap", "gap_stderr", "train_ll"])
        for rec in trace["records"]:
            writer.writerow([
                rec["t"], rec["gamma"],
                rec["kl_oracle"] if rec["kl_oracle"] is not None else "",
                rec["gap_estimate"] if rec["gap_estimate"] is not None else "",
                rec["gap_stderr"] if rec["gap_stderr"] is not None else "",
                rec["train_ll"],
            ])

    if config["model"] == "bimodal":
        from .models import synthetic_bimodal_target

        p = config.get("model_params", {})
        model = synthetic_bimodal_target(
            mu=p.get("mu", (-1.0, 1.0)),
            sigma=p.get("sigma", (0.5, 0.5)),
            pi=p.get("pi", (0.4, 0.6)),
        )
        z = DENSITY_GRID.points()
        cols = [("z", z), ("target", np.exp(model.posterior_log_pdf(z)))]
        for i, mdict in enumerate(trace["mixtures"]):
            m = _mixture_from_dict(mdict)
            cols.append((f"q_{i}", np.exp(m.log_prob(z.reshape(-1, 1)))))
        density_path = os.path.join(out_dir, "plot_density.csv")
        with open(density_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([name for name, _ in cols])
            for row in zip(*(vals for _, vals in cols)):
                writer.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand == "run":
            return cmd_run(args)
        if args.subcommand == "probe":
            return cmd_probe(args)
        return cmd_plotdata(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
