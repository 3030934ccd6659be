"""Command-line interface.

Three subcommands: ``simulate`` runs a Monte-Carlo experiment and writes
per-round records plus a summary, ``analyze`` estimates the FDP on a dataset
directory at a fixed threshold or over a sweep, and ``gen-synthetic`` writes a
synthetic dataset directory matching round 1 of the corresponding simulation.

Exit codes: 0 success, 2 invalid flags, 3 malformed dataset, 4 unwritable
output path.  ``MATFDP_THREADS`` caps worker threads everywhere.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .covfactor import (
    build_noodle_loadings,
    build_sandwich_loadings,
    estimate_correlations,
)
from .datafiles import read_dataset, write_dataset
from .errors import DatasetFormatError
from .linalg import kron_eigenpairs, vec
from .noodle import fdp_noodle, fit_noodle
from .rng import derive_rng
from .sandwich import fdp_sandwich, fit_sandwich
from .simlab import (
    METHODS,
    gen_correlations,
    gen_round,
    preset_spec,
    resolve_max_workers,
    run_experiment,
)
from .teststats import p_values, rejection_count, test_matrix
from .trimreg import TrimSpec

_ESTIMATOR_FLAGS = {"ls": "least_squares", "trimmed": "trimmed_l1"}
_SWEEP_ROW_CAP = 100


def _fmt(v: float) -> str:
    """Format a float with 17 significant digits (round-trip exact)."""
    return format(float(v), ".17g")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matfdp",
        description="FDP estimation for two-sample tests on matrix-valued data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p: argparse.ArgumentParser, with_sim: bool) -> None:
        p.add_argument("--model", type=int, choices=(1, 2, 3), required=True)
        p.add_argument("--setting", default="a", help="named parameter preset")
        p.add_argument("--p", type=int, default=100, dest="p")
        p.add_argument("--q", type=int, default=100, dest="q")
        p.add_argument("--n", type=int, default=50, dest="n")
        p.add_argument("--m", type=int, default=50, dest="m")
        p.add_argument(
            "--w-dist",
            choices=("exp1", "scaled_t6"),
            default="exp1",
            help="noise entry distribution (model 3 only)",
        )
        p.add_argument("--seed", type=int, default=0)
        if with_sim:
            p.add_argument("--t", type=float, default=0.001, help="rejection threshold")
            p.add_argument("--rounds", type=int, default=500)
            p.add_argument(
                "--methods",
                default=",".join(METHODS),
                help="comma-separated subset of noodle,sandwich,pfa",
            )
            p.add_argument("--estimator", choices=tuple(_ESTIMATOR_FLAGS), default="trimmed")
            p.add_argument("--trim-fraction", type=float, default=0.9)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    add_model_flags(sim, with_sim=True)
    sim.add_argument("--out", required=True, help="output directory")

    ana = sub.add_parser("analyze", help="estimate the FDP on a dataset directory")
    ana.add_argument("--data", required=True, help="dataset directory")
    ana.add_argument("--method", choices=("noodle", "sandwich"), required=True)
    mode = ana.add_mutually_exclusive_group(required=True)
    mode.add_argument("--threshold", type=float, help="fixed rejection threshold")
    mode.add_argument(
        "--sweep",
        type=int,
        nargs="?",
        const=25,
        help="sweep thresholds at every SWEEP-th sorted p-value (default 25)",
    )
    ana.add_argument("--out", required=True, help="output directory")

    gen = sub.add_parser("gen-synthetic", help="write a synthetic dataset directory")
    add_model_flags(gen, with_sim=False)
    gen.add_argument("--out", required=True, help="output directory")

    return parser


def _build_spec(args: argparse.Namespace):
    overrides = dict(p=args.p, q=args.q, n=args.n, m=args.m)
    if args.model == 3:
        overrides["w_dist"] = args.w_dist
    return preset_spec(args.model, args.setting, **overrides)


def _ensure_out_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".write_probe")
    with open(probe, "w") as fh:
        fh.write("")
    os.remove(probe)


def _run_simulate(args: argparse.Namespace) -> int:
    methods = tuple(m for m in args.methods.split(",") if m)
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        return _fail(2, f"--methods must be a subset of {','.join(METHODS)}")
    if not 0.0 < args.t < 1.0:
        return _fail(2, f"--t must be in (0, 1), got {args.t}")
    if args.rounds < 1:
        return _fail(2, f"--rounds must be >= 1, got {args.rounds}")
    if not 0.0 < args.trim_fraction <= 1.0:
        return _fail(2, f"--trim-fraction must be in (0, 1], got {args.trim_fraction}")
    try:
        spec = _build_spec(args)
    except ValueError as exc:
        return _fail(2, str(exc))
    try:
        workers = resolve_max_workers()
    except ValueError as exc:
        return _fail(2, str(exc))

    # Keep the canonical method order in the output regardless of flag order.
    methods = tuple(m for m in METHODS if m in methods)
    result = run_experiment(
        spec,
        threshold=args.t,
        rounds=args.rounds,
        seed=args.seed,
        methods=methods,
        estimator=_ESTIMATOR_FLAGS[args.estimator],
        trim_fraction=args.trim_fraction,
        max_workers=workers,
    )

    try:
        _ensure_out_dir(args.out)
        rounds_path = os.path.join(args.out, "rounds.csv")
        with open(rounds_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("round,method,fdp_hat,fdp_true,R\n")
            for rec in result.records:
                fh.write(
                    f"{rec.round_index},{rec.method},{_fmt(rec.fdp_hat)},"
                    f"{_fmt(rec.fdp_true)},{rec.rejections}\n"
                )
        summary = {
            "schema_version": 1,
            "config": {
                "command": "simulate",
                "model": spec.model,
                "setting": args.setting,
                "p": spec.p,
                "q": spec.q,
                "n": spec.n,
                "m": spec.m,
                "l1": spec.l1,
                "l2": spec.l2,
                "loading_dist": list(spec.loading_dist)
                if isinstance(spec.loading_dist, tuple)
                else spec.loading_dist,
                "rho1": spec.rho1,
                "rho2": spec.rho2,
                "w_dist": spec.w_dist if spec.model == 3 else None,
                "signal_rows": spec.signal_rows,
                "signal_cols": spec.signal_cols,
                "signal_amplitude": spec.signal_amplitude,
                "t": args.t,
                "rounds": args.rounds,
                "seed": args.seed,
                "methods": list(methods),
                "estimator": _ESTIMATOR_FLAGS[args.estimator],
                "trim_fraction": args.trim_fraction,
            },
            "methods": {
                name: {
                    "bias_percent": s.bias_percent,
                    "sd_percent": s.sd_percent,
                    "rounds": s.rounds,
                }
                for name, s in result.summaries.items()
            },
            "failures": [
                {"round": f.round_index, "method": f.method, "error": f.error}
                for f in result.failures
            ],
        }
        with open(
            os.path.join(args.out, "summary.json"), "w", encoding="utf-8", newline="\n"
        ) as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        return _fail(4, f"cannot write output: {exc}")
    print(f"wrote {rounds_path}")
    return 0


def _analysis_fit(ds, x, method: str):
    """Loadings and fit for analyze; factor counts are data-driven."""
    ce = estimate_correlations(ds, x.sigma_hat)
    trim = TrimSpec()
    if method == "noodle":
        loadings = build_noodle_loadings(ce)
        fit = fit_noodle(x, loadings, estimator="trimmed_l1", trim=trim)
        return ce, fit, lambda rej, t: fdp_noodle(fit, rej, t)
    loadings = build_sandwich_loadings(ce)
    fit = fit_sandwich(x, loadings, estimator="trimmed_l1", trim=trim)
    return ce, fit, lambda rej, t: fdp_sandwich(fit, rej, t)


def _run_analyze(args: argparse.Namespace) -> int:
    if args.threshold is not None and not 0.0 < args.threshold < 1.0:
        return _fail(2, f"--threshold must be in (0, 1), got {args.threshold}")
    if args.sweep is not None and args.sweep < 1:
        return _fail(2, f"--sweep must be >= 1, got {args.sweep}")
    try:
        workers = resolve_max_workers()
    except ValueError as exc:
        return _fail(2, str(exc))
    try:
        ds = read_dataset(args.data, max_workers=workers)
    except DatasetFormatError as exc:
        where = f" ({exc.path})" if exc.path else ""
        return _fail(3, f"malformed dataset{where}: {exc}")

    x = test_matrix(ds)
    pv = p_values(x)
    ce, fit, estimate = _analysis_fit(ds, x, args.method)

    try:
        _ensure_out_dir(args.out)
        if args.threshold is not None:
            t = args.threshold
            rej = rejection_count(pv, t)
            fdp = min(estimate(rej, t), 1.0)
            with open(
                os.path.join(args.out, "report.csv"), "w", encoding="utf-8", newline="\n"
            ) as fh:
                fh.write("t,R,fdp_hat,estimated_false\n")
                fh.write(f"{_fmt(t)},{rej},{_fmt(fdp)},{_fmt(fdp * rej)}\n")
            selected = (pv <= t).astype(int)
            np.savetxt(
                os.path.join(args.out, "selected.csv"),
                selected,
                fmt="%d",
                delimiter=",",
                newline="\n",
            )
        else:
            step = args.sweep
            sorted_p = np.sort(vec(pv))
            count = min(sorted_p.size // step, _SWEEP_ROW_CAP)
            thresholds = []
            for i in range(1, count + 1):
                t = float(sorted_p[i * step - 1])
                # Duplicate p-values would repeat a threshold; keep the sweep
                # strictly increasing and inside (0, 1).
                if 0.0 < t < 1.0 and (not thresholds or t > thresholds[-1]):
                    thresholds.append(t)
            with open(
                os.path.join(args.out, "report.csv"), "w", encoding="utf-8", newline="\n"
            ) as fh:
                fh.write("t,R,fdp_hat,estimated_false\n")
                for t in thresholds:
                    rej = rejection_count(pv, t)
                    fdp = min(estimate(rej, t), 1.0)
                    fh.write(f"{_fmt(t)},{rej},{_fmt(fdp)},{_fmt(fdp * rej)}\n")
            kron = kron_eigenpairs(ce.eig1, ce.eig2)
            with open(
                os.path.join(args.out, "scree.csv"), "w", encoding="utf-8", newline="\n"
            ) as fh:
                fh.write("kind,rank,value\n")
                for rank, val in enumerate(ce.eig1.values, start=1):
                    fh.write(f"sigma1,{rank},{_fmt(val)}\n")
                for rank, val in enumerate(ce.eig2.values, start=1):
                    fh.write(f"sigma2,{rank},{_fmt(val)}\n")
                for rank, val in enumerate(kron.values, start=1):
                    fh.write(f"kron,{rank},{_fmt(val)}\n")
    except OSError as exc:
        return _fail(4, f"cannot write output: {exc}")
    print(f"wrote {os.path.join(args.out, 'report.csv')}")
    return 0


def _run_gen_synthetic(args: argparse.Namespace) -> int:
    try:
        spec = _build_spec(args)
    except ValueError as exc:
        return _fail(2, str(exc))
    sigma1, sigma2 = gen_correlations(spec, derive_rng(args.seed, 0, 0))
    # Same stream as simulate round 1, so the directory reproduces that round.
    ds, _ = gen_round(spec, sigma1, sigma2, derive_rng(args.seed, 1, 1))
    try:
        manifest = write_dataset(args.out, ds)
    except OSError as exc:
        return _fail(4, f"cannot write output: {exc}")
    print(f"wrote {manifest}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if args.command == "simulate":
        return _run_simulate(args)
    if args.command == "analyze":
        return _run_analyze(args)
    return _run_gen_synthetic(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
