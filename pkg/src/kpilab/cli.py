"""Command-line entry points: run experiments, validate weights, check
identities, and report on completed run directories."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .spectral import make_grid
from .weights import WeightSpec, build_weight, validate_weight
from .dynamics import SolverConfig, solve, initial_data
from .identities import main_equality_terms
from .experiments import run_experiment
from .io import make_artifact, write_artifact, read_artifact, parse_config, RunArtifact


def _cmd_run(args) -> int:
    config, echo = parse_config(args.config)
    seed = args.seed
    if seed is not None:
        config = replace(config, seeds=(seed,))
        echo["seeds"] = [seed]
        if config.data.get("kind") == "rough":
            config = replace(config, data={**config.data, "seed": seed})
            echo["data"] = dict(config.data)
    verdict = run_experiment(config)
    snapshots = ()
    try:
        snapshots = (config.datum(config.grid()),)
    except Exception:
        pass  # catalog kinds that need extra params are skipped, not fatal
    artifact = make_artifact(config.name, echo, seed, verdict, snapshots)
    print(f"{config.name}: {'PASS' if verdict.passed else 'FAIL'}")
    for key, value in verdict.measured.items():
        mark = ""
        if key in verdict.thresholds:
            op, bound = verdict.thresholds[key]
            mark = f"   [{op} {bound:g}]"
        print(f"  {key} = {value:.6g}{mark}")
    if args.out:
        path = write_artifact(artifact, args.out)
        print(f"artifact: {path}")
    return 0 if verdict.passed else 1


def _cmd_validate_weight(args) -> int:
    grid = make_grid(args.nx, args.ny, args.Lx, args.Ly)
    spec = WeightSpec(sigma=args.sigma, i=args.i, k=args.k)
    w = build_weight(spec, grid, args.window)
    report = validate_weight(w, grid, args.T)
    print(json.dumps(report.as_dict(), indent=2))
    if args.out:
        xs = np.linspace(-args.window * args.Lx, args.window * args.Lx,
                         4 * args.nx + 1)
        series = tuple(
            {"x": float(x),
             **{f"f{'x' * r}": float(w.eval(np.array([x]), 1.0, r)[0])
                for r in range(4)}}
            for x in xs)
        manifest = {
            "experiment": "validate-weight",
            "config": {"sigma": args.sigma, "i": args.i, "k": args.k,
                       "window": args.window, "T": args.T,
                       "grid": {"nx": args.nx, "ny": args.ny,
                                "Lx": args.Lx, "Ly": args.Ly}},
            "code_version": __import__("kpilab").__version__,
            "seed": None,
            "verdict": {"passed": report.ok, "measured": report.as_dict(),
                        "thresholds": {}},
        }
        path = write_artifact(RunArtifact(manifest=manifest, series=series),
                              args.out)
        print(f"artifact: {path}")
    return 0 if report.ok else 1


def _cmd_check_identities(args) -> int:
    a1, a2 = (int(p) for p in args.alpha.split(","))
    grid = make_grid(args.nx, args.ny, args.Lx, args.Ly)
    phi = initial_data(grid, "line_soliton", c=1.0, x0=-args.Lx / 4)
    config = SolverConfig(dt=args.dt, T=args.T,
                          record_every=args.record_every)
    traj = solve(phi, config)
    f = build_weight(WeightSpec(sigma=1.0, i=1, k=0), grid, 0.75)
    terms = main_equality_terms(traj, f, (a1, a2))
    series = tuple({"t": tb.t, "dA": tb.dA, "B": tb.B, "C": tb.C,
                    "D": tb.D, "E": tb.E, "residual": tb.residual}
                   for tb in terms)
    scale = max((tb.largest for tb in terms), default=0.0)
    rel = (max(abs(tb.residual) for tb in terms) / scale) if scale else 0.0
    ok = rel <= args.tol
    print(f"identity alpha=({a1},{a2}): max relative residual {rel:.3e} "
          f"({'PASS' if ok else 'FAIL'}, tolerance {args.tol:g})")
    if args.out:
        manifest = {
            "experiment": "check-identities",
            "config": {"alpha": [a1, a2], "nx": args.nx, "ny": args.ny,
                       "Lx": args.Lx, "Ly": args.Ly, "dt": args.dt,
                       "T": args.T, "record_every": args.record_every,
                       "tol": args.tol},
            "code_version": __import__("kpilab").__version__,
            "seed": None,
            "verdict": {"passed": ok,
                        "measured": {"max_rel_residual": rel},
                        "thresholds": {"max_rel_residual": ["<=", args.tol]}},
        }
        artifact = RunArtifact(manifest=manifest, series=series,
                               snapshots=(traj.snapshots[0], traj.final()))
        path = write_artifact(artifact, args.out)
        print(f"artifact: {path}")
    return 0 if ok else 1


def _cmd_report(args) -> int:
    artifact = read_artifact(args.run_dir)
    verdict = artifact.manifest["verdict"]
    print(f"experiment: {artifact.manifest['experiment']}")
    print(f"code version: {artifact.manifest['code_version']}")
    print(f"seed: {artifact.manifest['seed']}")
    print(f"verdict: {'PASS' if verdict['passed'] else 'FAIL'}")
    thresholds = verdict.get("thresholds", {})
    for key, value in verdict["measured"].items():
        if isinstance(value, (int, float)):
            line = f"  {key} = {value:.6g}"
        else:
            line = f"  {key} = {value}"
        if key in thresholds:
            op, bound = thresholds[key]
            line += f"   [{op} {bound}]"
        print(line)
    print(f"series rows: {len(artifact.series)}; "
          f"field dumps: {len(artifact.snapshots)}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpilab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("experiment",
                       choices=["uniqueness", "blowup_bound", "picard",
                                "persistence", "gain"])
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_w = sub.add_parser("validate-weight", help="validate a weight class")
    p_w.add_argument("--sigma", type=float, required=True)
    p_w.add_argument("--i", type=int, required=True)
    p_w.add_argument("--k", type=int, required=True)
    p_w.add_argument("--nx", type=int, default=256)
    p_w.add_argument("--ny", type=int, default=32)
    p_w.add_argument("--Lx", type=float, default=20.0)
    p_w.add_argument("--Ly", type=float, default=10.0)
    p_w.add_argument("--window", type=float, default=0.75)
    p_w.add_argument("--T", type=float, default=1.0)
    p_w.add_argument("--out", default=None)
    p_w.set_defaults(func=_cmd_validate_weight)

    p_c = sub.add_parser("check", help="run a built-in diagnostic check")
    c_sub = p_c.add_subparsers(dest="check_kind", required=True)
    p_ci = c_sub.add_parser("identities",
                            help="energy-identity residual on a soliton run")
    p_ci.add_argument("--alpha", default="1,0",
                      help="multi-index a1,a2 (default 1,0)")
    p_ci.add_argument("--nx", type=int, default=512)
    p_ci.add_argument("--ny", type=int, default=16)
    p_ci.add_argument("--Lx", type=float, default=40.0)
    p_ci.add_argument("--Ly", type=float, default=10.0)
    p_ci.add_argument("--dt", type=float, default=2.5e-3)
    p_ci.add_argument("--T", type=float, default=0.5)
    p_ci.add_argument("--record-every", type=int, default=10)
    p_ci.add_argument("--tol", type=float, default=1e-3)
    p_ci.add_argument("--out", default=None)
    p_ci.set_defaults(func=_cmd_check_identities)

    p_r = sub.add_parser("report", help="print the verdict of a run directory")
    p_r.add_argument("run_dir")
    p_r.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    # The run subcommand checks that the config's experiment matches the
    # positional name, keeping shell history self-documenting.
    if args.command == "run":
        config, _ = parse_config(args.config)
        if config.name != args.experiment:
            print(f"error: config declares experiment {config.name!r}, "
                  f"command line says {args.experiment!r}", file=sys.stderr)
            return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
