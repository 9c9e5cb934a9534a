"""Command-line driver.

Verbs: ``solve``, ``converge-time``, ``converge-space``, ``sparsity`` and
``compare-lgr``.  Exit codes: 0 success, 2 solver non-convergence (outputs
are still written), 3 invalid configuration.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path

from .problems import PROBLEMS, flgr_vs_lgr_demo
from .study import (
    ConfigError,
    RunConfig,
    export_sparsity,
    run_benchmark,
    spatial_self_convergence,
    temporal_self_convergence,
    write_convergence,
)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_BAD_CONFIG = 3

# default meshes per problem: (n_t, intervals, n_nodes)
DEFAULT_MESH = {
    "burgers": (5, 3, 34),
    "heat": (7, 3, 50),
    "heat-constrained": (3, 17, 50),
}

_KEYS = {
    "problem": str, "backend": str, "degree": int, "nx": int, "nt": int,
    "intervals": int, "quad_points": int, "tol": float, "max_iter": int, "grading": float,
}


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; keys match the long flag names."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_string("[run]\n" + fh.read())
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _KEYS[key](value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radaupde",
        description="Flipped-Radau / finite-element transcription of PDE boundary-control problems",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, tol_default):
        p.add_argument("--config", type=Path, help="flat key = value file; flags override it")
        p.add_argument("--problem", choices=sorted(PROBLEMS))
        p.add_argument("--backend", choices=["fem", "fd"])
        p.add_argument("--degree", type=int, choices=[1, 2])
        p.add_argument("--nx", type=int, help="number of spatial nodes")
        p.add_argument("--nt", type=int, help="collocation points per interval")
        p.add_argument("--intervals", type=int, help="number of time intervals")
        p.add_argument("--quad-points", type=int, help="quadrature points per element")
        p.add_argument("--tol", type=float, help=f"solver tolerance (default {tol_default:g})")
        p.add_argument("--max-iter", type=int)
        p.add_argument("--grading", type=float, help="interval grading exponent towards t0")
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--no-figures", action="store_true")
        p.set_defaults(tol_default=tol_default)

    p = sub.add_parser("solve", help="solve one benchmark configuration")
    common(p, 1e-8)

    p = sub.add_parser("converge-time", help="temporal self-convergence study")
    common(p, 1e-12)
    p.add_argument("--coarse", type=_int_list, default=[4, 8, 16, 32],
                   help="coarse interval counts")
    p.add_argument("--refine", type=int, default=4)
    p.add_argument("--x-c", type=float, help="spatial comparison point")
    p.add_argument("--no-align", action="store_true",
                   help="do not move interval boundaries onto control switching times")

    p = sub.add_parser("converge-space", help="spatial self-convergence study")
    common(p, 1e-12)
    p.add_argument("--coarse", type=_int_list, default=[4, 8, 16, 32],
                   help="coarse element counts")
    p.add_argument("--refine", type=int, default=4)
    p.add_argument("--t-c", type=float, help="comparison time (a support time)")

    p = sub.add_parser("sparsity", help="export the constraint Jacobian pattern")
    common(p, 1e-8)

    p = sub.add_parser("compare-lgr", help="flipped vs standard Radau column coverage")
    common(p, 1e-8)
    return parser


def config_from_args(args, **study_defaults) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in _KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    problem = values.get("problem", "burgers")
    nt, intervals, nx = DEFAULT_MESH.get(problem, DEFAULT_MESH["burgers"])
    nt = study_defaults.get("nt", nt)
    intervals = study_defaults.get("intervals", intervals)
    return RunConfig(
        problem=problem,
        backend=values.get("backend", "fem"),
        degree=values.get("degree", 1),
        n_nodes=values.get("nx", study_defaults.get("nx", nx)),
        intervals=values.get("intervals", intervals),
        n_t=values.get("nt", nt),
        quad_points=values.get("quad_points", 3),
        tol=values.get("tol", args.tol_default),
        max_iter=values.get("max_iter", 300),
        grading=values.get("grading", study_defaults.get("grading", 1.0)),
    ).validate()


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_solve(args) -> int:
    cfg = config_from_args(args)
    start = time.perf_counter()
    _, rep, summary = run_benchmark(cfg, args.out, figures=not args.no_figures)
    _print_json(summary)
    print(f"wall time {time.perf_counter() - start:.2f} s", file=sys.stderr)
    return EXIT_OK if rep.success else EXIT_NOT_CONVERGED


def _study_nodes(cfg_problem):
    return {"burgers": 34, "heat": 31, "heat-constrained": 31}[cfg_problem]


def cmd_converge_time(args) -> int:
    problem = args.problem or "burgers"
    cfg = config_from_args(args, nt=3, grading=2.0, nx=_study_nodes(problem))
    try:
        report = temporal_self_convergence(cfg, args.coarse, args.refine, args.x_c,
                                           align_switches=not args.no_align)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    write_convergence(report, args.out, figures=not args.no_figures)
    _print_json(report.to_dict())
    return EXIT_OK


def cmd_converge_space(args) -> int:
    cfg = config_from_args(args, nt=4, intervals=16, grading=2.0)
    try:
        report = spatial_self_convergence(cfg, args.coarse, args.refine, args.t_c)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    write_convergence(report, args.out, figures=not args.no_figures)
    _print_json(report.to_dict())
    return EXIT_OK


def cmd_sparsity(args) -> int:
    cfg = config_from_args(args)
    path = args.out / "sparsity.txt" if args.out.suffix == "" else args.out
    pattern = export_sparsity(cfg, path, figure=not args.no_figures)
    _print_json({"path": str(path), "rows": pattern.shape[0], "cols": pattern.shape[1],
                 "nnz": pattern.nnz})
    return EXIT_OK


def cmd_compare_lgr(args) -> int:
    cfg = config_from_args(args)
    if cfg.backend != "fem":
        raise ConfigError("the comparison uses the finite-element backend")
    res = flgr_vs_lgr_demo(PROBLEMS[cfg.problem](), cfg.mesh_config)
    data = {
        "columns": res.n_columns,
        "flipped_empty_columns": res.flipped_empty_columns.tolist(),
        "standard_empty_columns": res.standard_empty_columns.tolist(),
        "standard_empty_names": res.standard_empty_names,
    }
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "compare_lgr.json", "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _print_json(data)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "converge-time": cmd_converge_time,
    "converge-space": cmd_converge_space,
    "sparsity": cmd_sparsity,
    "compare-lgr": cmd_compare_lgr,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except (ConfigError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
