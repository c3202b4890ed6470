"""Command line interface.

    defsc fcsolve --measure m.json --lambda 0.7 --grid g.json --out sol.json
    defsc run --spec spec.json --out dir/ [--threads K] [--seed S]
    defsc list-kinds
    defsc report --in dir/ --format csv [--figures]

Exit codes: 0 success, 2 configuration error, 3 numerical failure above the
1% row budget.  Thread count comes from --threads, else DEFSC_THREADS,
else 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .errors import ConfigError, DefscError
from .harness import (
    ROW_SUCCESS_MIN,
    Report,
    emit_report,
    list_kinds,
    load_report,
    load_spec,
    run_experiment,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defsc",
        description="Deformed semicircle law solver and spectral-statistics experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("fcsolve", help="solve the free convolution on a grid")
    p_solve.add_argument("--measure", required=True, help="measure JSON file")
    p_solve.add_argument("--lambda", dest="lam", type=float, required=True)
    p_solve.add_argument("--grid", required=True, help="grid JSON file")
    p_solve.add_argument("--out", required=True, help="output solution JSON")

    p_run = sub.add_parser("run", help="run an experiment spec")
    p_run.add_argument("--spec", required=True)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None, help="override the spec seed")

    sub.add_parser("list-kinds", help="list experiment kinds and their envelopes")

    p_rep = sub.add_parser("report", help="re-emit a run directory")
    p_rep.add_argument("--in", dest="in_dir", required=True)
    p_rep.add_argument("--format", choices=("csv", "json", "both"), default="csv")
    p_rep.add_argument(
        "--figures", action="store_true", help="render summary figures as PNG"
    )
    return parser


def _cmd_fcsolve(args) -> int:
    from .freeconv import FreeConvolutionSolution, SpectralPoint, save_solution
    from .harness import _resolve_grid
    from .measure import measure_from_dict

    try:
        with open(args.measure) as fh:
            mu = measure_from_dict(json.load(fh))
        with open(args.grid) as fh:
            grid_raw = json.load(fh)
        points = _resolve_grid(grid_raw)
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc))
    sol = FreeConvolutionSolution(mu, args.lam)
    es = sorted({e for e, _ in points})
    etas = sorted({t for _, t in points})
    sol.mfc_grid(es, etas)
    save_solution(sol, args.out, grid=[SpectralPoint(e, t) for e, t in points])
    print(
        f"solved {len(points)} points: support [{sol.l1:.9g}, {sol.l2:.9g}], "
        f"edges {sol.edge_class} -> {args.out}"
    )
    return 0


def _cmd_run(args) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        ens = spec.to_dict()
        ens["ensemble"]["seed"] = args.seed
        from .harness import spec_from_dict

        spec = spec_from_dict(ens)
    report = run_experiment(spec, threads=args.threads)
    emit_report(report, args.out, fmt="both")
    for name, ok in sorted(report.passes.items()):
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    print(
        f"{len(report.rows)} rows, success rate {report.row_success:.4f}, "
        f"{report.wall_clock:.1f}s -> {args.out}"
    )
    min_success = float(spec.tolerances.get("row_success_min", ROW_SUCCESS_MIN))
    if report.row_success < min_success:
        print(f"row success below {min_success:.2%} budget", file=sys.stderr)
        return 3
    return 0


def _cmd_list_kinds(args) -> int:
    for kind, desc in list_kinds():
        print(f"{kind:18s} {desc}")
    return 0


def _cmd_report(args) -> int:
    obj = load_report(args.in_dir)
    report = Report(**obj)
    emit_report(report, args.in_dir, fmt=args.format)
    if args.figures:
        from .plots import render_report_figures

        files = render_report_figures(obj, args.in_dir)
        for f in files:
            print(f"figure: {f}")
    print(f"re-emitted {args.format} under {args.in_dir}")
    return 0


_COMMANDS = {
    "fcsolve": _cmd_fcsolve,
    "run": _cmd_run,
    "list-kinds": _cmd_list_kinds,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DefscError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
