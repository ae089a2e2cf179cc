"""``pcl-lab`` command line: run grids, run the check suite, export plot data."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import PclabError


def _cmd_run(args) -> int:
    from .experiment import ExperimentSpec, run_experiment

    spec = ExperimentSpec.from_json(args.spec)
    if args.output_dir:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), "output_dir": args.output_dir})
    table = run_experiment(spec, force=args.force, jobs=args.jobs)
    print(table.summary(), end="")
    print(f"{table.executed_cells} of {len(table.rows)} cells trained; results in {spec.root}")
    return 0 if table.all_ok else 1


def _cmd_check(args) -> int:
    from .checks import run_checks

    results = run_checks(include_slow=not args.quick)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def _cmd_export(args) -> int:
    from .experiment import emit_plot_data

    out = args.out or Path(args.dir) / "plots"
    bundle = emit_plot_data([args.dir], out)
    for w in bundle.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {bundle.bars}, {bundle.embeddings}, {bundle.class_weights}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcl-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train every (kind, seed) cell of an experiment spec")
    run.add_argument("spec", help="experiment spec (JSON)")
    run.add_argument("--force", action="store_true", help="retrain cells that already finished")
    run.add_argument("--jobs", type=int, default=1, help="cells to train in parallel")
    run.add_argument("--output-dir", help="override output_dir from the experiment file")
    run.set_defaults(func=_cmd_run)

    check = sub.add_parser("check", help="run the gradient/oracle/invariant suite")
    check.add_argument("--quick", action="store_true", help="skip the end-to-end benchmark runs")
    check.set_defaults(func=_cmd_check)

    export = sub.add_parser("export", help="write bar-chart and embedding CSVs from finished runs")
    export.add_argument("dir", help="experiment directory, or any directory containing run cells")
    export.add_argument("--out", help="destination (default: <dir>/plots)")
    export.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PclabError, OSError) as exc:
        print(f"pcl-lab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
