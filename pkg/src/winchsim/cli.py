"""Command line interface.

    winchsim run <scenario-file> [--out DIR] [--winches on|off] [--tier planar|3d]

Exit codes: 0 on success, 2 on config/schema problems, 3 on divergence or
infeasibility (message carries the simulation timestamp).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .errors import CableRangeError, DivergenceError, SchemaError
from .harness import emit_outputs, load_scenario, run_scenario


def build_parser():
    parser = argparse.ArgumentParser(prog="winchsim")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a scenario file")
    run_p.add_argument("scenario", help="path to the scenario config file")
    run_p.add_argument("--out", default="out", help="output directory (default: out)")
    run_p.add_argument("--winches", choices=["on", "off"], default=None,
                       help="override the scenario winch enable flag")
    run_p.add_argument("--tier", choices=["planar", "3d"], default=None,
                       help="override the scenario model tier")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return 2


def _cmd_run(args):
    try:
        sc = load_scenario(args.scenario)
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.winches is not None:
        sc = replace(sc, winches=args.winches == "on")
    if args.tier is not None:
        sc = replace(sc, tier=args.tier)
    base_dir = os.path.dirname(os.path.abspath(args.scenario))
    try:
        log = run_scenario(sc, base_dir=base_dir)
    except (DivergenceError, CableRangeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    paths = emit_outputs(log, args.out)
    s = log.summary
    print(
        f"{sc.name}: {log.data.shape[0]} records, "
        f"max |x_com| = {s['max_abs_com_x'] * 1e3:.3f} mm, "
        f"max |y_com| = {s['max_abs_com_y'] * 1e3:.3f} mm, "
        f"COM rmse = {s['rmse_com_horizontal'] * 1e3:.3f} mm"
    )
    print(f"wrote {paths['csv']}, {paths['summary']}, {paths['plot']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
