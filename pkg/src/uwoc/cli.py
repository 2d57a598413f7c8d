"""Command line front end.

uwoc-sim run <scenario> --out results.csv   run a scenario to CSV + figure
uwoc-sim validate <scenario>                check a scenario file
uwoc-sim codes gen F W RHO COUNT            print an OOC family

Scenario arguments accept either a filesystem path or the name of a
bundled preset (see uwoc/presets).  Exit codes: 0 on success, 2 when
validation fails or the input cannot be parsed, 3 when a constructive
search or allocation is infeasible.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .errors import InfeasibleError, ParameterError
from .ooc import generate_family
from .plots import render_figure
from .scenario import load_scenario, run_scenario, validate, write_csv

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


def preset_names() -> list[str]:
    files = resources.files("uwoc").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir()
                  if p.name.endswith(".json"))


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = resources.files("uwoc").joinpath("presets", arg + ".json")
    if bundled.is_file():
        with resources.as_file(bundled) as concrete:
            return concrete
    raise ParameterError(
        f"no scenario file {arg!r}; bundled presets: "
        + ", ".join(preset_names()))


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(_resolve_scenario(args.scenario))
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    problems = validate(scenario)
    if problems:
        for line in problems:
            print(f"invalid: {line}", file=sys.stderr)
        return EXIT_INVALID
    try:
        header, rows = run_scenario(scenario, workers=args.workers)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    write_csv(args.out, header, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    if not args.no_figure:
        png = render_figure(scenario.kind, header, rows, args.out)
        print(f"wrote figure to {png}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario(_resolve_scenario(args.scenario))
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    problems = validate(scenario)
    if problems:
        for line in problems:
            print(f"invalid: {line}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {scenario.kind} scenario"
          + (f" {scenario.name!r}" if scenario.name else ""))
    return EXIT_OK


def _cmd_codes_gen(args) -> int:
    try:
        family = generate_family(args.length, args.weight, args.correlation,
                                 args.count, seed=args.seed)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for code in family.codes:
        print(",".join(str(m) for m in code.marks))
    if family.shortfall:
        print(f"shortfall: found {len(family.codes)} of {args.count} "
              f"codes", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwoc-sim",
        description="Cellular underwater optical CDMA simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write CSV output")
    run.add_argument("scenario", help="scenario file or bundled preset name")
    run.add_argument("--out", required=True, help="output CSV path")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")
    run.add_argument("--workers", type=int, default=1,
                     help="parallel workers for the sweep")
    run.add_argument("--no-figure", action="store_true",
                     help="skip rendering the PNG next to the CSV")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="validate a scenario file")
    val.add_argument("scenario", help="scenario file or bundled preset name")
    val.set_defaults(func=_cmd_validate)

    codes = sub.add_parser("codes", help="optical orthogonal code tools")
    codes_sub = codes.add_subparsers(dest="codes_command", required=True)
    gen = codes_sub.add_parser("gen", help="generate a code family")
    gen.add_argument("length", type=int, help="code length F")
    gen.add_argument("weight", type=int, help="code weight W")
    gen.add_argument("correlation", type=int, help="correlation budget rho")
    gen.add_argument("count", type=int, help="number of codes requested")
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=_cmd_codes_gen)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
