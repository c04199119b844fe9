"""Command-line entry point: ``qmeasure list`` and ``qmeasure run <scenario>``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on a usage
error (bad option, unknown scenario, parameter the scenario does not take).
"""

from __future__ import annotations

import argparse
import sys

from .scenarios import list_scenarios, run

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _complex(text: str) -> complex:
    try:
        re, im = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RE,IM, got {text!r}") from None
    return complex(re, im)


def _grid(text: str) -> list[float]:
    try:
        values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated times, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("time grid is empty")
    return values


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmeasure", description="Measurement thought experiments, checked numerically")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="List scenario names")
    r = sub.add_parser("run", help="Run one scenario and print its report")
    r.add_argument("scenario", help="Scenario name (see `qmeasure list`)")
    r.add_argument("--trials", type=_positive_int, help="Trials per sampled check")
    r.add_argument("--seed", type=int, help="Master seed")
    r.add_argument("--tau", type=float, help="Decoherence time")
    r.add_argument("--time-grid", type=_grid, help="Comma-separated times t1,t2,...")
    r.add_argument("--alpha", type=_complex, help="Amplitude on |+z> as RE,IM")
    r.add_argument("--beta", type=_complex, help="Amplitude on |-z> as RE,IM")
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--out", help="Write the report here instead of stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    if args.command == "list":
        print("\n".join(list_scenarios()))
        return EXIT_OK

    if (args.alpha is None) != (args.beta is None):
        print("qmeasure: --alpha and --beta must be given together", file=sys.stderr)
        return EXIT_USAGE
    given = {
        "trials": args.trials,
        "seed": args.seed,
        "tau": args.tau,
        "times": args.time_grid,
        "alpha": args.alpha,
        "beta": args.beta,
    }
    params = {k: v for k, v in given.items() if v is not None}
    try:
        report = run(args.scenario, **params)
    except ValueError as e:
        print(f"qmeasure: {e}", file=sys.stderr)
        return EXIT_USAGE

    text = report.to_json() if args.format == "json" else report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
