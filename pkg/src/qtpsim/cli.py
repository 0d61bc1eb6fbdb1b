"""Command-line front end: ``qtpsim run|validate|sweep <scenario.yaml>``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from .scenario import (
    EXIT_OK,
    Scenario,
    ScenarioError,
    ScenarioSyntaxError,
    parse_scenario,
    run_scenario,
    set_path,
)

OUT_ENV = "QTPSIM_OUT"

__all__ = ["main"]


def _threads(text: str) -> int:
    if text == "auto":
        return os.cpu_count() or 1
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'auto'")
    return n


def _u64(text: str) -> int:
    n = int(text, 0)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtpsim", description="Spacetime detection scenarios for a free scalar field")
    parser.add_argument("--version", action="version", version=f"qtpsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario YAML file")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./qtpsim_out)")
    common.add_argument("--seed", type=_u64, help="override numerics.seed")
    common.add_argument("--tolerance", type=float, help="override numerics.tolerance")
    common.add_argument("--threads", type=_threads, help="worker threads for grid evaluation (n or 'auto')")

    sub.add_parser("run", parents=[common], help="run the scenario and write outputs")
    sub.add_parser("validate", parents=[common], help="parse and check the scenario without running it")
    sw = sub.add_parser("sweep", parents=[common], help="run the scenario once per parameter value")
    sw.add_argument("--param", required=True, help="dotted key path, e.g. field.mass or detectors.0.gap")
    sw.add_argument("--values", required=True, help="comma-separated values (parsed as YAML scalars)")
    return parser


def _overrides(data: dict, args) -> dict:
    num = dict(data.get("numerics") or {})
    if args.seed is not None:
        num["seed"] = args.seed
    if args.tolerance is not None:
        num["tolerance"] = args.tolerance
    if args.threads is not None:
        num["threads"] = args.threads
    if num:
        data = {**data, "numerics": num}
    return data


def _load(text: str, args) -> tuple[Scenario, list[str]]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError:
        return parse_scenario(text)  # re-raise with position information
    if not isinstance(data, dict):
        raise ScenarioSyntaxError("scenario must be a mapping")
    return parse_scenario(yaml.safe_dump(_overrides(data, args)))


def _out_dir(args, sc: Scenario) -> Path:
    return Path(args.out or sc.output.dir or os.environ.get(OUT_ENV) or "qtpsim_out")


def _report(sc: Scenario, notes: list[str], summary: dict | None = None) -> None:
    print(f"scenario {sc.name} id={sc.scenario_id} experiment={sc.experiment.type} qtpsim {__version__}")
    for n in notes:
        print(f"  warning: {n}")
    if summary is None:
        return
    result = summary.get("result", {})
    if isinstance(result, dict):
        for key in sorted(k for k in result if k != "metadata"):
            print(f"  {key}: {result[key]}")
    for key in ("csv",):
        if key in summary:
            print(f"  wrote {summary[key]}")


def _run_one(text: str, args, out_dir: Path | None = None) -> int:
    sc, notes = _load(text, args)
    if args.command == "validate":
        _report(sc, notes)
        print("  ok")
        return EXIT_OK
    out = out_dir or _out_dir(args, sc)
    code, summary = run_scenario(sc, out, notes)
    _report(sc, notes, summary)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.scenario).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command != "sweep":
            return _run_one(text, args)
        base = yaml.safe_load(text)
        if not isinstance(base, dict):
            raise ScenarioSyntaxError("scenario must be a mapping")
        worst = EXIT_OK
        for raw in args.values.split(","):
            value = yaml.safe_load(raw.strip())
            try:
                data = set_path(base, args.param, value)
            except (KeyError, IndexError, ValueError, TypeError) as exc:
                raise ScenarioSyntaxError(f"--param {args.param}: no such key ({exc})") from exc
            sc, _ = _load(yaml.safe_dump(data), args)
            out = _out_dir(args, sc) / f"{args.param}={value}"
            print(f"[{args.param}={value}]")
            worst = max(worst, _run_one(yaml.safe_dump(data), args, out))
        return worst
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
