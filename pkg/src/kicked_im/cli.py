"""``kicked-im`` command-line entry point.

Exit codes: 0 on success, 2 on invalid input, 3 on numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import NumericalError, ValidationError
from .experiments import COMMANDS, RunConfig, run

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kicked-im", description="Temporal entanglement of the kicked Ising chain.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="JSON file with RunConfig fields; flags override it")
    ap.add_argument("--out", help="output CSV path (stdout when omitted)")
    ap.add_argument("--J", type=float)
    ap.add_argument("--g", type=float)
    ap.add_argument("--h", type=float)
    ap.add_argument("--t-max", dest="t_max", type=int)
    ap.add_argument("--t-list", dest="t_list", type=_ints, help="comma-separated times")
    ap.add_argument("--chi", type=int)
    ap.add_argument("--chi-list", dest="chi_list", type=_ints)
    ap.add_argument("--h-list", dest="h_list", type=_floats)
    ap.add_argument("--n-omega", dest="n_omega", type=int)
    ap.add_argument("--window", type=int)
    ap.add_argument("--cut-fraction", dest="cut_fraction", type=float)
    ap.add_argument("--deltas", type=_floats)
    ap.add_argument("--scaled-times", dest="scaled_times", type=_floats)
    ap.add_argument("--x", type=float)
    ap.add_argument("--phi", type=float)
    ap.add_argument("--n-grid", dest="n_grid", type=int)
    ap.add_argument("--ed-L", dest="ed_L", type=int)
    ap.add_argument("--workers", type=int)
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
    data["command"] = args.command
    for key, value in vars(args).items():
        if key not in ("command", "config") and value is not None:
            data[key] = value
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        text = run(cfg).to_csv(cfg)
    except (ValidationError, TypeError) as exc:
        print(f"kicked-im: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"kicked-im: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
