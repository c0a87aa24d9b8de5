"""Command line entry point: ``hydrasec {calibrate,run,period,codebook}``.

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures inside the simulation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import detector, scenario
from . import signed_permutation as sp
from .adversary import MODES
from .config import load_config, with_seed
from .errors import ConfigError, InvalidModulusError, NotPurelyPeriodicError, NumericalFailureError
from .keystream import period

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _scenario_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    if args.attack is not None:
        cfg = cfg.with_overrides(attack__mode=args.attack)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _cmd_calibrate(args) -> int:
    cfg = _scenario_config(args)
    log = scenario.run_scenario(cfg, calibrate_only=True)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "thresholds.txt"
    detector.save_thresholds(path, log.thresholds)
    print(f"beta = {', '.join(repr(float(b)) for b in log.thresholds.beta)}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _scenario_config(args)
    log = scenario.run_scenario(cfg, capture=True)
    paths = scenario.write_outputs(log, cfg, cfg.output_dir)
    s = log.summary
    print(f"onset={s['onset']} alarms={s['alarms']} "
          f"detection_delay={s['detection_delay']} false_alarm_rate={s['false_alarm_rate']:.6g}")
    print(json.dumps({"outputs": [str(p) for p in paths]}))
    return EXIT_OK


def _cmd_period(args) -> int:
    try:
        print(period(args.p, args.m))
    except (InvalidModulusError, NotPurelyPeriodicError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def _cmd_codebook(args) -> int:
    if args.n < 1 or args.n > 8:
        print("error: n must be between 1 and 8", file=sys.stderr)
        return EXIT_CONFIG
    for i, elem in enumerate(sp.codebook(args.n)):
        signs = "".join("+" if s > 0 else "-" for s in elem.signs)
        print(f"{i}\tperm={','.join(map(str, elem.perm))}\tsigns={signs}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hydrasec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p):
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        p.add_argument("--seed", type=int, metavar="N", help="override every rng_seed")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--attack", choices=MODES, metavar="MODE",
                       help=f"attack mode, one of {', '.join(MODES)}")

    p = sub.add_parser("calibrate", help="run the healthy phase and write thresholds.txt")
    scenario_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("run", help="run the full scenario and write logs")
    scenario_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("period", help="period of the p-sequence modulo m")
    p.add_argument("p", type=int)
    p.add_argument("m", type=int)
    p.set_defaults(func=_cmd_period)

    p = sub.add_parser("codebook", help="list the signed permutations of size n in index order")
    p.add_argument("n", type=int, nargs="?", default=3)
    p.set_defaults(func=_cmd_codebook)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
