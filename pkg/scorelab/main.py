# scorelab/main.py
from __future__ import annotations
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .commands import COMMANDS, RunConfig, run
from .core import Result
from .scoring.functions import Family
from .synth.perturb import PerturbMode

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
GLOBAL_KEYS = ("seed", "out", "threads", "progress", "verbose", "quiet", "error_json")
FAMILIES = [f.value for f in Family]


def _scoring_flags(p: argparse.ArgumentParser):
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--tau", type=float)
    p.add_argument("--sigma", type=float, help="GaU scale (defaults to tau)")
    p.add_argument("--nu", type=int, help="MAGSAC++ degrees of freedom")
    p.add_argument("--table", help="learned score table JSON (family=learned)")


def _data_flags(p: argparse.ArgumentParser, pools: bool = True):
    p.add_argument("--scenes", help="scene directory (default OUT/scenes)")
    if pools:
        p.add_argument("--pools", help="pool directory (default OUT/pools)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorelab", description="RANSAC scoring functions: synthesis, "
                                     "local optimization, learned scores and threshold-sweep evaluation.")
    parser.add_argument("--seed", type=int, help="base seed (random and printed when omitted)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--config", help="JSON file whose keys become flag defaults")
    parser.add_argument("--progress", action="store_true", help="show progress bars")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true")
    verbosity.add_argument("--quiet", "-q", action="store_true")
    parser.add_argument("--error-json", action="store_true", help="print failures as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic two-view scenes")
    p.add_argument("--kind", required=True, choices=["essential", "homography"])
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--focal", type=float)
    p.add_argument("--count", type=int)

    p = sub.add_parser("pool", help="generate model pools for scenes")
    _data_flags(p, pools=False)
    p.add_argument("--m", type=int)
    p.add_argument("--mix", type=float, nargs=3, metavar=("MINIMAL", "PERTURB", "GT"))
    p.add_argument("--max-theta", type=float)

    p = sub.add_parser("score", help="score every pool model")
    _data_flags(p)
    _scoring_flags(p)

    p = sub.add_parser("lo", help="IRLS-LMA local optimization of the best pool model")
    _data_flags(p)
    _scoring_flags(p)
    p.add_argument("--max-iter", type=int)

    p = sub.add_parser("learn", help="fit a learned monotone score to GT residuals")
    _data_flags(p, pools=False)
    p.add_argument("--bins", type=int)
    p.add_argument("--tau-max", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--r-max", type=float)
    p.add_argument("--iters", type=int)

    p = sub.add_parser("magsac-fit", help="fit GaU (tau, sigma) to MAGSAC++ weights")
    p.add_argument("--nu", type=int, nargs="+")

    p = sub.add_parser("sweep", help="error grids and validation curves over thresholds")
    _data_flags(p)
    _scoring_flags(p)
    p.add_argument("--methods", nargs="+", choices=FAMILIES + ["oracle"])
    p.add_argument("--thresholds", type=float, nargs=3, metavar=("MIN", "MAX", "COUNT"))
    p.add_argument("--bins", type=int)
    p.add_argument("--tau-max", type=float)

    p = sub.add_parser("sensitivity", help="small-validation threshold sensitivity")
    p.add_argument("--grid", required=True, help="validation grid CSV")
    p.add_argument("--test-grid", help="test grid CSV (default: second half of --grid)")
    p.add_argument("--n-values", type=int, nargs="+")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("selectivity", help="relative score of perturbed GT models")
    _data_flags(p, pools=False)
    _scoring_flags(p)
    p.add_argument("--modes", nargs="+", choices=[m.value for m in PerturbMode])
    p.add_argument("--theta", type=float, nargs=2, metavar=("MAX", "STEP"))
    p.add_argument("--min-gt-score", type=float)

    p = sub.add_parser("consistency", help="inlier counts of models at prescribed pose errors")
    _data_flags(p, pools=False)
    p.add_argument("--taus", type=float, nargs="+")
    p.add_argument("--error-bins", type=float, nargs="+")

    p = sub.add_parser("parity", help="end-to-end comparison of scoring families on synthetic scenes")
    p.add_argument("--count", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--methods", nargs="+", choices=FAMILIES)
    p.add_argument("--thresholds", type=float, nargs=3, metavar=("MIN", "MAX", "COUNT"))
    p.add_argument("--bins", type=int)

    p = sub.add_parser("report", help="aggregate grids, sensitivity and MAGSAC fit into one JSON")
    p.add_argument("--grids", help="grid directory (default OUT/grids)")
    p.add_argument("--n-boot", type=int)
    p.add_argument("--nu", type=int, nargs="+")
    return parser


def _apply_config(parser: argparse.ArgumentParser, path: str):
    """Load a JSON config; its keys become defaults of the global parser and every subparser."""
    values = {k.replace("-", "_"): v for k, v in json.loads(Path(path).read_text()).items()}
    parser.set_defaults(**{k: v for k, v in values.items() if k in GLOBAL_KEYS})
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in sub_action.choices.values():
        known = {a.dest: a for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in values.items() if k in known})
        for k in values:
            if k in known:
                known[k].required = False


def _emit_error(res: Result, as_json: bool):
    if as_json:
        print(json.dumps(res.__dict__, ensure_ascii=False), file=sys.stderr)
    else:
        print(f"error: {res.notes}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(argv) if argv is not None else sys.argv[1:]
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            _apply_config(parser, known.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)

    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % (2 ** 32))
    print(f"seed={seed}")
    params = {k: v for k, v in vars(args).items() if k not in GLOBAL_KEYS + ("config", "command")}
    cfg = RunConfig(args.command, seed, Path(args.out), max(1, args.threads), args.progress, params)
    res = run(cfg)
    if res.status != "ok":
        _emit_error(res, args.error_json)
        return 1
    print(f"{res.input}: {res.notes}")
    print(f"output: {res.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
