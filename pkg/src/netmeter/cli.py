"""``netmeter`` command line.

Exit codes: 0 success, 1 usage or config error, 2 data validation failure,
3 training divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .attacks import AttackInvariantError
from .config import ConfigError, describe_keys, load_config
from .detector import NormalizationError, SpecError
from .ingest import IngestError
from .nn import CheckpointError, TrainingDivergence
from .prep import PrepError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

DATA_ERRORS = (
    pipeline.DataError,
    IngestError,
    PrepError,
    NormalizationError,
    CheckpointError,
    AttackInvariantError,
    SpecError,
    FileNotFoundError,
    ValueError,  # malformed artifacts surface as ValueError from the readers
)

EPILOG = "config keys (TOML file and --set section.key=value), with defaults:\n" + describe_keys()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="TOML config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int, help="global seed (same as --set seed=N)")
    p.add_argument("--run-dir", help="run directory (default: <paths.out_dir>/run-<config hash>)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="netmeter", description=__doc__, epilog=EPILOG, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "synth": "simulate customers, weather and half-hourly meter files",
        "ingest": "load, clean, net and aggregate meter files into days.csv",
        "attack": "inject the four false-reading attacks into every benign day",
        "prep": "assemble 75-value samples, split, normalize and balance",
        "train": "train the three-stage detector and the baselines",
        "eval": "score the test set and write metrics.json and curves",
        "predict": "class probabilities for a sample CSV",
        "analyze": "autocorrelation and weather-correlation tables and figures",
        "report": "markdown summary and ROC / P-R figures from metrics.json",
        "e2e": "synth, ingest, attack, prep, train, eval and report in one run",
    }
    subs = {}
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text, epilog=EPILOG, formatter_class=fmt)
        _common(sp)
        subs[name] = sp
    subs["ingest"].add_argument("--meter", help="meter CSV (default: run dir meter.csv)")
    subs["ingest"].add_argument("--profiles", help="profiles CSV giving each customer's weather location")
    subs["attack"].add_argument("--days", help="benign days CSV (default: run dir days.csv)")
    subs["train"].add_argument("--train", help="training samples CSV (default: run dir train.csv)")
    subs["train"].add_argument("--no-baselines", action="store_true", help="train the detector stages only")
    subs["eval"].add_argument("--test", help="test samples CSV (default: run dir test.csv)")
    subs["predict"].add_argument("samples", help="sample CSV, raw or normalized")
    subs["predict"].add_argument("--out", default="predictions.csv")
    subs["predict"].add_argument("--stage", type=int, choices=(1, 2, 3), default=3)
    subs["analyze"].add_argument("--max-lag", type=int, default=72)
    return parser


def _summary(reports) -> str:
    lines = [f"{'model':<8} {'ACC':>7} {'DR':>7} {'FA':>7} {'HD':>7}"]
    for name, r in reports.items():
        cells = [("undefined" if isinstance(v, str) or v is None else f"{v:7.2f}") for v in (r.acc, r.dr, r.fa, r.hd)]
        lines.append(f"{name:<8} " + " ".join(cells))
    return "\n".join(lines)


def run(args) -> int:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    run_dir = Path(args.run_dir) if args.run_dir else Path(cfg["paths"]["out_dir"]) / f"run-{cfg.hash}"
    run_dir.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "synth":
        print(pipeline.run_synth(cfg, run_dir))
    elif cmd == "ingest":
        print(pipeline.run_ingest(cfg, run_dir, args.meter, args.profiles))
    elif cmd == "attack":
        print(pipeline.run_attack(cfg, run_dir, args.days))
    elif cmd == "prep":
        print(pipeline.run_prep(cfg, run_dir))
    elif cmd == "train":
        print(pipeline.run_train(cfg, run_dir, args.train, baselines=not args.no_baselines))
    elif cmd == "eval":
        print(_summary(pipeline.run_eval(cfg, run_dir, args.test)))
    elif cmd == "predict":
        n = pipeline.run_predict(run_dir, args.samples, args.out, args.stage)
        print(f"wrote {n} predictions to {args.out}")
    elif cmd == "analyze":
        print(pipeline.run_analyze(cfg, run_dir, args.max_lag))
    elif cmd == "report":
        print(pipeline.run_report(cfg, run_dir))
    elif cmd == "e2e":
        print(_summary(pipeline.run_e2e(cfg, run_dir)))
    print(f"run directory: {run_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
