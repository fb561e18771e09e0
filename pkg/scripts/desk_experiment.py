"""Run the desk-scale experiment and print the baseline and per-stage summary tables.

    python scripts/desk_experiment.py --run-dir runs/desk --seed 0
"""

import argparse
import time
from pathlib import Path

from netmeter import pipeline
from netmeter.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.toml"))
    ap.add_argument("--run-dir", default="runs/desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--set", dest="overrides", action="append", default=[])
    args = ap.parse_args()
    cfg = load_config(args.config, args.overrides + [f"seed={args.seed}"])
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    pipeline.run_e2e(cfg, run_dir)
    print((run_dir / "summary.md").read_text())
    print(f"runtime {time.perf_counter() - t0:.0f}s, artifacts in {run_dir}")


if __name__ == "__main__":
    main()
