"""Run every shipped preset into runs/<name>/ (exact panels first, they are fast).

    python scripts/run_all_figures.py [--only fig2a fig2b ...] [--jobs N]
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from doublon_lab.cli import preset_dir
from doublon_lab.config import load
from doublon_lab.experiments import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", nargs="*", help="preset names to run")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()

    names = args.only or [p.stem for p in sorted(preset_dir().glob("*.toml"))]
    cfgs = {n: load(preset_dir() / f"{n}.toml") for n in names}
    order = sorted(names, key=lambda n: cfgs[n].engine != "exact")
    for name in order:
        t0 = time.perf_counter()
        out = run_experiment(cfgs[name], Path(args.out) / name, jobs=args.jobs)
        print(f"{name}: {out / 'results.csv'} ({time.perf_counter() - t0:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
