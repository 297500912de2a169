"""Command line entry point: ``doublon-lab run | validate | presets list``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load

PRESET_DIR_ENV = "DOUBLON_LAB_PRESETS"


def preset_dir() -> Path:
    """Presets ship next to the source tree (``presets/`` at the repository root)."""
    if os.environ.get(PRESET_DIR_ENV):
        return Path(os.environ[PRESET_DIR_ENV])
    return Path(__file__).resolve().parents[2] / "presets"


def _resolve_path(name: str) -> Path:
    p = Path(name)
    if p.exists() or p.suffix == ".toml":
        return p
    return preset_dir() / f"{name}.toml"


def _load(args):
    path = _resolve_path(args.config)
    if not path.exists():
        raise ConfigError([f"{path}: no such file"])
    return load(path, args.set or [])


def cmd_run(args) -> int:
    from .experiments import run_experiment

    cfg = _load(args)
    out = run_experiment(cfg, out=args.out, jobs=args.jobs)
    print(f"wrote {out / 'results.csv'}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args)
    sys.stdout.write(cfg.to_toml())
    return 0


def cmd_presets(args) -> int:
    d = preset_dir()
    for p in sorted(d.glob("*.toml")):
        first = p.read_text().splitlines()[0] if p.read_text() else ""
        print(f"{p.stem:8s} {first.lstrip('# ').strip()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="doublon-lab", description="Doublon formation experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="TOML file or preset name")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    run.add_argument("--out", default=None, help="output directory (overrides the config's out)")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="print the resolved config without running it")
    val.add_argument("config")
    val.add_argument("--set", action="append", metavar="KEY=VALUE")
    val.set_defaults(func=cmd_validate)

    pre = sub.add_parser("presets", help="list shipped figure presets")
    pre.add_argument("action", choices=["list"])
    pre.set_defaults(func=cmd_presets)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as err:
        for line in err.diagnostics:
            print(f"error: {line}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
