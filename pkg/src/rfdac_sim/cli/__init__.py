"""Command-line experiment runner.

``rfdac-sim run CONFIG [--out DIR] [--seed N] [--threads N]`` executes one
study and writes its CSV files, ``summary.json`` and ``manifest.json``.
``rfdac-sim validate CONFIG`` checks a configuration without computing.
Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

from .. import __version__
from .config import STUDIES, ConfigError, ExperimentConfig, load_config

log = logging.getLogger("rfdac_sim.cli")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json_default(x):
    import numpy as np

    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def run_study(cfg: ExperimentConfig, out: Path, *, threads: int = 1, notes=()) -> dict:
    """Run ``cfg.study`` into ``out``; returns the manifest."""
    from .studies import RUNNERS

    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    summary = RUNNERS[cfg.study](cfg, out, max(1, threads))
    summary = {"study": cfg.study, "seed": cfg.seed, "results": summary}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config_hash": cfg.content_hash(),
        "tool_version": __version__,
        "study": cfg.study,
        "seed": cfg.seed,
        "started_utc": started,
        "finished_utc": _now(),
        "warnings": list(notes),
        "files": [{"name": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size} for p in files],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfdac-sim", description="RF-DAC synthesis and gate-error studies")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a study")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="seed (overrides the config)")
    r.add_argument("--threads", type=int, default=1)
    v = sub.add_parser("validate", help="validate a configuration")
    v.add_argument("config")
    sub.add_parser("list-studies", help="list the built-in studies")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "list-studies":
        for name, desc in STUDIES.items():
            print(f"{name}\t{desc}")
        return EXIT_OK
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            cfg, notes = load_config(args.config, seed_override=getattr(args, "seed", None))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
    for n in notes:
        print(f"warning: {n}", file=sys.stderr)
    if args.cmd == "validate":
        print("ok")
        return EXIT_OK
    out = Path(args.out or cfg.output_dir)
    try:
        manifest = run_study(cfg, out, threads=args.threads, notes=notes)
    except Exception as exc:  # runtime failures map to exit 2
        print(f"error: {cfg.study} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in manifest["files"]:
        print(out / f["name"])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
