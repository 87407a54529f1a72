"""Command line: one subcommand per experiment plus ``report``.

Exit status: 0 all checks passed, 1 a check failed, 2 the run crashed.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .config import EXPERIMENTS, from_dict
from .errors import ConfigError
from .experiments import EXIT_CRASHED, EXIT_FAILED, EXIT_OK, run_experiment

THREADS_ENV = "FRACHEAT_THREADS"


def _threads(flag: Optional[int]) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _error_record(exc: BaseException, out: Optional[Path]) -> dict:
    rec = {"status": "crashed", "error": type(exc).__name__, "message": str(exc)}
    for attr in ("horizon", "residual", "value", "error_estimate"):
        if getattr(exc, attr, None) is not None:
            rec[attr] = getattr(exc, attr)
    print(json.dumps(rec), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(rec, indent=2) + "\n", encoding="utf-8")
        except OSError:
            pass
    return rec


def run_command(experiment: str, args) -> int:
    out = Path(args.out) if args.out else None
    try:
        text = Path(args.config).read_text(encoding="utf-8") if args.config else "{}"
        doc = yaml.safe_load(text) or {}
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a key-value mapping")
        if doc.setdefault("experiment", experiment) != experiment:
            raise ConfigError(f"key 'experiment': config names {doc['experiment']!r}, command is {experiment!r}")
        if args.seed is not None:
            doc["seed"] = args.seed
        cfg = from_dict(doc)
        out = out or Path(cfg.output)
        result = run_experiment(cfg, str(out), _threads(args.threads))
    except Exception as exc:  # reported, never a traceback for the user
        _error_record(exc, out)
        if os.environ.get("FRACHEAT_DEBUG"):
            traceback.print_exc()
        return EXIT_CRASHED
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
    return result.status


def emit_report(run_dirs: Sequence[str], out: Optional[str] = None) -> int:
    """Aggregate manifests of finished runs into a table; returns the exit status."""
    rows = []
    for d in run_dirs:
        path = Path(d) / "manifest.json"
        if not path.exists():
            _error_record(FileNotFoundError(f"missing run manifest {path}"), None)
            return EXIT_CRASHED
        man = json.loads(path.read_text(encoding="utf-8"))
        for c in man.get("checks", []):
            rows.append([man["experiment"], c["name"], "PASS" if c["passed"] else "FAIL", c.get("detail", "")])
    for r in rows:
        print("  ".join(r))
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "check", "result", "detail"])
            w.writerows(rows)
    return EXIT_FAILED if any(r[2] == "FAIL" for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracheat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", metavar="PATH", help="YAML experiment document")
        s.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides the file)")
        s.add_argument("--out", metavar="DIR", help="output directory (overrides the file)")
        s.add_argument("--threads", type=int, metavar="N", help=f"worker threads (default ${THREADS_ENV} or 1)")
    r = sub.add_parser("report", help="aggregate check results of finished runs")
    r.add_argument("runs", nargs="*", metavar="DIR")
    r.add_argument("--out", metavar="CSV", help="write the summary table here")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        return emit_report(args.runs, args.out)
    return run_command(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
