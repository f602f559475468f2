"""Run one command over every litmus file in the corpus and tabulate the verdicts.

    python3 scripts/run_corpus.py                 # check-safety on everything
    python3 scripts/run_corpus.py --command all --out reports/
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import tempfile
import time
from pathlib import Path

from sbreduce.cli import COMMANDS, main

ROOT = Path(__file__).resolve().parent.parent


def verdicts(report: dict) -> str:
    parts = []
    for name, r in report.get("results", {}).items():
        parts.append(f"{name}={r.get('verdict', r['status'])}")
    return " ".join(parts) or report.get("error", "")


def main_(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--command", choices=COMMANDS, default="check-safety")
    p.add_argument("--corpus", type=Path, default=ROOT / "corpus")
    p.add_argument("--out", type=Path, help="directory for the JSON reports")
    args = p.parse_args(argv)

    out = args.out or Path(tempfile.mkdtemp(prefix="sbreduce-"))
    out.mkdir(parents=True, exist_ok=True)
    worst = 0
    for path in sorted(args.corpus.glob("*.litmus")):
        dest = out / f"{path.stem}.json"
        t0 = time.perf_counter()
        with contextlib.redirect_stdout(io.StringIO()):
            code = main([args.command, str(path), "--json", str(dest)])
        elapsed = time.perf_counter() - t0
        report = json.loads(dest.read_text())
        print(f"{path.stem:20s} exit={code} {elapsed:7.1f}s  {verdicts(report)}")
        worst = max(worst, code)
    print(f"reports in {out}")
    return worst


if __name__ == "__main__":
    raise SystemExit(main_())
