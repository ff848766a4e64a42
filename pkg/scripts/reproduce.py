#!/usr/bin/env python3
"""End-to-end reproduction driver.

Certifies and runs the main scenario, runs the ablation scenario with and
without the conservative no-feedforward margins, and renders the report
plots for both comparisons into ``out/``:

    python scripts/reproduce.py [--out out]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from tubeform.cli import main as cli  # noqa: E402

SCENARIOS = ROOT / "scenarios"


def run(args: list[str]) -> None:
    code = cli(args)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {' '.join(args)}")


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="out")
    opts = parser.parse_args()
    out = Path(opts.out)
    out.mkdir(parents=True, exist_ok=True)

    paper = SCENARIOS / "paper_scenario.json"
    ablation = SCENARIOS / "ablation_scenario.json"

    run(["certify", str(paper), "-o", str(out / "paper_cert.json")])
    run(["run", str(paper), "--cert", str(out / "paper_cert.json"), "-o", str(out / "paper")])
    run(["report", str(out / "paper" / "trace.csv"), "-o", str(out / "paper_report")])

    run(["certify", str(ablation), "-o", str(out / "ablation_cert.json")])
    run(
        [
            "run", str(ablation), "--cert", str(out / "ablation_cert.json"),
            "-o", str(out / "ablation_ff"),
        ]
    )
    run(
        [
            "run", str(ablation), "--cert", str(out / "ablation_cert.json"),
            "-o", str(out / "ablation_baseline"), "--baseline-margins",
        ]
    )
    run(
        [
            "report",
            str(out / "ablation_ff" / "trace.csv"),
            str(out / "ablation_baseline" / "trace.csv"),
            "-o", str(out / "ablation_report"),
        ]
    )
    print(f"\nAll runs complete; see {out}/")


if __name__ == "__main__":
    main()
