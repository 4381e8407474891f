#!/usr/bin/env python3
"""Build two synthetic scores files and run the comparison workflow on them.

Demonstrates the `evoqa compare` output without needing a judge: side A is
constructed to average 8.76 overall (9.55 on hallucination absence) and
side B 8.43 (9.70), then the per-metric table is printed.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from evoqa import store
from evoqa.cli import main as cli_main
from evoqa.protocol import format_judge_payload, parse_judge_report
from evoqa.rubric import default_rubric

RUBRIC = default_rubric()


def build_side(hall_scores, overall_target):
    reports = []
    for i, hall in enumerate(hall_scores):
        other = (15 * overall_target - hall) / 14
        scores = {mid: round(other, 6) for mid in RUBRIC.metric_ids()}
        scores["hallucination_absence"] = hall
        reports.append(parse_judge_report(format_judge_payload(scores),
                                          RUBRIC, f"item-{i}"))
    return reports


def main():
    out_dir = Path("demo_out")
    out_dir.mkdir(exist_ok=True)
    a = out_dir / "scores_generated.ndjson"
    b = out_dir / "scores_human.ndjson"
    store.write_scores_file(a, build_side([9.5, 9.6], 8.76))
    store.write_scores_file(b, build_side([9.65, 9.75], 8.43))
    return cli_main(["compare", "--scores-a", str(a), "--scores-b", str(b),
                     "--out", str(out_dir / "comparison.json")])


if __name__ == "__main__":
    sys.exit(main())
