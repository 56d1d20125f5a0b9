"""Tutor-vs-baseline comparison over the bundled corpus, judged offline.

Generates a tutoring session and a free-running role-play baseline for each
of the first N documents, judges every pair, and prints per-metric means,
perspective averages, and win rates.

    python3 scripts/compare_models.py [n_docs] [seed]
"""

from __future__ import annotations

import pathlib
import sys

REPO = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ehrtutor.agent import render_transcript
from ehrtutor.config import EngineConfig
from ehrtutor.documents import load_bundled_corpus
from ehrtutor.evaluation import (
    aggregate_metric_means,
    classify_quality,
    compute_win_rate,
    judge_pair,
    perspective_averages,
    round_half_up,
)
from ehrtutor.gateway import GatewayMode, LLMGateway
from ehrtutor.pipeline import run_baseline, run_pipeline
from ehrtutor.stubprovider import StubProvider


def main() -> int:
    n_docs = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 1

    config = EngineConfig()
    gateway = LLMGateway(GatewayMode.LIVE, provider=StubProvider())
    corpus = load_bundled_corpus()[:n_docs]

    reports = []
    for offset, document in enumerate(corpus):
        tutor = run_pipeline(gateway, config, document, seed=seed + offset)
        base = run_baseline(gateway, config, document, seed=seed + offset)
        reports.append(
            judge_pair(
                gateway,
                config,
                document.text,
                render_transcript(list(tutor.turns)),
                render_transcript(list(base.turns)),
            )
        )
        print(f"judged {document.doc_id}: best={reports[-1].best_model or 'tie'}")

    print(f"\n{len(reports)} pairs judged")
    for label in ("EHRTutor", "GPT4"):
        means = aggregate_metric_means(reports, label)
        averages = perspective_averages(means)
        print(f"\n{label}:")
        for perspective, metrics in means.items():
            row = ", ".join(
                f"{metric.value}={round_half_up(value, 2):.2f}"
                for metric, value in metrics.items()
            )
            print(f"  {perspective.value}: {row}")
        avg_row = ", ".join(
            f"{p.value}={round_half_up(v, 2):.2f}" for p, v in averages.items()
        )
        print(f"  averages: {avg_row}")
        print(f"  quality: {classify_quality(averages, config.thresholds).value}")
        rate = compute_win_rate(reports, label)
        print(f"  win rate: {float(rate):.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
