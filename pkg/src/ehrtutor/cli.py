"""Command-line interface.

Subcommands:

* ``questions`` — extract, write, and verify quiz questions for one document.
* ``simulate``  — generate full tutoring sessions against the simulated
  patient and emit them as an NDJSON dataset.
* ``baseline``  — generate the free-running role-play comparison transcript.
* ``evaluate``  — judge two datasets pairwise and print aggregate metrics.
* ``serve``     — run the HTTP session service.

Model access is controlled by ``--mode``/``--provider``.  ``simulate`` and
``questions`` default to replaying the bundled cassette, so they run offline
and print byte-identical output on every invocation; ``baseline``, ``evaluate``
and ``serve`` default to the built-in rule-based provider.  Live HTTP access
requires ``--provider http`` and the API key named in the config.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import ExitStack
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .config import EngineConfig, ProviderSettings, load_config
from .documents import load_bundled_corpus, load_document
from .errors import EHRTutorError
from .evaluation import (
    JUDGE_LABELS,
    compute_win_rate,
    judge_pair,
    aggregate_metric_means,
    perspective_averages,
    round_half_up,
)
from .gateway import Cassette, GatewayMode, HttpProvider, LLMGateway, load_cassette
from .pipeline import run_baseline, run_batch, prepare_questions
from .records import dumps_record_line, read_dataset, write_dataset
from .simulator import UNIFORM_WEIGHTS
from .stubprovider import StubProvider

BUNDLED_CASSETTE = "bundled"

_REPLAY_DEFAULT = {"questions", "simulate"}


def _parse_weights(raw: str) -> tuple[float, float, float]:
    parts = raw.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("weights must be three comma-separated numbers")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return values  # validated against sum/negativity by BehaviorPolicy


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehrtutor",
        description="Conversational discharge-instruction tutoring engine.",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument(
        "--mode",
        choices=["replay", "record", "live"],
        default=None,
        help="replay a cassette, record one, or call the provider directly "
        "(default: replay for questions/simulate, live otherwise)",
    )
    parser.add_argument(
        "--provider",
        choices=["stub", "http"],
        default="stub",
        help="model provider for live/record modes (default: stub)",
    )
    parser.add_argument(
        "--cassette",
        default=BUNDLED_CASSETTE,
        help="cassette path; the literal 'bundled' selects the packaged one",
    )
    parser.add_argument("--model", default=None, help="override the configured model id")

    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("questions", help="extract and verify questions for a document")
    q.add_argument("--doc", required=True, help="bundled document id or path to a .txt file")

    s = sub.add_parser("simulate", help="generate tutoring sessions as NDJSON records")
    s.add_argument("--doc", default=None, help="restrict to one document (default: whole corpus)")
    s.add_argument("--n", type=int, default=1, help="number of sessions")
    s.add_argument("--seed", type=int, default=0, help="base seed; session i uses seed+i")
    s.add_argument("--weights", type=_parse_weights, default=UNIFORM_WEIGHTS,
                   help="patient behavior weights: correct,wrong,irrelevant")
    s.add_argument("--persona", default=None, help="patient persona line")
    s.add_argument("--out", default=None, help="output path (default: stdout)")

    b = sub.add_parser("baseline", help="generate the free-running role-play transcript")
    b.add_argument("--doc", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--turns", type=int, default=None, help="doctor turns (default: config)")
    b.add_argument("--weights", type=_parse_weights, default=UNIFORM_WEIGHTS)
    b.add_argument("--persona", default=None)
    b.add_argument("--out", default=None)

    e = sub.add_parser("evaluate", help="judge two datasets pairwise")
    e.add_argument("--a", required=True, help="dataset judged under --label-a")
    e.add_argument("--b", required=True, help="dataset judged under --label-b")
    e.add_argument("--label-a", default=JUDGE_LABELS[0])
    e.add_argument("--label-b", default=JUDGE_LABELS[1])
    e.add_argument("--out", default=None, help="write raw judge reports as NDJSON")

    v = sub.add_parser("serve", help="run the HTTP session service")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8000)

    return parser


def _resolve_mode(args: argparse.Namespace) -> GatewayMode:
    if args.mode is not None:
        return GatewayMode(args.mode)
    if args.command in _REPLAY_DEFAULT:
        return GatewayMode.REPLAY
    return GatewayMode.LIVE


def _build_gateway(args: argparse.Namespace, config: EngineConfig, stack: ExitStack) -> LLMGateway:
    mode = _resolve_mode(args)
    if mode is GatewayMode.REPLAY:
        if args.cassette == BUNDLED_CASSETTE:
            path = stack.enter_context(
                resources.as_file(
                    resources.files("ehrtutor").joinpath("data/bundled_cassette.jsonl")
                )
            )
        else:
            path = Path(args.cassette)
        return LLMGateway(GatewayMode.REPLAY, cassette=load_cassette(path))

    provider = StubProvider() if args.provider == "stub" else HttpProvider(config.provider)
    if mode is GatewayMode.RECORD:
        if args.cassette == BUNDLED_CASSETTE:
            raise SystemExit("record mode needs an explicit --cassette path to write")
        gateway = LLMGateway(GatewayMode.RECORD, provider=provider, cassette=Cassette())
        stack.callback(gateway.save_cassette, args.cassette)
        return gateway
    return LLMGateway(
        GatewayMode.LIVE,
        provider=provider,
        retries=config.provider.retries,
        backoff_s=config.provider.backoff_s,
    )


def _load_engine_config(args: argparse.Namespace) -> EngineConfig:
    config = load_config(args.config) if args.config else EngineConfig()
    if args.model:
        config = replace(config, provider=replace(config.provider, model_id=args.model))
    return config


def _cmd_questions(args, config: EngineConfig, gateway: LLMGateway) -> int:
    document = load_document(args.doc)
    keypoints, questions = prepare_questions(gateway, config, document.text)
    verified = sum(1 for q in questions if q.verified)
    print(
        f"doc {document.doc_id}: {len(keypoints)} keypoints, {len(questions)} questions, "
        f"{verified} verified, {len(questions) - verified} rejected"
    )
    for question in questions:
        if question.verified:
            print(f"{question.id} [{question.category.value}] verified")
            print(f"    Q: {question.text}")
        else:
            print(f"{question.id} [{question.category.value}] rejected: {question.rejection_reason}")
            print(f"    Q: {question.text}")
    return 0


def _cmd_simulate(args, config: EngineConfig, gateway: LLMGateway) -> int:
    corpus = [load_document(args.doc)] if args.doc else load_bundled_corpus()
    records, stats = run_batch(
        gateway,
        config,
        corpus,
        count=args.n,
        base_seed=args.seed,
        weights=args.weights,
        persona=args.persona,
    )
    if args.out:
        write_dataset(records, args.out)
    else:
        for record in records:
            sys.stdout.write(dumps_record_line(record))
            sys.stdout.write("\n")
    print(
        f"generated {stats['generated']} sessions, skipped {stats['skipped']}",
        file=sys.stderr,
    )
    return 0 if stats["skipped"] == 0 else 1


def _cmd_baseline(args, config: EngineConfig, gateway: LLMGateway) -> int:
    document = load_document(args.doc)
    record = run_baseline(
        gateway,
        config,
        document,
        seed=args.seed,
        weights=args.weights,
        persona=args.persona,
        doctor_turns=args.turns,
    )
    if args.out:
        write_dataset([record], args.out)
    else:
        sys.stdout.write(dumps_record_line(record) + "\n")
    return 0


def _cmd_evaluate(args, config: EngineConfig, gateway: LLMGateway) -> int:
    side_a = read_dataset(args.a)
    side_b = read_dataset(args.b)
    pairs = min(len(side_a), len(side_b))
    if pairs == 0:
        raise SystemExit("both datasets must contain at least one record")
    if len(side_a) != len(side_b):
        print(
            f"datasets differ in length ({len(side_a)} vs {len(side_b)}); "
            f"judging the first {pairs} pairs",
            file=sys.stderr,
        )

    from .agent import render_transcript

    labels = (args.label_a, args.label_b)
    reports = []
    for rec_a, rec_b in zip(side_a[:pairs], side_b[:pairs]):
        reports.append(
            judge_pair(
                gateway,
                config,
                rec_a.instruction_text,
                render_transcript(list(rec_a.turns)),
                render_transcript(list(rec_b.turns)),
                labels=labels,
            )
        )

    print(f"pairs judged: {pairs}")
    for label in labels:
        means = aggregate_metric_means(reports, label)
        print(f"{label}:")
        for perspective, metrics in means.items():
            for metric, value in metrics.items():
                print(f"  {perspective.value}/{metric.value}: {round_half_up(value, 2):.2f}")
        for perspective, value in perspective_averages(means).items():
            print(f"  {perspective.value} average: {round_half_up(value, 2):.2f}")
        rate = compute_win_rate(reports, label)
        print(f"  win rate: {float(rate):.3f} ({rate.numerator}/{rate.denominator})")

    if args.out:
        from .evaluation import serialize_judge_report

        with open(args.out, "w", encoding="utf-8") as handle:
            for report in reports:
                handle.write(serialize_judge_report(report))
                handle.write("\n")
    return 0


def _cmd_serve(args, config: EngineConfig, gateway: LLMGateway) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(config, gateway), host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "questions": _cmd_questions,
    "simulate": _cmd_simulate,
    "baseline": _cmd_baseline,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_engine_config(args)
        with ExitStack() as stack:
            gateway = _build_gateway(args, config, stack)
            return _COMMANDS[args.command](args, config, gateway)
    except EHRTutorError as exc:
        stage = f" [stage: {exc.stage}]" if exc.stage else ""
        print(f"error: {exc}{stage}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
