"""Batch front door for the pipeline: generate, check, classify, summarize,
evaluate, compare, serve, export. Every subcommand is a thin wrapper over the
library modules; given the same config and seed, output matches direct module
invocation byte for byte.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .classifier import load_snapshot, save_snapshot
from .config import AppConfig, load_config
from .events import Hyperparameters
from .evaluation import (
    compare_grid,
    cross_validate,
    export_embeddings,
    format_comparison_table,
    format_cv_report,
)
from .pipeline import (
    classify_replay,
    dataset_from_files,
    fit_model,
    read_summary_texts,
    summaries_to_texts,
    summarize_failures,
    write_summary_texts,
)
from .replay_log import IngestError, export, ingest, write_labels
from .store import dedup
from .summarizer import EndpointError, OfflineSummarizer, SummaryCache, make_endpoint
from .synth import ScenarioError, generate, load_scenario, overlap_scenario, save_scenario
from .text import FeatureMode


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # validation failures exit 1, not 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--output", type=Path, default=None)
    parser.add_argument("--jobs", type=int, default=1, help="max parallel summarizer calls")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", default=None, help="feature mode (em, em_ss, em_ss_summary, em_summary)")
    parser.add_argument("--vectorizer", default=None, choices=["tfidf", "subword"])
    parser.add_argument("--k", type=int, default=None, help="neighbor count")
    parser.add_argument("--theta", type=float, default=None, help="certainty threshold")
    parser.add_argument("--tau", type=float, default=None, help="problem-group cosine threshold")
    parser.add_argument("--w-cat", type=float, default=None, help="categorical distance weight")
    parser.add_argument("--w-txt", type=float, default=None, help="textual distance weight")
    parser.add_argument("--offline", action="store_true", help="use the offline summarizer")


def _resolve(args: argparse.Namespace) -> tuple[AppConfig, Hyperparameters]:
    config = load_config(getattr(args, "config", None))
    hp = config.hyperparameters
    overrides: dict[str, Any] = {}
    if getattr(args, "k", None) is not None:
        overrides["k_neighbors"] = args.k
    if getattr(args, "theta", None) is not None:
        overrides["certainty_threshold"] = args.theta
    if getattr(args, "tau", None) is not None:
        overrides["problem_group_threshold"] = args.tau
    if getattr(args, "w_cat", None) is not None:
        overrides["w_categorical"] = args.w_cat
    if getattr(args, "w_txt", None) is not None:
        overrides["w_textual"] = args.w_txt
    if overrides:
        hp = hp.replaced(**overrides)
    return config, hp


def _endpoint(args: argparse.Namespace, config: AppConfig, hp: Hyperparameters):
    if getattr(args, "offline", False) or config.endpoint_kind == "offline":
        return OfflineSummarizer(word_limit=hp.error_word_limit)
    return make_endpoint(config.endpoint_kind, config.endpoint, word_limit=hp.error_word_limit)


def _load_dataset(args: argparse.Namespace, config: AppConfig, hp: Hyperparameters, mode: FeatureMode):
    summaries_path = getattr(args, "summaries", None)
    items = dataset_from_files(args.events, args.labels, summaries_path)
    if mode.uses_summary and summaries_path is None:
        log = ingest(args.events)
        endpoint = _endpoint(args, config, hp)
        texts = summaries_to_texts(
            summarize_failures(
                log,
                endpoint,
                word_limit=hp.error_word_limit,
                token_budget=hp.token_budget,
                max_workers=getattr(args, "jobs", 1) or 1,
            )
        )
        items = [
            it if it.summary_text is not None else _with_summary(it, texts.get(it.event.event_id))
            for it in items
        ]
    return items


def _with_summary(item, text):
    return dataclasses.replace(item, summary_text=text)


def _seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else 0


# ----------------------------------------------------------------- commands

def cmd_generate(args: argparse.Namespace) -> int:
    if args.scenario:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = dataclasses.replace(scenario, seed=args.seed)
    else:
        scenario = overlap_scenario(seed=args.seed if args.seed is not None else 0)
    log, truth = generate(scenario)
    out_dir = args.output or Path("synth-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    export(log, out_dir / "events.jsonl")
    write_labels(
        out_dir / "labels.jsonl",
        [
            {
                "event_id": event_id,
                "label_id": label_id,
                "label_source": "operator_reclassified",
                "certainty_at_labeling": 1.0,
            }
            for event_id, label_id in sorted(truth.items())
        ],
    )
    save_scenario(scenario, out_dir / "scenario.json")
    print(
        f"wrote {len(log)} events ({len(log.failed_events())} failed, "
        f"{len(set(truth.values()))} classes) to {out_dir}"
    )
    return 0


def cmd_ingest_check(args: argparse.Namespace) -> int:
    log = ingest(args.input)
    sessions = {e.session_id for e in log.events}
    print(
        f"{args.input}: ok — {len(log)} events, {len(log.failed_events())} failed, "
        f"{len(sessions)} sessions, replay {log.replay_id}"
    )
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    config, hp = _resolve(args)
    log = ingest(args.events)
    endpoint = _endpoint(args, config, hp)
    cache = SummaryCache(args.cache_dir) if args.cache_dir else None
    summaries = summarize_failures(
        log,
        endpoint,
        word_limit=hp.error_word_limit,
        token_budget=hp.token_budget,
        cache=cache,
        max_workers=args.jobs or 1,
    )
    texts = summaries_to_texts(summaries)
    out = args.output or Path("summaries.jsonl")
    write_summary_texts(out, texts)
    print(f"summarized {len(texts)} failed events -> {out}")
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    config, hp = _resolve(args)
    log = ingest(args.events)
    if args.model:
        snapshot = load_snapshot(args.model)
    else:
        if not (args.train_events and args.train_labels):
            raise IngestError("classify needs --model or --train-events/--train-labels")
        mode = FeatureMode(args.mode or config.feature_mode)
        train_args = argparse.Namespace(
            events=args.train_events,
            labels=args.train_labels,
            summaries=args.train_summaries,
            offline=args.offline,
            config=args.config,
        )
        items = _load_dataset(train_args, config, hp, mode)
        snapshot = fit_model(items, hp, mode, args.vectorizer or config.vectorizer_kind)
        if args.save_model:
            save_snapshot(snapshot, args.save_model)
    mode = FeatureMode(args.mode) if args.mode else FeatureMode(snapshot.feature_mode)
    endpoint = _endpoint(args, config, hp) if mode.uses_summary else None
    predictions, _ = classify_replay(log, snapshot, endpoint=endpoint, feature_mode=mode)
    out = args.output or Path("predictions.jsonl")
    with out.open("w", encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps(p.to_dict(), sort_keys=True) + "\n")
    flagged = sum(1 for p in predictions if p.flagged)
    print(f"classified {len(predictions)} failed events ({flagged} flagged) -> {out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config, hp = _resolve(args)
    mode = FeatureMode(args.mode or config.feature_mode)
    items = _load_dataset(args, config, hp, mode)
    kind = args.vectorizer or config.vectorizer_kind
    report = cross_validate(items, hp, mode, kind, seed=_seed(args))
    print(format_cv_report(report))
    if args.output:
        args.output.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        print(f"report -> {args.output}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config, hp = _resolve(args)
    modes = [FeatureMode(m.strip()) for m in args.modes.split(",") if m.strip()]
    kinds = [k.strip() for k in args.vectorizers.split(",") if k.strip()]
    needs_summary = any(m.uses_summary for m in modes)
    probe_mode = next((m for m in modes if m.uses_summary), modes[0]) if needs_summary else modes[0]
    items = _load_dataset(args, config, hp, probe_mode)
    rows = compare_grid(items, modes, kinds, hp=hp, seed=_seed(args))
    print(format_comparison_table(rows))
    if args.output:
        args.output.write_text(
            json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True), encoding="utf-8"
        )
        print(f"comparison -> {args.output}")
    return 0


def cmd_export_embeddings(args: argparse.Namespace) -> int:
    config, hp = _resolve(args)
    mode = FeatureMode(args.mode or config.feature_mode)
    items = _load_dataset(args, config, hp, mode)
    out = args.output or Path("embeddings.csv")
    rows = export_embeddings(
        items, mode, args.top_n, out, args.vectorizer or config.vectorizer_kind, hp
    )
    print(f"wrote {rows} embedding rows -> {out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    config = load_config(args.config)
    serve(config, host=args.host, port=args.port)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="replay-triage", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic replay with ground truth")
    _add_common(p)
    p.add_argument("--scenario", type=Path, default=None, help="scenario JSON (default: built-in overlap scenario)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest-check", help="validate an event file")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True)
    p.set_defaults(func=cmd_ingest_check)

    p = sub.add_parser("summarize", help="summarize failed events' session context")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--cache-dir", type=Path, default=None)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("classify", help="classify a replay's failed events")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--model", type=Path, default=None, help="trained snapshot JSON")
    p.add_argument("--train-events", type=Path, default=None)
    p.add_argument("--train-labels", type=Path, default=None)
    p.add_argument("--train-summaries", type=Path, default=None)
    p.add_argument("--save-model", type=Path, default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="stratified cross-validation on a labeled dataset")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--summaries", type=Path, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="feature-mode x vectorizer x distance comparison")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--summaries", type=Path, default=None)
    p.add_argument("--modes", default="em,em_ss,em_ss_summary,em_summary")
    p.add_argument("--vectorizers", default="tfidf,subword")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-embeddings", help="export text embeddings for external plotting")
    _add_common(p)
    _add_model_flags(p)
    p.add_argument("--events", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--summaries", type=Path, default=None)
    p.add_argument("--top-n", type=int, default=10)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("serve", help="run the triage HTTP service")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (IngestError, ScenarioError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EndpointError, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
