"""End-to-end glue: datasets, featurizers, model fitting, replay triage."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .classifier import ModelSnapshot, Prediction, fit, predict_batch
from .context import ContextCollector
from .events import (
    Hyperparameters,
    LabeledEvent,
    LabelSource,
    ReplayEvent,
    RootCauseLabel,
)
from .features import CategoricalOneHotEncoder, FeatureMatrix, encode_categoricals
from .replay_log import ReplayLog, ingest, read_labels
from .summarizer import (
    CompletionEndpoint,
    FailureSummary,
    SummaryCache,
    summarize,
    summary_to_text,
)
from .text import FeatureMode, compose_text, preprocess
from .vectorizers import make_vectorizer, vectorizer_from_state


def build_labeled_events(
    log: ReplayLog,
    labels_by_event: Mapping[str, str],
    summaries: Mapping[str, str] | None = None,
    label_source: LabelSource = LabelSource.OPERATOR_RECLASSIFIED,
    certainty: float = 1.0,
) -> list[LabeledEvent]:
    """Join a replay log with a ground-truth/label map into dataset items."""
    summaries = summaries or {}
    items: list[LabeledEvent] = []
    for event in log.events:
        label_id = labels_by_event.get(event.event_id)
        if label_id is None:
            continue
        items.append(
            LabeledEvent(
                event=event,
                label=RootCauseLabel(label_id),
                label_source=label_source,
                certainty_at_labeling=certainty,
                summary_text=summaries.get(event.event_id),
            )
        )
    return items


def summarize_failures(
    log: ReplayLog,
    endpoint: CompletionEndpoint,
    *,
    word_limit: int = 30,
    token_budget: int = 128_000,
    cache: SummaryCache | None = None,
    max_workers: int = 1,
) -> dict[str, FailureSummary]:
    """Summarize the session context of every failed event with a context.

    Events whose context is empty (session-first failures) are omitted; their
    text block simply carries no summary part. ``max_workers`` > 1 runs
    endpoint calls concurrently; results are keyed by event id, so the output
    is identical to the serial path.
    """
    collector = ContextCollector(log)
    contexts = {}
    for event in log.failed_events():
        context = collector.collect(event.event_id)
        if context.items:
            contexts[event.event_id] = context

    def one(context):
        return summarize(
            context, endpoint, word_limit=word_limit, token_budget=token_budget, cache=cache
        )

    if max_workers > 1 and len(contexts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, contexts.values()))
        return dict(zip(contexts.keys(), results))
    return {event_id: one(context) for event_id, context in contexts.items()}


def summaries_to_texts(summaries: Mapping[str, FailureSummary]) -> dict[str, str]:
    return {event_id: summary_to_text(s) for event_id, s in summaries.items()}


@dataclass
class Featurizer:
    """A fitted categorical encoder plus text vectorizer for one feature mode."""

    encoder: CategoricalOneHotEncoder
    vectorizer: Any
    feature_mode: FeatureMode
    vectorizer_kind: str

    def compose_tokens(self, event: ReplayEvent, summary_text: str | None) -> list[str]:
        return preprocess(compose_text(event, summary_text, self.feature_mode))

    def transform(
        self,
        events: Sequence[ReplayEvent],
        summaries: Mapping[str, str] | None = None,
        text_rows: np.ndarray | None = None,
    ) -> FeatureMatrix:
        summaries = summaries or {}
        cat = self.encoder.transform(events)
        if text_rows is None:
            corpus = [self.compose_tokens(e, summaries.get(e.event_id)) for e in events]
            text_rows = self.vectorizer.transform(corpus)
        return FeatureMatrix(categorical=cat, text=text_rows)


def fit_featurizer(
    events: Sequence[ReplayEvent],
    summaries: Mapping[str, str] | None,
    feature_mode: FeatureMode | str,
    vectorizer_kind: str,
    hp: Hyperparameters,
) -> Featurizer:
    mode = FeatureMode(feature_mode)
    summaries = summaries or {}
    encoder = CategoricalOneHotEncoder().fit(events)
    vectorizer = make_vectorizer(vectorizer_kind, embed_dim=hp.embed_dim)
    corpus = [preprocess(compose_text(e, summaries.get(e.event_id), mode)) for e in events]
    vectorizer.fit(corpus)
    return Featurizer(
        encoder=encoder, vectorizer=vectorizer, feature_mode=mode, vectorizer_kind=vectorizer_kind
    )


def problem_group_tokens(event: ReplayEvent) -> list[str]:
    """Problem-group detection reads error message + statement text only."""
    return preprocess(compose_text(event, None, FeatureMode.EM_SS))


def fit_model(
    items: Sequence[LabeledEvent],
    hp: Hyperparameters,
    feature_mode: FeatureMode | str = FeatureMode.EM_SS,
    vectorizer_kind: str = "subword",
) -> ModelSnapshot:
    """Fit featurizer + classifier on labeled items and freeze a snapshot."""
    if not items:
        raise ValueError("training dataset is empty")
    mode = FeatureMode(feature_mode)
    events = [it.event for it in items]
    summaries = {
        it.event.event_id: it.summary_text for it in items if it.summary_text is not None
    }
    featurizer = fit_featurizer(events, summaries, mode, vectorizer_kind, hp)
    matrix = featurizer.transform(events, summaries)
    composed = [compose_text(e, summaries.get(e.event_id), mode) for e in events]
    training = [
        (matrix.row(i), items[i].label.label_id, items[i].event.event_id) for i in range(len(items))
    ]
    return fit(
        training,
        hp,
        vectorizer_state=featurizer.vectorizer.to_state(),
        schema=featurizer.encoder.schema_,
        feature_mode=mode.value,
        vectorizer_kind=vectorizer_kind,
        problem_texts=[problem_group_tokens(e) for e in events],
        item_texts=composed,
    )


def featurizer_from_snapshot(snapshot: ModelSnapshot) -> Featurizer:
    """Rebuild the transform side of a snapshot for classifying new events."""
    encoder = CategoricalOneHotEncoder(oov_slot=snapshot.schema.oov_slot)
    encoder.schema_ = snapshot.schema
    vectorizer = vectorizer_from_state(snapshot.vectorizer_state)
    if snapshot.vectorizer_state.get("kind") == "subword_embedding":
        vectorizer.fit()
    return Featurizer(
        encoder=encoder,
        vectorizer=vectorizer,
        feature_mode=FeatureMode(snapshot.feature_mode),
        vectorizer_kind=snapshot.vectorizer_kind,
    )


def classify_events(
    snapshot: ModelSnapshot,
    events: Sequence[ReplayEvent],
    summaries: Mapping[str, str] | None = None,
    feature_mode: FeatureMode | str | None = None,
) -> list[Prediction]:
    """Classify events with a snapshot, under the snapshot's or an override mode."""
    featurizer = featurizer_from_snapshot(snapshot)
    if feature_mode is not None:
        featurizer.feature_mode = FeatureMode(feature_mode)
    matrix = featurizer.transform(events, summaries)
    return predict_batch(snapshot, matrix, [e.event_id for e in events])


def classify_replay(
    log: ReplayLog,
    snapshot: ModelSnapshot,
    endpoint: CompletionEndpoint | None = None,
    feature_mode: FeatureMode | str | None = None,
    cache: SummaryCache | None = None,
) -> tuple[list[Prediction], dict[str, FailureSummary]]:
    """Full triage of a replay's failed events.

    Summary-using modes require an endpoint; the offline summarizer keeps
    this path network-free.
    """
    mode = FeatureMode(feature_mode) if feature_mode is not None else FeatureMode(snapshot.feature_mode)
    failed = log.failed_events()
    summaries: dict[str, FailureSummary] = {}
    summary_texts: dict[str, str] = {}
    if mode.uses_summary:
        if endpoint is None:
            raise ValueError(f"feature mode {mode.value} needs a summarizer endpoint")
        hp = snapshot.hyperparameters
        summaries = summarize_failures(
            log, endpoint, word_limit=hp.error_word_limit, token_budget=hp.token_budget, cache=cache
        )
        summary_texts = summaries_to_texts(summaries)
    predictions = classify_events(snapshot, failed, summary_texts, mode)
    return predictions, summaries


# --------------------------------------------------------------------------
# file-level dataset IO

def dataset_from_files(
    events_path: str | Path,
    labels_path: str | Path,
    summaries_path: str | Path | None = None,
) -> list[LabeledEvent]:
    """Load a labeled dataset from event/label (and optional summary) files."""
    log = ingest(events_path)
    label_records = read_labels(labels_path)
    labels_by_event = {r["event_id"]: r["label_id"] for r in label_records}
    sources = {
        r["event_id"]: LabelSource(r.get("label_source", "operator_reclassified"))
        for r in label_records
    }
    certainties = {r["event_id"]: float(r.get("certainty_at_labeling", 1.0)) for r in label_records}
    summaries = read_summary_texts(summaries_path) if summaries_path else {}
    items: list[LabeledEvent] = []
    for event in log.events:
        label_id = labels_by_event.get(event.event_id)
        if label_id is None:
            continue
        items.append(
            LabeledEvent(
                event=event,
                label=RootCauseLabel(label_id),
                label_source=sources[event.event_id],
                certainty_at_labeling=certainties[event.event_id],
                summary_text=summaries.get(event.event_id),
            )
        )
    return items


def write_summary_texts(path: str | Path, summaries: Mapping[str, str]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for event_id in summaries:
            fh.write(json.dumps({"event_id": event_id, "summary_text": summaries[event_id]}, sort_keys=True) + "\n")


def read_summary_texts(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[rec["event_id"]] = rec["summary_text"]
    return out
