"""Labeled-data persistence and the training-data construction rules.

Labels are harvested from predictions that an operator verified, or that the
model made with high certainty and no flag. Per replay, each failure
category contributes at most C items so one noisy replay cannot dominate the
dataset. Identical items deduplicate on (statement hash, error code, label,
summary hash) — the label is part of the key on purpose: identical-text
items with different root causes are the hard case and must stay
representable in training data.

The store is event-sourced: an append-only JSON-lines journal is the source
of truth, and replaying it reproduces the in-memory state exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .classifier import Prediction
from .events import (
    Hyperparameters,
    LabeledEvent,
    LabelSource,
    ReplayEvent,
    RootCauseLabel,
    fnv1a_64,
)

ACTION_KINDS = ("reclassify", "confirm", "rate_replay")


@dataclass(frozen=True)
class OperatorAction:
    """One operator decision: reclassify/confirm an event, or rate a replay."""

    kind: str
    operator_id: str
    timestamp: str  # ISO-8601, UTC
    event_id: str | None = None
    new_label_id: str | None = None
    replay_id: str | None = None
    rating: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind in ("reclassify", "confirm") and not self.event_id:
            raise ValueError(f"{self.kind} action needs an event_id")
        if self.kind == "reclassify" and not self.new_label_id:
            raise ValueError("reclassify action needs new_label_id")
        if self.kind == "rate_replay":
            if not self.replay_id:
                raise ValueError("rate_replay action needs replay_id")
            if self.rating not in (1, 2, 3, 4):
                raise ValueError("rating must be in 1..4")
        datetime.fromisoformat(self.timestamp)  # validates format

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "kind": self.kind,
            "operator_id": self.operator_id,
            "timestamp": self.timestamp,
        }
        for name in ("event_id", "new_label_id", "replay_id"):
            value = getattr(self, name)
            if value is not None:
                d[name] = value
        if self.rating is not None:
            d["rating"] = self.rating
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OperatorAction":
        return cls(
            kind=d["kind"],
            operator_id=d["operator_id"],
            timestamp=d["timestamp"],
            event_id=d.get("event_id"),
            new_label_id=d.get("new_label_id"),
            replay_id=d.get("replay_id"),
            rating=d.get("rating"),
        )


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _summary_hash(summary_text: str | None) -> int:
    return fnv1a_64((summary_text or "").encode("utf-8"))


def dedup_key(item: LabeledEvent) -> tuple[int, str, str, int]:
    return (
        item.event.statement_hash or 0,
        item.event.error_code or "",
        item.label.label_id,
        _summary_hash(item.summary_text),
    )


def dedup(items: Sequence[LabeledEvent]) -> list[LabeledEvent]:
    """Keep the first occurrence per dedup key; stable order; idempotent."""
    seen: set[tuple[int, str, str, int]] = set()
    out: list[LabeledEvent] = []
    for item in items:
        key = dedup_key(item)
        if key in seen:
            continue
        seen.add(key)
        out.append(item)
    return out


def harvest(
    predictions: Sequence[Prediction],
    actions: Sequence[OperatorAction],
    events_by_id: Mapping[str, ReplayEvent],
    theta: float = 0.9,
    cap: int = 100,
    summaries: Mapping[str, str] | None = None,
) -> list[LabeledEvent]:
    """Select reliable labels from one replay's predictions.

    An event is harvested iff an operator reclassified or confirmed it, or
    the prediction was confident (certainty >= theta) and unflagged. The
    operator's label always wins. Per (replay, label), at most ``cap`` items
    are kept, earliest seq_no first.
    """
    summaries = summaries or {}
    latest_action: dict[str, OperatorAction] = {}
    for action in actions:
        if action.kind not in ("reclassify", "confirm"):
            continue
        if action.event_id not in events_by_id:
            raise KeyError(f"action references unknown event {action.event_id}")
        current = latest_action.get(action.event_id)
        if current is None or action.timestamp >= current.timestamp:
            latest_action[action.event_id] = action

    candidates: list[LabeledEvent] = []
    for prediction in predictions:
        event = events_by_id.get(prediction.event_id)
        if event is None:
            raise KeyError(f"prediction references unknown event {prediction.event_id}")
        action = latest_action.get(prediction.event_id)
        if action is not None:
            label_id = action.new_label_id if action.kind == "reclassify" else prediction.label_id
            source = LabelSource.OPERATOR_RECLASSIFIED
        elif not prediction.flagged and prediction.certainty >= theta:
            label_id = prediction.label_id
            source = LabelSource.PREDICTED_CERTAIN
        else:
            continue
        candidates.append(
            LabeledEvent(
                event=event,
                label=RootCauseLabel(label_id),
                label_source=source,
                certainty_at_labeling=prediction.certainty,
                summary_text=summaries.get(prediction.event_id),
            )
        )

    candidates.sort(key=lambda it: (it.event.replay_id, it.event.seq_no))
    counts: dict[tuple[str, str], int] = {}
    kept: list[LabeledEvent] = []
    for item in candidates:
        key = (item.event.replay_id, item.label.label_id)
        if counts.get(key, 0) >= cap:
            continue
        counts[key] = counts.get(key, 0) + 1
        kept.append(item)
    return kept


@dataclass(frozen=True)
class TrainingDataset:
    """One immutable dataset version with per-item provenance."""

    version: int
    items: tuple[LabeledEvent, ...]
    provenance: tuple[str, ...]  # one origin tag per item

    def __post_init__(self) -> None:
        if len(self.items) != len(self.provenance):
            raise ValueError("items and provenance must align")

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "items": [it.to_dict() for it in self.items],
            "provenance": list(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainingDataset":
        return cls(
            version=int(d["version"]),
            items=tuple(LabeledEvent.from_dict(it) for it in d["items"]),
            provenance=tuple(d["provenance"]),
        )


EMPTY_DATASET = TrainingDataset(version=0, items=(), provenance=())


def assemble(
    base: TrainingDataset,
    new_items: Sequence[LabeledEvent],
    origin: str = "harvest",
    cap: int = 100,
) -> TrainingDataset:
    """Concatenate new items onto a dataset, bumping the version.

    A new item for an already-present event replaces the old entry (latest
    label wins); then the dedup key and the per-(replay, label) cap are
    re-enforced over the combined list.
    """
    by_event: dict[str, tuple[LabeledEvent, str]] = {}
    order: list[str] = []
    for item, prov in zip(base.items, base.provenance):
        if item.event.event_id not in by_event:
            order.append(item.event.event_id)
        by_event[item.event.event_id] = (item, prov)
    for item in new_items:
        if item.event.event_id not in by_event:
            order.append(item.event.event_id)
        by_event[item.event.event_id] = (item, origin)

    combined = [by_event[event_id][0] for event_id in order]
    provs = {event_id: by_event[event_id][1] for event_id in order}
    deduped = dedup(combined)

    counts: dict[tuple[str, str], int] = {}
    items: list[LabeledEvent] = []
    provenance: list[str] = []
    for item in deduped:
        key = (item.event.replay_id, item.label.label_id)
        if counts.get(key, 0) >= cap:
            continue
        counts[key] = counts.get(key, 0) + 1
        items.append(item)
        provenance.append(provs[item.event.event_id])
    return TrainingDataset(version=base.version + 1, items=tuple(items), provenance=tuple(provenance))


def weekly_rating_report(actions: Sequence[OperatorAction]) -> dict[str, float]:
    """Mean replay rating per ISO week; the severest rating per replay governs."""
    severest: dict[tuple[str, str], int] = {}
    for action in actions:
        if action.kind != "rate_replay":
            continue
        stamp = datetime.fromisoformat(action.timestamp)
        iso = stamp.isocalendar()
        week = f"{iso[0]}-W{iso[1]:02d}"
        key = (week, action.replay_id or "")
        severest[key] = max(severest.get(key, 0), int(action.rating or 0))
    weeks: dict[str, list[int]] = {}
    for (week, _replay), rating in severest.items():
        weeks.setdefault(week, []).append(rating)
    return {week: sum(rs) / len(rs) for week, rs in sorted(weeks.items())}


class TrainingStore:
    """Append-only journal of actions, harvests and dataset assemblies.

    A single writer appends; the in-memory state is rebuilt by replaying the
    journal on open, so a restart reproduces the stored state exactly.
    """

    def __init__(self, journal_path: str | Path | None = None):
        self.journal_path = None if journal_path is None else Path(journal_path)
        self.actions: list[OperatorAction] = []
        self.pending_items: list[LabeledEvent] = []
        self.datasets: list[TrainingDataset] = [EMPTY_DATASET]
        if self.journal_path is not None and self.journal_path.exists():
            self._replay_journal()

    # -- journal plumbing ---------------------------------------------------

    def _append(self, record: dict[str, Any]) -> None:
        if self.journal_path is None:
            return
        with self.journal_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _replay_journal(self) -> None:
        assert self.journal_path is not None
        with self.journal_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self._apply(record)

    def _apply(self, record: dict[str, Any]) -> None:
        kind = record["kind"]
        if kind == "action":
            self.actions.append(OperatorAction.from_dict(record["action"]))
        elif kind == "harvest":
            self.pending_items.extend(LabeledEvent.from_dict(it) for it in record["items"])
        elif kind == "assemble":
            self._assemble_pending(record.get("origin", "harvest"), int(record.get("cap", 100)))
        else:
            raise ValueError(f"unknown journal record kind {kind!r}")

    # -- public API ----------------------------------------------------------

    def record_action(self, action: OperatorAction) -> None:
        self._apply({"kind": "action", "action": action.to_dict()})
        self._append({"kind": "action", "action": action.to_dict()})

    def record_harvest(self, items: Sequence[LabeledEvent]) -> None:
        record = {"kind": "harvest", "items": [it.to_dict() for it in items]}
        self._apply(record)
        self._append(record)

    def _assemble_pending(self, origin: str, cap: int) -> None:
        self.datasets.append(assemble(self.datasets[-1], self.pending_items, origin=origin, cap=cap))
        self.pending_items = []

    def assemble_version(self, origin: str = "harvest", cap: int = 100) -> TrainingDataset:
        record = {"kind": "assemble", "origin": origin, "cap": cap}
        self._apply(record)
        self._append(record)
        return self.datasets[-1]

    @property
    def latest(self) -> TrainingDataset:
        return self.datasets[-1]

    def dataset(self, version: int) -> TrainingDataset:
        for ds in self.datasets:
            if ds.version == version:
                return ds
        raise KeyError(f"no dataset version {version}")

    def rating_report(self) -> dict[str, float]:
        return weekly_rating_report(self.actions)

    def state_digest(self) -> str:
        """Canonical serialization of the whole state, for replay equality checks."""
        payload = {
            "actions": [a.to_dict() for a in self.actions],
            "pending": [it.to_dict() for it in self.pending_items],
            "datasets": [ds.to_dict() for ds in self.datasets],
        }
        return json.dumps(payload, sort_keys=True)

    def export_labels(self, path: str | Path, version: int | None = None) -> int:
        """Write a dataset version in the interchange label-file format."""
        ds = self.latest if version is None else self.dataset(version)
        with Path(path).open("w", encoding="utf-8") as fh:
            for item in ds.items:
                fh.write(
                    json.dumps(
                        {
                            "event_id": item.event.event_id,
                            "label_id": item.label.label_id,
                            "label_source": item.label_source.value,
                            "certainty_at_labeling": item.certainty_at_labeling,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        return len(ds.items)
