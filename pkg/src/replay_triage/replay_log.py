"""Replay event logs: the JSON-lines event file format and its round-trip IO.

One JSON object per line, field names matching ReplayEvent, absent optional
fields omitted, seq_no strictly ascending. Label files use the same framing
with ``{event_id, label_id, label_source, certainty_at_labeling}`` records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .events import EventStatus, ReplayEvent, validate_event


class IngestError(ValueError):
    """Raised when an event file fails to parse or validate."""


@dataclass(frozen=True)
class ReplayLog:
    """An ordered, validated sequence of events from one replay."""

    replay_id: str
    capture_id: str
    events: tuple[ReplayEvent, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seqs = [e.seq_no for e in self.events]
        if seqs != sorted(seqs):
            raise ValueError("events must be sorted by seq_no")
        for e in self.events:
            if e.replay_id != self.replay_id:
                raise ValueError(f"event {e.event_id} has replay_id {e.replay_id!r}, expected {self.replay_id!r}")

    def __len__(self) -> int:
        return len(self.events)

    def event(self, event_id: str) -> ReplayEvent:
        for e in self.events:
            if e.event_id == event_id:
                return e
        raise KeyError(event_id)

    def failed_events(self) -> list[ReplayEvent]:
        return [e for e in self.events if e.status is EventStatus.FAILED]


def ingest(path: str | Path, fmt: str = "jsonl") -> ReplayLog:
    """Read and validate an event file, rejecting any malformed line or event."""
    if fmt != "jsonl":
        raise IngestError(f"unsupported format {fmt!r}")
    path = Path(path)
    events: list[ReplayEvent] = []
    seen_seq: dict[int, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path.name}:{lineno}: invalid JSON: {exc.msg}") from exc
            try:
                event = ReplayEvent.from_dict(raw)
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path.name}:{lineno}: bad event record: {exc}") from exc
            violations = validate_event(event)
            if violations:
                raise IngestError(
                    f"{path.name}:{lineno}: event {event.event_id}: " + "; ".join(violations)
                )
            if event.seq_no in seen_seq:
                raise IngestError(
                    f"{path.name}:{lineno}: duplicate (replay_id, seq_no): "
                    f"events {seen_seq[event.seq_no]} and {event.event_id} share seq_no {event.seq_no}"
                )
            if events and event.seq_no < events[-1].seq_no:
                raise IngestError(f"{path.name}:{lineno}: seq_no not ascending")
            if events and event.replay_id != events[0].replay_id:
                raise IngestError(
                    f"{path.name}:{lineno}: event {event.event_id} has replay_id "
                    f"{event.replay_id!r}, expected {events[0].replay_id!r}"
                )
            seen_seq[event.seq_no] = event.event_id
            events.append(event)
    replay_id = events[0].replay_id if events else path.stem
    capture_id = events[0].capture_id if events else ""
    return ReplayLog(replay_id=replay_id, capture_id=capture_id, events=tuple(events))


def parse_event_lines(lines: Iterable[str]) -> tuple[list[ReplayEvent], list[str]]:
    """Parse event JSON lines leniently, returning (events, per-line diagnostics)."""
    events: list[ReplayEvent] = []
    diagnostics: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            event = ReplayEvent.from_dict(json.loads(line))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            diagnostics.append(f"line {lineno}: {exc}")
            continue
        violations = validate_event(event)
        if violations:
            diagnostics.append(f"line {lineno}: event {event.event_id}: " + "; ".join(violations))
            continue
        events.append(event)
    return events, diagnostics


def export(log: ReplayLog, path: str | Path) -> None:
    """Write *log* so that ``ingest(export(log))`` reproduces it exactly."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for event in log.events:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")


def write_labels(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    """Write a label file: JSON lines of {event_id, label_id, ...} records."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_labels(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    records: list[dict[str, Any]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path.name}:{lineno}: invalid JSON: {exc.msg}") from exc
            if "event_id" not in rec or "label_id" not in rec:
                raise IngestError(f"{path.name}:{lineno}: label record needs event_id and label_id")
            records.append(rec)
    return records
