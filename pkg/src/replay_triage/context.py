"""Session-scoped context collection for failed events.

For a failed event, the relevant history is every event that (i) failed or
was skipped, (ii) ran in the same session, and (iii) was processed earlier,
deduplicated by statement hash so each unique statement appears once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from .events import EventStatus, ReplayEvent, fnv1a_64
from .replay_log import ReplayLog


@dataclass(frozen=True)
class ContextItem:
    statement_string: str
    status: EventStatus
    statement_hash: int
    error_code: str | None = None
    error_message: str | None = None
    skip_reason: str | None = None

    def to_prompt_dict(self) -> dict[str, Any]:
        """The JSON object shape consumed by the summarizer prompt."""
        d: dict[str, Any] = {"Statement String": self.statement_string}
        if self.error_code is not None:
            d["Error Code"] = self.error_code
        if self.error_message is not None:
            d["Error Message"] = self.error_message
        if self.skip_reason is not None:
            d["Skip Reason"] = self.skip_reason
        return d


@dataclass(frozen=True)
class ContextSet:
    """Deduplicated prior failed/skipped events of one session, oldest first."""

    target_event_id: str
    items: tuple[ContextItem, ...]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.items)

    def to_prompt_list(self) -> list[dict[str, Any]]:
        return [item.to_prompt_dict() for item in self.items]

    def content_hash(self) -> int:
        """Stable 64-bit hash of the serialized context, for caching."""
        payload = json.dumps(self.to_prompt_list(), sort_keys=True)
        return fnv1a_64(payload.encode("utf-8"))

    def replace_items(self, items: tuple[ContextItem, ...]) -> "ContextSet":
        return ContextSet(target_event_id=self.target_event_id, items=items, truncated=self.truncated)


def _as_item(event: ReplayEvent) -> ContextItem:
    assert event.statement_hash is not None
    return ContextItem(
        statement_string=event.statement_string,
        status=event.status,
        statement_hash=event.statement_hash,
        error_code=event.error_code,
        error_message=event.error_message,
        skip_reason=event.skip_reason,
    )


class ContextCollector:
    """Reusable collector with a per-session index built once per log."""

    def __init__(self, log: ReplayLog):
        self._events: dict[str, ReplayEvent] = {}
        self._by_session: dict[str, list[ReplayEvent]] = {}
        for event in log.events:
            self._events[event.event_id] = event
            if event.status in (EventStatus.FAILED, EventStatus.SKIPPED):
                self._by_session.setdefault(event.session_id, []).append(event)

    def collect(self, target_event_id: str, max_items: int | None = None) -> ContextSet:
        target = self._events.get(target_event_id)
        if target is None:
            raise KeyError(target_event_id)
        if target.status is not EventStatus.FAILED:
            raise ValueError(
                f"context target {target_event_id} has status {target.status.value}, expected failed"
            )
        seen_hashes: set[int] = set()
        items: list[ContextItem] = []
        for event in self._by_session.get(target.session_id, []):
            if event.seq_no >= target.seq_no:
                break
            if event.statement_hash in seen_hashes:
                continue
            seen_hashes.add(event.statement_hash)  # type: ignore[arg-type]
            items.append(_as_item(event))
        truncated = False
        if max_items is not None and len(items) > max_items:
            items = items[-max_items:]
            truncated = True
        return ContextSet(target_event_id=target_event_id, items=tuple(items), truncated=truncated)


def collect(log: ReplayLog, target_event_id: str, max_items: int | None = None) -> ContextSet:
    """One-shot context collection; reuse a :class:`ContextCollector` for batches.

    Dedup keeps the earliest occurrence of each statement hash: the first
    failure of a statement is the one closest to the root cause. When
    ``max_items`` is exceeded, the newest items are kept and the set is
    marked truncated.
    """
    return ContextCollector(log).collect(target_event_id, max_items=max_items)


@dataclass(frozen=True)
class ContextStats:
    n_failed_events: int
    min_size: int
    mean_size: float
    max_size: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_failed_events": self.n_failed_events,
            "min_size": self.min_size,
            "mean_size": self.mean_size,
            "max_size": self.max_size,
        }


def context_stats(log: ReplayLog) -> ContextStats:
    """Exact distribution of context sizes over every failed event."""
    collector = ContextCollector(log)
    sizes = [len(collector.collect(e.event_id)) for e in log.failed_events()]
    if not sizes:
        return ContextStats(0, 0, 0.0, 0)
    return ContextStats(
        n_failed_events=len(sizes),
        min_size=min(sizes),
        mean_size=sum(sizes) / len(sizes),
        max_size=max(sizes),
    )
