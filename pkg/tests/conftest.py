from __future__ import annotations

import random

import pytest

from replay_triage.events import EventStatus, ReplayEvent
from replay_triage.replay_log import ReplayLog


def make_event(
    event_id: str = "e0",
    replay_id: str = "r1",
    capture_id: str = "c1",
    session_id: str = "s1",
    seq_no: int = 0,
    statement: str = "select 1 from dummy",
    status: str = "failed",
    error_code: str | None = None,
    error_message: str | None = None,
    skip_reason: str | None = None,
    sql_type: str = "1",
    sql_sub_type: str = "1",
    request_name: str = "1",
) -> ReplayEvent:
    status = EventStatus(status)
    if status is EventStatus.FAILED:
        error_code = error_code if error_code is not None else "100"
        error_message = error_message if error_message is not None else "generic failure"
    if status is EventStatus.SKIPPED and skip_reason is None:
        skip_reason = "filtered"
    return ReplayEvent(
        event_id=event_id,
        replay_id=replay_id,
        capture_id=capture_id,
        session_id=session_id,
        seq_no=seq_no,
        statement_string=statement,
        sql_type=sql_type,
        sql_sub_type=sql_sub_type,
        request_name=request_name,
        status=status,
        error_code=error_code,
        error_message=error_message,
        skip_reason=skip_reason,
    )


def make_log(events, replay_id: str = "r1", capture_id: str = "c1") -> ReplayLog:
    return ReplayLog(replay_id=replay_id, capture_id=capture_id, events=tuple(events))


def random_log(rng: random.Random, n_events: int, replay_id: str = "rnd") -> ReplayLog:
    """A random multi-session log with failed/skipped/succeeded events."""
    statements = [f"select col{i} from tab{i % 7}" for i in range(12)]
    events = []
    for seq in range(n_events):
        status = rng.choice(["failed", "skipped", "succeeded", "failed"])
        events.append(
            make_event(
                event_id=f"{replay_id}-e{seq:05d}",
                replay_id=replay_id,
                session_id=f"s{rng.randrange(4)}",
                seq_no=seq,
                statement=rng.choice(statements),
                status=status,
                error_code=str(rng.randrange(5)) if status == "failed" else None,
                error_message=f"error kind {rng.randrange(4)}" if status == "failed" else None,
            )
        )
    return make_log(events, replay_id=replay_id)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)
