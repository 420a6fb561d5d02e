"""Synthetic replay generation with injected, recoverable root causes.

Scenarios describe per-class failure pools; context-dependent classes emit a
distinguishing signature event (a skipped or failed DDL) earlier in the same
session, so that their failures are indistinguishable from other overlap
classes without session context. Generation is a pure function of the
scenario, seed included.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from math import ceil
from pathlib import Path
from typing import Any

from .events import EventStatus, ReplayEvent
from .replay_log import ReplayLog

_FILLER_STATEMENTS = (
    "select 1 from dummy",
    "commit",
    "select current_timestamp from dummy",
    "set transaction isolation level read committed",
    "select count(*) from status_log",
)

_DEFAULT_NOISE_SKIPS = (
    ("set schema app_main", "session setup statement filtered"),
    ("select * from m_monitoring_view", "read-only monitoring statement filtered"),
    ("alter session set query_timeout = 600", "session parameter statement filtered"),
)


class ScenarioError(ValueError):
    """Raised for structurally invalid scenarios."""


@dataclass(frozen=True)
class ContextSignature:
    """The preceding-event pattern that is a class's only distinguishing evidence."""

    statement_template: str
    status: EventStatus = EventStatus.SKIPPED
    skip_reason: str | None = None
    error_code: str | None = None
    error_message: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.status, EventStatus):
            object.__setattr__(self, "status", EventStatus(self.status))
        if self.status is EventStatus.SKIPPED and self.skip_reason is None:
            raise ScenarioError("skipped signature needs a skip_reason")
        if self.status is EventStatus.FAILED and (self.error_code is None or self.error_message is None):
            raise ScenarioError("failed signature needs error_code and error_message")
        if self.status is EventStatus.SUCCEEDED:
            raise ScenarioError("signature status must be failed or skipped")


@dataclass(frozen=True)
class RootCauseSpec:
    """Failure recipe for one root-cause class."""

    label_id: str
    n_failures: int
    statement_templates: tuple[str, ...]
    error_templates: tuple[str, ...]
    object_pool: tuple[str, ...]
    categoricals: dict[str, tuple[str, ...]]
    context_dependent: bool = False
    signature: ContextSignature | None = None

    def __post_init__(self) -> None:
        if self.n_failures < 1:
            raise ScenarioError(f"{self.label_id}: n_failures must be positive")
        if not (self.statement_templates and self.error_templates and self.object_pool):
            raise ScenarioError(f"{self.label_id}: template and object pools must be non-empty")
        if self.context_dependent and self.signature is None:
            raise ScenarioError(f"{self.label_id}: context_dependent spec needs a signature")
        for attr in ("error_code", "request_name", "sql_type", "sql_sub_type"):
            if attr not in self.categoricals or not self.categoricals[attr]:
                raise ScenarioError(f"{self.label_id}: missing categorical values for {attr}")


@dataclass(frozen=True)
class SynthScenario:
    """Deterministic description of one synthetic replay."""

    seed: int
    specs: tuple[RootCauseSpec, ...]
    replay_id: str = "replay-synth"
    capture_id: str = "capture-synth"
    n_sessions: int = 8
    n_events: int = 0  # 0 means "as many as the specs require"
    overlap_labels: tuple[str, ...] = ()
    failures_per_context_session: int = 20
    noise_skips: tuple[tuple[str, str], ...] = _DEFAULT_NOISE_SKIPS
    noise_per_session: int = 2

    def __post_init__(self) -> None:
        if not self.specs:
            raise ScenarioError("scenario needs at least one root-cause spec")
        labels = [s.label_id for s in self.specs]
        if len(set(labels)) != len(labels):
            raise ScenarioError("duplicate label_id in specs")
        if self.n_sessions < 1:
            raise ScenarioError("n_sessions must be positive")
        if self.failures_per_context_session < 1:
            raise ScenarioError("failures_per_context_session must be positive")
        if self.overlap_labels:
            self._check_overlap_block()
        if self.n_events and self.n_events < self.planned_events():
            raise ScenarioError(
                f"n_events={self.n_events} is below the {self.planned_events()} events the specs require"
            )

    def planned_events(self) -> int:
        """Events the specs require before filler: failures, signatures, noise."""
        failures = sum(s.n_failures for s in self.specs)
        context_sessions = sum(
            ceil(s.n_failures / self.failures_per_context_session)
            for s in self.specs
            if s.context_dependent
        )
        noise = self.noise_per_session * (self.n_sessions + context_sessions)
        return failures + context_sessions + noise

    def _check_overlap_block(self) -> None:
        by_label = {s.label_id: s for s in self.specs}
        missing = [l for l in self.overlap_labels if l not in by_label]
        if missing:
            raise ScenarioError(f"overlap block references unknown labels {missing}")
        members = [by_label[l] for l in self.overlap_labels]
        if len(members) < 2:
            raise ScenarioError("overlap block needs at least 2 classes")
        first = members[0]
        for other in members[1:]:
            if not other.context_dependent or not first.context_dependent:
                raise ScenarioError("overlap classes must be context_dependent")
            if (
                other.statement_templates != first.statement_templates
                or other.error_templates != first.error_templates
                or other.object_pool != first.object_pool
                or other.categoricals != first.categoricals
            ):
                raise ScenarioError(
                    "overlap classes must share identical statement/error/object/categorical pools"
                )

    def spec(self, label_id: str) -> RootCauseSpec:
        for s in self.specs:
            if s.label_id == label_id:
                return s
        raise KeyError(label_id)


@dataclass
class _Item:
    """An event before seq assignment."""

    session_id: str
    status: EventStatus
    statement: str
    error_code: str | None = None
    error_message: str | None = None
    skip_reason: str | None = None
    sql_type: str = "1"
    sql_sub_type: str = "1"
    request_name: str = "1"
    label_id: str | None = None  # ground truth; set on failures only


def _spec_failure(spec: RootCauseSpec, i: int, session_id: str) -> _Item:
    obj = spec.object_pool[i % len(spec.object_pool)]
    stmt = spec.statement_templates[i % len(spec.statement_templates)].format(obj=obj)
    err = spec.error_templates[i % len(spec.error_templates)].format(obj=obj)
    pick = lambda attr: spec.categoricals[attr][i % len(spec.categoricals[attr])]
    return _Item(
        session_id=session_id,
        status=EventStatus.FAILED,
        statement=stmt,
        error_code=pick("error_code"),
        error_message=err,
        sql_type=pick("sql_type"),
        sql_sub_type=pick("sql_sub_type"),
        request_name=pick("request_name"),
        label_id=spec.label_id,
    )


def _signature_item(spec: RootCauseSpec, session_id: str, obj: str) -> _Item:
    sig = spec.signature
    assert sig is not None
    item = _Item(
        session_id=session_id,
        status=sig.status,
        statement=sig.statement_template.format(obj=obj),
        skip_reason=sig.skip_reason,
        error_code=sig.error_code,
        error_message=None if sig.error_message is None else sig.error_message.format(obj=obj),
        sql_type="3",
        sql_sub_type="30",
        request_name="1",
    )
    if sig.status is EventStatus.FAILED:
        item.label_id = spec.label_id  # failed signatures belong to the same root cause
    return item


def generate(scenario: SynthScenario) -> tuple[ReplayLog, dict[str, str]]:
    """Produce a replay log plus a ground-truth map event_id -> label_id.

    Deterministic: the same scenario (seed included) yields byte-identical
    output. Every failed event appears in the ground-truth map.
    """
    rng = random.Random(scenario.seed)
    shared_sessions = [f"sess-{i:03d}" for i in range(scenario.n_sessions)]
    sessions: dict[str, list[_Item]] = {s: [] for s in shared_sessions}
    shuffle_sessions: set[str] = set(shared_sessions)

    for session_id in shared_sessions:
        for j in range(scenario.noise_per_session):
            stmt, reason = scenario.noise_skips[j % len(scenario.noise_skips)]
            sessions[session_id].append(
                _Item(session_id=session_id, status=EventStatus.SKIPPED, statement=stmt, skip_reason=reason)
            )

    for spec_idx, spec in enumerate(scenario.specs):
        if spec.context_dependent:
            per = scenario.failures_per_context_session
            n_chunks = ceil(spec.n_failures / per)
            for chunk in range(n_chunks):
                session_id = f"sess-{spec.label_id}-{chunk:03d}"
                items: list[_Item] = []
                lo, hi = chunk * per, min((chunk + 1) * per, spec.n_failures)
                first_obj = spec.object_pool[lo % len(spec.object_pool)]
                items.append(_signature_item(spec, session_id, first_obj))
                for j in range(scenario.noise_per_session):
                    stmt, reason = scenario.noise_skips[j % len(scenario.noise_skips)]
                    items.append(
                        _Item(session_id=session_id, status=EventStatus.SKIPPED, statement=stmt, skip_reason=reason)
                    )
                for i in range(lo, hi):
                    items.append(_spec_failure(spec, i, session_id))
                sessions[session_id] = items
        else:
            for i in range(spec.n_failures):
                session_id = shared_sessions[(i + spec_idx) % len(shared_sessions)]
                sessions[session_id].append(_spec_failure(spec, i, session_id))

    n_planned = sum(len(items) for items in sessions.values())
    if scenario.n_events and scenario.n_events < n_planned:
        raise ScenarioError(f"n_events={scenario.n_events} is below the {n_planned} events the specs require")
    n_filler = (scenario.n_events - n_planned) if scenario.n_events else 0
    all_session_ids = list(sessions)
    for i in range(n_filler):
        session_id = all_session_ids[i % len(all_session_ids)]
        sessions[session_id].append(
            _Item(
                session_id=session_id,
                status=EventStatus.SUCCEEDED,
                statement=_FILLER_STATEMENTS[i % len(_FILLER_STATEMENTS)],
            )
        )

    # Shuffle item order inside shared sessions; context sessions keep the
    # signature-first layout so the signature always precedes its failures.
    for session_id in all_session_ids:
        if session_id in shuffle_sessions:
            rng.shuffle(sessions[session_id])

    # Random merge across sessions, preserving intra-session order.
    draw_order: list[str] = []
    for session_id in all_session_ids:
        draw_order.extend([session_id] * len(sessions[session_id]))
    rng.shuffle(draw_order)

    cursors = {s: 0 for s in all_session_ids}
    events: list[ReplayEvent] = []
    ground_truth: dict[str, str] = {}
    for seq_no, session_id in enumerate(draw_order):
        item = sessions[session_id][cursors[session_id]]
        cursors[session_id] += 1
        event_id = f"{scenario.replay_id}-e{seq_no:06d}"
        events.append(
            ReplayEvent(
                event_id=event_id,
                replay_id=scenario.replay_id,
                capture_id=scenario.capture_id,
                session_id=session_id,
                seq_no=seq_no,
                statement_string=item.statement,
                sql_type=item.sql_type,
                sql_sub_type=item.sql_sub_type,
                request_name=item.request_name,
                status=item.status,
                error_code=item.error_code,
                error_message=item.error_message,
                skip_reason=item.skip_reason,
            )
        )
        if item.label_id is not None:
            ground_truth[event_id] = item.label_id

    log = ReplayLog(
        replay_id=scenario.replay_id,
        capture_id=scenario.capture_id,
        events=tuple(events),
    )
    return log, ground_truth


def scenario_to_dict(scenario: SynthScenario) -> dict[str, Any]:
    return {
        "seed": scenario.seed,
        "replay_id": scenario.replay_id,
        "capture_id": scenario.capture_id,
        "n_sessions": scenario.n_sessions,
        "n_events": scenario.n_events,
        "overlap_labels": list(scenario.overlap_labels),
        "failures_per_context_session": scenario.failures_per_context_session,
        "noise_skips": [list(p) for p in scenario.noise_skips],
        "noise_per_session": scenario.noise_per_session,
        "specs": [
            {
                "label_id": s.label_id,
                "n_failures": s.n_failures,
                "statement_templates": list(s.statement_templates),
                "error_templates": list(s.error_templates),
                "object_pool": list(s.object_pool),
                "categoricals": {a: list(v) for a, v in s.categoricals.items()},
                "context_dependent": s.context_dependent,
                "signature": None
                if s.signature is None
                else {
                    "statement_template": s.signature.statement_template,
                    "status": s.signature.status.value,
                    "skip_reason": s.signature.skip_reason,
                    "error_code": s.signature.error_code,
                    "error_message": s.signature.error_message,
                },
            }
            for s in scenario.specs
        ],
    }


def scenario_from_dict(d: dict[str, Any]) -> SynthScenario:
    specs = []
    for sd in d["specs"]:
        sig = sd.get("signature")
        specs.append(
            RootCauseSpec(
                label_id=sd["label_id"],
                n_failures=int(sd["n_failures"]),
                statement_templates=tuple(sd["statement_templates"]),
                error_templates=tuple(sd["error_templates"]),
                object_pool=tuple(sd["object_pool"]),
                categoricals={a: tuple(v) for a, v in sd["categoricals"].items()},
                context_dependent=bool(sd.get("context_dependent", False)),
                signature=None
                if sig is None
                else ContextSignature(
                    statement_template=sig["statement_template"],
                    status=EventStatus(sig.get("status", "skipped")),
                    skip_reason=sig.get("skip_reason"),
                    error_code=sig.get("error_code"),
                    error_message=sig.get("error_message"),
                ),
            )
        )
    return SynthScenario(
        seed=int(d["seed"]),
        specs=tuple(specs),
        replay_id=d.get("replay_id", "replay-synth"),
        capture_id=d.get("capture_id", "capture-synth"),
        n_sessions=int(d.get("n_sessions", 8)),
        n_events=int(d.get("n_events", 0)),
        overlap_labels=tuple(d.get("overlap_labels", ())),
        failures_per_context_session=int(d.get("failures_per_context_session", 20)),
        noise_skips=tuple((p[0], p[1]) for p in d.get("noise_skips", _DEFAULT_NOISE_SKIPS)),
        noise_per_session=int(d.get("noise_per_session", 2)),
    )


def load_scenario(path: str | Path) -> SynthScenario:
    with Path(path).open("r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: SynthScenario, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cat(error_code: str, sql_type: str = "1", sql_sub_type: str = "1") -> dict[str, tuple[str, ...]]:
    return {
        "error_code": (error_code,),
        "request_name": ("1", "2"),
        "sql_type": (sql_type,),
        "sql_sub_type": (sql_sub_type,),
    }


def overlap_scenario(seed: int = 7, failures_per_class: int = 250) -> SynthScenario:
    """Reference 12-class scenario with a 3-class context-dependent overlap block.

    The three overlap classes draw failures from identical statement, error,
    object and categorical pools; only the skipped-DDL signature earlier in
    the session tells them apart. Two further classes share error text but
    differ in categorical codes, so the categorical block carries real signal.
    """
    overlap_stmts = (
        "select * from {obj}",
        "select count(*) from {obj} where id > 100",
        "insert into {obj} values (1, 'row')",
    )
    overlap_errors = ("cannot find table/view {obj}",)
    overlap_objects = ("cfg_store_a", "cfg_store_b", "cfg_store_c", "cfg_store_d")
    overlap_cats = _cat("259", sql_type="5", sql_sub_type="12")

    def overlap_spec(label: str, sig_stmt: str, sig_reason: str) -> RootCauseSpec:
        return RootCauseSpec(
            label_id=label,
            n_failures=failures_per_class,
            statement_templates=overlap_stmts,
            error_templates=overlap_errors,
            object_pool=overlap_objects,
            categoricals=overlap_cats,
            context_dependent=True,
            signature=ContextSignature(statement_template=sig_stmt, skip_reason=sig_reason),
        )

    twin_stmts = ("update accounts set balance = 0 where id = 1", "update accounts set touched = 1")
    twin_errors = ("update operation timed out waiting on {obj}",)
    twin_objects = ("accounts", "account_audit")

    specs = (
        overlap_spec(
            "skipped_create_table",
            "create table {obj} (id integer primary key, payload varchar(200))",
            "ddl skipped: transaction open at capture start",
        ),
        overlap_spec(
            "skipped_create_view",
            "create view {obj} as select id, payload from base_rows",
            "ddl skipped: view definition excluded by preprocessing filter",
        ),
        overlap_spec(
            "skipped_drop_table",
            "drop table {obj} cascade",
            "ddl skipped: destructive statement removed during scrubbing",
        ),
        RootCauseSpec(
            label_id="lock_timeout_row",
            n_failures=failures_per_class,
            statement_templates=twin_stmts,
            error_templates=twin_errors,
            object_pool=twin_objects,
            categoricals=_cat("131", sql_type="4", sql_sub_type="41"),
        ),
        RootCauseSpec(
            label_id="lock_timeout_table",
            n_failures=failures_per_class,
            statement_templates=twin_stmts,
            error_templates=twin_errors,
            object_pool=twin_objects,
            categoricals=_cat("132", sql_type="7", sql_sub_type="44"),
        ),
        RootCauseSpec(
            label_id="connection_reset",
            n_failures=failures_per_class,
            statement_templates=("select status from service_registry", "call health_check_proc"),
            error_templates=("connection error: socket closed by peer during fetch",),
            object_pool=("service_registry",),
            categoricals=_cat("-10709", sql_type="1", sql_sub_type="2"),
        ),
        RootCauseSpec(
            label_id="insufficient_privilege",
            n_failures=failures_per_class,
            statement_templates=("grant select on {obj} to reporting_user", "select secret from {obj}"),
            error_templates=("insufficient privilege: not authorized to read {obj}",),
            object_pool=("payroll", "salaries", "vault"),
            categoricals=_cat("258", sql_type="2", sql_sub_type="21"),
        ),
        RootCauseSpec(
            label_id="syntax_error",
            n_failures=failures_per_class,
            statement_templates=("selct id frm {obj}", "select id from {obj} wheere 1"),
            error_templates=("sql syntax error: incorrect syntax near {obj}",),
            object_pool=("orders", "order_items"),
            categoricals=_cat("257", sql_type="1", sql_sub_type="3"),
        ),
        RootCauseSpec(
            label_id="transaction_rollback",
            n_failures=failures_per_class,
            statement_templates=("call {obj}", "call {obj} with overview"),
            error_templates=("operation canceled and transaction rolled back due to exception in {obj}",),
            object_pool=("proc_settle", "proc_rebuild", "proc_archive"),
            categoricals=_cat("129", sql_type="19", sql_sub_type="71"),
        ),
        RootCauseSpec(
            label_id="out_of_memory",
            n_failures=failures_per_class,
            statement_templates=("select * from {obj} order by payload",),
            error_templates=("memory allocation failed while materializing {obj}",),
            object_pool=("events_wide", "metrics_wide"),
            categoricals=_cat("4", sql_type="1", sql_sub_type="5"),
        ),
        RootCauseSpec(
            label_id="duplicate_key",
            n_failures=failures_per_class,
            statement_templates=("insert into {obj} (id) values (7)",),
            error_templates=("unique constraint violated on primary index of {obj}",),
            object_pool=("customers", "customer_keys"),
            categoricals=_cat("301", sql_type="4", sql_sub_type="42"),
        ),
        RootCauseSpec(
            label_id="numeric_overflow",
            n_failures=failures_per_class,
            statement_templates=("update {obj} set total = total * 100000",),
            error_templates=("numeric value out of range in expression on {obj}",),
            object_pool=("ledger", "ledger_archive"),
            categoricals=_cat("339", sql_type="4", sql_sub_type="43"),
        ),
    )
    scenario = SynthScenario(
        seed=seed,
        specs=specs,
        replay_id=f"replay-overlap-{seed}",
        capture_id="capture-overlap",
        n_sessions=30,
        overlap_labels=("skipped_create_table", "skipped_create_view", "skipped_drop_table"),
        failures_per_context_session=25,
    )
    return replace(scenario, n_events=int(scenario.planned_events() * 1.4))
