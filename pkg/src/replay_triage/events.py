"""Core domain types shared by every other module.

Replay events, categorical schemas, labels, and the hyperparameter bundle.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

#: Categorical attributes, in encoding order.
CATEGORICAL_ATTRIBUTES = ("error_code", "request_name", "sql_type", "sql_sub_type")


class EventStatus(str, Enum):
    FAILED = "failed"
    SKIPPED = "skipped"
    SUCCEEDED = "succeeded"


def fnv1a_64(data: bytes) -> int:
    """Seedless 64-bit FNV-1a. Stable across runs, platforms and processes."""
    h = _FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV64_PRIME) & _MASK64
    return h


def normalize_statement(statement: str) -> str:
    """Lexically normalize a SQL statement for hashing and dedup.

    Lowercases, collapses whitespace runs and strips trailing semicolons.
    Idempotent; no SQL parsing is attempted.
    """
    s = " ".join(statement.lower().split())
    while s.endswith(";"):
        s = s[:-1].rstrip()
    return s


def hash_statement(statement: str) -> int:
    """Stable 64-bit hash of the normalized statement text."""
    return fnv1a_64(normalize_statement(statement).encode("utf-8"))


@dataclass(frozen=True)
class ReplayEvent:
    """One executed or skipped SQL statement observed during a replay."""

    event_id: str
    replay_id: str
    capture_id: str
    session_id: str
    seq_no: int
    statement_string: str
    sql_type: str
    sql_sub_type: str
    request_name: str
    status: EventStatus
    error_code: str | None = None
    error_message: str | None = None
    skip_reason: str | None = None
    statement_hash: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.status, EventStatus):
            object.__setattr__(self, "status", EventStatus(self.status))
        if self.statement_hash is None:
            object.__setattr__(self, "statement_hash", hash_statement(self.statement_string))

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready dict; absent optional fields are omitted."""
        d: dict[str, Any] = {
            "event_id": self.event_id,
            "replay_id": self.replay_id,
            "capture_id": self.capture_id,
            "session_id": self.session_id,
            "seq_no": self.seq_no,
            "statement_hash": self.statement_hash,
            "statement_string": self.statement_string,
            "sql_type": self.sql_type,
            "sql_sub_type": self.sql_sub_type,
            "request_name": self.request_name,
            "status": self.status.value,
        }
        if self.error_code is not None:
            d["error_code"] = self.error_code
        if self.error_message is not None:
            d["error_message"] = self.error_message
        if self.skip_reason is not None:
            d["skip_reason"] = self.skip_reason
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ReplayEvent":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown event fields: {sorted(unknown)}")
        return cls(**d)


def validate_event(event: ReplayEvent) -> list[str]:
    """Return every violated invariant of *event* (empty list means valid)."""
    violations: list[str] = []
    if not event.event_id:
        violations.append("empty event_id")
    if not event.replay_id:
        violations.append("empty replay_id")
    if not event.session_id:
        violations.append("empty session_id")
    if event.seq_no < 0:
        violations.append("negative seq_no")
    if event.status is EventStatus.FAILED:
        if event.error_code is None:
            violations.append("missing error_code")
        if event.error_message is None:
            violations.append("missing error_message")
    elif event.status is EventStatus.SKIPPED:
        if event.skip_reason is None:
            violations.append("missing skip_reason")
    elif event.status is EventStatus.SUCCEEDED:
        if event.error_code is not None:
            violations.append("error_code present on succeeded event")
        if event.error_message is not None:
            violations.append("error_message present on succeeded event")
        if event.skip_reason is not None:
            violations.append("skip_reason present on succeeded event")
    if event.statement_hash != hash_statement(event.statement_string):
        violations.append("statement_hash does not match statement_string")
    return violations


@dataclass(frozen=True)
class CategoricalSchema:
    """Ordered value vocabulary per categorical attribute, plus the OOV policy.

    Unknown values map to a dedicated out-of-vocabulary slot instead of
    erroring: the set of observed codes grows over time and the encoder must
    absorb novel ones.
    """

    vocabularies: dict[str, tuple[str, ...]]
    oov_slot: bool = True

    def __post_init__(self) -> None:
        for attr in CATEGORICAL_ATTRIBUTES:
            if attr not in self.vocabularies:
                raise ValueError(f"schema is missing attribute {attr!r}")
        for attr, vocab in self.vocabularies.items():
            if len(set(vocab)) != len(vocab):
                raise ValueError(f"duplicate values in vocabulary for {attr!r}")

    @property
    def width(self) -> int:
        extra = len(CATEGORICAL_ATTRIBUTES) if self.oov_slot else 0
        return sum(len(v) for v in self.vocabularies.values()) + extra

    def attribute_width(self, attr: str) -> int:
        return len(self.vocabularies[attr]) + (1 if self.oov_slot else 0)

    def offset(self, attr: str) -> int:
        off = 0
        for a in CATEGORICAL_ATTRIBUTES:
            if a == attr:
                return off
            off += self.attribute_width(a)
        raise KeyError(attr)

    def slot(self, attr: str, value: str | None) -> int:
        """Index within the attribute's sub-block for *value* (OOV slot is last)."""
        vocab = self.vocabularies[attr]
        if value is not None:
            try:
                return vocab.index(value)
            except ValueError:
                pass
        if not self.oov_slot:
            raise ValueError(f"value {value!r} not in vocabulary for {attr!r} and OOV slot disabled")
        return len(vocab)

    def to_dict(self) -> dict[str, Any]:
        return {
            "vocabularies": {a: list(v) for a, v in self.vocabularies.items()},
            "oov_slot": self.oov_slot,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CategoricalSchema":
        return cls(
            vocabularies={a: tuple(v) for a, v in d["vocabularies"].items()},
            oov_slot=bool(d["oov_slot"]),
        )


@dataclass(frozen=True)
class RootCauseLabel:
    label_id: str
    display_name: str = ""

    def __post_init__(self) -> None:
        if not self.display_name:
            object.__setattr__(self, "display_name", self.label_id)


class LabelSource(str, Enum):
    PREDICTED_CERTAIN = "predicted_certain"
    OPERATOR_RECLASSIFIED = "operator_reclassified"


@dataclass(frozen=True)
class LabeledEvent:
    """A replay event together with its harvested root-cause label."""

    event: ReplayEvent
    label: RootCauseLabel
    label_source: LabelSource
    certainty_at_labeling: float = 1.0
    summary_text: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.label_source, LabelSource):
            object.__setattr__(self, "label_source", LabelSource(self.label_source))
        if not 0.0 <= self.certainty_at_labeling <= 1.0:
            raise ValueError("certainty_at_labeling must be in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "event": self.event.to_dict(),
            "label_id": self.label.label_id,
            "label_source": self.label_source.value,
            "certainty_at_labeling": self.certainty_at_labeling,
        }
        if self.summary_text is not None:
            d["summary_text"] = self.summary_text
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LabeledEvent":
        return cls(
            event=ReplayEvent.from_dict(d["event"]),
            label=RootCauseLabel(d["label_id"]),
            label_source=LabelSource(d["label_source"]),
            certainty_at_labeling=float(d["certainty_at_labeling"]),
            summary_text=d.get("summary_text"),
        )


@dataclass(frozen=True)
class Hyperparameters:
    """Tunable knobs of the whole pipeline, with production-minded defaults."""

    k_neighbors: int = 5
    w_categorical: float = 1.0
    w_textual: float = 1.0
    certainty_threshold: float = 0.9
    problem_group_threshold: float = 0.95
    error_word_limit: int = 30
    token_budget: int = 128_000
    per_class_replay_cap: int = 100
    cv_folds: int = 5
    embed_dim: int = 128
    chi2_top_terms: int = 25
    tfidf_top_terms: int = 20

    def __post_init__(self) -> None:
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be positive")
        if self.w_categorical < 0 or self.w_textual < 0:
            raise ValueError("distance weights must be non-negative")
        if self.w_categorical + self.w_textual <= 0:
            raise ValueError("at least one distance weight must be positive")
        if not 0.0 <= self.certainty_threshold <= 1.0:
            raise ValueError("certainty_threshold must be in [0, 1]")
        if not 0.0 < self.problem_group_threshold <= 1.0:
            raise ValueError("problem_group_threshold must be in (0, 1]")
        for name in (
            "error_word_limit",
            "token_budget",
            "per_class_replay_cap",
            "cv_folds",
            "embed_dim",
            "chi2_top_terms",
            "tfidf_top_terms",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Hyperparameters":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)

    def replaced(self, **changes: Any) -> "Hyperparameters":
        d = self.to_dict()
        d.update(changes)
        return Hyperparameters.from_dict(d)
