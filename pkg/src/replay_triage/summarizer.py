"""Failure-context summarization.

Builds the summarization prompt from a context set, anonymizes it, enforces
the completion token budget (splitting into chunks and merging when the
context is too large), calls a pluggable completion endpoint and parses the
returned JSON summary. A deterministic offline summarizer emulates the
prompt's instructions so the whole pipeline runs network-free in CI.
"""

from __future__ import annotations

import abc
import ast
import ipaddress
import json
import math
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .context import ContextItem, ContextSet
from .events import fnv1a_64

PROMPT_HEADER = (
    "Given a list of JSON objects containing SQL statement strings, error "
    "messages, and skip reasons, generate a concise summary. Group the SQL "
    "statements based on SQL type and execution status. Summarize each group "
    "with a parseable JSON structure like:\n"
    "[{{'statement type': SQL statement type,\n"
    "'status': failed/ skipped,\n"
    "'error': generic summary of all 'critical' sub-parts of unique error "
    "message in {word_limit} words or less,\n"
    "'objects': comma-separated list of all objects}}]\n\n"
    "Summarize 'identical' failures within the list similarly. Strictly "
    "adhere to the summary structure and include absolutely no additional "
    "information outside the JSON. Input list of JSON:\n"
)

MERGE_PROMPT_HEADER = (
    "The following JSON arrays are partial failure summaries of one session, "
    "produced chunk by chunk. Merge groups that share the same statement type "
    "and status: union their object lists and re-summarize their error "
    "messages in {word_limit} words or less. Strictly return only the merged "
    "JSON array in the same structure. Input summaries:\n"
)

REPAIR_SUFFIX = "\n\nReturn only the JSON array."


class TransportError(RuntimeError):
    """A retryable transport-level failure while calling an endpoint."""


class EndpointError(RuntimeError):
    """Endpoint unreachable after exhausting the retry policy."""


class SummaryParseError(ValueError):
    """No well-formed JSON array could be extracted from a response."""


class SummaryValidationError(ValueError):
    """The parsed summary violates the required structure."""


# --------------------------------------------------------------------------
# anonymization

_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")
_IPV4_RE = re.compile(r"\b(?:\d{1,3}\.){3}\d{1,3}\b")
_IPV6_RE = re.compile(r"(?<![\w:.])[0-9A-Fa-f]{0,4}(?::[0-9A-Fa-f]{0,4}){2,7}(?![\w:.])")
_HOST_RE = re.compile(r"\b(?:[A-Za-z][A-Za-z0-9-]*\.){2,}[A-Za-z][A-Za-z0-9-]*\b")


class _PlaceholderState:
    def __init__(self) -> None:
        self.mapping: dict[tuple[str, str], str] = {}
        self.counters: dict[str, int] = {}

    def placeholder(self, kind: str, value: str) -> str:
        key = (kind, value)
        existing = self.mapping.get(key)
        if existing is not None:
            return existing
        self.counters[kind] = self.counters.get(kind, 0) + 1
        name = f"{kind}_{self.counters[kind]}"
        self.mapping[key] = name
        return name


def _is_ip(candidate: str) -> bool:
    try:
        ipaddress.ip_address(candidate)
        return True
    except ValueError:
        return False


def _anonymize_text(
    text: str,
    state: _PlaceholderState,
    extra_patterns: Sequence[tuple[re.Pattern[str], str]] = (),
) -> str:
    text = _EMAIL_RE.sub(lambda m: state.placeholder("EMAIL", m.group(0)), text)
    text = _IPV4_RE.sub(
        lambda m: state.placeholder("IP", m.group(0)) if _is_ip(m.group(0)) else m.group(0), text
    )
    text = _IPV6_RE.sub(
        lambda m: state.placeholder("IP", m.group(0)) if _is_ip(m.group(0)) else m.group(0), text
    )
    text = _HOST_RE.sub(lambda m: state.placeholder("HOST", m.group(0)), text)
    for pattern, prefix in extra_patterns:
        text = pattern.sub(lambda m: state.placeholder(prefix, m.group(0)), text)
    return text


def anonymize(
    context: ContextSet,
    extra_patterns: Sequence[tuple[re.Pattern[str] | str, str]] = (),
) -> ContextSet:
    """Replace IPs, hostnames and emails with stable placeholders.

    The same original value maps to the same placeholder within one context
    set; the operation is idempotent because placeholders never match the
    patterns again.
    """
    compiled = [(re.compile(p) if isinstance(p, str) else p, prefix) for p, prefix in extra_patterns]
    state = _PlaceholderState()
    items = []
    for item in context.items:
        items.append(
            ContextItem(
                statement_string=_anonymize_text(item.statement_string, state, compiled),
                status=item.status,
                statement_hash=item.statement_hash,
                error_code=item.error_code,
                error_message=None
                if item.error_message is None
                else _anonymize_text(item.error_message, state, compiled),
                skip_reason=None
                if item.skip_reason is None
                else _anonymize_text(item.skip_reason, state, compiled),
            )
        )
    return context.replace_items(tuple(items))


# --------------------------------------------------------------------------
# prompt building and token budget

def serialize_prompt_items(items: Sequence[dict[str, Any]]) -> str:
    return json.dumps(list(items), indent=1)


def build_prompt(context: ContextSet, word_limit: int = 30) -> str:
    """Instantiate the summarization prompt for an (anonymized) context set.

    The instruction block is byte-identical across inputs for a given word
    limit; only the appended JSON list varies.
    """
    if not context.items:
        raise ValueError("cannot build a prompt from an empty context")
    anonymized = anonymize(context)
    return PROMPT_HEADER.format(word_limit=word_limit) + serialize_prompt_items(
        anonymized.to_prompt_list()
    )


def estimate_tokens(text: str) -> int:
    """Cheap monotone token estimate: one token per four UTF-8 bytes."""
    return math.ceil(len(text.encode("utf-8")) / 4)


# --------------------------------------------------------------------------
# summaries

@dataclass(frozen=True)
class SummaryGroup:
    statement_type: str
    status: str
    error: str
    objects: tuple[Any, ...] = ()

    def to_listing_dict(self) -> dict[str, Any]:
        return {
            "statement type": self.statement_type,
            "status": self.status,
            "error": self.error,
            "objects": ", ".join(str(o) for o in self.objects),
        }


@dataclass(frozen=True)
class FailureSummary:
    groups: tuple[SummaryGroup, ...]
    provenance: str  # llm | offline | chunk_merged
    raw_response: str = ""
    warnings: tuple[str, ...] = ()

    def to_listing_json(self) -> str:
        return json.dumps([g.to_listing_dict() for g in self.groups])

    def to_dict(self) -> dict[str, Any]:
        return {
            "groups": [
                {
                    "statement_type": g.statement_type,
                    "status": g.status,
                    "error": g.error,
                    "objects": list(g.objects),
                }
                for g in self.groups
            ],
            "provenance": self.provenance,
            "raw_response": self.raw_response,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FailureSummary":
        return cls(
            groups=tuple(
                SummaryGroup(
                    statement_type=g["statement_type"],
                    status=g["status"],
                    error=g["error"],
                    objects=tuple(g["objects"]),
                )
                for g in d["groups"]
            ),
            provenance=d["provenance"],
            raw_response=d.get("raw_response", ""),
            warnings=tuple(d.get("warnings", ())),
        )


def _match_brackets(text: str, start: int) -> int | None:
    depth = 0
    for j in range(start, len(text)):
        if text[j] == "[":
            depth += 1
        elif text[j] == "]":
            depth -= 1
            if depth == 0:
                return j
    return None


def extract_json_array(text: str) -> list[Any]:
    """Extract the first well-formed JSON (or Python-literal) array in *text*."""
    for i, ch in enumerate(text):
        if ch != "[":
            continue
        end = _match_brackets(text, i)
        if end is None:
            continue
        candidate = text[i : end + 1]
        for loader in (json.loads, ast.literal_eval):
            try:
                value = loader(candidate)
            except (ValueError, SyntaxError):
                continue
            if isinstance(value, list):
                return value
    raise SummaryParseError("no well-formed JSON array found in response")


def _normalize_objects(value: Any) -> tuple[Any, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return (value,)


def parse_summary_response(raw: str, provenance: str = "llm") -> FailureSummary:
    """Parse an endpoint response into a FailureSummary (not yet validated)."""
    array = extract_json_array(raw)
    groups = []
    for entry in array:
        if not isinstance(entry, dict):
            raise SummaryParseError(f"summary array entries must be objects, got {type(entry).__name__}")
        normalized = {str(k).strip().lower().replace("_", " "): v for k, v in entry.items()}
        groups.append(
            SummaryGroup(
                statement_type=str(normalized.get("statement type", "")).strip(),
                status=str(normalized.get("status", "")).strip().lower(),
                error=str(normalized.get("error", "")).strip(),
                objects=_normalize_objects(normalized.get("objects")),
            )
        )
    return FailureSummary(groups=tuple(groups), provenance=provenance, raw_response=raw)


@dataclass(frozen=True)
class SummaryValidation:
    ok: bool
    violations: tuple[str, ...]
    warnings: tuple[str, ...]
    normalized: FailureSummary


def validate_summary(summary: FailureSummary, word_limit: int = 30) -> SummaryValidation:
    """Check structure; truncate over-limit errors with a warning, not a rejection."""
    violations: list[str] = []
    warnings: list[str] = []
    if not summary.groups:
        violations.append("summary has no groups")
    normalized_groups: list[SummaryGroup] = []
    for i, group in enumerate(summary.groups):
        if group.status not in ("failed", "skipped"):
            violations.append(f"group {i}: unknown status {group.status!r}")
        bad_objects = [o for o in group.objects if not isinstance(o, str)]
        if bad_objects:
            violations.append(f"group {i}: non-string objects {bad_objects!r}")
        error = group.error
        words = error.split()
        if len(words) > word_limit:
            warnings.append(f"group {i}: error exceeds {word_limit} words ({len(words)}), truncated")
            error = " ".join(words[:word_limit])
        normalized_groups.append(
            SummaryGroup(
                statement_type=group.statement_type,
                status=group.status,
                error=error,
                objects=group.objects,
            )
        )
    normalized = FailureSummary(
        groups=tuple(normalized_groups),
        provenance=summary.provenance,
        raw_response=summary.raw_response,
        warnings=summary.warnings + tuple(warnings),
    )
    return SummaryValidation(
        ok=not violations,
        violations=tuple(violations),
        warnings=tuple(warnings),
        normalized=normalized,
    )


def summary_to_text(summary: FailureSummary) -> str:
    """Deterministic flattening of a validated summary for text composition."""
    parts: list[str] = []
    for group in summary.groups:
        parts.append(group.statement_type)
        parts.append(group.status)
        if group.error:
            parts.append(group.error)
        parts.extend(str(o) for o in group.objects)
    return " ".join(parts)


# --------------------------------------------------------------------------
# completion endpoints

@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4-turbo"
    max_context_tokens: int = 128_000
    temperature: float = 0.0
    timeout_s: float = 60.0
    max_retries: int = 2
    api_key_env: str = "TRIAGE_LLM_API_KEY"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EndpointConfig":
        return cls(**d)


class CompletionEndpoint(abc.ABC):
    """Anything that can turn a prompt into a completion string."""

    model_name: str = "unknown"
    provenance: str = "llm"
    max_retries: int = 2

    @abc.abstractmethod
    def complete(self, prompt: str) -> str: ...


class OfflineSummarizer(CompletionEndpoint):
    """Deterministic emulation of what the prompt asks a model to do.

    Groups the input items by leading SQL keyword and execution status, takes
    the most frequent error text per group (first word_limit words), and
    extracts object identifiers that follow FROM/INTO/TABLE/VIEW/PROCEDURE.
    """

    model_name = "offline-rules"
    provenance = "offline"
    max_retries = 0

    _OBJECT_KEYWORDS = {"from", "into", "table", "view", "procedure"}
    _COMPOUND_LEADS = {"create", "drop", "alter", "truncate"}

    def __init__(self, word_limit: int = 30):
        self.word_limit = word_limit

    def complete(self, prompt: str) -> str:
        marker = "Input list of JSON:"
        idx = prompt.rfind(marker)
        payload = prompt[idx + len(marker) :] if idx >= 0 else prompt
        items = extract_json_array(payload)
        groups: dict[tuple[str, str], dict[str, Any]] = {}
        for item in items:
            if not isinstance(item, dict):
                continue
            statement = str(item.get("Statement String", ""))
            status = "skipped" if item.get("Skip Reason") is not None else "failed"
            key = (self._statement_type(statement), status)
            bucket = groups.setdefault(
                key, {"errors": [], "objects": [], "seen_objects": set()}
            )
            error_text = item.get("Error Message") or item.get("Skip Reason") or ""
            bucket["errors"].append(str(error_text))
            for obj in self._objects(statement):
                if obj not in bucket["seen_objects"]:
                    bucket["seen_objects"].add(obj)
                    bucket["objects"].append(obj)
        response = []
        for (stype, status), bucket in groups.items():
            response.append(
                {
                    "statement type": stype,
                    "status": status,
                    "error": self._summarize_errors(bucket["errors"]),
                    "objects": ", ".join(bucket["objects"]),
                }
            )
        return json.dumps(response)

    def _statement_type(self, statement: str) -> str:
        tokens = statement.strip().split()
        if not tokens:
            return "UNKNOWN"
        lead = tokens[0].lower()
        if lead in self._COMPOUND_LEADS and len(tokens) > 1:
            return f"{tokens[0]} {tokens[1]}".upper()
        return tokens[0].upper()

    def _objects(self, statement: str) -> list[str]:
        tokens = statement.replace(",", " ").split()
        found: list[str] = []
        for i, tok in enumerate(tokens[:-1]):
            if tok.lower() in self._OBJECT_KEYWORDS:
                candidate = tokens[i + 1].strip("();'\"`")
                if candidate and not candidate[0].isdigit():
                    found.append(candidate)
        return found

    def _summarize_errors(self, errors: list[str]) -> str:
        if not errors:
            return ""
        counts: dict[str, int] = {}
        first_original: dict[str, str] = {}
        order: list[str] = []
        for err in errors:
            norm = " ".join(err.lower().split())
            if norm not in counts:
                counts[norm] = 0
                first_original[norm] = err
                order.append(norm)
            counts[norm] += 1
        best = max(order, key=lambda n: (counts[n], -order.index(n)))
        words = first_original[best].split()
        return " ".join(words[: self.word_limit])


class ThrottledEndpoint(CompletionEndpoint):
    """Caps in-flight completions across every caller sharing the endpoint."""

    def __init__(self, inner: CompletionEndpoint, max_in_flight: int = 4):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")
        self.inner = inner
        self.model_name = inner.model_name
        self.provenance = inner.provenance
        self.max_retries = inner.max_retries
        self._semaphore = threading.BoundedSemaphore(max_in_flight)

    def complete(self, prompt: str) -> str:
        with self._semaphore:
            return self.inner.complete(prompt)


class FixtureEndpoint(CompletionEndpoint):
    """Replays canned responses (or raises canned errors) in call order."""

    provenance = "llm"

    def __init__(self, responses: Sequence[str | Exception], model_name: str = "fixture"):
        self._responses = list(responses)
        self.model_name = model_name
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        if not self._responses:
            raise AssertionError("fixture endpoint exhausted")
        item = self._responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


class HttpCompletionEndpoint(CompletionEndpoint):
    """Chat-completion HTTP client; one user message per request."""

    def __init__(self, config: EndpointConfig):
        self.config = config
        self.model_name = config.model
        self.max_retries = config.max_retries

    def complete(self, prompt: str) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            response = httpx.post(
                self.config.base_url.rstrip("/") + "/chat/completions",
                json=body,
                headers=headers,
                timeout=self.config.timeout_s,
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code >= 500:
            raise TransportError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise EndpointError(f"completion request failed: {response.status_code} {response.text[:200]}")
        data = response.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise SummaryParseError(f"malformed completion payload: {exc}") from exc


def make_endpoint(kind: str, config: EndpointConfig | None = None, word_limit: int = 30) -> CompletionEndpoint:
    if kind == "offline":
        return OfflineSummarizer(word_limit=word_limit)
    if kind == "http":
        return HttpCompletionEndpoint(config or EndpointConfig())
    raise ValueError(f"unknown endpoint kind {kind!r}")


# --------------------------------------------------------------------------
# cache

class SummaryCache:
    """Content-addressed summary cache; safe for concurrent readers."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = None if directory is None else Path(directory)
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, FailureSummary] = {}
        self._lock = threading.Lock()

    def _key(self, context_hash: int, model: str, word_limit: int) -> str:
        model_slug = re.sub(r"[^A-Za-z0-9._-]", "_", model)
        return f"sum-{context_hash:016x}-{model_slug}-w{word_limit}"

    def get(self, context_hash: int, model: str, word_limit: int) -> FailureSummary | None:
        key = self._key(context_hash, model, word_limit)
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        if self.directory is not None:
            path = self.directory / f"{key}.json"
            if path.exists():
                summary = FailureSummary.from_dict(json.loads(path.read_text(encoding="utf-8")))
                with self._lock:
                    self._memory[key] = summary
                return summary
        return None

    def put(self, context_hash: int, model: str, word_limit: int, summary: FailureSummary) -> None:
        key = self._key(context_hash, model, word_limit)
        with self._lock:
            self._memory[key] = summary
            if self.directory is not None:
                path = self.directory / f"{key}.json"
                path.write_text(json.dumps(summary.to_dict(), sort_keys=True), encoding="utf-8")


# --------------------------------------------------------------------------
# summarize

def _call_with_retry(endpoint: CompletionEndpoint, prompt: str) -> str:
    attempts = endpoint.max_retries + 1
    last: Exception | None = None
    for _ in range(attempts):
        try:
            return endpoint.complete(prompt)
        except TransportError as exc:
            last = exc
    raise EndpointError(f"endpoint unreachable after {attempts} attempts: {last}")


def _complete_and_parse(endpoint: CompletionEndpoint, prompt: str, provenance: str) -> FailureSummary:
    raw = _call_with_retry(endpoint, prompt)
    try:
        return parse_summary_response(raw, provenance=provenance)
    except SummaryParseError:
        raw = _call_with_retry(endpoint, prompt + REPAIR_SUFFIX)
        return parse_summary_response(raw, provenance=provenance)


def _validate_or_raise(summary: FailureSummary, word_limit: int) -> FailureSummary:
    result = validate_summary(summary, word_limit)
    if not result.ok:
        raise SummaryValidationError("; ".join(result.violations))
    return result.normalized


def summarize(
    context: ContextSet,
    endpoint: CompletionEndpoint,
    *,
    word_limit: int = 30,
    token_budget: int = 128_000,
    cache: SummaryCache | None = None,
) -> FailureSummary:
    """Summarize a failed event's context through the given endpoint.

    Falls through to the chunked path when the prompt exceeds the token
    budget. Responses are cached by (context hash, model, word limit).
    """
    if not context.items:
        raise ValueError("cannot summarize an empty context")
    context_hash = context.content_hash()
    if cache is not None:
        cached = cache.get(context_hash, endpoint.model_name, word_limit)
        if cached is not None:
            return cached
    prompt = build_prompt(context, word_limit)
    if estimate_tokens(prompt) > token_budget:
        summary = summarize_chunked(
            context, endpoint, word_limit=word_limit, token_budget=token_budget
        )
    else:
        summary = _complete_and_parse(endpoint, prompt, provenance=endpoint.provenance)
        summary = _validate_or_raise(summary, word_limit)
    if cache is not None:
        cache.put(context_hash, endpoint.model_name, word_limit, summary)
    return summary


def _shrink_item(item: dict[str, Any], max_payload_bytes: int) -> dict[str, Any]:
    """Truncate an item's long text fields so its JSON fits the byte budget."""
    item = dict(item)
    for key in ("Statement String", "Error Message", "Skip Reason"):
        while len(json.dumps([item], indent=1).encode("utf-8")) > max_payload_bytes:
            value = item.get(key)
            if not isinstance(value, str) or len(value) <= 16:
                break
            item[key] = value[: max(16, len(value) // 2)]
    return item


def split_context_for_budget(
    context: ContextSet, word_limit: int, token_budget: int
) -> list[ContextSet]:
    """Split into maximal prefix chunks whose prompts each fit the budget."""
    anonymized = anonymize(context)
    header_bytes = len(PROMPT_HEADER.format(word_limit=word_limit).encode("utf-8"))
    budget_bytes = token_budget * 4 - header_bytes - 8  # bracket/newline slack
    if budget_bytes < 160:
        raise ValueError(
            f"token budget {token_budget} leaves no room for context items "
            f"beyond the prompt template ({header_bytes} bytes)"
        )
    chunks: list[list[ContextItem]] = []
    current: list[ContextItem] = []
    current_bytes = 0
    for item in anonymized.items:
        item_bytes = len(json.dumps(item.to_prompt_dict(), indent=1).encode("utf-8")) + 4
        if item_bytes > budget_bytes:
            shrunk = _shrink_item(item.to_prompt_dict(), budget_bytes - 8)
            item = ContextItem(
                statement_string=str(shrunk.get("Statement String", "")),
                status=item.status,
                statement_hash=item.statement_hash,
                error_code=item.error_code,
                error_message=shrunk.get("Error Message"),
                skip_reason=shrunk.get("Skip Reason"),
            )
            item_bytes = len(json.dumps(item.to_prompt_dict(), indent=1).encode("utf-8")) + 4
        if current and current_bytes + item_bytes > budget_bytes:
            chunks.append(current)
            current = []
            current_bytes = 0
        current.append(item)
        current_bytes += item_bytes
    if current:
        chunks.append(current)
    return [context.replace_items(tuple(chunk)) for chunk in chunks]


def _lexical_error_merge(errors: list[str], word_limit: int) -> str:
    unique: list[str] = []
    for err in errors:
        if err and err not in unique:
            unique.append(err)
    return " ".join("; ".join(unique).split()[:word_limit])


def merge_chunk_summaries(
    summaries: Sequence[FailureSummary],
    endpoint: CompletionEndpoint,
    word_limit: int,
) -> FailureSummary:
    """Merge per-chunk summaries into one, grouping by (statement type, status)."""
    order: list[tuple[str, str]] = []
    merged: dict[tuple[str, str], dict[str, Any]] = {}
    warnings: tuple[str, ...] = ()
    for summary in summaries:
        warnings = warnings + summary.warnings
        for group in summary.groups:
            key = (group.statement_type, group.status)
            bucket = merged.get(key)
            if bucket is None:
                bucket = {"errors": [], "objects": [], "seen": set()}
                merged[key] = bucket
                order.append(key)
            bucket["errors"].append(group.error)
            for obj in group.objects:
                if obj not in bucket["seen"]:
                    bucket["seen"].add(obj)
                    bucket["objects"].append(obj)

    needs_error_merge = any(len(set(b["errors"])) > 1 for b in merged.values())
    error_by_key: dict[tuple[str, str], str] = {}
    if needs_error_merge and endpoint.provenance != "offline":
        payload = json.dumps([[g.to_listing_dict() for g in s.groups] for s in summaries], indent=1)
        prompt = MERGE_PROMPT_HEADER.format(word_limit=word_limit) + payload
        try:
            merged_summary = _complete_and_parse(endpoint, prompt, provenance="chunk_merged")
            for group in merged_summary.groups:
                error_by_key[(group.statement_type, group.status)] = group.error
        except (SummaryParseError, EndpointError):
            error_by_key = {}

    groups = []
    for key in order:
        bucket = merged[key]
        error = error_by_key.get(key) or _lexical_error_merge(bucket["errors"], word_limit)
        groups.append(
            SummaryGroup(statement_type=key[0], status=key[1], error=error, objects=tuple(bucket["objects"]))
        )
    return FailureSummary(groups=tuple(groups), provenance="chunk_merged", warnings=warnings)


def summarize_chunked(
    context: ContextSet,
    endpoint: CompletionEndpoint,
    *,
    word_limit: int = 30,
    token_budget: int = 128_000,
) -> FailureSummary:
    """Chunked summarization for over-budget contexts.

    Each chunk fits the budget and is summarized independently; groups with
    equal (statement type, status) are merged across chunks.
    """
    chunks = split_context_for_budget(context, word_limit, token_budget)
    if len(chunks) <= 1:
        prompt = build_prompt(chunks[0] if chunks else context, word_limit)
        summary = _complete_and_parse(endpoint, prompt, provenance=endpoint.provenance)
        return _validate_or_raise(summary, word_limit)
    parts = []
    for chunk in chunks:
        prompt = build_prompt(chunk, word_limit)
        part = _complete_and_parse(endpoint, prompt, provenance=endpoint.provenance)
        parts.append(_validate_or_raise(part, word_limit))
    merged = merge_chunk_summaries(parts, endpoint, word_limit)
    return _validate_or_raise(merged, word_limit)
