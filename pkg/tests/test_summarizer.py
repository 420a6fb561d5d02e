from __future__ import annotations

import json
import re

import pytest
from hypothesis import given, strategies as st

from replay_triage.context import ContextItem, ContextSet
from replay_triage.events import EventStatus, hash_statement
from replay_triage.summarizer import (
    EndpointError,
    FailureSummary,
    FixtureEndpoint,
    OfflineSummarizer,
    SummaryCache,
    SummaryGroup,
    SummaryParseError,
    TransportError,
    anonymize,
    build_prompt,
    estimate_tokens,
    extract_json_array,
    merge_chunk_summaries,
    parse_summary_response,
    split_context_for_budget,
    summarize,
    summarize_chunked,
    summary_to_text,
    validate_summary,
)
from replay_triage.text import preprocess

# The documented response shape the parser must accept: single-quoted
# pseudo-JSON with comma-joined object lists.
SAMPLE_RESPONSE = (
    "[{'statement type': 'CALL', 'status': 'failed', "
    "'error': 'Operation canceled and transaction rolled back due to exception.', "
    "'objects': 'ABC1, ABC2'}, "
    "{'statement type': 'CREATE VIEW', 'status': 'failed', "
    "'error': 'Connection error', 'objects': 'MN1, MN2'}]"
)


def ctx_item(statement: str, status: str = "failed", error: str | None = "boom",
             code: str | None = "100", skip: str | None = None) -> ContextItem:
    if status == "skipped" and skip is None:
        skip = "filtered"
    if status == "skipped":
        code = code if error else None
    return ContextItem(
        statement_string=statement,
        status=EventStatus(status),
        statement_hash=hash_statement(statement),
        error_code=code,
        error_message=error,
        skip_reason=skip,
    )


def ctx(*items: ContextItem, target: str = "target-1") -> ContextSet:
    return ContextSet(target_event_id=target, items=tuple(items))


class TestAnonymize:
    def test_ipv4_replaced_with_stable_placeholder(self):
        c = ctx(ctx_item("select 1", error="connect to 10.1.2.3 failed"))
        out = anonymize(c)
        assert out.items[0].error_message == "connect to IP_1 failed"

    def test_same_host_same_placeholder(self):
        c = ctx(
            ctx_item("select 1", error="host db01.internal.corp down"),
            ctx_item("select 2", error="retry db01.internal.corp later"),
        )
        out = anonymize(c)
        assert out.items[0].error_message == "host HOST_1 down"
        assert out.items[1].error_message == "retry HOST_1 later"

    def test_distinct_values_get_distinct_placeholders(self):
        c = ctx(ctx_item("select 1", error="10.0.0.1 then 10.0.0.2"))
        out = anonymize(c)
        assert out.items[0].error_message == "IP_1 then IP_2"

    def test_email_and_ipv6(self):
        c = ctx(ctx_item("select 1", error="user ops@example.com at fe80::1 failed"))
        out = anonymize(c)
        assert "EMAIL_1" in out.items[0].error_message
        assert "IP_1" in out.items[0].error_message

    def test_times_are_not_ips(self):
        c = ctx(ctx_item("select 1", error="failed at 12:30:45 yesterday"))
        out = anonymize(c)
        assert out.items[0].error_message == "failed at 12:30:45 yesterday"

    def test_schema_qualified_names_survive(self):
        c = ctx(ctx_item("select * from app.orders", error="cannot read app.orders"))
        out = anonymize(c)
        assert out.items[0].statement_string == "select * from app.orders"

    @given(
        st.lists(
            st.sampled_from(
                [
                    "connect to 10.1.2.3",
                    "host web1.prod.internal",
                    "mail root@corp.example.org",
                    "plain text without secrets",
                    "addr 2001:db8:0:1:1:1:1:1 refused",
                ]
            ),
            min_size=1,
            max_size=5,
        )
    )
    def test_idempotent(self, errors):
        items = tuple(ctx_item(f"stmt {i}", error=e) for i, e in enumerate(errors))
        once = anonymize(ctx(*items))
        twice = anonymize(once)
        assert once.items == twice.items


class TestBuildPrompt:
    def test_instruction_block_is_constant_across_inputs(self):
        p1 = build_prompt(ctx(ctx_item("call proc_a")))
        p2 = build_prompt(ctx(ctx_item("select * from t", status="skipped", error=None)))
        marker = "Input list of JSON:\n"
        assert p1.split(marker)[0] == p2.split(marker)[0]

    def test_word_limit_interpolated(self):
        prompt = build_prompt(ctx(ctx_item("select 1")), word_limit=12)
        assert "in 12 words or less" in prompt

    def test_contains_serialized_items(self):
        prompt = build_prompt(ctx(ctx_item("call proc_x", error="rolled back")))
        assert '"Statement String"' in prompt
        assert "call proc_x" in prompt

    def test_empty_context_rejected(self):
        with pytest.raises(ValueError):
            build_prompt(ctx())

    def test_no_raw_ip_after_anonymization(self, rng):
        for _ in range(30):
            a, b, c, d = (rng.randrange(1, 255) for _ in range(4))
            error = f"node 10.{a}.{b}.{c} and host n{d}.zone.corp failed"
            prompt = build_prompt(ctx(ctx_item("select 1", error=error)))
            assert not re.search(r"\b10\.\d+\.\d+\.\d+\b", prompt)
            assert ".zone.corp" not in prompt


class TestEstimateTokens:
    def test_four_bytes_per_token(self):
        assert estimate_tokens("x" * 400) == 100

    def test_empty(self):
        assert estimate_tokens("") == 0

    def test_rounds_up(self):
        assert estimate_tokens("abcde") == 2

    @given(st.text(max_size=80), st.text(max_size=80))
    def test_subadditive(self, a, b):
        assert estimate_tokens(a + b) <= estimate_tokens(a) + estimate_tokens(b) + 1


class TestParsing:
    def test_sample_response_parses_to_expected_groups(self):
        summary = parse_summary_response(SAMPLE_RESPONSE)
        assert len(summary.groups) == 2
        call, view = summary.groups
        assert call.statement_type == "CALL"
        assert call.status == "failed"
        assert call.error == "Operation canceled and transaction rolled back due to exception."
        assert call.objects == ("ABC1", "ABC2")
        assert view.statement_type == "CREATE VIEW"
        assert view.objects == ("MN1", "MN2")

    def test_prose_before_array_is_skipped(self):
        raw = "Sure! Here is the summary you asked for:\n" + SAMPLE_RESPONSE + "\nHope it helps."
        assert len(parse_summary_response(raw).groups) == 2

    def test_no_array_raises(self):
        with pytest.raises(SummaryParseError):
            extract_json_array("there is no array here {}")

    def test_double_quoted_json_also_accepted(self):
        raw = json.dumps([{"statement type": "SELECT", "status": "failed", "error": "x", "objects": []}])
        summary = parse_summary_response(raw)
        assert summary.groups[0].statement_type == "SELECT"


class TestValidateSummary:
    def _summary(self, **kw):
        group = SummaryGroup(
            statement_type=kw.get("statement_type", "SELECT"),
            status=kw.get("status", "failed"),
            error=kw.get("error", "short error"),
            objects=kw.get("objects", ("T1",)),
        )
        return FailureSummary(groups=(group,), provenance="llm")

    def test_over_limit_error_truncated_with_warning(self):
        words = " ".join(f"w{i}" for i in range(31))
        result = validate_summary(self._summary(error=words), word_limit=30)
        assert result.ok
        assert len(result.warnings) == 1
        assert result.normalized.groups[0].error == " ".join(f"w{i}" for i in range(30))

    def test_exactly_at_limit_untouched(self):
        words = " ".join(f"w{i}" for i in range(30))
        result = validate_summary(self._summary(error=words), word_limit=30)
        assert not result.warnings
        assert result.normalized.groups[0].error == words

    def test_unknown_status_is_violation(self):
        result = validate_summary(self._summary(status="succeeded"))
        assert not result.ok
        assert any("status" in v for v in result.violations)

    def test_empty_group_list_is_violation(self):
        result = validate_summary(FailureSummary(groups=(), provenance="llm"))
        assert not result.ok

    def test_non_string_objects_flagged(self):
        result = validate_summary(self._summary(objects=(1, "b")))
        assert not result.ok

    def test_valid_sample_response_is_ok(self):
        assert validate_summary(parse_summary_response(SAMPLE_RESPONSE)).ok


class TestSummaryToText:
    def test_flattening_matches_preprocessed_expectation(self):
        summary = parse_summary_response(SAMPLE_RESPONSE)
        tokens = preprocess(summary_to_text(summary))
        assert tokens == (
            "call failed operation canceled and transaction rolled back due to "
            "exception abc1 abc2 create view failed connection error mn1 mn2"
        ).split()

    def test_empty_objects_add_no_tokens(self):
        summary = FailureSummary(
            groups=(SummaryGroup("SELECT", "failed", "boom", ()),), provenance="offline"
        )
        assert summary_to_text(summary) == "SELECT failed boom"


class TestOfflineSummarizer:
    def test_deterministic_across_runs(self):
        context = ctx(
            ctx_item("select * from t1", error="cannot find table/view t1"),
            ctx_item("create table t1 (id int)", status="skipped", error=None, code=None),
        )
        s1 = summarize(context, OfflineSummarizer())
        s2 = summarize(context, OfflineSummarizer())
        assert s1.groups == s2.groups
        assert s1.provenance == "offline"

    def test_groups_by_keyword_and_status(self):
        context = ctx(
            ctx_item("select * from t1", error="cannot find table/view t1"),
            ctx_item("select * from t2", error="cannot find table/view t2"),
            ctx_item("create view v1 as select 1", status="skipped", error=None, code=None),
        )
        summary = summarize(context, OfflineSummarizer())
        keys = {(g.statement_type, g.status) for g in summary.groups}
        assert keys == {("SELECT", "failed"), ("CREATE VIEW", "skipped")}

    def test_objects_follow_keywords(self):
        context = ctx(ctx_item("insert into orders values (1)", error="dup key"))
        summary = summarize(context, OfflineSummarizer())
        assert summary.groups[0].objects == ("orders",)

    def test_most_frequent_error_wins(self):
        context = ctx(
            ctx_item("select * from a", error="common problem"),
            ctx_item("select * from b", error="common problem"),
            ctx_item("select * from c", error="rare problem"),
        )
        summary = summarize(context, OfflineSummarizer())
        assert summary.groups[0].error == "common problem"


class TestSummarizeFlow:
    def test_repair_reprompt_on_unparseable_response(self):
        endpoint = FixtureEndpoint(["no json here", SAMPLE_RESPONSE])
        summary = summarize(ctx(ctx_item("call p")), endpoint)
        assert len(summary.groups) == 2
        assert len(endpoint.calls) == 2
        assert endpoint.calls[1].endswith("Return only the JSON array.")

    def test_unparseable_after_repair_raises(self):
        endpoint = FixtureEndpoint(["garbage", "still garbage"])
        with pytest.raises(SummaryParseError):
            summarize(ctx(ctx_item("call p")), endpoint)

    def test_transport_retry_then_success(self):
        endpoint = FixtureEndpoint([TransportError("net down"), SAMPLE_RESPONSE])
        endpoint.max_retries = 2
        summary = summarize(ctx(ctx_item("call p")), endpoint)
        assert summary.groups

    def test_endpoint_unreachable_after_retries(self):
        endpoint = FixtureEndpoint([TransportError("down")] * 3)
        endpoint.max_retries = 2
        with pytest.raises(EndpointError):
            summarize(ctx(ctx_item("call p")), endpoint)

    def test_cache_hit_makes_zero_endpoint_calls(self, tmp_path):
        cache = SummaryCache(tmp_path / "cache")
        context = ctx(ctx_item("select * from t", error="cannot find table/view t"))
        first = FixtureEndpoint([SAMPLE_RESPONSE], model_name="m1")
        s1 = summarize(context, first, cache=cache)
        second = FixtureEndpoint([], model_name="m1")
        s2 = summarize(context, second, cache=cache)
        assert second.calls == []
        assert s1.groups == s2.groups

    def test_cache_key_includes_model_and_word_limit(self, tmp_path):
        cache = SummaryCache(tmp_path / "cache")
        context = ctx(ctx_item("select * from t", error="x"))
        summarize(context, FixtureEndpoint([SAMPLE_RESPONSE], model_name="m1"), cache=cache)
        other = FixtureEndpoint([SAMPLE_RESPONSE], model_name="m2")
        summarize(context, other, cache=cache)
        assert len(other.calls) == 1  # different model, not served from cache


class TestThrottledEndpoint:
    def test_caps_concurrent_completions(self):
        import threading
        from concurrent.futures import ThreadPoolExecutor

        from replay_triage.summarizer import ThrottledEndpoint

        lock = threading.Lock()
        state = {"current": 0, "peak": 0}

        class Counting(OfflineSummarizer):
            def complete(self, prompt):
                with lock:
                    state["current"] += 1
                    state["peak"] = max(state["peak"], state["current"])
                try:
                    import time

                    time.sleep(0.005)
                    return super().complete(prompt)
                finally:
                    with lock:
                        state["current"] -= 1

        throttled = ThrottledEndpoint(Counting(), max_in_flight=2)
        contexts = [
            ctx(ctx_item(f"select * from t{i}", error=f"cannot find table/view t{i}"))
            for i in range(12)
        ]
        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(lambda c: summarize(c, throttled), contexts))
        assert all(r.groups for r in results)
        assert state["peak"] <= 2

    def test_delegates_metadata(self):
        from replay_triage.summarizer import ThrottledEndpoint

        inner = OfflineSummarizer()
        throttled = ThrottledEndpoint(inner, 3)
        assert throttled.provenance == "offline"
        assert throttled.model_name == inner.model_name


class TestParallelSummarizeFailures:
    def test_parallel_equals_serial(self):
        from replay_triage.pipeline import summarize_failures
        from replay_triage.synth import generate, overlap_scenario

        log, _ = generate(overlap_scenario(seed=23, failures_per_class=6))
        serial = summarize_failures(log, OfflineSummarizer(), max_workers=1)
        parallel = summarize_failures(log, OfflineSummarizer(), max_workers=6)
        assert set(serial) == set(parallel)
        for event_id in serial:
            assert serial[event_id].groups == parallel[event_id].groups


class TestChunking:
    def _big_context(self, n: int = 12) -> ContextSet:
        items = [
            ctx_item(f"select * from table_{i:02d}", error=f"cannot find table/view table_{i:02d}")
            for i in range(n)
        ]
        return ctx(*items)

    def test_under_budget_is_single_call(self):
        endpoint = FixtureEndpoint([SAMPLE_RESPONSE])
        summarize(self._big_context(2), endpoint, token_budget=128_000)
        assert len(endpoint.calls) == 1

    def test_chunk_split_respects_budget(self):
        context = self._big_context(12)
        budget = 500
        chunks = split_context_for_budget(context, word_limit=30, token_budget=budget)
        assert len(chunks) > 1
        for chunk in chunks:
            assert estimate_tokens(build_prompt(chunk, 30)) <= budget
        # no items lost
        assert sum(len(c.items) for c in chunks) == len(context.items)

    def test_budget_below_template_size_rejected(self):
        with pytest.raises(ValueError):
            split_context_for_budget(self._big_context(2), 30, token_budget=150)

    def test_chunked_offline_merges_identical_groups(self):
        context = self._big_context(12)
        summary = summarize(context, OfflineSummarizer(), token_budget=500)
        assert summary.provenance == "chunk_merged"
        select_groups = [g for g in summary.groups if g.statement_type == "SELECT"]
        assert len(select_groups) == 1
        assert len(select_groups[0].objects) == 12

    def test_disjoint_chunks_concatenate(self):
        a = FailureSummary(groups=(SummaryGroup("SELECT", "failed", "x", ("A",)),), provenance="offline")
        b = FailureSummary(groups=(SummaryGroup("CALL", "failed", "y", ("B",)),), provenance="offline")
        merged = merge_chunk_summaries([a, b], OfflineSummarizer(), word_limit=30)
        assert [(g.statement_type, g.status) for g in merged.groups] == [
            ("SELECT", "failed"),
            ("CALL", "failed"),
        ]
        assert merged.provenance == "chunk_merged"

    def test_remote_merge_uses_one_extra_call(self):
        context = self._big_context(12)
        chunk_resp = json.dumps(
            [{"statement type": "SELECT", "status": "failed", "error": "missing table", "objects": "T1"}]
        )
        chunks = split_context_for_budget(context, 30, 500)
        responses = [chunk_resp] * len(chunks)
        varied = json.dumps(
            [{"statement type": "SELECT", "status": "failed", "error": "another error", "objects": "T2"}]
        )
        responses[-1] = varied
        merge_resp = json.dumps(
            [{"statement type": "SELECT", "status": "failed", "error": "merged error", "objects": "T1, T2"}]
        )
        endpoint = FixtureEndpoint(responses + [merge_resp])
        summary = summarize_chunked(context, endpoint, token_budget=500)
        assert summary.groups[0].error == "merged error"
        assert len(endpoint.calls) == len(chunks) + 1

    def test_oversized_single_item_is_shrunk_to_fit(self):
        huge = ctx(ctx_item("select " + "x" * 4000 + " from t", error="y" * 4000))
        chunks = split_context_for_budget(huge, 30, token_budget=500)
        assert len(chunks) == 1
        assert estimate_tokens(build_prompt(chunks[0], 30)) <= 500
