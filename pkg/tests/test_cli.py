from __future__ import annotations

import json
from pathlib import Path

import pytest

from replay_triage.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory) -> Path:
    from replay_triage.synth import overlap_scenario, save_scenario

    out = tmp_path_factory.mktemp("synth")
    scenario_path = out / "input-scenario.json"
    save_scenario(overlap_scenario(seed=13, failures_per_class=15), scenario_path)
    assert main(["generate", "--scenario", str(scenario_path), "--output", str(out)]) == 0
    return out


class TestGenerateAndCheck:
    def test_generate_writes_events_labels_scenario(self, synth_dir):
        assert (synth_dir / "events.jsonl").exists()
        assert (synth_dir / "labels.jsonl").exists()
        assert (synth_dir / "scenario.json").exists()

    def test_generate_is_deterministic(self, synth_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        scenario = str(synth_dir / "input-scenario.json")
        assert main(["generate", "--scenario", scenario, "--seed", "21", "--output", str(a)]) == 0
        assert main(["generate", "--scenario", scenario, "--seed", "21", "--output", str(b)]) == 0
        assert (a / "events.jsonl").read_bytes() == (b / "events.jsonl").read_bytes()
        assert (a / "labels.jsonl").read_bytes() == (b / "labels.jsonl").read_bytes()

    def test_ingest_check_ok(self, synth_dir, capsys):
        assert main(["ingest-check", "--input", str(synth_dir / "events.jsonl")]) == 0
        assert "ok" in capsys.readouterr().out

    def test_ingest_check_invalid_file_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        assert main(["ingest-check", "--input", str(bad)]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_required_flag_exits_1(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["ingest-check"])
        assert excinfo.value.code == 1


class TestSummarize:
    def test_offline_summarize_writes_jsonl(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "summaries.jsonl"
        code = main(
            ["summarize", "--events", str(synth_dir / "events.jsonl"), "--offline", "--output", str(out)]
        )
        assert code == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert lines and {"event_id", "summary_text"} <= set(lines[0])

    def test_offline_summarize_is_deterministic(self, synth_dir, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        events = str(synth_dir / "events.jsonl")
        main(["summarize", "--events", events, "--offline", "--output", str(a)])
        main(["summarize", "--events", events, "--offline", "--output", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_parallel_jobs_output_matches_serial(self, synth_dir, tmp_path):
        serial, parallel = tmp_path / "serial.jsonl", tmp_path / "parallel.jsonl"
        events = str(synth_dir / "events.jsonl")
        main(["summarize", "--events", events, "--offline", "--jobs", "1", "--output", str(serial)])
        main(["summarize", "--events", events, "--offline", "--jobs", "6", "--output", str(parallel)])
        assert serial.read_bytes() == parallel.read_bytes()


class TestEvaluate:
    def test_evaluate_twice_identical_reports(self, synth_dir, tmp_path):
        args = [
            "evaluate",
            "--events", str(synth_dir / "events.jsonl"),
            "--labels", str(synth_dir / "labels.jsonl"),
            "--mode", "em_ss",
            "--seed", "7",
        ]
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        assert main(args + ["--output", str(r1)]) == 0
        assert main(args + ["--output", str(r2)]) == 0
        assert r1.read_bytes() == r2.read_bytes()

    def test_evaluate_report_contains_metrics(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "report.json"
        main(
            [
                "evaluate",
                "--events", str(synth_dir / "events.jsonl"),
                "--labels", str(synth_dir / "labels.jsonl"),
                "--mode", "em_ss",
                "--seed", "3",
                "--output", str(out),
            ]
        )
        report = json.loads(out.read_text())
        assert set(report) >= {"mean_f1_macro", "mean_f1_comb", "mean_accuracy", "folds"}
        assert len(report["folds"]) == 5
        stdout = capsys.readouterr().out
        assert "F1-Macro" in stdout and "mean" in stdout


class TestClassify:
    def test_train_and_classify_with_saved_model(self, synth_dir, tmp_path, capsys):
        model = tmp_path / "model.json"
        predictions = tmp_path / "predictions.jsonl"
        code = main(
            [
                "classify",
                "--events", str(synth_dir / "events.jsonl"),
                "--train-events", str(synth_dir / "events.jsonl"),
                "--train-labels", str(synth_dir / "labels.jsonl"),
                "--mode", "em_ss_summary",
                "--offline",
                "--save-model", str(model),
                "--output", str(predictions),
            ]
        )
        assert code == 0
        assert model.exists()
        preds = [json.loads(l) for l in predictions.read_text().splitlines()]
        assert preds and {"event_id", "label_id", "certainty", "flagged"} <= set(preds[0])
        # reuse the saved snapshot
        second_out = tmp_path / "second.jsonl"
        code = main(
            [
                "classify",
                "--events", str(synth_dir / "events.jsonl"),
                "--model", str(model),
                "--offline",
                "--output", str(second_out),
            ]
        )
        assert code == 0
        assert second_out.read_bytes() == predictions.read_bytes()

    def test_classify_without_model_or_training_data_exits_1(self, synth_dir, tmp_path):
        code = main(["classify", "--events", str(synth_dir / "events.jsonl")])
        assert code == 1


class TestCompare:
    def test_compare_outputs_rows_for_grid(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "cmp.json"
        code = main(
            [
                "compare",
                "--events", str(synth_dir / "events.jsonl"),
                "--labels", str(synth_dir / "labels.jsonl"),
                "--modes", "em_ss,em_ss_summary",
                "--vectorizers", "subword",
                "--offline",
                "--seed", "5",
                "--output", str(out),
            ]
        )
        assert code == 0
        rows = json.loads(out.read_text())
        assert len(rows) == 2
        for row in rows:
            assert row["cd_f1_macro"] >= row["ed_f1_macro"]
        table = capsys.readouterr().out
        assert "CD F1" in table and "ED F1" in table

    def test_compare_matches_direct_module_invocation(self, synth_dir, tmp_path):
        from replay_triage.evaluation import compare_grid
        from replay_triage.pipeline import dataset_from_files, summaries_to_texts, summarize_failures
        from replay_triage.replay_log import ingest
        from replay_triage.summarizer import OfflineSummarizer
        from dataclasses import replace

        out = tmp_path / "cmp.json"
        main(
            [
                "compare",
                "--events", str(synth_dir / "events.jsonl"),
                "--labels", str(synth_dir / "labels.jsonl"),
                "--modes", "em_ss",
                "--vectorizers", "tfidf",
                "--offline",
                "--seed", "9",
                "--output", str(out),
            ]
        )
        cli_rows = json.loads(out.read_text())

        items = dataset_from_files(synth_dir / "events.jsonl", synth_dir / "labels.jsonl")
        log = ingest(synth_dir / "events.jsonl")
        texts = summaries_to_texts(summarize_failures(log, OfflineSummarizer()))
        items = [
            it if it.summary_text is not None else replace(it, summary_text=texts.get(it.event.event_id))
            for it in items
        ]
        direct = [r.to_dict() for r in compare_grid(items, ["em_ss"], ["tfidf"], seed=9)]
        assert cli_rows == direct


class TestExportEmbeddings:
    def test_export_csv(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "emb.csv"
        code = main(
            [
                "export-embeddings",
                "--events", str(synth_dir / "events.jsonl"),
                "--labels", str(synth_dir / "labels.jsonl"),
                "--mode", "em_ss",
                "--top-n", "4",
                "--output", str(out),
            ]
        )
        assert code == 0
        header = out.read_text().splitlines()[0].split(",")
        assert header[:2] == ["event_id", "label"]
