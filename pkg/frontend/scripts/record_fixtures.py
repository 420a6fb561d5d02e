"""Record API fixtures for the dashboard contract tests.

Spins up the triage service in-process, walks the real operator flow
(ingest -> seed labels -> train -> classify -> reclassify -> rate), and
saves selected responses under frontend/fixtures/. Regenerate with:

    python frontend/scripts/record_fixtures.py
"""

from __future__ import annotations

import json
import sys
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from replay_triage.config import AppConfig
from replay_triage.events import Hyperparameters
from replay_triage.pipeline import summaries_to_texts, summarize_failures
from replay_triage.service import TriageService, create_app
from replay_triage.summarizer import OfflineSummarizer
from replay_triage.synth import generate, overlap_scenario

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def wait_job(client: TestClient, job_id: str) -> dict:
    for _ in range(3000):
        job = client.get(f"/jobs/{job_id}").json()
        if job["status"] in ("done", "failed"):
            assert job["status"] == "done", job
            return job
        time.sleep(0.02)
    raise RuntimeError("job did not finish")


def save(name: str, payload) -> None:
    path = FIXTURES / f"{name}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"recorded {path.name}")


def main() -> int:
    scenario = overlap_scenario(seed=2, failures_per_class=10)
    log, truth = generate(scenario)
    summary_texts = summaries_to_texts(summarize_failures(log, OfflineSummarizer()))
    events_text = "\n".join(json.dumps(e.to_dict(), sort_keys=True) for e in log.events)
    label_lines = []
    for event_id, label_id in sorted(truth.items()):
        record = {
            "event_id": event_id,
            "label_id": label_id,
            "label_source": "operator_reclassified",
            "certainty_at_labeling": 1.0,
        }
        if event_id in summary_texts:
            record["summary_text"] = summary_texts[event_id]
        label_lines.append(json.dumps(record, sort_keys=True))

    with tempfile.TemporaryDirectory() as tmp:
        config = AppConfig(
            hyperparameters=Hyperparameters(k_neighbors=3),
            data_dir=str(Path(tmp) / "data"),
            feature_mode="em_ss_summary",
            vectorizer_kind="subword",
        )
        service = TriageService(config, endpoint=OfflineSummarizer())
        client = TestClient(create_app(service))

        assert client.post("/replays", content=events_text).status_code == 200
        client.post(f"/replays/{log.replay_id}/labels", content="\n".join(label_lines))
        train_a = wait_job(client, client.post("/train", json={"feature_mode": "em_ss_summary"}).json()["job_id"])
        wait_job(client, client.post(f"/replays/{log.replay_id}/classify").json()["job_id"])
        # a second training cycle so the models list shows gate history
        wait_job(client, client.post("/train", json={"feature_mode": "em"}).json()["job_id"])

        queue = client.get("/predictions", params={"limit": 1000}).json()
        uncertain = [i for i in queue["items"] if i["flag_reason"] == "uncertain"]
        target = (uncertain or queue["items"])[0]
        event_id = target["event_id"]

        save("labels", client.get("/labels").json())
        save("queue_page", client.get("/predictions", params={"limit": 10}).json())
        save("queue_all", queue)
        save("queue_flagged", client.get("/predictions", params={"flagged": True, "limit": 1000}).json())
        save(
            "queue_problem_group",
            client.get("/predictions", params={"flag_reason": "problem_group", "limit": 1000}).json(),
        )
        save("prediction_detail", client.get(f"/predictions/{event_id}").json())
        save("explanation", client.get(f"/predictions/{event_id}/explain").json())
        save("event_context", client.get(f"/events/{event_id}/context").json())
        save("event_summary", client.get(f"/events/{event_id}/summary").json())

        reclassified = client.post(
            f"/predictions/{event_id}/reclassify",
            json={"label_id": "connection_reset", "operator_id": "op-7"},
        ).json()
        save("reclassify_response", reclassified)
        save("prediction_after_reclassify", client.get(f"/predictions/{event_id}").json())

        client.post(f"/replays/{log.replay_id}/rating", json={"rating": 2, "operator_id": "op-7"})
        client.post(f"/replays/{log.replay_id}/rating", json={"rating": 3, "operator_id": "op-7"})
        save("rating_response", {"replay_id": log.replay_id, "rating": 3})
        save("weekly_ratings", client.get("/reports/ratings/weekly").json())

        save("models", client.get("/models").json())
        save("active_report", client.get("/models/active/report").json())
        save(
            "meta",
            {
                "replay_id": log.replay_id,
                "reclassified_event_id": event_id,
                "first_model_version": train_a["result"]["model_version"],
            },
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
