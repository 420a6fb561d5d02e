"""HTTP triage service tying the pipeline together.

Replays are ingested, classified asynchronously (context summarization
included), predictions and explanations are served to the operator UI, and
operator reclassifications, confirmations and replay ratings feed gated
retraining. Journals are the source of truth: restarting the service and
replaying them reproduces all prediction and label views exactly.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from pydantic import BaseModel, Field

from .classifier import (
    ModelSnapshot,
    Prediction,
    explain,
    load_snapshot,
    save_snapshot,
)
from .config import AppConfig
from .context import ContextCollector
from .events import LabeledEvent, LabelSource, ReplayEvent, RootCauseLabel
from .evaluation import CvReport, GateDecision, cross_validate, hyperparameter_search, regression_gate
from .pipeline import (
    build_labeled_events,
    classify_replay,
    featurizer_from_snapshot,
    fit_model,
    summaries_to_texts,
)
from .replay_log import ReplayLog, export, parse_event_lines
from .store import OperatorAction, TrainingStore, harvest, now_iso
from .summarizer import (
    CompletionEndpoint,
    SummaryCache,
    ThrottledEndpoint,
    make_endpoint,
    summarize,
)
from .text import FeatureMode


@dataclass
class JobRecord:
    job_id: str
    kind: str  # classify | train
    status: str = "queued"  # queued | running | done | failed
    error: str | None = None
    result: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "status": self.status,
            "error": self.error,
            "result": self.result,
        }


@dataclass
class ModelRecord:
    snapshot: ModelSnapshot
    report: dict[str, Any]
    status: str  # active | staged | retired
    gate: dict[str, Any]

    def to_listing(self) -> dict[str, Any]:
        return {
            "version": self.snapshot.version,
            "status": self.status,
            "feature_mode": self.snapshot.feature_mode,
            "vectorizer_kind": self.snapshot.vectorizer_kind,
            "n_items": self.snapshot.n_items,
            "mean_f1_macro": self.report.get("mean_f1_macro"),
            "gate": self.gate,
        }


class TriageService:
    """All service state and behavior; the FastAPI app is a thin shell."""

    def __init__(self, config: AppConfig, endpoint: CompletionEndpoint | None = None):
        self.config = config
        self.data_dir = Path(config.data_dir)
        (self.data_dir / "replays").mkdir(parents=True, exist_ok=True)
        (self.data_dir / "models").mkdir(parents=True, exist_ok=True)
        self.store = TrainingStore(self.data_dir / "store.jsonl")
        self.cache = SummaryCache(self.data_dir / "summaries")
        inner = endpoint or make_endpoint(
            config.endpoint_kind,
            config.endpoint,
            word_limit=config.hyperparameters.error_word_limit,
        )
        # the in-flight cap is shared service-wide across classify jobs
        self.endpoint = ThrottledEndpoint(inner, config.max_summarizer_in_flight)
        self.replays: dict[str, ReplayLog] = {}
        self.events: dict[str, ReplayEvent] = {}
        self.predictions: dict[str, Prediction] = {}
        self.summary_texts: dict[str, str] = {}
        self.labels: dict[str, RootCauseLabel] = {}
        self.models: list[ModelRecord] = []
        self.jobs: dict[str, JobRecord] = {}
        self._state_lock = threading.RLock()
        self._train_lock = threading.Lock()
        self._journal_path = self.data_dir / "service.jsonl"
        self._recover()

    # ------------------------------------------------------------------ state

    def active_model(self) -> ModelRecord | None:
        with self._state_lock:
            for record in reversed(self.models):
                if record.status == "active":
                    return record
        return None

    def _journal(self, record: dict[str, Any]) -> None:
        with self._journal_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _recover(self) -> None:
        if not self._journal_path.exists():
            return
        with self._journal_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                self._apply(json.loads(line))

    def _apply(self, record: dict[str, Any]) -> None:
        kind = record["kind"]
        if kind == "replay":
            path = self.data_dir / "replays" / f"{record['replay_id']}.jsonl"
            from .replay_log import ingest

            log = ingest(path)
            self._install_replay(log)
        elif kind == "label":
            self.labels[record["label_id"]] = RootCauseLabel(record["label_id"], record["display_name"])
        elif kind == "predictions":
            for p in record["items"]:
                self.predictions[p["event_id"]] = Prediction.from_dict(p)
            self.summary_texts.update(record.get("summaries", {}))
        elif kind == "model":
            snapshot = load_snapshot(self.data_dir / "models" / f"{record['version']}.json")
            self.models.append(
                ModelRecord(
                    snapshot=snapshot,
                    report=record["report"],
                    status=record["status"],
                    gate=record.get("gate", {}),
                )
            )
        elif kind == "activate":
            for model in self.models:
                model.status = "retired" if model.status == "active" else model.status
            for model in self.models:
                if model.snapshot.version == record["version"]:
                    model.status = "active"
        else:
            raise ValueError(f"unknown service journal record {kind!r}")

    def _install_replay(self, log: ReplayLog) -> None:
        self.replays[log.replay_id] = log
        for event in log.events:
            self.events[event.event_id] = event

    # ---------------------------------------------------------------- replays

    def add_replay(self, lines: Sequence[str]) -> dict[str, Any]:
        events, diagnostics = parse_event_lines(lines)
        if diagnostics:
            raise HTTPException(status_code=400, detail={"diagnostics": diagnostics})
        if not events:
            raise HTTPException(status_code=400, detail={"diagnostics": ["no events in upload"]})
        replay_ids = {e.replay_id for e in events}
        if len(replay_ids) > 1:
            raise HTTPException(
                status_code=400,
                detail={"diagnostics": [f"upload mixes replay ids {sorted(replay_ids)}"]},
            )
        replay_id = events[0].replay_id
        with self._state_lock:
            if replay_id in self.replays:
                raise HTTPException(status_code=409, detail=f"replay {replay_id} already exists")
            events = sorted(events, key=lambda e: e.seq_no)
            seqs = [e.seq_no for e in events]
            if len(set(seqs)) != len(seqs):
                raise HTTPException(
                    status_code=400, detail={"diagnostics": ["duplicate (replay_id, seq_no)"]}
                )
            log = ReplayLog(
                replay_id=replay_id, capture_id=events[0].capture_id, events=tuple(events)
            )
            export(log, self.data_dir / "replays" / f"{replay_id}.jsonl")
            self._install_replay(log)
            self._journal({"kind": "replay", "replay_id": replay_id})
        return {"replay_id": replay_id, "event_count": len(events)}

    def import_labels(self, replay_id: str, records: Sequence[Mapping[str, Any]]) -> int:
        """Seed labeled events from an interchange label file."""
        log = self._replay_or_404(replay_id)
        events_by_id = {e.event_id: e for e in log.events}
        items: list[LabeledEvent] = []
        for record in records:
            event = events_by_id.get(record["event_id"])
            if event is None:
                raise HTTPException(
                    status_code=400, detail=f"label references unknown event {record['event_id']}"
                )
            label_id = record["label_id"]
            self.register_label(label_id)
            items.append(
                LabeledEvent(
                    event=event,
                    label=RootCauseLabel(label_id),
                    label_source=LabelSource(record.get("label_source", "operator_reclassified")),
                    certainty_at_labeling=float(record.get("certainty_at_labeling", 1.0)),
                    summary_text=record.get("summary_text") or self.summary_texts.get(event.event_id),
                )
            )
        with self._state_lock:
            self.store.record_harvest(items)
        return len(items)

    def _replay_or_404(self, replay_id: str) -> ReplayLog:
        log = self.replays.get(replay_id)
        if log is None:
            raise HTTPException(status_code=404, detail=f"unknown replay {replay_id}")
        return log

    def register_label(self, label_id: str, display_name: str = "") -> None:
        with self._state_lock:
            if label_id not in self.labels:
                label = RootCauseLabel(label_id, display_name or label_id)
                self.labels[label_id] = label
                self._journal({"kind": "label", "label_id": label_id, "display_name": label.display_name})

    # ------------------------------------------------------------------- jobs

    def _start_job(self, kind: str, target) -> JobRecord:
        job = JobRecord(job_id=uuid.uuid4().hex, kind=kind)
        with self._state_lock:
            self.jobs[job.job_id] = job

        def run() -> None:
            job.status = "running"
            try:
                job.result = target()
                job.status = "done"
            except Exception as exc:  # job errors surface via the job record
                job.status = "failed"
                job.error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=run, daemon=True).start()
        return job

    def job_or_404(self, job_id: str) -> JobRecord:
        job = self.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return job

    # --------------------------------------------------------------- classify

    def start_classify(self, replay_id: str, feature_mode: str | None) -> JobRecord:
        log = self._replay_or_404(replay_id)
        active = self.active_model()
        if active is None:
            raise HTTPException(status_code=503, detail="no active model snapshot")
        mode = FeatureMode(feature_mode) if feature_mode else FeatureMode(active.snapshot.feature_mode)
        snapshot = active.snapshot  # pinned at job start: swaps never affect running jobs

        def run() -> dict[str, Any]:
            predictions, summaries = classify_replay(
                log,
                snapshot,
                endpoint=self.endpoint if mode.uses_summary else None,
                feature_mode=mode,
                cache=self.cache,
            )
            texts = summaries_to_texts(summaries)
            with self._state_lock:
                for p in predictions:
                    self.predictions[p.event_id] = p
                self.summary_texts.update(texts)
                self._journal(
                    {
                        "kind": "predictions",
                        "items": [p.to_dict() for p in predictions],
                        "summaries": texts,
                    }
                )
            return {
                "replay_id": replay_id,
                "prediction_count": len(predictions),
                "model_version": snapshot.version,
                "feature_mode": mode.value,
            }

        return self._start_job("classify", run)

    # ------------------------------------------------------------ predictions

    def prediction_view(self, prediction: Prediction) -> dict[str, Any]:
        view = prediction.to_dict()
        event = self.events.get(prediction.event_id)
        if event is not None:
            view["replay_id"] = event.replay_id
            view["error_message"] = event.error_message
            view["statement_string"] = event.statement_string
        view["summary_text"] = self.summary_texts.get(prediction.event_id)
        operator_label, history = self._operator_overlay(prediction.event_id)
        view["operator_label_id"] = operator_label
        view["effective_label_id"] = operator_label or prediction.label_id
        view["history"] = history
        return view

    def _operator_overlay(self, event_id: str) -> tuple[str | None, list[dict[str, Any]]]:
        history = [
            a.to_dict()
            for a in self.store.actions
            if a.event_id == event_id and a.kind in ("reclassify", "confirm")
        ]
        label = None
        for action in history:
            if action["kind"] == "reclassify":
                label = action["new_label_id"]
        return label, history

    def list_predictions(
        self,
        replay_id: str | None,
        flagged: bool | None,
        flag_reason: str | None,
        label: str | None,
        offset: int,
        limit: int,
    ) -> dict[str, Any]:
        with self._state_lock:
            views = [self.prediction_view(p) for p in self.predictions.values()]
        if replay_id is not None:
            views = [v for v in views if v.get("replay_id") == replay_id]
        if flagged is not None:
            views = [v for v in views if v["flagged"] == flagged]
        if flag_reason is not None:
            views = [v for v in views if v["flag_reason"] == flag_reason]
        if label is not None:
            views = [v for v in views if v["effective_label_id"] == label]
        views.sort(key=lambda v: (v["certainty"], v["event_id"]))
        total = len(views)
        page = views[offset : offset + limit]
        return {"items": page, "total": total, "offset": offset, "limit": limit}

    def prediction_or_404(self, event_id: str) -> Prediction:
        prediction = self.predictions.get(event_id)
        if prediction is None:
            raise HTTPException(status_code=404, detail=f"no prediction for event {event_id}")
        return prediction

    def explain_prediction(self, event_id: str) -> dict[str, Any]:
        prediction = self.prediction_or_404(event_id)
        with self._state_lock:
            snapshot = next(
                (
                    m.snapshot
                    for m in self.models
                    if m.snapshot.version == prediction.model_version
                ),
                None,
            )
        if snapshot is None:
            raise HTTPException(
                status_code=409, detail=f"snapshot {prediction.model_version} is not available"
            )
        event = self.events[event_id]
        featurizer = featurizer_from_snapshot(snapshot)
        summary = self.summary_texts.get(event_id)
        matrix = featurizer.transform([event], {event_id: summary} if summary else None)
        return explain(snapshot, prediction, matrix.row(0)).to_dict()

    def reclassify(self, event_id: str, label_id: str, operator_id: str) -> dict[str, Any]:
        self.prediction_or_404(event_id)
        if label_id not in self.labels:
            raise HTTPException(status_code=422, detail=f"unknown label {label_id}")
        action = OperatorAction(
            kind="reclassify",
            operator_id=operator_id,
            timestamp=now_iso(),
            event_id=event_id,
            new_label_id=label_id,
        )
        with self._state_lock:
            self.store.record_action(action)
        return self.prediction_view(self.predictions[event_id])

    def confirm(self, event_id: str, operator_id: str) -> dict[str, Any]:
        self.prediction_or_404(event_id)
        action = OperatorAction(
            kind="confirm", operator_id=operator_id, timestamp=now_iso(), event_id=event_id
        )
        with self._state_lock:
            self.store.record_action(action)
        return self.prediction_view(self.predictions[event_id])

    def rate_replay(self, replay_id: str, rating: int, operator_id: str) -> dict[str, Any]:
        self._replay_or_404(replay_id)
        action = OperatorAction(
            kind="rate_replay",
            operator_id=operator_id,
            timestamp=now_iso(),
            replay_id=replay_id,
            rating=rating,
        )
        with self._state_lock:
            self.store.record_action(action)
        return {"replay_id": replay_id, "rating": rating}

    # ---------------------------------------------------------------- context

    def event_or_404(self, event_id: str) -> ReplayEvent:
        event = self.events.get(event_id)
        if event is None:
            raise HTTPException(status_code=404, detail=f"unknown event {event_id}")
        return event

    def event_context(self, event_id: str) -> dict[str, Any]:
        event = self.event_or_404(event_id)
        if event.status.value != "failed":
            raise HTTPException(status_code=409, detail=f"event {event_id} did not fail")
        log = self.replays[event.replay_id]
        context = ContextCollector(log).collect(event_id)
        return {
            "target_event_id": event_id,
            "items": context.to_prompt_list(),
            "truncated": context.truncated,
        }

    def event_summary(self, event_id: str) -> tuple[dict[str, Any], bool]:
        event = self.event_or_404(event_id)
        if event.status.value != "failed":
            raise HTTPException(status_code=409, detail=f"event {event_id} did not fail")
        log = self.replays[event.replay_id]
        context = ContextCollector(log).collect(event_id)
        if not context.items:
            return {"groups": [], "provenance": "empty-context", "raw_response": "", "warnings": []}, False
        hp = self.config.hyperparameters
        cached = self.cache.get(context.content_hash(), self.endpoint.model_name, hp.error_word_limit)
        summary = cached or summarize(
            context,
            self.endpoint,
            word_limit=hp.error_word_limit,
            token_budget=hp.token_budget,
            cache=self.cache,
        )
        return summary.to_dict(), cached is not None

    # ------------------------------------------------------------------ train

    def start_train(
        self,
        feature_mode: str | None,
        vectorizer_kind: str | None,
        grid: Mapping[str, list[Any]] | None,
        max_drop: float | None,
        seed: int = 0,
    ) -> JobRecord:
        with self._state_lock:
            have_data = bool(self.store.latest.items) or bool(self.store.pending_items) or bool(self.predictions)
        if not have_data:
            raise HTTPException(status_code=409, detail="no training data available")
        mode = FeatureMode(feature_mode or self.config.feature_mode)
        kind = vectorizer_kind or self.config.vectorizer_kind
        drop = self.config.max_drop if max_drop is None else max_drop

        def run() -> dict[str, Any]:
            with self._train_lock:  # one retrain at a time
                hp = self.config.hyperparameters
                with self._state_lock:
                    predictions = list(self.predictions.values())
                    actions = list(self.store.actions)
                    events = dict(self.events)
                    summaries = dict(self.summary_texts)
                if predictions:
                    harvested = harvest(
                        predictions,
                        actions,
                        events,
                        theta=hp.certainty_threshold,
                        cap=hp.per_class_replay_cap,
                        summaries=summaries,
                    )
                    with self._state_lock:
                        if harvested:
                            self.store.record_harvest(harvested)
                with self._state_lock:
                    dataset = self.store.assemble_version(cap=hp.per_class_replay_cap)
                if not dataset.items:
                    raise RuntimeError("assembled dataset is empty")
                for item in dataset.items:
                    self.register_label(item.label.label_id)
                items = list(dataset.items)
                if grid:
                    best_hp, report, _ = hyperparameter_search(
                        items, grid, mode, kind, seed=seed, hp=hp
                    )
                else:
                    best_hp, report = hp, cross_validate(items, hp, mode, kind, seed=seed)
                previous = self.active_model()
                previous_report = (
                    CvReport.from_dict(previous.report) if previous is not None else None
                )
                gate = regression_gate(report, previous_report, max_drop=drop)
                snapshot = fit_model(items, best_hp, mode, kind)
                status = "active" if gate.passed else "staged"
                with self._state_lock:
                    save_snapshot(snapshot, self.data_dir / "models" / f"{snapshot.version}.json")
                    record = ModelRecord(
                        snapshot=snapshot, report=report.to_dict(), status=status, gate=gate.to_dict()
                    )
                    self._journal(
                        {
                            "kind": "model",
                            "version": snapshot.version,
                            "report": report.to_dict(),
                            "status": status,
                            "gate": gate.to_dict(),
                        }
                    )
                    if gate.passed:
                        for model in self.models:
                            if model.status == "active":
                                model.status = "retired"
                        self.models.append(record)
                        self._journal({"kind": "activate", "version": snapshot.version})
                    else:
                        self.models.append(record)
                return {
                    "model_version": snapshot.version,
                    "dataset_version": dataset.version,
                    "activated": gate.passed,
                    "gate": gate.to_dict(),
                    "mean_f1_macro": report.mean_f1_macro,
                }

        return self._start_job("train", run)


# ------------------------------------------------------------------- FastAPI

class ReclassifyBody(BaseModel):
    label_id: str
    operator_id: str = "operator"


class ConfirmBody(BaseModel):
    operator_id: str = "operator"


class RatingBody(BaseModel):
    rating: int = Field(ge=1, le=4)
    operator_id: str = "operator"


class TrainBody(BaseModel):
    feature_mode: str | None = None
    vectorizer_kind: str | None = None
    grid: dict[str, list[Any]] | None = None
    max_drop: float | None = None
    seed: int = 0


class LabelBody(BaseModel):
    label_id: str
    display_name: str = ""


def create_app(service: TriageService) -> FastAPI:
    app = FastAPI(title="replay-triage", version="0.1.0")
    token = os.environ.get(service.config.auth_token_env, "")

    async def check_auth(request: Request) -> None:
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    dep = [Depends(check_auth)]

    @app.post("/replays", dependencies=dep)
    async def post_replays(request: Request) -> dict[str, Any]:
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = next((v for v in form.values() if hasattr(v, "read")), None)
            if upload is None:
                raise HTTPException(
                    status_code=400, detail={"diagnostics": ["multipart upload needs a file field"]}
                )
            body = (await upload.read()).decode("utf-8")
        else:
            body = (await request.body()).decode("utf-8")
        return service.add_replay(body.splitlines())

    @app.post("/replays/{replay_id}/labels", dependencies=dep)
    async def post_labels_file(replay_id: str, request: Request) -> dict[str, Any]:
        body = (await request.body()).decode("utf-8")
        records = []
        for lineno, line in enumerate(body.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise HTTPException(status_code=400, detail=f"line {lineno}: invalid JSON: {exc.msg}")
        imported = service.import_labels(replay_id, records)
        return {"replay_id": replay_id, "imported": imported}

    @app.post("/replays/{replay_id}/classify", status_code=202, dependencies=dep)
    def post_classify(replay_id: str, feature_mode: str | None = None) -> dict[str, Any]:
        job = service.start_classify(replay_id, feature_mode)
        return {"job_id": job.job_id}

    @app.get("/jobs/{job_id}", dependencies=dep)
    def get_job(job_id: str) -> dict[str, Any]:
        return service.job_or_404(job_id).to_dict()

    @app.get("/predictions", dependencies=dep)
    def get_predictions(
        replay_id: str | None = None,
        flagged: bool | None = None,
        flag_reason: str | None = None,
        label: str | None = None,
        offset: int = 0,
        limit: int = 50,
    ) -> dict[str, Any]:
        return service.list_predictions(replay_id, flagged, flag_reason, label, offset, limit)

    @app.get("/predictions/{event_id}", dependencies=dep)
    def get_prediction(event_id: str) -> dict[str, Any]:
        return service.prediction_view(service.prediction_or_404(event_id))

    @app.get("/predictions/{event_id}/explain", dependencies=dep)
    def get_explanation(event_id: str) -> dict[str, Any]:
        return service.explain_prediction(event_id)

    @app.post("/predictions/{event_id}/reclassify", dependencies=dep)
    def post_reclassify(event_id: str, body: ReclassifyBody) -> dict[str, Any]:
        return service.reclassify(event_id, body.label_id, body.operator_id)

    @app.post("/predictions/{event_id}/confirm", dependencies=dep)
    def post_confirm(event_id: str, body: ConfirmBody) -> dict[str, Any]:
        return service.confirm(event_id, body.operator_id)

    @app.post("/replays/{replay_id}/rating", dependencies=dep)
    def post_rating(replay_id: str, body: RatingBody) -> dict[str, Any]:
        return service.rate_replay(replay_id, body.rating, body.operator_id)

    @app.get("/reports/ratings/weekly", dependencies=dep)
    def get_weekly_ratings() -> dict[str, float]:
        return service.store.rating_report()

    @app.post("/train", status_code=202, dependencies=dep)
    def post_train(body: TrainBody) -> dict[str, Any]:
        job = service.start_train(
            body.feature_mode, body.vectorizer_kind, body.grid, body.max_drop, body.seed
        )
        return {"job_id": job.job_id}

    @app.get("/models", dependencies=dep)
    def get_models() -> dict[str, Any]:
        with service._state_lock:
            return {"models": [m.to_listing() for m in service.models]}

    @app.get("/models/active/report", dependencies=dep)
    def get_active_report() -> dict[str, Any]:
        active = service.active_model()
        if active is None:
            raise HTTPException(status_code=404, detail="no active model")
        return active.report

    @app.get("/events/{event_id}/context", dependencies=dep)
    def get_context(event_id: str) -> dict[str, Any]:
        return service.event_context(event_id)

    @app.get("/events/{event_id}/summary", dependencies=dep)
    def get_summary(event_id: str, response: Response) -> dict[str, Any]:
        summary, from_cache = service.event_summary(event_id)
        response.headers["X-Summary-Cache"] = "hit" if from_cache else "miss"
        return summary

    @app.get("/labels", dependencies=dep)
    def get_labels() -> dict[str, Any]:
        with service._state_lock:
            return {
                "labels": [
                    {"label_id": l.label_id, "display_name": l.display_name}
                    for l in sorted(service.labels.values(), key=lambda l: l.label_id)
                ]
            }

    @app.post("/labels", status_code=201, dependencies=dep)
    def post_label(body: LabelBody) -> dict[str, Any]:
        service.register_label(body.label_id, body.display_name)
        return {"label_id": body.label_id}

    return app


def serve(config: AppConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    service = TriageService(config)
    uvicorn.run(create_app(service), host=host, port=port)
