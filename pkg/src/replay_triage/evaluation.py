"""Evaluation: stratified CV, metrics, hyperparameter search, comparisons.

Vectorizers and encoders are refit on each fold's training split only, so no
test-side vocabulary ever leaks into a fitted state. Metrics follow the
conventions: F1-Macro averages per-class F1 over the classes present in the
true labels; a combined score takes the harmonic mean of F1-Macro and a
certainty metric (the fraction of correct predictions that were confident).
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .classifier import Prediction, detect_problem_group, fit, predict_batch
from .events import CategoricalSchema, Hyperparameters, LabeledEvent
from .features import FeatureMatrix
from .pipeline import Featurizer, fit_featurizer, problem_group_tokens
from .text import FeatureMode, compose_text, preprocess
from .vectorizers import make_vectorizer


# --------------------------------------------------------------------------
# folds

def stratified_folds(labels: Sequence[str], k: int, seed: int) -> list[list[int]]:
    """Split indices into k disjoint test folds, stratified by label.

    Per class, fold counts differ by at most one; classes smaller than k land
    round-robin on the currently smallest folds, so a single-sample class
    appears in exactly one fold. Deterministic per seed.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if len(labels) < k:
        raise ValueError(f"cannot split {len(labels)} samples into {k} folds")
    rng = random.Random(seed)
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in sorted(by_class):
        idxs = list(by_class[label])
        rng.shuffle(idxs)
        for idx in idxs:
            sizes = [len(f) for f in folds]
            folds[sizes.index(min(sizes))].append(idx)
    return [sorted(f) for f in folds]


# --------------------------------------------------------------------------
# metrics

def accuracy(y_true: Sequence[str], y_pred: Sequence[str]) -> float:
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must align")
    if not y_true:
        raise ValueError("empty label arrays")
    return sum(t == p for t, p in zip(y_true, y_pred)) / len(y_true)


def per_class_metrics(
    y_true: Sequence[str], y_pred: Sequence[str]
) -> dict[str, dict[str, float]]:
    """Precision/recall/F1/support per class present in y_true.

    A class with zero predicted positives has precision 0 by convention.
    """
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred must align")
    classes = sorted(set(y_true))
    out: dict[str, dict[str, float]] = {}
    for cls in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p == cls)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[cls] = {"precision": precision, "recall": recall, "f1": f1, "support": float(tp + fn)}
    return out


def f1_macro(y_true: Sequence[str], y_pred: Sequence[str]) -> float:
    """Unweighted mean of per-class F1 over classes present in y_true."""
    metrics = per_class_metrics(y_true, y_pred)
    return sum(m["f1"] for m in metrics.values()) / len(metrics)


def confusion_matrix(
    y_true: Sequence[str], y_pred: Sequence[str], labels: Sequence[str] | None = None
) -> tuple[list[str], np.ndarray]:
    """Counts matrix with rows = true label, columns = predicted label."""
    if labels is None:
        labels = sorted(set(y_true) | set(y_pred))
    index = {lab: i for i, lab in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        matrix[index[t], index[p]] += 1
    return list(labels), matrix


def f1_comb(f1_macro_score: float, certainty_score: float) -> float:
    """Harmonic mean of F1-Macro and the certainty metric; 0 when both are 0."""
    if f1_macro_score + certainty_score == 0:
        return 0.0
    return 2 * f1_macro_score * certainty_score / (f1_macro_score + certainty_score)


def certainty_metric(
    predictions: Sequence[Prediction], y_true: Sequence[str], theta: float
) -> float:
    """Fraction of correct predictions that were confident (certainty >= theta).

    Zero when there are no correct predictions at all.
    """
    if len(predictions) != len(y_true):
        raise ValueError("predictions and y_true must align")
    correct = [p for p, t in zip(predictions, y_true) if p.label_id == t]
    if not correct:
        return 0.0
    return sum(1 for p in correct if p.certainty >= theta) / len(correct)


# --------------------------------------------------------------------------
# cross-validation

@dataclass(frozen=True)
class FoldMetrics:
    f1_macro: float
    f1_comb: float
    accuracy: float
    certainty: float
    n_test: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "f1_macro": self.f1_macro,
            "f1_comb": self.f1_comb,
            "accuracy": self.accuracy,
            "certainty": self.certainty,
            "n_test": self.n_test,
        }


@dataclass(frozen=True)
class CvReport:
    feature_mode: str
    vectorizer_kind: str
    hyperparameters: dict[str, Any]
    seed: int
    folds: tuple[FoldMetrics, ...]
    mean_f1_macro: float
    mean_f1_comb: float
    mean_accuracy: float
    mean_certainty: float
    per_class: dict[str, dict[str, float]]
    confusion_labels: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]
    n_items: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_mode": self.feature_mode,
            "vectorizer_kind": self.vectorizer_kind,
            "hyperparameters": self.hyperparameters,
            "seed": self.seed,
            "folds": [f.to_dict() for f in self.folds],
            "mean_f1_macro": self.mean_f1_macro,
            "mean_f1_comb": self.mean_f1_comb,
            "mean_accuracy": self.mean_accuracy,
            "mean_certainty": self.mean_certainty,
            "per_class": self.per_class,
            "confusion_labels": list(self.confusion_labels),
            "confusion": [list(row) for row in self.confusion],
            "n_items": self.n_items,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CvReport":
        return cls(
            feature_mode=d["feature_mode"],
            vectorizer_kind=d["vectorizer_kind"],
            hyperparameters=d["hyperparameters"],
            seed=int(d["seed"]),
            folds=tuple(FoldMetrics(**f) for f in d["folds"]),
            mean_f1_macro=float(d["mean_f1_macro"]),
            mean_f1_comb=float(d["mean_f1_comb"]),
            mean_accuracy=float(d["mean_accuracy"]),
            mean_certainty=float(d["mean_certainty"]),
            per_class={k: dict(v) for k, v in d["per_class"].items()},
            confusion_labels=tuple(d["confusion_labels"]),
            confusion=tuple(tuple(int(x) for x in row) for row in d["confusion"]),
            n_items=int(d["n_items"]),
        )


@dataclass
class _PreparedFold:
    train_idx: list[int]
    test_idx: list[int]
    train_matrix: FeatureMatrix
    test_matrix: FeatureMatrix
    train_labels: list[str]
    test_labels: list[str]
    train_ids: list[str]
    test_ids: list[str]
    train_problem_tokens: list[list[str]]
    _problem_cache: dict[float, frozenset[str]] = field(default_factory=dict)

    def problem_ids(self, tau: float) -> frozenset[str]:
        cached = self._problem_cache.get(tau)
        if cached is None:
            cached = detect_problem_group(
                self.train_problem_tokens, self.train_labels, tau, self.train_ids
            )
            self._problem_cache[tau] = cached
        return cached


def _prepare_folds(
    items: Sequence[LabeledEvent],
    hp: Hyperparameters,
    feature_mode: FeatureMode,
    vectorizer_kind: str,
    seed: int,
) -> list[_PreparedFold]:
    """Featurize every train/test split once; distance weights come later.

    The subword vectorizer carries no corpus-fitted state (its hash seed is a
    parameter), so its document vectors are computed once for the whole
    dataset; tf-idf states are genuinely refit per training split.
    """
    labels = [it.label.label_id for it in items]
    events = [it.event for it in items]
    summaries = {
        it.event.event_id: it.summary_text for it in items if it.summary_text is not None
    }
    folds = stratified_folds(labels, hp.cv_folds, seed)
    ids = [it.event.event_id for it in items]
    problem_tokens = [problem_group_tokens(e) for e in events]
    corpus = [
        preprocess(compose_text(e, summaries.get(e.event_id), feature_mode)) for e in events
    ]

    shared_text: np.ndarray | None = None
    if vectorizer_kind != "tfidf":
        vectorizer = make_vectorizer(vectorizer_kind, embed_dim=hp.embed_dim).fit(corpus)
        shared_text = vectorizer.transform(corpus)

    prepared: list[_PreparedFold] = []
    for fold_idx in range(hp.cv_folds):
        test_idx = folds[fold_idx]
        train_idx = [i for f in range(hp.cv_folds) if f != fold_idx for i in folds[f]]
        train_events = [events[i] for i in train_idx]
        test_events = [events[i] for i in test_idx]
        featurizer = fit_featurizer(
            train_events, summaries, feature_mode, vectorizer_kind, hp
        )
        if shared_text is not None:
            train_matrix = featurizer.transform(train_events, summaries, text_rows=shared_text[train_idx])
            test_matrix = featurizer.transform(test_events, summaries, text_rows=shared_text[test_idx])
        else:
            train_matrix = featurizer.transform(
                train_events, summaries, text_rows=featurizer.vectorizer.transform([corpus[i] for i in train_idx])
            )
            test_matrix = featurizer.transform(
                test_events, summaries, text_rows=featurizer.vectorizer.transform([corpus[i] for i in test_idx])
            )
        prepared.append(
            _PreparedFold(
                train_idx=train_idx,
                test_idx=test_idx,
                train_matrix=train_matrix,
                test_matrix=test_matrix,
                train_labels=[labels[i] for i in train_idx],
                test_labels=[labels[i] for i in test_idx],
                train_ids=[ids[i] for i in train_idx],
                test_ids=[ids[i] for i in test_idx],
                train_problem_tokens=[problem_tokens[i] for i in train_idx],
            )
        )
    return prepared


def _evaluate_prepared(
    prepared: Sequence[_PreparedFold],
    hp: Hyperparameters,
    feature_mode: FeatureMode,
    vectorizer_kind: str,
    seed: int,
    n_items: int,
) -> CvReport:
    fold_metrics: list[FoldMetrics] = []
    pooled_true: list[str] = []
    pooled_pred: list[str] = []
    for fold in prepared:
        problem_ids = fold.problem_ids(hp.problem_group_threshold)
        training = [
            (fold.train_matrix.row(i), fold.train_labels[i], fold.train_ids[i])
            for i in range(len(fold.train_ids))
        ]
        snapshot = fit(
            training,
            hp,
            vectorizer_state={"kind": "cv-internal"},
            schema=_cv_schema(),
            feature_mode=feature_mode.value,
            vectorizer_kind=vectorizer_kind,
        )
        snapshot = _with_problem_ids(snapshot, problem_ids)
        predictions = predict_batch(snapshot, fold.test_matrix, fold.test_ids)
        y_pred = [p.label_id for p in predictions]
        fm = f1_macro(fold.test_labels, y_pred)
        cm = certainty_metric(predictions, fold.test_labels, hp.certainty_threshold)
        fold_metrics.append(
            FoldMetrics(
                f1_macro=fm,
                f1_comb=f1_comb(fm, cm),
                accuracy=accuracy(fold.test_labels, y_pred),
                certainty=cm,
                n_test=len(fold.test_ids),
            )
        )
        pooled_true.extend(fold.test_labels)
        pooled_pred.extend(y_pred)
    n_folds = len(fold_metrics)
    labels_order, matrix = confusion_matrix(pooled_true, pooled_pred)
    return CvReport(
        feature_mode=feature_mode.value,
        vectorizer_kind=vectorizer_kind,
        hyperparameters=hp.to_dict(),
        seed=seed,
        folds=tuple(fold_metrics),
        mean_f1_macro=sum(f.f1_macro for f in fold_metrics) / n_folds,
        mean_f1_comb=sum(f.f1_comb for f in fold_metrics) / n_folds,
        mean_accuracy=sum(f.accuracy for f in fold_metrics) / n_folds,
        mean_certainty=sum(f.certainty for f in fold_metrics) / n_folds,
        per_class=per_class_metrics(pooled_true, pooled_pred),
        confusion_labels=tuple(labels_order),
        confusion=tuple(tuple(int(x) for x in row) for row in matrix),
        n_items=n_items,
    )


def _cv_schema() -> CategoricalSchema:
    return CategoricalSchema(
        vocabularies={a: () for a in ("error_code", "request_name", "sql_type", "sql_sub_type")}
    )


def _with_problem_ids(snapshot, problem_ids):
    return replace(snapshot, problem_group_ids=frozenset(problem_ids))


def cross_validate(
    items: Sequence[LabeledEvent],
    hp: Hyperparameters,
    feature_mode: FeatureMode | str = FeatureMode.EM_SS,
    vectorizer_kind: str = "subword",
    seed: int = 0,
) -> CvReport:
    """Stratified k-fold evaluation, refitting featurizers per fold."""
    mode = FeatureMode(feature_mode)
    prepared = _prepare_folds(items, hp, mode, vectorizer_kind, seed)
    return _evaluate_prepared(prepared, hp, mode, vectorizer_kind, seed, len(items))


_FEATURIZER_PARAMS = ("cv_folds", "embed_dim",)


def cross_validate_sweep(
    items: Sequence[LabeledEvent],
    hps: Sequence[Hyperparameters],
    feature_mode: FeatureMode | str = FeatureMode.EM_SS,
    vectorizer_kind: str = "subword",
    seed: int = 0,
) -> list[CvReport]:
    """Evaluate several hyperparameter variants, sharing featurized folds.

    All variants must agree on the parameters that shape featurization
    (cv_folds, embed_dim); distance weights, k, and thresholds may differ.
    """
    if not hps:
        return []
    mode = FeatureMode(feature_mode)
    base = hps[0]
    for hp in hps[1:]:
        for name in _FEATURIZER_PARAMS:
            if getattr(hp, name) != getattr(base, name):
                raise ValueError(f"sweep variants must agree on {name}")
    prepared = _prepare_folds(items, base, mode, vectorizer_kind, seed)
    return [
        _evaluate_prepared(prepared, hp, mode, vectorizer_kind, seed, len(items)) for hp in hps
    ]


# --------------------------------------------------------------------------
# hyperparameter search and the regression gate

def hyperparameter_search(
    items: Sequence[LabeledEvent],
    grid: Mapping[str, Sequence[Any]],
    feature_mode: FeatureMode | str = FeatureMode.EM_SS,
    vectorizer_kind: str = "subword",
    seed: int = 0,
    hp: Hyperparameters | None = None,
) -> tuple[Hyperparameters, CvReport, list[CvReport]]:
    """Exhaustive grid evaluation; best point by mean F1-Macro.

    Ties resolve to the lexicographically smallest grid point (keys sorted,
    values in ascending order).
    """
    if not grid:
        raise ValueError("grid must not be empty")
    base = hp or Hyperparameters()
    keys = sorted(grid)
    points = [dict(zip(keys, values)) for values in product(*(sorted(grid[k]) for k in keys))]
    hps = [base.replaced(**point) for point in points]
    if any(k in _FEATURIZER_PARAMS for k in keys):
        reports = [
            cross_validate(items, h, feature_mode, vectorizer_kind, seed) for h in hps
        ]
    else:
        reports = cross_validate_sweep(items, hps, feature_mode, vectorizer_kind, seed)
    best_i = 0
    for i in range(1, len(reports)):
        if reports[i].mean_f1_macro > reports[best_i].mean_f1_macro:
            best_i = i
    return hps[best_i], reports[best_i], reports


@dataclass(frozen=True)
class GateDecision:
    passed: bool
    delta: float
    reasons: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "delta": self.delta, "reasons": list(self.reasons)}


def regression_gate(
    current: CvReport, previous: CvReport | None, max_drop: float = 0.02
) -> GateDecision:
    """Review when mean F1-Macro dropped by more than max_drop since last cycle."""
    if previous is None:
        return GateDecision(passed=True, delta=0.0)
    delta = current.mean_f1_macro - previous.mean_f1_macro
    if delta >= -max_drop:
        return GateDecision(passed=True, delta=delta)
    declines = []
    for cls, prev_m in previous.per_class.items():
        cur_f1 = current.per_class.get(cls, {}).get("f1", 0.0)
        declines.append((cls, prev_m["f1"] - cur_f1))
    declines.sort(key=lambda cd: (-cd[1], cd[0]))
    reasons = [
        f"mean F1-Macro fell {-delta:.4f} (from {previous.mean_f1_macro:.4f} to {current.mean_f1_macro:.4f}), "
        f"exceeding the allowed drop {max_drop:.4f}"
    ]
    reasons += [f"class {cls}: F1 declined {drop:.4f}" for cls, drop in declines[:5] if drop > 0]
    return GateDecision(passed=False, delta=delta, reasons=tuple(reasons))


# --------------------------------------------------------------------------
# feature-mode / vectorizer / distance comparison

DEFAULT_WEIGHT_GRID = (0.0, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class ComparisonRow:
    feature_mode: str
    vectorizer_kind: str
    cd_f1_macro: float
    ed_f1_macro: float
    cd_f1_comb: float
    ed_f1_comb: float
    cd_accuracy: float
    ed_accuracy: float
    cd_weight: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_mode": self.feature_mode,
            "vectorizer_kind": self.vectorizer_kind,
            "cd_f1_macro": self.cd_f1_macro,
            "ed_f1_macro": self.ed_f1_macro,
            "cd_f1_comb": self.cd_f1_comb,
            "ed_f1_comb": self.ed_f1_comb,
            "cd_accuracy": self.cd_accuracy,
            "ed_accuracy": self.ed_accuracy,
            "cd_weight": self.cd_weight,
        }


def compare_grid(
    items: Sequence[LabeledEvent],
    feature_modes: Sequence[FeatureMode | str],
    vectorizer_kinds: Sequence[str] = ("tfidf", "subword"),
    hp: Hyperparameters | None = None,
    seed: int = 0,
    weight_grid: Sequence[float] = DEFAULT_WEIGHT_GRID,
) -> list[ComparisonRow]:
    """Evaluate the feature-mode x vectorizer x distance grid.

    The custom distance tunes its categorical weight over ``weight_grid`` by
    mean F1-Macro; the Euclidean-equivalent baseline pins the categorical
    weight to zero (on L2-normalized text blocks, Euclidean ordering equals
    cosine ordering).
    """
    base = hp or Hyperparameters()
    rows: list[ComparisonRow] = []
    for mode in feature_modes:
        for kind in vectorizer_kinds:
            weights = list(weight_grid)
            if 0.0 not in weights:
                weights.insert(0, 0.0)
            hps = [base.replaced(w_categorical=w) for w in weights]
            reports = cross_validate_sweep(items, hps, mode, kind, seed)
            ed_report = reports[weights.index(0.0)]
            best_i = 0
            for i in range(1, len(reports)):
                if reports[i].mean_f1_macro > reports[best_i].mean_f1_macro:
                    best_i = i
            cd_report = reports[best_i]
            rows.append(
                ComparisonRow(
                    feature_mode=FeatureMode(mode).value,
                    vectorizer_kind=kind,
                    cd_f1_macro=cd_report.mean_f1_macro,
                    ed_f1_macro=ed_report.mean_f1_macro,
                    cd_f1_comb=cd_report.mean_f1_comb,
                    ed_f1_comb=ed_report.mean_f1_comb,
                    cd_accuracy=cd_report.mean_accuracy,
                    ed_accuracy=ed_report.mean_accuracy,
                    cd_weight=weights[best_i],
                )
            )
    return rows


def format_comparison_table(rows: Sequence[ComparisonRow]) -> str:
    """Text table: one row per feature mode x vectorizer, CD and ED columns."""
    header = f"{'Feature':<16} {'Vectorization':<14} {'CD F1':>8} {'ED F1':>8} {'CD Acc':>8} {'ED Acc':>8} {'w_cat':>6}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.feature_mode:<16} {row.vectorizer_kind:<14} "
            f"{row.cd_f1_macro * 100:>8.2f} {row.ed_f1_macro * 100:>8.2f} "
            f"{row.cd_accuracy * 100:>8.2f} {row.ed_accuracy * 100:>8.2f} {row.cd_weight:>6.2f}"
        )
    return "\n".join(lines)


def format_cv_report(report: CvReport) -> str:
    lines = [
        f"feature mode: {report.feature_mode}   vectorizer: {report.vectorizer_kind}   items: {report.n_items}",
        f"{'fold':>4} {'F1-Macro':>10} {'F1-Comb':>10} {'Accuracy':>10}",
    ]
    for i, fold in enumerate(report.folds):
        lines.append(
            f"{i:>4} {fold.f1_macro * 100:>10.2f} {fold.f1_comb * 100:>10.2f} {fold.accuracy * 100:>10.2f}"
        )
    lines.append(
        f"{'mean':>4} {report.mean_f1_macro * 100:>10.2f} {report.mean_f1_comb * 100:>10.2f} "
        f"{report.mean_accuracy * 100:>10.2f}"
    )
    return "\n".join(lines)


# --------------------------------------------------------------------------
# embedding export

def export_embeddings(
    items: Sequence[LabeledEvent],
    feature_mode: FeatureMode | str,
    top_n_classes: int,
    path: str | Path,
    vectorizer_kind: str = "subword",
    hp: Hyperparameters | None = None,
) -> int:
    """Write text-block embeddings for the classes most touched by the
    problem group, as a CSV ready for external 2-D projection. Returns the
    number of rows written.
    """
    hp = hp or Hyperparameters()
    mode = FeatureMode(feature_mode)
    events = [it.event for it in items]
    labels = [it.label.label_id for it in items]
    ids = [it.event.event_id for it in items]
    summaries = {
        it.event.event_id: it.summary_text for it in items if it.summary_text is not None
    }
    problem_ids = detect_problem_group(
        [problem_group_tokens(e) for e in events], labels, hp.problem_group_threshold, ids
    )
    problem_counts: dict[str, int] = {}
    total_counts: dict[str, int] = {}
    for item_id, label in zip(ids, labels):
        total_counts[label] = total_counts.get(label, 0) + 1
        if item_id in problem_ids:
            problem_counts[label] = problem_counts.get(label, 0) + 1
    ranked = sorted(
        total_counts,
        key=lambda lab: (-problem_counts.get(lab, 0), -total_counts[lab], lab),
    )
    selected = set(ranked[:top_n_classes])

    featurizer = fit_featurizer(events, summaries, mode, vectorizer_kind, hp)
    corpus = [featurizer.compose_tokens(e, summaries.get(e.event_id)) for e in events]
    vectors = featurizer.vectorizer.transform(corpus)

    n_rows = 0
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "label"] + [f"e{i}" for i in range(vectors.shape[1])])
        for i, (event_id, label) in enumerate(zip(ids, labels)):
            if label not in selected:
                continue
            writer.writerow([event_id, label] + [repr(float(x)) for x in vectors[i]])
            n_rows += 1
    return n_rows
