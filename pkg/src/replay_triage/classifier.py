"""K-nearest-neighbor classification over mixed categorical/text features.

The distance is a weighted sum of the mismatched-attribute fraction over the
one-hot categorical block and the cosine distance over the L2-normalized
text block. Training items whose error/statement text is nearly identical to
items of another class form the "problem group"; any prediction that draws a
neighbor from it is flagged for manual inspection regardless of certainty.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .events import CategoricalSchema, Hyperparameters
from .features import FeatureMatrix, FeatureVector, N_ATTRIBUTES
from .vectorizers import TfidfTextVectorizer


@dataclass(frozen=True)
class Prediction:
    event_id: str
    label_id: str
    certainty: float
    flagged: bool
    flag_reason: str | None  # uncertain | problem_group
    neighbors: tuple[tuple[str, float], ...]  # (training item id, distance)
    model_version: str = ""

    def __post_init__(self) -> None:
        if self.flagged != (self.flag_reason is not None):
            raise ValueError("flagged must hold exactly when flag_reason is present")

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "label_id": self.label_id,
            "certainty": self.certainty,
            "flagged": self.flagged,
            "flag_reason": self.flag_reason,
            "neighbors": [[i, d] for i, d in self.neighbors],
            "model_version": self.model_version,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Prediction":
        return cls(
            event_id=d["event_id"],
            label_id=d["label_id"],
            certainty=float(d["certainty"]),
            flagged=bool(d["flagged"]),
            flag_reason=d.get("flag_reason"),
            neighbors=tuple((i, float(dist)) for i, dist in d.get("neighbors", [])),
            model_version=d.get("model_version", ""),
        )


@dataclass(frozen=True)
class ModelSnapshot:
    """Immutable trained model: vectorizer, schema, training data, flags."""

    version: str
    hyperparameters: Hyperparameters
    feature_mode: str
    vectorizer_kind: str
    vectorizer_state: dict[str, Any]
    schema: CategoricalSchema
    cat_matrix: np.ndarray  # (n, cat_width) uint8
    text_matrix: np.ndarray  # (n, dim) float64
    labels: tuple[str, ...]
    item_ids: tuple[str, ...]
    item_texts: tuple[str, ...]
    problem_group_ids: frozenset[str]
    n_attributes: int = N_ATTRIBUTES

    def __post_init__(self) -> None:
        n = len(self.labels)
        if not (len(self.item_ids) == n == self.cat_matrix.shape[0] == self.text_matrix.shape[0]):
            raise ValueError("snapshot arrays disagree on training size")
        unknown = self.problem_group_ids - set(self.item_ids)
        if unknown:
            raise ValueError(f"problem_group_ids not in training set: {sorted(unknown)[:5]}")

    @property
    def n_items(self) -> int:
        return len(self.labels)

    def label_set(self) -> list[str]:
        return sorted(set(self.labels))


def categorical_mismatch_fraction(cat_a: np.ndarray, cat_b: np.ndarray, n_attributes: int) -> float:
    """Fraction of the categorical attributes whose one-hot slots differ."""
    matches = float(np.dot(cat_a.astype(np.float64), cat_b.astype(np.float64)))
    return (n_attributes - matches) / n_attributes


def distance(
    a: FeatureVector,
    b: FeatureVector,
    w_categorical: float = 1.0,
    w_textual: float = 1.0,
    n_attributes: int = N_ATTRIBUTES,
) -> float:
    """Mixed distance: weighted categorical mismatch plus cosine distance.

    Text blocks are L2-normalized (or zero); the cosine of a zero vector with
    anything is zero by convention.
    """
    if a.categorical_block.shape != b.categorical_block.shape:
        raise ValueError("categorical blocks differ in dimension")
    if a.text_block.shape != b.text_block.shape:
        raise ValueError("text blocks differ in dimension")
    cat_part = w_categorical * categorical_mismatch_fraction(
        a.categorical_block, b.categorical_block, n_attributes
    )
    cos = float(np.dot(a.text_block, b.text_block))
    return cat_part + w_textual * (1.0 - cos)


def pairwise_distances(
    query_cat: np.ndarray,
    query_text: np.ndarray,
    train_cat: np.ndarray,
    train_text: np.ndarray,
    w_categorical: float,
    w_textual: float,
    n_attributes: int = N_ATTRIBUTES,
) -> np.ndarray:
    """(n_query, n_train) mixed distances, computed with matrix products."""
    matches = query_cat.astype(np.float64) @ train_cat.astype(np.float64).T
    cat_part = (n_attributes - matches) / n_attributes
    cos = query_text @ train_text.T
    return w_categorical * cat_part + w_textual * (1.0 - cos)


def detect_problem_group(
    corpus: Sequence[Sequence[str]],
    labels: Sequence[str],
    tau: float = 0.95,
    item_ids: Sequence[str] | None = None,
) -> frozenset[str]:
    """Items whose tf-idf text is more than tau-cosine-similar to another class.

    The tf-idf here is fitted over the error-message/statement concatenation
    only; summaries never participate in problem-group detection.
    """
    if len(corpus) != len(labels):
        raise ValueError("corpus and labels must align")
    if len(corpus) < 2:
        return frozenset()
    ids = list(item_ids) if item_ids is not None else [str(i) for i in range(len(corpus))]
    if len(ids) != len(corpus):
        raise ValueError("item_ids and corpus must align")
    vectors = TfidfTextVectorizer().fit(corpus).transform(corpus)
    label_arr = np.asarray(labels)
    members: set[str] = set()
    chunk = 512
    for start in range(0, len(corpus), chunk):
        stop = min(start + chunk, len(corpus))
        sims = vectors[start:stop] @ vectors.T
        for i in range(start, stop):
            close = sims[i - start] > tau
            close[i] = False
            if np.any(close & (label_arr != label_arr[i])):
                members.add(ids[i])
    return frozenset(members)


def fit(
    training: Sequence[tuple[FeatureVector, str, str]],
    hyperparameters: Hyperparameters,
    *,
    vectorizer_state: dict[str, Any],
    schema: CategoricalSchema,
    feature_mode: str = "em_ss",
    vectorizer_kind: str = "subword",
    problem_texts: Sequence[Sequence[str]] | None = None,
    item_texts: Sequence[str] | None = None,
) -> ModelSnapshot:
    """Freeze a training set into an immutable snapshot.

    Instance-based learner: vectors are stored verbatim. The problem group is
    computed from ``problem_texts`` (error message + statement tokens per
    item) when provided.
    """
    if not training:
        raise ValueError("training set must not be empty")
    vectors, labels, item_ids = zip(*training)
    cat_matrix = np.stack([v.categorical_block for v in vectors]).astype(np.uint8)
    text_matrix = np.stack([v.text_block for v in vectors]).astype(np.float64)
    if problem_texts is not None:
        problem_ids = detect_problem_group(
            problem_texts, labels, hyperparameters.problem_group_threshold, item_ids
        )
    else:
        problem_ids = frozenset()
    texts = tuple(item_texts) if item_texts is not None else tuple("" for _ in item_ids)
    meta = {
        "hyperparameters": hyperparameters.to_dict(),
        "feature_mode": feature_mode,
        "vectorizer_kind": vectorizer_kind,
        "vectorizer_state": vectorizer_state,
        "schema": schema.to_dict(),
        "labels": list(labels),
        "item_ids": list(item_ids),
        "problem_group_ids": sorted(problem_ids),
    }
    digest = hashlib.sha256()
    digest.update(json.dumps(meta, sort_keys=True).encode("utf-8"))
    digest.update(cat_matrix.tobytes())
    digest.update(text_matrix.tobytes())
    version = f"m{digest.hexdigest()[:16]}"
    return ModelSnapshot(
        version=version,
        hyperparameters=hyperparameters,
        feature_mode=feature_mode,
        vectorizer_kind=vectorizer_kind,
        vectorizer_state=vectorizer_state,
        schema=schema,
        cat_matrix=cat_matrix,
        text_matrix=text_matrix,
        labels=tuple(labels),
        item_ids=tuple(item_ids),
        item_texts=texts,
        problem_group_ids=problem_ids,
    )


def _vote(
    neighbor_labels: Sequence[str], neighbor_dists: Sequence[float]
) -> tuple[str, float]:
    """Majority vote; ties break by smaller total distance, then label id."""
    votes: dict[str, int] = {}
    totals: dict[str, float] = {}
    for lab, dist in zip(neighbor_labels, neighbor_dists):
        votes[lab] = votes.get(lab, 0) + 1
        totals[lab] = totals.get(lab, 0.0) + dist
    best = min(votes, key=lambda lab: (-votes[lab], totals[lab], lab))
    return best, votes[best] / len(neighbor_labels)


def predict_batch(
    snapshot: ModelSnapshot,
    matrix: FeatureMatrix,
    event_ids: Sequence[str],
) -> list[Prediction]:
    """Classify a batch of feature vectors against one snapshot."""
    if len(matrix) != len(event_ids):
        raise ValueError("matrix and event_ids must align")
    hp = snapshot.hyperparameters
    dists = pairwise_distances(
        matrix.categorical,
        matrix.text,
        snapshot.cat_matrix,
        snapshot.text_matrix,
        hp.w_categorical,
        hp.w_textual,
        snapshot.n_attributes,
    )
    k = min(hp.k_neighbors, snapshot.n_items)
    tie_rank = np.argsort(np.argsort(np.asarray(snapshot.item_ids)))
    predictions: list[Prediction] = []
    for qi, event_id in enumerate(event_ids):
        order = np.lexsort((tie_rank, dists[qi]))[:k]
        n_labels = [snapshot.labels[j] for j in order]
        n_dists = [float(dists[qi, j]) for j in order]
        n_ids = [snapshot.item_ids[j] for j in order]
        label, certainty = _vote(n_labels, n_dists)
        flag_reason: str | None = None
        if any(i in snapshot.problem_group_ids for i in n_ids):
            flag_reason = "problem_group"
        elif certainty < hp.certainty_threshold:
            flag_reason = "uncertain"
        predictions.append(
            Prediction(
                event_id=event_id,
                label_id=label,
                certainty=certainty,
                flagged=flag_reason is not None,
                flag_reason=flag_reason,
                neighbors=tuple(zip(n_ids, n_dists)),
                model_version=snapshot.version,
            )
        )
    return predictions


def predict(snapshot: ModelSnapshot, vector: FeatureVector, event_id: str) -> Prediction:
    """Classify one feature vector; a pure function of (snapshot, vector)."""
    matrix = FeatureMatrix(
        categorical=vector.categorical_block[None, :],
        text=vector.text_block[None, :],
        n_attributes=snapshot.n_attributes,
    )
    return predict_batch(snapshot, matrix, [event_id])[0]


@dataclass(frozen=True)
class NeighborExplanation:
    item_id: str
    label_id: str
    distance: float
    categorical_part: float
    textual_part: float
    text: str


@dataclass(frozen=True)
class Explanation:
    event_id: str
    label_id: str
    certainty: float
    distance_margin: float  # secondary score; recorded, never used for flagging
    neighbors: tuple[NeighborExplanation, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "label_id": self.label_id,
            "certainty": self.certainty,
            "distance_margin": self.distance_margin,
            "neighbors": [
                {
                    "item_id": n.item_id,
                    "label_id": n.label_id,
                    "distance": n.distance,
                    "categorical_part": n.categorical_part,
                    "textual_part": n.textual_part,
                    "text": n.text,
                }
                for n in self.neighbors
            ],
        }


def explain(snapshot: ModelSnapshot, prediction: Prediction, vector: FeatureVector) -> Explanation:
    """Per-neighbor distance decomposition for a prediction of this snapshot."""
    if prediction.model_version and prediction.model_version != snapshot.version:
        raise ValueError(
            f"prediction was made by snapshot {prediction.model_version}, not {snapshot.version}"
        )
    hp = snapshot.hyperparameters
    index = {item_id: i for i, item_id in enumerate(snapshot.item_ids)}
    neighbors = []
    pred_dists: list[float] = []
    other_dists: list[float] = []
    for item_id, dist in prediction.neighbors:
        i = index[item_id]
        cat_part = hp.w_categorical * categorical_mismatch_fraction(
            vector.categorical_block, snapshot.cat_matrix[i], snapshot.n_attributes
        )
        txt_part = hp.w_textual * (1.0 - float(np.dot(vector.text_block, snapshot.text_matrix[i])))
        neighbors.append(
            NeighborExplanation(
                item_id=item_id,
                label_id=snapshot.labels[i],
                distance=dist,
                categorical_part=cat_part,
                textual_part=txt_part,
                text=snapshot.item_texts[i],
            )
        )
        (pred_dists if snapshot.labels[i] == prediction.label_id else other_dists).append(dist)
    if other_dists and pred_dists:
        spread = max(1e-12, max(pred_dists + other_dists))
        margin = max(0.0, min(1.0, (min(other_dists) - min(pred_dists)) / spread))
    else:
        margin = 1.0
    return Explanation(
        event_id=prediction.event_id,
        label_id=prediction.label_id,
        certainty=prediction.certainty,
        distance_margin=margin,
        neighbors=tuple(neighbors),
    )


# --------------------------------------------------------------------------
# persistence

def snapshot_to_dict(snapshot: ModelSnapshot) -> dict[str, Any]:
    return {
        "version": snapshot.version,
        "hyperparameters": snapshot.hyperparameters.to_dict(),
        "feature_mode": snapshot.feature_mode,
        "vectorizer_kind": snapshot.vectorizer_kind,
        "vectorizer_state": snapshot.vectorizer_state,
        "schema": snapshot.schema.to_dict(),
        "cat_matrix": snapshot.cat_matrix.tolist(),
        "text_matrix": snapshot.text_matrix.tolist(),
        "labels": list(snapshot.labels),
        "item_ids": list(snapshot.item_ids),
        "item_texts": list(snapshot.item_texts),
        "problem_group_ids": sorted(snapshot.problem_group_ids),
        "n_attributes": snapshot.n_attributes,
    }


def snapshot_from_dict(d: dict[str, Any]) -> ModelSnapshot:
    return ModelSnapshot(
        version=d["version"],
        hyperparameters=Hyperparameters.from_dict(d["hyperparameters"]),
        feature_mode=d["feature_mode"],
        vectorizer_kind=d["vectorizer_kind"],
        vectorizer_state=d["vectorizer_state"],
        schema=CategoricalSchema.from_dict(d["schema"]),
        cat_matrix=np.asarray(d["cat_matrix"], dtype=np.uint8),
        text_matrix=np.asarray(d["text_matrix"], dtype=np.float64),
        labels=tuple(d["labels"]),
        item_ids=tuple(d["item_ids"]),
        item_texts=tuple(d["item_texts"]),
        problem_group_ids=frozenset(d["problem_group_ids"]),
        n_attributes=int(d.get("n_attributes", N_ATTRIBUTES)),
    )


def save_snapshot(snapshot: ModelSnapshot, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(snapshot_to_dict(snapshot), fh, sort_keys=True)
        fh.write("\n")


def load_snapshot(path: str | Path) -> ModelSnapshot:
    with Path(path).open("r", encoding="utf-8") as fh:
        return snapshot_from_dict(json.load(fh))


# --------------------------------------------------------------------------
# sklearn-style estimator facade

class TriageKnnClassifier(BaseEstimator, ClassifierMixin):
    """Estimator facade over the snapshot functions, for ecosystem compose.

    ``X`` is a :class:`FeatureMatrix`; ``predict`` returns label ids, and
    ``predict_detailed`` exposes full predictions with certainty and flags.
    """

    def __init__(
        self,
        k_neighbors: int = 5,
        w_categorical: float = 1.0,
        w_textual: float = 1.0,
        certainty_threshold: float = 0.9,
        problem_group_threshold: float = 0.95,
    ):
        self.k_neighbors = k_neighbors
        self.w_categorical = w_categorical
        self.w_textual = w_textual
        self.certainty_threshold = certainty_threshold
        self.problem_group_threshold = problem_group_threshold

    def _hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(
            k_neighbors=self.k_neighbors,
            w_categorical=self.w_categorical,
            w_textual=self.w_textual,
            certainty_threshold=self.certainty_threshold,
            problem_group_threshold=self.problem_group_threshold,
        )

    def fit(
        self,
        X: FeatureMatrix,
        y: Sequence[str],
        *,
        item_ids: Sequence[str] | None = None,
        problem_texts: Sequence[Sequence[str]] | None = None,
    ) -> "TriageKnnClassifier":
        if len(X) != len(y):
            raise ValueError("X and y must align")
        if len(X) == 0:
            raise ValueError("training set must not be empty")
        ids = list(item_ids) if item_ids is not None else [f"t{i:06d}" for i in range(len(X))]
        training = [(X.row(i), str(y[i]), ids[i]) for i in range(len(X))]
        self.snapshot_ = fit(
            training,
            self._hyperparameters(),
            vectorizer_state={"kind": "external"},
            schema=_passthrough_schema(),
            feature_mode="external",
            vectorizer_kind="external",
            problem_texts=problem_texts,
        )
        self.classes_ = np.asarray(sorted(set(map(str, y))))
        return self

    def predict(self, X: FeatureMatrix) -> np.ndarray:
        self._check_fitted()
        event_ids = [f"q{i:06d}" for i in range(len(X))]
        preds = predict_batch(self.snapshot_, X, event_ids)
        return np.asarray([p.label_id for p in preds])

    def predict_detailed(self, X: FeatureMatrix, event_ids: Sequence[str] | None = None) -> list[Prediction]:
        self._check_fitted()
        ids = list(event_ids) if event_ids is not None else [f"q{i:06d}" for i in range(len(X))]
        return predict_batch(self.snapshot_, X, ids)

    def _check_fitted(self) -> None:
        if not hasattr(self, "snapshot_"):
            raise ValueError("classifier is not fitted")


def _passthrough_schema() -> CategoricalSchema:
    """Minimal schema for estimator use where encoding happened elsewhere."""
    return CategoricalSchema(
        vocabularies={
            "error_code": (),
            "request_name": (),
            "sql_type": (),
            "sql_sub_type": (),
        },
        oov_slot=True,
    )
