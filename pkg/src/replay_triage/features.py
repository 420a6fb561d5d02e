"""Feature assembly: one-hot categorical blocks, text blocks, term statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .events import CATEGORICAL_ATTRIBUTES, CategoricalSchema, ReplayEvent
from .vectorizers import TfidfTextVectorizer

N_ATTRIBUTES = len(CATEGORICAL_ATTRIBUTES)


@dataclass(frozen=True)
class FeatureVector:
    """One-hot categorical block plus an L2-normalized text block."""

    categorical_block: np.ndarray  # (cat_width,) uint8, one 1 per attribute
    text_block: np.ndarray  # (embed_dim,) float64, norm 0 or 1

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.text_block))
        if norm != 0.0 and abs(norm - 1.0) > 1e-9:
            raise ValueError(f"text_block norm must be 0 or 1, got {norm}")


@dataclass(frozen=True)
class FeatureMatrix:
    """Batched feature vectors with the block geometry the distance needs."""

    categorical: np.ndarray  # (n, cat_width) uint8
    text: np.ndarray  # (n, dim) float64
    n_attributes: int = N_ATTRIBUTES

    def __post_init__(self) -> None:
        if self.categorical.shape[0] != self.text.shape[0]:
            raise ValueError("categorical and text blocks disagree on row count")

    def __len__(self) -> int:
        return self.categorical.shape[0]

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(self.categorical[i], self.text[i])


class CategoricalOneHotEncoder(BaseEstimator, TransformerMixin):
    """One-hot encoder over the four categorical event attributes.

    Values unseen at fit time land in a per-attribute OOV slot; the observed
    code sets grow over time and the model must absorb novel ones without
    refusing to predict.
    """

    def __init__(self, oov_slot: bool = True):
        self.oov_slot = oov_slot

    def fit(self, X: Iterable[ReplayEvent], y=None) -> "CategoricalOneHotEncoder":
        values: dict[str, set[str]] = {a: set() for a in CATEGORICAL_ATTRIBUTES}
        for event in X:
            for attr in CATEGORICAL_ATTRIBUTES:
                value = getattr(event, attr)
                if value is not None:
                    values[attr].add(value)
        self.schema_ = CategoricalSchema(
            vocabularies={a: tuple(sorted(v)) for a, v in values.items()},
            oov_slot=self.oov_slot,
        )
        return self

    def transform(self, X: Iterable[ReplayEvent]) -> np.ndarray:
        if not hasattr(self, "schema_"):
            raise ValueError("encoder is not fitted")
        events = list(X)
        out = np.zeros((len(events), self.schema_.width), dtype=np.uint8)
        for i, event in enumerate(events):
            out[i] = encode_categoricals(event, self.schema_)
        return out


def encode_categoricals(event: ReplayEvent, schema: CategoricalSchema) -> np.ndarray:
    """One-hot encode the event's categorical attributes under *schema*."""
    block = np.zeros(schema.width, dtype=np.uint8)
    for attr in CATEGORICAL_ATTRIBUTES:
        block[schema.offset(attr) + schema.slot(attr, getattr(event, attr))] = 1
    return block


def encode(event: ReplayEvent, text_vector: np.ndarray, schema: CategoricalSchema) -> FeatureVector:
    """Assemble a FeatureVector from an event and its precomputed text block."""
    return FeatureVector(encode_categoricals(event, schema), np.asarray(text_vector, dtype=np.float64))


@dataclass(frozen=True)
class TermImportanceReport:
    """Chi-squared term scores: a global ranking plus per-class top terms."""

    ranked: tuple[tuple[str, float], ...]
    per_class: dict[str, tuple[tuple[str, float], ...]]

    def top(self, n: int) -> list[tuple[str, float]]:
        return list(self.ranked[:n])


def _chi2_2xc(present: np.ndarray, class_sizes: np.ndarray) -> float:
    """Pearson chi-squared of one 2xC presence/class contingency table.

    Cells with zero expectation contribute zero.
    """
    total = float(class_sizes.sum())
    p_total = float(present.sum())
    a_total = total - p_total
    chi2 = 0.0
    for c in range(len(class_sizes)):
        n_c = float(class_sizes[c])
        e_present = n_c * p_total / total
        e_absent = n_c * a_total / total
        if e_present > 0:
            chi2 += (present[c] - e_present) ** 2 / e_present
        if e_absent > 0:
            chi2 += ((n_c - present[c]) - e_absent) ** 2 / e_absent
    return chi2


def chi2_importance(
    corpus: Sequence[Sequence[str]],
    labels: Sequence[str],
    per_class_top: int = 25,
) -> TermImportanceReport:
    """Rank terms by the chi-squared statistic of term presence versus class.

    The global score is the statistic of the full 2xC table; per-class top
    terms use the one-vs-rest 2x2 statistic, signed by whether the term is
    over-represented in that class.
    """
    if len(corpus) != len(labels):
        raise ValueError("corpus and labels must align")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("chi-squared importance needs at least 2 distinct labels")
    class_index = {c: i for i, c in enumerate(classes)}
    class_sizes = np.zeros(len(classes), dtype=np.int64)
    for lab in labels:
        class_sizes[class_index[lab]] += 1

    presence: dict[str, np.ndarray] = {}
    for doc, lab in zip(corpus, labels):
        ci = class_index[lab]
        for term in set(doc):
            counts = presence.get(term)
            if counts is None:
                counts = np.zeros(len(classes), dtype=np.int64)
                presence[term] = counts
            counts[ci] += 1

    scored = [(term, _chi2_2xc(counts, class_sizes)) for term, counts in presence.items()]
    scored.sort(key=lambda ts: (-ts[1], ts[0]))

    total = int(class_sizes.sum())
    per_class: dict[str, tuple[tuple[str, float], ...]] = {}
    for c, cls in enumerate(classes):
        n_c = int(class_sizes[c])
        rest = total - n_c
        class_scores: list[tuple[str, float]] = []
        for term, counts in presence.items():
            in_class = int(counts[c])
            in_rest = int(counts.sum()) - in_class
            table_present = np.array([in_class, in_rest], dtype=np.int64)
            table_sizes = np.array([n_c, rest], dtype=np.int64)
            score = _chi2_2xc(table_present, table_sizes)
            # keep only terms over-represented in this class
            if rest == 0 or (n_c > 0 and in_class / n_c > in_rest / rest):
                class_scores.append((term, score))
        class_scores.sort(key=lambda ts: (-ts[1], ts[0]))
        per_class[cls] = tuple(class_scores[:per_class_top])

    return TermImportanceReport(ranked=tuple(scored), per_class=per_class)


def tfidf_term_filter(
    summary_tokens: Sequence[str],
    vectorizer: TfidfTextVectorizer,
    top_n: int,
) -> list[str]:
    """Keep only the document's top_n terms by tf-idf weight, original order.

    The output is always a subsequence of the input; occurrences of dropped
    terms disappear entirely.
    """
    if top_n < 1:
        raise ValueError("top_n must be positive")
    counts: dict[str, int] = {}
    first_pos: dict[str, int] = {}
    for i, tok in enumerate(summary_tokens):
        counts[tok] = counts.get(tok, 0) + 1
        first_pos.setdefault(tok, i)
    if len(counts) <= top_n:
        return list(summary_tokens)
    ranked = sorted(counts, key=lambda t: (-vectorizer.term_weight(t, counts[t]), first_pos[t]))
    keep = set(ranked[:top_n])
    return [tok for tok in summary_tokens if tok in keep]
