"""Text vectorizers producing L2-normalized document vectors.

Two interchangeable kinds behind one state format:

* ``TfidfTextVectorizer`` — raw-count tf times smoothed idf, then L2 norm.
* ``SubwordHashingVectorizer`` — deterministic hashed character-n-gram
  embedder. Each boundary-marked n-gram maps to a fixed pseudo-random unit
  vector; a document is the frequency-weighted mean of its n-gram vectors.
  It is not a trained embedding model: the classifier only consumes cosine
  geometry over lexical overlap, which hashing preserves, and determinism
  keeps tests exact.

Fitted states are immutable; ``transform`` never mutates state. States
persist to a JSON document for bit-exact reload.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .events import fnv1a_64

TokenDoc = Sequence[str]


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    """L2-normalize; the zero vector stays zero."""
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


class TfidfTextVectorizer(BaseEstimator, TransformerMixin):
    """Tf-idf with smoothed idf: idf(t) = ln((1+N)/(1+df(t))) + 1.

    ``max_terms`` optionally truncates the vocabulary to the terms with the
    highest document frequency (ties broken alphabetically).
    """

    def __init__(self, max_terms: int | None = None):
        self.max_terms = max_terms

    def fit(self, X: Iterable[TokenDoc], y: Any = None) -> "TfidfTextVectorizer":
        docs = list(X)
        if not docs:
            raise ValueError("cannot fit tf-idf on an empty corpus")
        df: dict[str, int] = {}
        for doc in docs:
            for term in set(doc):
                df[term] = df.get(term, 0) + 1
        terms = sorted(df)
        if self.max_terms is not None and len(terms) > self.max_terms:
            terms = sorted(sorted(df), key=lambda t: (-df[t], t))[: self.max_terms]
            terms.sort()
        n_docs = len(docs)
        self.vocabulary_ = {t: i for i, t in enumerate(terms)}
        self.idf_ = {t: math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in terms}
        self.n_docs_ = n_docs
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "vocabulary_"):
            raise ValueError("vectorizer is not fitted")

    def transform_one(self, tokens: TokenDoc) -> np.ndarray:
        self._check_fitted()
        vec = np.zeros(len(self.vocabulary_), dtype=np.float64)
        for term in tokens:
            idx = self.vocabulary_.get(term)
            if idx is not None:
                vec[idx] += self.idf_[term]
        return l2_normalize(vec)

    def transform(self, X: Iterable[TokenDoc]) -> np.ndarray:
        docs = list(X)
        out = np.zeros((len(docs), len(self.vocabulary_)), dtype=np.float64)
        for i, doc in enumerate(docs):
            out[i] = self.transform_one(doc)
        return out

    def term_weight(self, term: str, count: int) -> float:
        """Unnormalized tf-idf weight of *term* occurring *count* times."""
        self._check_fitted()
        return count * self.idf_.get(term, 0.0)

    @property
    def dim(self) -> int:
        self._check_fitted()
        return len(self.vocabulary_)

    def to_state(self) -> dict[str, Any]:
        self._check_fitted()
        terms = sorted(self.vocabulary_, key=self.vocabulary_.get)
        return {
            "kind": "tfidf",
            "max_terms": self.max_terms,
            "n_docs": self.n_docs_,
            "vocabulary": terms,
            "idf": [self.idf_[t] for t in terms],
        }

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> "TfidfTextVectorizer":
        if state.get("kind") != "tfidf":
            raise ValueError(f"not a tfidf state: {state.get('kind')!r}")
        vec = cls(max_terms=state.get("max_terms"))
        terms = state["vocabulary"]
        vec.vocabulary_ = {t: i for i, t in enumerate(terms)}
        vec.idf_ = dict(zip(terms, state["idf"]))
        vec.n_docs_ = int(state.get("n_docs", 0))
        return vec


class SubwordHashingVectorizer(BaseEstimator, TransformerMixin):
    """Hashed character-n-gram document embedder.

    Tokens expand to boundary-marked n-grams (``<token>``) of lengths in
    ``[n_gram_min, n_gram_max]`` plus the whole marked token. Each n-gram is
    hashed with ``hash_seed`` into a fixed pseudo-random direction in
    ``embed_dim`` dimensions. Stateless apart from its parameters, so ``fit``
    only marks the instance usable.
    """

    def __init__(self, embed_dim: int = 128, n_gram_min: int = 3, n_gram_max: int = 6, hash_seed: int = 17):
        self.embed_dim = embed_dim
        self.n_gram_min = n_gram_min
        self.n_gram_max = n_gram_max
        self.hash_seed = hash_seed

    def fit(self, X: Iterable[TokenDoc] | None = None, y: Any = None) -> "SubwordHashingVectorizer":
        if self.embed_dim < 8:
            raise ValueError("embed_dim must be at least 8")
        if self.n_gram_min < 1 or self.n_gram_max < self.n_gram_min:
            raise ValueError("invalid n-gram range")
        self._ngram_cache: dict[str, np.ndarray] = {}
        self.fitted_ = True
        return self

    def _check_fitted(self) -> None:
        if not getattr(self, "fitted_", False):
            raise ValueError("vectorizer is not fitted")

    def _ngrams(self, token: str) -> list[str]:
        marked = f"<{token}>"
        grams = [marked]
        for n in range(self.n_gram_min, self.n_gram_max + 1):
            if n >= len(marked):
                break
            grams.extend(marked[i : i + n] for i in range(len(marked) - n + 1))
        return grams

    def _ngram_vector(self, gram: str) -> np.ndarray:
        cached = self._ngram_cache.get(gram)
        if cached is not None:
            return cached
        seed = fnv1a_64(f"{self.hash_seed}:{gram}".encode("utf-8"))
        direction = np.random.default_rng(seed).standard_normal(self.embed_dim)
        direction /= np.linalg.norm(direction)
        self._ngram_cache[gram] = direction
        return direction

    def transform_one(self, tokens: TokenDoc) -> np.ndarray:
        self._check_fitted()
        acc = np.zeros(self.embed_dim, dtype=np.float64)
        count = 0
        for token in tokens:
            for gram in self._ngrams(token):
                acc += self._ngram_vector(gram)
                count += 1
        if count:
            acc /= count
        return l2_normalize(acc)

    def transform(self, X: Iterable[TokenDoc]) -> np.ndarray:
        docs = list(X)
        out = np.zeros((len(docs), self.embed_dim), dtype=np.float64)
        for i, doc in enumerate(docs):
            out[i] = self.transform_one(doc)
        return out

    @property
    def dim(self) -> int:
        return self.embed_dim

    def to_state(self) -> dict[str, Any]:
        self._check_fitted()
        return {
            "kind": "subword_embedding",
            "embed_dim": self.embed_dim,
            "n_gram_range": [self.n_gram_min, self.n_gram_max],
            "hash_seed": self.hash_seed,
        }

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> "SubwordHashingVectorizer":
        if state.get("kind") != "subword_embedding":
            raise ValueError(f"not a subword state: {state.get('kind')!r}")
        lo, hi = state["n_gram_range"]
        vec = cls(
            embed_dim=int(state["embed_dim"]),
            n_gram_min=int(lo),
            n_gram_max=int(hi),
            hash_seed=int(state["hash_seed"]),
        )
        return vec.fit()


VECTORIZER_KINDS = ("tfidf", "subword")


def make_vectorizer(kind: str, *, embed_dim: int = 128, max_terms: int | None = None, hash_seed: int = 17):
    """Factory for the two supported vectorizer kinds."""
    if kind == "tfidf":
        return TfidfTextVectorizer(max_terms=max_terms)
    if kind in ("subword", "subword_embedding"):
        return SubwordHashingVectorizer(embed_dim=embed_dim, hash_seed=hash_seed)
    raise ValueError(f"unknown vectorizer kind {kind!r}")


def vectorizer_from_state(state: dict[str, Any]):
    kind = state.get("kind")
    if kind == "tfidf":
        return TfidfTextVectorizer.from_state(state)
    if kind == "subword_embedding":
        return SubwordHashingVectorizer.from_state(state)
    raise ValueError(f"unknown vectorizer state kind {kind!r}")


def save_vectorizer_state(state: dict[str, Any], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(state, fh, sort_keys=True)
        fh.write("\n")


def load_vectorizer_state(path: str | Path) -> dict[str, Any]:
    with Path(path).open("r", encoding="utf-8") as fh:
        return json.load(fh)
