from __future__ import annotations

import random

import numpy as np
import pytest

from replay_triage.events import CategoricalSchema
from replay_triage.features import (
    CategoricalOneHotEncoder,
    FeatureVector,
    chi2_importance,
    encode,
    encode_categoricals,
    tfidf_term_filter,
)
from replay_triage.vectorizers import TfidfTextVectorizer

from conftest import make_event


def chi2_brute_force(corpus, labels):
    """Independent contingency-table computation, plain loops only."""
    classes = sorted(set(labels))
    n_total = len(corpus)
    scores: dict[str, float] = {}
    terms = sorted({t for doc in corpus for t in doc})
    for term in terms:
        present_total = sum(1 for doc in corpus if term in set(doc))
        chi = 0.0
        for cls in classes:
            docs_c = [doc for doc, lab in zip(corpus, labels) if lab == cls]
            n_c = len(docs_c)
            observed_present = sum(1 for doc in docs_c if term in set(doc))
            observed_absent = n_c - observed_present
            expected_present = n_c * present_total / n_total
            expected_absent = n_c * (n_total - present_total) / n_total
            if expected_present > 0:
                chi += (observed_present - expected_present) ** 2 / expected_present
            if expected_absent > 0:
                chi += (observed_absent - expected_absent) ** 2 / expected_absent
        scores[term] = chi
    return scores


class TestOneHot:
    def _schema(self):
        return CategoricalSchema(
            vocabularies={
                "error_code": ("-303", "111", "100"),
                "request_name": ("1", "2"),
                "sql_type": ("1", "19"),
                "sql_sub_type": ("1",),
            }
        )

    def test_known_value_sets_its_slot(self):
        schema = self._schema()
        event = make_event(error_code="111")
        block = encode_categoricals(event, schema)
        assert list(block[:4]) == [0, 1, 0, 0]  # vocab (-303, 111, 100) + OOV slot

    def test_unseen_value_sets_oov_slot(self):
        schema = self._schema()
        event = make_event(error_code="999")
        block = encode_categoricals(event, schema)
        assert list(block[:4]) == [0, 0, 0, 1]

    def test_exactly_one_per_attribute(self):
        schema = self._schema()
        block = encode_categoricals(make_event(error_code="999", sql_type="19"), schema)
        assert block.sum() == 4

    def test_encoder_fit_builds_sorted_vocab(self):
        events = [make_event(event_id=f"e{i}", seq_no=i, error_code=c) for i, c in enumerate(["7", "3", "7"])]
        enc = CategoricalOneHotEncoder().fit(events)
        assert enc.schema_.vocabularies["error_code"] == ("3", "7")
        out = enc.transform(events)
        assert out.shape == (3, enc.schema_.width)
        assert (out.sum(axis=1) == 4).all()

    def test_encode_builds_feature_vector(self):
        schema = self._schema()
        text = np.zeros(8)
        fv = encode(make_event(), text, schema)
        assert isinstance(fv, FeatureVector)
        assert fv.categorical_block.sum() == 4

    def test_feature_vector_rejects_bad_norm(self):
        with pytest.raises(ValueError):
            FeatureVector(np.zeros(4, dtype=np.uint8), np.array([0.5, 0.5]))


class TestChi2:
    def test_perfect_separation_two_classes_gives_twenty(self):
        corpus = [["marker"] for _ in range(10)] + [["other"] for _ in range(10)]
        labels = ["A"] * 10 + ["B"] * 10
        report = chi2_importance(corpus, labels)
        scores = dict(report.ranked)
        assert scores["marker"] == pytest.approx(20.0)

    def test_term_in_every_document_scores_zero(self):
        corpus = [["common", "a"], ["common", "b"], ["common", "c"], ["common", "d"]]
        labels = ["A", "A", "B", "B"]
        scores = dict(chi2_importance(corpus, labels).ranked)
        assert scores["common"] == pytest.approx(0.0)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            chi2_importance([["a"], ["b"]], ["same", "same"])

    def test_matches_brute_force_on_random_corpora(self):
        rng = random.Random(99)
        vocab = [f"w{i}" for i in range(12)]
        for _ in range(20):
            n_docs = rng.randrange(4, 30)
            n_classes = rng.randrange(2, 5)
            corpus = [
                [rng.choice(vocab) for _ in range(rng.randrange(1, 8))] for _ in range(n_docs)
            ]
            labels = [f"c{rng.randrange(n_classes)}" for _ in range(n_docs)]
            if len(set(labels)) < 2:
                labels[0], labels[1] = "c0", "c1"
            expected = chi2_brute_force(corpus, labels)
            got = dict(chi2_importance(corpus, labels).ranked)
            assert set(got) == set(expected)
            for term, score in expected.items():
                assert got[term] == pytest.approx(score, abs=1e-9), term

    def test_ranking_is_non_increasing(self):
        corpus = [["a", "b"], ["a"], ["b", "c"], ["c"]]
        labels = ["x", "x", "y", "y"]
        ranked = chi2_importance(corpus, labels).ranked
        scores = [s for _, s in ranked]
        assert scores == sorted(scores, reverse=True)
        assert all(s >= 0 for s in scores)

    def test_per_class_top_terms_are_over_represented(self):
        corpus = [["alpha", "noise"]] * 5 + [["beta", "noise"]] * 5
        labels = ["A"] * 5 + ["B"] * 5
        report = chi2_importance(corpus, labels)
        assert report.per_class["A"][0][0] == "alpha"
        assert report.per_class["B"][0][0] == "beta"


class TestTfidfTermFilter:
    def test_top_n_at_least_distinct_count_is_identity(self):
        vec = TfidfTextVectorizer().fit([["a", "b"], ["c"]])
        tokens = ["a", "b", "a"]
        assert tfidf_term_filter(tokens, vec, 3) == tokens

    def test_top_one_picks_highest_weight(self):
        # idf(b) > 2*idf(a): a appears in both docs, b in one of many
        corpus = [["a", "b"], ["a"], ["a"], ["a"], ["a"], ["a"], ["a"], ["a"]]
        vec = TfidfTextVectorizer().fit(corpus)
        assert vec.idf_["b"] > 2 * vec.idf_["a"]
        assert tfidf_term_filter(["a", "a", "b"], vec, 1) == ["b"]

    def test_output_is_subsequence_of_input(self):
        vec = TfidfTextVectorizer().fit([["x", "y", "z"], ["x"]])
        tokens = ["x", "q", "y", "x", "z"]
        out = tfidf_term_filter(tokens, vec, 2)
        it = iter(tokens)
        assert all(tok in it for tok in out)  # subsequence check
        assert len(out) <= len(tokens)


class TestRankEquivalence:
    def test_euclidean_equals_cosine_ordering_on_normalized_vectors(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = rng.standard_normal(16)
            a /= np.linalg.norm(a)
            b = rng.standard_normal(16)
            b /= np.linalg.norm(b)
            lhs = float(np.sum((a - b) ** 2))
            rhs = 2.0 - 2.0 * float(a @ b)
            assert lhs == pytest.approx(rhs, abs=1e-9)
