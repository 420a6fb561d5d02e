from __future__ import annotations

import json
import math

import numpy as np
import pytest

from replay_triage.vectorizers import (
    SubwordHashingVectorizer,
    TfidfTextVectorizer,
    make_vectorizer,
    vectorizer_from_state,
)


class TestTfidf:
    def test_idf_matches_hand_computation(self):
        vec = TfidfTextVectorizer().fit([["a", "b"], ["a", "c"]])
        assert vec.idf_["a"] == pytest.approx(math.log(3 / 3) + 1.0)  # 1.0
        assert vec.idf_["b"] == pytest.approx(math.log(3 / 2) + 1.0)  # ~1.4055
        assert vec.idf_["b"] == pytest.approx(1.405465, abs=1e-6)

    def test_single_document_corpus_has_uniform_idf(self):
        vec = TfidfTextVectorizer().fit([["x", "y", "z"]])
        assert len(set(vec.idf_.values())) == 1

    def test_unseen_terms_give_zero_vector(self):
        vec = TfidfTextVectorizer().fit([["a", "b"]])
        out = vec.transform_one(["zzz", "qqq"])
        assert np.linalg.norm(out) == 0.0

    def test_transform_matches_hand_computation(self):
        vec = TfidfTextVectorizer().fit([["a", "b"], ["a", "c"]])
        out = vec.transform_one(["a", "a", "b"])
        idf_a, idf_b = vec.idf_["a"], vec.idf_["b"]
        raw = np.zeros(3)
        raw[vec.vocabulary_["a"]] = 2 * idf_a
        raw[vec.vocabulary_["b"]] = 1 * idf_b
        expected = raw / np.linalg.norm(raw)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_empty_tokens_give_zero_vector(self):
        vec = TfidfTextVectorizer().fit([["a"]])
        assert np.linalg.norm(vec.transform_one([])) == 0.0

    def test_self_cosine_is_one(self):
        vec = TfidfTextVectorizer().fit([["a", "b"], ["b", "c"]])
        doc = vec.transform_one(["a", "b", "b"])
        assert float(doc @ doc) == pytest.approx(1.0, abs=1e-12)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            TfidfTextVectorizer().fit([])

    def test_max_terms_truncates_by_document_frequency(self):
        corpus = [["a", "b"], ["a", "c"], ["a", "b"]]
        vec = TfidfTextVectorizer(max_terms=2).fit(corpus)
        assert set(vec.vocabulary_) == {"a", "b"}

    def test_state_round_trip_is_bit_exact(self):
        vec = TfidfTextVectorizer().fit([["alpha", "beta"], ["alpha", "gamma"]])
        state = vec.to_state()
        reloaded = TfidfTextVectorizer.from_state(json.loads(json.dumps(state)))
        assert reloaded.to_state() == state
        doc = ["alpha", "gamma", "gamma"]
        np.testing.assert_array_equal(vec.transform_one(doc), reloaded.transform_one(doc))

    def test_transform_never_mutates_state(self):
        vec = TfidfTextVectorizer().fit([["a", "b"]])
        before = vec.to_state()
        vec.transform([["a"], ["zzz"], []])
        assert vec.to_state() == before


class TestSubword:
    def test_empty_tokens_give_zero_vector(self):
        vec = SubwordHashingVectorizer().fit()
        assert np.linalg.norm(vec.transform_one([])) == 0.0

    def test_same_seed_is_deterministic_across_instances(self):
        a = SubwordHashingVectorizer(hash_seed=17).fit()
        b = SubwordHashingVectorizer(hash_seed=17).fit()
        doc = ["connection", "error", "table_x1"]
        np.testing.assert_array_equal(a.transform_one(doc), b.transform_one(doc))

    def test_different_seed_changes_vectors(self):
        a = SubwordHashingVectorizer(hash_seed=17).fit()
        b = SubwordHashingVectorizer(hash_seed=18).fit()
        doc = ["connection"]
        assert not np.allclose(a.transform_one(doc), b.transform_one(doc))

    def test_shared_ngrams_mean_higher_cosine(self):
        vec = SubwordHashingVectorizer(embed_dim=128).fit()
        sim_near = float(vec.transform_one(["table_x1"]) @ vec.transform_one(["table_x2"]))
        sim_far = float(vec.transform_one(["table_x1"]) @ vec.transform_one(["connection"]))
        assert sim_near > sim_far

    def test_vectors_are_unit_norm(self):
        vec = SubwordHashingVectorizer().fit()
        out = vec.transform_one(["cannot", "find", "table"])
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-9)

    def test_state_round_trip_reproduces_vectors(self):
        vec = SubwordHashingVectorizer(embed_dim=64, hash_seed=5).fit()
        state = vec.to_state()
        reloaded = vectorizer_from_state(json.loads(json.dumps(state)))
        doc = ["rollback", "exception"]
        np.testing.assert_array_equal(vec.transform_one(doc), reloaded.transform_one(doc))

    def test_rejects_tiny_embed_dim(self):
        with pytest.raises(ValueError):
            SubwordHashingVectorizer(embed_dim=4).fit()


class TestFactory:
    def test_make_vectorizer_kinds(self):
        assert isinstance(make_vectorizer("tfidf"), TfidfTextVectorizer)
        assert isinstance(make_vectorizer("subword"), SubwordHashingVectorizer)
        with pytest.raises(ValueError):
            make_vectorizer("doc2vec")
