import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from neice.errors import NumericalError
from neice.representation import (cluwords, cluwords_parts, compute_mu, mean_similarity,
                                  neice, normalize_rows, read_triplets, tf_idf,
                                  write_triplets)

import oracles


class TestTfIdf:
    def test_hand_value(self):
        A = np.array([[2], [0]])
        # add a second term present in both docs so d2 is a valid row
        A = np.hstack([A, [[1], [1]]])
        M = tf_idf(A).matrix.toarray()
        assert M[0, 0] == pytest.approx(2 * math.log(2), abs=1e-12)
        assert M[0, 0] == pytest.approx(1.3863, abs=1e-4)
        assert M[1, 0] == 0.0

    def test_ubiquitous_term_is_zero(self):
        M = tf_idf(np.array([[1, 2], [3, 0]])).matrix.toarray()
        assert np.all(M[:, 0] == 0)

    def test_zero_row(self):
        M = tf_idf(np.array([[1, 1], [0, 0], [0, 1]])).matrix.toarray()
        assert np.all(M[1] == 0)

    def test_unused_term_rejected(self):
        with pytest.raises(NumericalError):
            tf_idf(np.array([[1, 0], [2, 0]]))

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        A, *_ = oracles.random_problem(rng)
        np.testing.assert_allclose(tf_idf(A).matrix.toarray(), oracles.tfidf(A), atol=1e-12)


class TestMu:
    def test_diagonal_c(self):
        A = np.array([[1, 0], [0, 2]])
        assert compute_mu(A, np.eye(2), 0, 0) == 1.0

    def test_unrelated_is_zero(self):
        A = np.array([[1, 0, 0]])
        C = np.eye(3)
        assert compute_mu(A, C, 0, 2) == 0.0

    def test_hand_mean(self):
        # terms: t=0, a=1, b=2; document holds a and b only
        C = np.array([[1.0, 0.8, 0.6], [0.8, 1.0, 0.0], [0.6, 0.0, 1.0]])
        A = np.array([[0, 1, 1]])
        assert compute_mu(A, C, 0, 0) == pytest.approx(0.7, abs=1e-12)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(1)
        A, C, *_ = oracles.random_problem(rng)
        mu, count = mean_similarity(A, C)
        mu = mu.toarray()
        for d in range(A.shape[0]):
            for t in range(A.shape[1]):
                assert mu[d, t] == pytest.approx(compute_mu(A, C, d, t), abs=1e-12)
        # mu is zero exactly where the related set is empty
        assert np.array_equal(mu > 0, count.toarray() > 0)
        assert mu.max() <= 1 + 1e-12


class TestCluWords:
    def test_identity_reduces_to_tfidf(self):
        rng = np.random.default_rng(2)
        A, *_ = oracles.random_problem(rng)
        a_star = cluwords(A, np.eye(A.shape[1])).matrix.toarray()
        np.testing.assert_allclose(a_star, tf_idf(A).matrix.toarray(), rtol=1e-9, atol=0)

    def test_small_oracle(self):
        A = np.array([[1, 0, 2, 0], [0, 1, 1, 0], [1, 1, 0, 1]])
        C = np.array([[1.0, 0.5, 0.0, 0.0],
                      [0.5, 1.0, 0.0, 0.7],
                      [0.0, 0.0, 1.0, 0.0],
                      [0.0, 0.7, 0.0, 1.0]])
        np.testing.assert_allclose(cluwords(A, C).matrix.toarray(),
                                   oracles.cluwords(A, C), atol=1e-12)

    def test_full_mean_similarity_zeroes_column(self):
        # term 0 occurs in every document and relates to nothing else
        A = np.array([[1, 1, 0], [2, 0, 1]])
        M = cluwords(A, np.eye(3)).matrix.toarray()
        assert np.all(M[:, 0] == 0)

    def test_sparse_product_matches_dense(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            A, C, *_ = oracles.random_problem(rng, max_docs=30, max_terms=50)
            parts = cluwords_parts(A, C)
            np.testing.assert_allclose(parts.tf_star.toarray(), A @ C, atol=1e-12)

    def test_duplicating_documents_keeps_idf(self):
        rng = np.random.default_rng(6)
        A, C, *_ = oracles.random_problem(rng)
        idf = cluwords_parts(A, C).idf_star
        idf2 = cluwords_parts(np.vstack([A, A]), C).idf_star
        np.testing.assert_allclose(idf, idf2, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cluwords(np.ones((2, 3)), np.eye(2))


class TestNeice:
    def test_no_entities_equals_cluwords(self):
        rng = np.random.default_rng(7)
        A, C, _, related = oracles.random_problem(rng)
        a_star = cluwords(A, C).matrix
        a_ne = neice(A, C, [[] for _ in range(A.shape[0])], related).matrix
        assert (a_star != a_ne).nnz == 0

    def test_max_attained_at_term_itself(self):
        # doc holds term 0 twice and term 1 once; 0 and 1 unrelated
        A = np.array([[2, 1], [0, 1]])
        C = np.eye(2)
        parts = cluwords_parts(A, C)
        a_ne = neice(A, C, [["E"], []], {"E": np.array([0])}).matrix.toarray()
        assert a_ne[0, 0] == pytest.approx(2 * 2 * parts.idf_star[0], abs=1e-12)
        assert a_ne[0, 1] == pytest.approx(1 * parts.idf_star[1], abs=1e-12)

    def test_two_document_oracle(self):
        A = np.array([[1, 2, 0, 0], [0, 1, 1, 1]])
        C = np.array([[1.0, 0.6, 0.0, 0.5],
                      [0.6, 1.0, 0.0, 0.0],
                      [0.0, 0.0, 1.0, 0.9],
                      [0.5, 0.0, 0.9, 1.0]])
        ents = [["E"], []]
        related = {"E": np.array([0, 3])}
        got = neice(A, C, ents, related).matrix.toarray()
        np.testing.assert_allclose(got, oracles.neice(A, C, ents, related), atol=1e-12)

    def test_unembedded_entity_ignored(self):
        A = np.array([[1, 1], [1, 0]])
        C = np.eye(2)
        base = cluwords(A, C).matrix.toarray()
        got = neice(A, C, [["Ghost"], []], {}).matrix.toarray()
        assert np.array_equal(base, got)

    def test_boost_locality_and_dominance(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            A, C, per_doc, related = oracles.random_problem(rng)
            a_star = cluwords(A, C).matrix.toarray()
            a_ne = neice(A, C, per_doc, related).matrix.toarray()
            assert np.all(a_ne >= a_star - 1e-12) and np.all(a_star >= 0)
            for d, ents in enumerate(per_doc):
                if not any(e in related for e in ents):
                    assert np.array_equal(a_ne[d], a_star[d])

    def test_wrong_entity_list_length(self):
        with pytest.raises(ValueError):
            neice(np.eye(2), np.eye(2), [[]], {})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sparse_matches_oracle_property(seed):
    rng = np.random.default_rng(seed)
    A, C, per_doc, related = oracles.random_problem(rng, max_docs=6, max_terms=8)
    np.testing.assert_allclose(cluwords(A, C).matrix.toarray(), oracles.cluwords(A, C),
                               atol=1e-9)
    np.testing.assert_allclose(neice(A, C, per_doc, related).matrix.toarray(),
                               oracles.neice(A, C, per_doc, related), atol=1e-9)


def test_triplet_roundtrip(tmp_path):
    M = sp.csr_matrix(np.array([[0.0, 1.5], [2.25, 0.0], [0.0, 1e-7]]))
    write_triplets(tmp_path / "m.txt", M)
    back = read_triplets(tmp_path / "m.txt")
    assert back.shape == M.shape and (back != M).nnz == 0


def test_normalize_rows():
    rep = tf_idf(np.array([[1, 2, 0], [0, 1, 3], [1, 0, 0]]))
    norm = normalize_rows(rep).matrix.toarray()
    lengths = np.linalg.norm(norm, axis=1)
    assert np.all((np.abs(lengths - 1) < 1e-12) | (lengths == 0))
