"""Joint word/entity embeddings and the thresholded word similarity matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EmbeddingError

logger = logging.getLogger(__name__)

ENTITY_PREFIX = "ENTITY/"
# cosines within this distance of the cutoff count as not exceeding it
CUTOFF_GUARD = 1e-12


@dataclass
class EmbeddingTable:
    """Vectors for vocabulary words and accepted entities.

    Lookups of missing keys return ``None``; a zero vector is never used as
    a stand-in for absence.
    """

    dim: int
    word_vectors: dict
    entity_vectors: dict
    word_coverage: float = 0.0
    entity_coverage: float = 0.0

    def word(self, term):
        return self.word_vectors.get(term)

    def entity(self, entity_id):
        return self.entity_vectors.get(entity_id)


@dataclass
class SimilarityMatrix:
    matrix: sp.csr_matrix
    alpha_word: float

    @property
    def shape(self):
        return self.matrix.shape


def load_embeddings(path, vocab, entities=(), entity_prefix=ENTITY_PREFIX,
                    prefixed_entities=True) -> EmbeddingTable:
    """Read a word2vec-style text file, keeping only needed vectors.

    The header is ``count dim``. With ``prefixed_entities`` an entity id
    ``X`` is looked up as ``entity_prefix + X``; otherwise entity ids share
    the word namespace. Zero-norm vectors are rejected with a warning.
    """
    wanted_words = set(vocab)
    entities = set(entities)
    if prefixed_entities:
        wanted_entities = {entity_prefix + e: e for e in entities}
    else:
        wanted_entities = {e: e for e in entities}
    words, ents = {}, {}
    n_zero = 0
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            _, dim = int(header[0]), int(header[1])
        except (IndexError, ValueError):
            raise EmbeddingError("bad header, expected 'count dim'", line=1)
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) - 1 != dim:
                raise EmbeddingError(
                    f"expected {dim} values, found {len(parts) - 1}", line=lineno)
            token = parts[0]
            if token not in wanted_words and token not in wanted_entities:
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingError(f"unparseable vector ({exc})", line=lineno)
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError("non-finite vector component", line=lineno)
            if not np.any(vec):
                n_zero += 1
                continue
            if token in wanted_words:
                words[token] = vec
            if token in wanted_entities:
                ents[wanted_entities[token]] = vec
    if n_zero:
        logger.warning("rejected %d zero-norm vectors", n_zero)
    if not words:
        raise EmbeddingError(f"no vocabulary term found in {path}")
    table = EmbeddingTable(
        dim=dim, word_vectors=words, entity_vectors=ents,
        word_coverage=len(words) / max(len(wanted_words), 1),
        entity_coverage=len(ents) / len(entities) if entities else 1.0,
    )
    logger.info("embeddings: %.1f%% of vocabulary, %.1f%% of entities covered",
                100 * table.word_coverage, 100 * table.entity_coverage)
    return table


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine undefined for a zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def _normalized_word_matrix(table, vocab):
    idx = [i for i, t in enumerate(vocab.terms) if t in table.word_vectors]
    if not idx:
        return np.zeros(0, dtype=np.int64), np.zeros((0, table.dim))
    X = np.vstack([table.word_vectors[vocab.terms[i]] for i in idx])
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return np.asarray(idx, dtype=np.int64), X


def build_similarity_matrix(table: EmbeddingTable, vocab, alpha_word: float,
                            block_size: int = 2048) -> SimilarityMatrix:
    """C[t, t'] = cos(v_t, v_t') where it exceeds ``alpha_word``, else 0.

    Only the strict upper triangle is computed (blockwise) and then mirrored,
    so the stored matrix is exactly symmetric. Every diagonal entry is 1,
    including terms without an embedding.
    """
    if not 0.0 <= alpha_word < 1.0:
        raise ValueError("alpha_word must lie in [0, 1)")
    n = len(vocab)
    idx, X = _normalized_word_matrix(table, vocab)
    m = len(idx)
    rows, cols, vals = [], [], []
    for a in range(0, m, block_size):
        b = min(a + block_size, m)
        S = X[a:b] @ X[a:].T
        r, c = np.nonzero(S > alpha_word + CUTOFF_GUARD)
        upper = (c + a) > (r + a)
        r, c = r[upper], c[upper]
        rows.append(idx[r + a])
        cols.append(idx[c + a])
        vals.append(np.minimum(S[r, c], 1.0))
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    diag = np.arange(n)
    C = sp.csr_matrix(
        (np.concatenate([vals, vals, np.ones(n)]),
         (np.concatenate([rows, cols, diag]), np.concatenate([cols, rows, diag]))),
        shape=(n, n))
    C.sort_indices()
    return SimilarityMatrix(matrix=C, alpha_word=alpha_word)


def _related_indices(ev, idx, X, alpha_ent):
    sims = X @ (ev / np.linalg.norm(ev))
    return np.sort(idx[sims >= alpha_ent])


def entity_related_words(table, vocab, entity_id, alpha_ent: float) -> frozenset:
    """Words t with cos(v_e, v_t) >= alpha_ent (non-strict)."""
    return frozenset(vocab.terms[i] for i in
                     related_word_indices(table, vocab, [entity_id], alpha_ent)
                     .get(entity_id, ()))


def related_word_indices(table, vocab, entity_ids, alpha_ent: float) -> dict:
    """Map each embedded entity to the sorted vocabulary indices of E^e.

    Unembedded entities are left out of the map (with a warning), so they
    never trigger a boost.
    """
    if not 0.0 <= alpha_ent < 1.0:
        raise ValueError("alpha_ent must lie in [0, 1)")
    idx, X = _normalized_word_matrix(table, vocab)
    out, missing = {}, 0
    for e in sorted(set(entity_ids)):
        ev = table.entity(e)
        if ev is None:
            missing += 1
            continue
        out[e] = _related_indices(ev, idx, X, alpha_ent)
    if missing:
        logger.warning("%d entities have no embedding and contribute nothing", missing)
    return out
