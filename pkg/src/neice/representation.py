"""Weighted document-term matrices: TF-IDF, CluWords and NEiCE.

All three share the same layout (documents x vocabulary, CSR). CluWords
expands term frequency through the similarity matrix C (tf* = AC) and
replaces document frequency by the summed mean similarity mu(t, d). NEiCE
keeps idf* and boosts tf* for words related to an entity present in the
document.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError

DROP_BELOW = 1e-12

KINDS = ("tfidf", "cluwords", "neice")


@dataclass
class WeightedDocTermMatrix:
    matrix: sp.csr_matrix
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape


@dataclass
class CluWordsParts:
    """Intermediate quantities shared by CluWords and NEiCE.

    ``mu`` and ``related_count`` are sparse with identical support: the
    (d, t) pairs where V^{d,t} is non-empty.
    """

    tf_star: sp.csr_matrix        # AC
    mu: sp.csr_matrix
    related_count: sp.csr_matrix  # |V^{d,t}|
    idf_star: np.ndarray
    C: sp.csr_matrix = field(repr=False)
    A: sp.csr_matrix = field(repr=False)


def _as_csr(M):
    M = sp.csr_matrix(M, dtype=np.float64)
    M.sum_duplicates()
    M.sort_indices()
    return M


def _prune(M):
    M = M.tocsr()
    M.data[np.abs(M.data) < DROP_BELOW] = 0.0
    M.eliminate_zeros()
    M.sort_indices()
    return M


def _check(M):
    if not np.all(np.isfinite(M.data)):
        raise NumericalError("non-finite entry in representation matrix")
    if M.nnz and M.data.min() < 0:
        raise NumericalError("negative entry in representation matrix")
    return M


def tf_idf(A) -> WeightedDocTermMatrix:
    """tf(t, d) * log(|D| / n_t) with tf the raw count."""
    A = _as_csr(A)
    n_docs = A.shape[0]
    df = np.bincount(A.indices, minlength=A.shape[1])
    if np.any(df == 0):
        raise NumericalError(f"{int(np.sum(df == 0))} vocabulary terms occur in no document")
    idf = np.log(n_docs / df)
    M = _prune(A @ sp.diags(idf))
    return WeightedDocTermMatrix(_check(M), "tfidf")


def mean_similarity(A, C):
    """Sparse mu(t, d) and |V^{d,t}| for every document/term pair.

    V^{d,t} = {t' in d : C[t, t'] != 0}. With B the binary presence matrix,
    the sum over V^{d,t} is (B C^T)[d, t] and its size is (B S^T)[d, t]
    where S is the support of C.
    """
    A = _as_csr(A)
    C = _as_csr(C)
    B = A.copy()
    B.data[:] = 1.0
    B.eliminate_zeros()
    S = C.copy()
    S.data = (S.data != 0).astype(np.float64)
    S.eliminate_zeros()
    count = (B @ S.T).tocsr()
    total = (B @ C.T).tocsr()
    mu = total.multiply(count.power(-1.0)).tocsr()
    mu.sort_indices()
    count.sort_indices()
    return mu, count


def compute_mu(A, C, d: int, t: int) -> float:
    """Scalar mu(t, d) for a single pair, read straight off the definition."""
    A = _as_csr(A)
    C = _as_csr(C)
    row = A.getrow(d)
    doc_terms = row.indices[row.data != 0]
    sims = np.asarray(C[t, doc_terms].todense()).ravel()
    related = sims[sims != 0]
    return float(related.mean()) if related.size else 0.0


def cluwords_parts(A, C) -> CluWordsParts:
    A = _as_csr(A)
    C = _as_csr(C)
    if C.shape != (A.shape[1], A.shape[1]):
        raise ValueError(f"C has shape {C.shape}, expected {(A.shape[1],) * 2}")
    tf_star = (A @ C).tocsr()
    tf_star.sort_indices()
    mu, count = mean_similarity(A, C)
    mu_sum = np.asarray(mu.sum(axis=0)).ravel()
    if np.any(mu_sum <= 0):
        bad = int(np.sum(mu_sum <= 0))
        raise NumericalError(f"{bad} terms have zero summed mean similarity")
    idf_star = np.log(A.shape[0] / mu_sum)
    return CluWordsParts(tf_star=tf_star, mu=mu, related_count=count,
                         idf_star=idf_star, C=C, A=A)


def cluwords(A, C, parts: CluWordsParts | None = None) -> WeightedDocTermMatrix:
    """A*[d, t] = (AC)[d, t] * log(|D| / sum_d mu(t, d))."""
    parts = parts or cluwords_parts(A, C)
    M = _prune(parts.tf_star @ sp.diags(parts.idf_star))
    return WeightedDocTermMatrix(_check(M), "cluwords")


def boosted_tf(parts: CluWordsParts, entities_per_doc, entity_related) -> sp.csr_matrix:
    """tf^NE: AC plus, for boosted pairs, the max of AC over V^{d,t}.

    A pair (d, t) is boosted when some entity e of d has t in E^e and
    V^{d,t} is non-empty. Several entities selecting the same t boost it
    once.
    """
    A, C, tf = parts.A, parts.C, parts.tf_star
    count = parts.related_count
    rows, cols, vals = [], [], []
    for d, ents in enumerate(entities_per_doc):
        cand = [entity_related[e] for e in ents if e in entity_related]
        if not cand:
            continue
        cand = np.unique(np.concatenate(cand))
        lo, hi = count.indptr[d], count.indptr[d + 1]
        has_related = count.indices[lo:hi]
        targets = np.intersect1d(cand, has_related, assume_unique=True)
        if targets.size == 0:
            continue
        a_lo, a_hi = A.indptr[d], A.indptr[d + 1]
        doc_terms = A.indices[a_lo:a_hi][A.data[a_lo:a_hi] != 0]
        # rows: terms present in d; columns: boost targets
        link = (C[targets][:, doc_terms].toarray() != 0).T
        tf_row = tf.getrow(d).toarray().ravel()
        weights = np.where(link, tf_row[doc_terms][:, None], -np.inf)
        rows.append(np.full(targets.size, d))
        cols.append(targets)
        vals.append(weights.max(axis=0))
    boost = sp.csr_matrix(tf.shape)
    if rows:
        boost = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=tf.shape)
    out = (tf + boost).tocsr()
    out.sort_indices()
    return out


def neice(A, C, entities_per_doc, entity_related,
          parts: CluWordsParts | None = None) -> WeightedDocTermMatrix:
    """A^NE = tf^NE * idf*, with idf* unchanged from CluWords."""
    parts = parts or cluwords_parts(A, C)
    if len(entities_per_doc) != parts.A.shape[0]:
        raise ValueError("entities_per_doc must have one entry per document")
    tf_ne = boosted_tf(parts, entities_per_doc, entity_related)
    M = _prune(tf_ne @ sp.diags(parts.idf_star))
    return WeightedDocTermMatrix(_check(M), "neice")


def normalize_rows(rep: WeightedDocTermMatrix) -> WeightedDocTermMatrix:
    M = rep.matrix.copy()
    norms = np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    M = sp.diags(1.0 / norms) @ M
    return WeightedDocTermMatrix(M.tocsr(), rep.kind, dict(rep.params, normalized=True))


def write_triplets(path, M, header=True):
    """Dump a sparse matrix as ``row col value`` lines (0-based)."""
    M = sp.coo_matrix(M)
    order = np.lexsort((M.col, M.row))
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"% {M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for i in order:
            fh.write(f"{M.row[i]} {M.col[i]} {float(M.data[i])!r}\n")


def read_triplets(path, shape=None) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("%"):
                parts = line[1:].split()
                shape = shape or (int(parts[0]), int(parts[1]))
                continue
            if not line.strip():
                continue
            r, c, v = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape, dtype=np.float64)
