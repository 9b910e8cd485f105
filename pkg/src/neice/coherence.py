"""NPMI and C_V topic coherence over Boolean sliding-window counts."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import PreprocessConfig, read_corpus, tokenize
from .errors import DataError

logger = logging.getLogger(__name__)

SMOOTH = 1e-12
DEFAULT_WINDOW = 110


@dataclass
class CooccurrenceIndex:
    """Window counts for a fixed term list.

    ``counts`` is a symmetric sparse matrix: the diagonal holds the number of
    windows containing each term, off-diagonal cells the number of windows
    containing both terms.
    """

    terms: list
    window_count: int
    counts: sp.csr_matrix
    window_size: int = DEFAULT_WINDOW
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.terms)}

    def count(self, term) -> int:
        i = self.index.get(term)
        return 0 if i is None else int(self.counts[i, i])

    def pair_count(self, a, b) -> int:
        i, j = self.index.get(a), self.index.get(b)
        if i is None or j is None:
            return 0
        return int(self.counts[i, j])

    @property
    def term_window_counts(self):
        diag = self.counts.diagonal()
        return {t: int(diag[i]) for i, t in enumerate(self.terms)}

    @property
    def pair_window_counts(self):
        upper = sp.triu(self.counts, k=1).tocoo()
        return {(self.terms[i], self.terms[j]) if self.terms[i] <= self.terms[j]
                else (self.terms[j], self.terms[i]): int(c)
                for i, j, c in zip(upper.row, upper.col, upper.data)}


@dataclass
class CoherenceReport:
    topic_scores: list
    mean: float
    top_terms: list
    npmi_matrices: list
    missing_terms: list
    zero_norm_terms: list

    def to_dict(self):
        return {
            "mean_cv": self.mean,
            "topics": [
                {"topic": k, "cv": s, "top_terms": terms,
                 "npmi": [[round(float(x), 12) for x in row] for row in m]}
                for k, (s, terms, m) in enumerate(
                    zip(self.topic_scores, self.top_terms, self.npmi_matrices))
            ],
            "diagnostics": {"missing_terms": self.missing_terms,
                            "zero_norm_terms": self.zero_norm_terms},
        }


def _window_incidence(doc, n_terms, window_size):
    """Sparse (windows x terms) presence matrix for one token-id stream.

    ``doc`` holds term ids, with -1 for tokens outside the indexed term set
    (they still occupy positions).
    """
    n = len(doc)
    n_win = max(1, n - window_size + 1)
    doc = np.asarray(doc, dtype=np.int64)
    pos = np.nonzero(doc >= 0)[0]
    if pos.size == 0:
        return sp.csr_matrix((n_win, n_terms), dtype=np.int64), n_win
    if n_win == 1:
        cols = np.unique(doc[pos])
        return sp.csr_matrix((np.ones(cols.size, dtype=np.int64),
                              (np.zeros(cols.size, dtype=np.int64), cols)),
                             shape=(1, n_terms)), 1
    # token at p lies in windows max(0, p-w+1) .. min(p, n_win-1)
    local, ids = np.unique(doc[pos], return_inverse=True)
    starts = np.maximum(0, pos - window_size + 1)
    ends = np.minimum(pos, n_win - 1) + 1
    diff = np.zeros((local.size, n_win + 1), dtype=np.int64)
    np.add.at(diff, (ids, starts), 1)
    np.add.at(diff, (ids, ends), -1)
    present = np.cumsum(diff[:, :n_win], axis=1) > 0
    t_idx, w_idx = np.nonzero(present)
    return sp.csr_matrix((np.ones(t_idx.size, dtype=np.int64), (w_idx, local[t_idx])),
                         shape=(n_win, n_terms)), n_win


def build_index(reference_docs, window_size: int = DEFAULT_WINDOW,
                terms=None) -> CooccurrenceIndex:
    """Count Boolean windows of ``window_size`` tokens, stepped by one.

    ``reference_docs`` is a sequence of token lists. A document shorter than
    the window contributes one window covering all of it. ``terms`` restricts
    which terms are counted; by default every token type is.
    """
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    reference_docs = [list(d) for d in reference_docs]
    if not reference_docs or not any(reference_docs):
        raise DataError("reference corpus is empty")
    if terms is None:
        terms = sorted({t for d in reference_docs for t in d})
    terms = list(terms)
    lookup = {t: i for i, t in enumerate(terms)}
    blocks, window_count = [], 0
    for d in reference_docs:
        if not d:
            continue
        X, n_win = _window_incidence([lookup.get(t, -1) for t in d],
                                     len(terms), window_size)
        blocks.append(X)
        window_count += n_win
    X = sp.vstack(blocks).tocsr()
    counts = (X.T @ X).tocsr()
    counts.sort_indices()
    return CooccurrenceIndex(terms=terms, window_count=window_count,
                             counts=counts, window_size=window_size)


def npmi(index: CooccurrenceIndex, t_i, t_j, eps: float = SMOOTH) -> float:
    """Normalized PMI from window probabilities.

    Zero-count marginals give 0. A pair present in every window (which makes
    the ratio 0/0) is treated as perfect association, 1.
    """
    n = index.window_count
    c_i, c_j = index.count(t_i), index.count(t_j)
    if c_i == 0 or c_j == 0:
        return 0.0
    if t_i == t_j:
        return 1.0
    c_ij = index.pair_count(t_i, t_j)
    if c_ij == n:
        return 1.0
    p_i, p_j = c_i / n, c_j / n
    p_ij = c_ij / n + eps
    return math.log(p_ij / (p_i * p_j)) / -math.log(p_ij)


def npmi_matrix(index, terms):
    T = len(terms)
    out = np.empty((T, T))
    for i in range(T):
        for j in range(i, T):
            out[i, j] = out[j, i] = npmi(index, terms[i], terms[j])
    return out


def _cv_from_matrix(V):
    """Mean cosine of each row with the column sums; zero norms give 0."""
    total = V.sum(axis=0)
    norm_total = np.linalg.norm(total)
    cos = np.zeros(V.shape[0])
    zero = []
    for i, row in enumerate(V):
        nr = np.linalg.norm(row)
        if nr == 0 or norm_total == 0:
            zero.append(i)
            continue
        cos[i] = float(np.dot(row, total) / (nr * norm_total))
    return float(cos.mean()), zero


def cv_topic(index: CooccurrenceIndex, top_terms) -> float:
    """C_V of one topic given its top terms (T >= 2)."""
    terms = list(top_terms)
    if len(terms) < 2:
        raise ValueError("C_V needs at least two terms")
    score, _ = _cv_from_matrix(npmi_matrix(index, terms))
    return score


def score_model(index: CooccurrenceIndex, summaries) -> CoherenceReport:
    """Per-topic C_V and their arithmetic mean.

    ``summaries`` may hold TopicSummary objects or plain term lists.
    """
    if not summaries:
        raise ValueError("no topics to score")
    scores, tops, mats = [], [], []
    missing, zero_norm = set(), set()
    for s in summaries:
        terms = list(s.terms) if hasattr(s, "terms") else list(s)
        if len(terms) < 2:
            raise ValueError("C_V needs at least two terms")
        M = npmi_matrix(index, terms)
        score, zero = _cv_from_matrix(M)
        missing.update(t for t in terms if index.count(t) == 0)
        zero_norm.update(terms[i] for i in zero)
        scores.append(score)
        tops.append(terms)
        mats.append(M)
    if missing:
        logger.warning("%d top terms never occur in the reference corpus", len(missing))
    return CoherenceReport(topic_scores=scores, mean=float(np.mean(scores)),
                           top_terms=tops, npmi_matrices=mats,
                           missing_terms=sorted(missing), zero_norm_terms=sorted(zero_norm))


def read_reference(path, stopwords=frozenset()):
    """Tokenized documents from a JSONL corpus or a one-document-per-line text."""
    path = Path(path)
    cfg = PreprocessConfig(stopwords=frozenset(stopwords))
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().lstrip()
    if path.suffix in (".jsonl", ".json") or first.startswith("{"):
        return [tokenize(d.title + " " + d.description, cfg) for d in read_corpus(path)]
    with open(path, encoding="utf-8") as fh:
        return [tokenize(line, cfg) for line in fh]


def corpus_hash(docs) -> str:
    h = hashlib.sha256()
    for d in docs:
        h.update(" ".join(d).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def cached_index(reference_docs, window_size, terms, cache_dir=None) -> CooccurrenceIndex:
    """build_index with an on-disk cache keyed by corpus, window and terms."""
    if cache_dir is None:
        return build_index(reference_docs, window_size, terms)
    terms = list(terms)
    key = hashlib.sha256(
        (corpus_hash(reference_docs) + f"|{window_size}|" + "\n".join(terms)).encode()
    ).hexdigest()[:24]
    path = Path(cache_dir) / f"cooc-{key}-w{window_size}.npz"
    if path.exists():
        return load_index(path)
    index = build_index(reference_docs, window_size, terms)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    save_index(index, path)
    return index


def save_index(index: CooccurrenceIndex, path):
    C = index.counts.tocsr()
    with open(path, "wb") as fh:
        np.savez(fh, terms=np.array(index.terms, dtype=str),
                 window_count=index.window_count, window_size=index.window_size,
                 data=C.data, indices=C.indices, indptr=C.indptr,
                 shape=np.array(C.shape))


def load_index(path) -> CooccurrenceIndex:
    with np.load(path, allow_pickle=False) as z:
        counts = sp.csr_matrix((z["data"], z["indices"], z["indptr"]),
                               shape=tuple(z["shape"]))
        return CooccurrenceIndex(terms=[str(t) for t in z["terms"]],
                                 window_count=int(z["window_count"]),
                                 counts=counts, window_size=int(z["window_size"]))


def write_report(report: CoherenceReport, path):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
