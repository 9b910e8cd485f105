"""Corpus ingestion: raw documents, entity annotations, vocabulary and BoW.

Documents are show-level records (title + description). Entity annotations
come from an external linker as JSON lines; accepted mentions are masked out
of the word stream so that entity surface forms never become vocabulary
terms.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import AnnotationError, CorpusError

logger = logging.getLogger(__name__)

FIELDS = ("title", "description")


@dataclass(frozen=True)
class RawDocument:
    id: str
    title: str
    description: str


@dataclass(frozen=True)
class EntityAnnotation:
    doc_id: str
    field: str
    start: int
    end: int
    entity_id: str
    confidence: float


@dataclass(frozen=True)
class PreprocessConfig:
    stopwords: frozenset = frozenset()
    min_token_len: int = 2


@dataclass
class Vocabulary:
    terms: list
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.terms = list(self.terms)
        self.index = {t: i for i, t in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise CorpusError("duplicate vocabulary terms")

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.index

    def __iter__(self):
        return iter(self.terms)


@dataclass
class AnnotationSet:
    """Result of reading an annotation file against a corpus."""

    accepted: dict            # doc_id -> list of entity ids (mention order)
    masks: dict               # (doc_id, field) -> list of (start, end)
    n_rejected: int = 0
    n_unknown_doc: int = 0

    def entities_for(self, doc_id):
        return self.accepted.get(doc_id, [])


@dataclass
class Corpus:
    doc_ids: list
    documents: list           # token-index sequences (np.ndarray of int)
    vocabulary: Vocabulary
    entities: list            # per-document accepted entity ids
    bow: sp.csr_matrix
    n_dropped_short: int = 0
    n_dropped_empty: int = 0
    n_duplicates: int = 0
    title_lengths: list = field(default_factory=list)
    description_lengths: list = field(default_factory=list)

    @property
    def n_docs(self):
        return self.bow.shape[0]

    @property
    def entity_set(self):
        return sorted({e for ents in self.entities for e in ents})


def _read_word_list(path):
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


def load_word_list(path=None, default=None):
    """Read a one-token-per-line file, or a shipped default list by name."""
    if path is not None:
        return _read_word_list(path)
    if default is None:
        return frozenset()
    with resources.as_file(resources.files("neice") / "data" / default) as p:
        return _read_word_list(p)


def default_stopwords():
    return load_word_list(default="stopwords.txt")


def default_names():
    return load_word_list(default="names.txt")


def tokenize(text: str, config: PreprocessConfig = PreprocessConfig()) -> list:
    """Lowercase alphabetic tokens with stopwords and 1-char tokens removed.

    >>> tokenize("Star Trek: TOS!")
    ['star', 'trek', 'tos']
    """
    text = unicodedata.normalize("NFC", text).lower()
    tokens = "".join(c if c.isalpha() else " " for c in text).split()
    return [t for t in tokens
            if len(t) >= config.min_token_len and t not in config.stopwords]


def read_corpus(path) -> list:
    docs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = RawDocument(str(obj["id"]), obj.get("title") or "",
                                  obj.get("description") or "")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed document ({exc})")
            if doc.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def write_corpus(path, docs: Iterable[RawDocument]):
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps({"id": d.id, "title": d.title,
                                 "description": d.description}) + "\n")


def _parse_annotation(obj):
    if not isinstance(obj, dict):
        raise TypeError("not an object")
    ann = EntityAnnotation(
        doc_id=str(obj["doc_id"]),
        field=obj["field"],
        start=int(obj["start"]),
        end=int(obj["end"]),
        entity_id=str(obj["entity_id"]),
        confidence=float(obj["confidence"]),
    )
    if ann.field not in FIELDS:
        raise ValueError(f"field must be one of {FIELDS}, got {ann.field!r}")
    if not 0.0 <= ann.confidence <= 1.0:
        raise ValueError(f"confidence {ann.confidence} outside [0, 1]")
    if not 0 <= ann.start <= ann.end:
        raise ValueError(f"bad span [{ann.start}, {ann.end})")
    return ann


def ingest_annotations(path, documents: Sequence[RawDocument],
                       min_confidence: float = 0.9) -> AnnotationSet:
    """Read linker output and keep mentions with confidence > min_confidence.

    Unknown document ids are skipped and counted. A malformed line, or a
    span falling outside its field, is a hard error.
    """
    by_id = {d.id: d for d in documents}
    result = AnnotationSet(accepted={}, masks={})
    if path is None:
        return result
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                ann = _parse_annotation(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(f"malformed annotation ({exc})", line=lineno)
            doc = by_id.get(ann.doc_id)
            if doc is None:
                result.n_unknown_doc += 1
                continue
            if ann.end > len(getattr(doc, ann.field)):
                raise AnnotationError(
                    f"span [{ann.start}, {ann.end}) outside {ann.field} of "
                    f"document {ann.doc_id!r}", line=lineno)
            # strict: a score of exactly min_confidence is rejected
            if ann.confidence > min_confidence:
                result.accepted.setdefault(ann.doc_id, []).append(ann.entity_id)
                result.masks.setdefault((ann.doc_id, ann.field), []).append(
                    (ann.start, ann.end))
            else:
                result.n_rejected += 1
    if result.n_unknown_doc:
        logger.warning("%d annotations reference unknown documents",
                       result.n_unknown_doc)
    return result


def mask_spans(text: str, spans) -> str:
    if not spans:
        return text
    chars = list(text)
    for start, end in spans:
        chars[start:end] = " " * (end - start)
    return "".join(chars)


def build_vocabulary(tokenized_docs, min_term_freq: int = 5,
                     name_list=frozenset(), exclude=frozenset()) -> Vocabulary:
    """Sorted vocabulary of terms occurring at least ``min_term_freq`` times.

    ``exclude`` holds entity identifiers; any term equal to one (casefolded)
    is dropped so that words and entities stay disjoint.
    """
    if min_term_freq < 1:
        raise CorpusError("min_term_freq must be >= 1")
    counts = Counter(t for doc in tokenized_docs for t in doc)
    banned = set(name_list) | {e.casefold() for e in exclude}
    terms = sorted(t for t, c in counts.items()
                   if c >= min_term_freq and t not in banned)
    if not terms:
        raise CorpusError("vocabulary is empty after filtering")
    return Vocabulary(terms)


def build_bow(tokenized_docs, vocab: Vocabulary) -> sp.csr_matrix:
    rows, cols = [], []
    for i, doc in enumerate(tokenized_docs):
        for t in doc:
            j = vocab.index.get(t)
            if j is not None:
                rows.append(i)
                cols.append(j)
    data = np.ones(len(rows), dtype=np.int64)
    bow = sp.csr_matrix((data, (rows, cols)),
                        shape=(len(tokenized_docs), len(vocab)), dtype=np.int64)
    bow.sum_duplicates()
    bow.sort_indices()
    return bow


def ingest(documents: Sequence[RawDocument], annotations: AnnotationSet | None = None,
           stopwords=frozenset(), name_list=frozenset(), min_term_freq: int = 5,
           min_doc_tokens: int = 4, dedupe_titles: bool = False) -> Corpus:
    """Turn raw documents plus accepted annotations into a :class:`Corpus`.

    Documents whose title+description has fewer than ``min_doc_tokens``
    tokens are dropped first; after the vocabulary pass, documents with no
    in-vocabulary token and no accepted entity are dropped as well.
    """
    annotations = annotations or AnnotationSet(accepted={}, masks={})
    cfg = PreprocessConfig(stopwords=frozenset(stopwords))

    kept, n_short, n_dup = [], 0, 0
    seen_titles = set()
    for doc in documents:
        title_toks = tokenize(doc.title, cfg)
        desc_toks = tokenize(doc.description, cfg)
        if len(title_toks) + len(desc_toks) < min_doc_tokens:
            n_short += 1
            continue
        if dedupe_titles:
            key = doc.title.strip().casefold()
            if key in seen_titles:
                n_dup += 1
                continue
            seen_titles.add(key)
        streams = []
        for name in FIELDS:
            text = mask_spans(getattr(doc, name), annotations.masks.get((doc.id, name)))
            streams.extend(tokenize(text, cfg))
        kept.append((doc, streams, len(title_toks), len(desc_toks)))

    entity_ids = {e for doc, *_ in kept for e in annotations.entities_for(doc.id)}
    vocab = build_vocabulary([s for _, s, _, _ in kept], min_term_freq,
                             name_list=name_list, exclude=entity_ids)
    bow = build_bow([s for _, s, _, _ in kept], vocab)

    row_nnz = np.diff(bow.indptr)
    keep_rows = [i for i, (doc, *_) in enumerate(kept)
                 if row_nnz[i] > 0 or annotations.entities_for(doc.id)]
    n_empty = len(kept) - len(keep_rows)
    bow = bow[keep_rows]
    bow.sort_indices()
    selected = [kept[i] for i in keep_rows]
    documents_idx = [np.array([vocab.index[t] for t in s if t in vocab.index],
                              dtype=np.int64) for _, s, _, _ in selected]
    if not selected:
        raise CorpusError("no documents left after filtering")
    logger.info("ingested %d documents (%d short, %d empty, %d duplicate), |V|=%d",
                len(selected), n_short, n_empty, n_dup, len(vocab))
    return Corpus(
        doc_ids=[d.id for d, *_ in selected],
        documents=documents_idx,
        vocabulary=vocab,
        entities=[list(annotations.entities_for(d.id)) for d, *_ in selected],
        bow=bow,
        n_dropped_short=n_short,
        n_dropped_empty=n_empty,
        n_duplicates=n_dup,
        title_lengths=[n for _, _, n, _ in selected],
        description_lengths=[n for *_, n in selected],
    )
