"""Synthetic corpora with planted topics, matching embeddings and entities.

Each topic block owns a disjoint set of pseudo-words whose vectors cluster
around a block centroid. Optional ambiguous words are shared by a pair of
blocks and sit between both centroids. Entities belong to one block; their
mentions are written into titles and annotated with high confidence.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import RawDocument, write_corpus
from .embeddings import ENTITY_PREFIX

_LETTERS = string.ascii_lowercase


def _code(n, width=2):
    out = []
    for _ in range(width):
        n, r = divmod(n, 26)
        out.append(_LETTERS[r])
    return "".join(reversed(out))


def block_term(block, i):
    return f"t{_code(block)}{_code(i)}"


def shared_term(i):
    return f"s{_code(i)}x"


def entity_id(block, j):
    return f"Entity_{_code(block).upper()}_{j}"


def entity_mention(block, j):
    return f"Nm{_code(block)}{_code(j)} Qv{_code(block)}"


@dataclass
class SynthSpec:
    n_docs: int = 200
    n_blocks: int = 3
    terms_per_block: int = 20
    doc_len: tuple = (6, 12)
    title_len: int = 3
    dim: int = 32
    word_noise: float = 0.35
    # words shared between block 0 and block 1
    n_shared: int = 0
    shared_rate: float = 0.0
    shared_noise: float = 0.1
    # fraction of documents carrying an entity mention of their block
    entity_rate: float = 0.0
    entities_per_block: int = 3
    entity_noise: float = 0.1
    low_confidence_rate: float = 0.0
    seed: int = 0


@dataclass
class SynthCorpus:
    documents: list
    annotations: list
    labels: list
    blocks: list                     # block index -> list of terms
    shared: list
    word_vectors: dict
    entity_vectors: dict
    spec: SynthSpec = field(default_factory=SynthSpec)

    @property
    def n_terms(self):
        return sum(len(b) for b in self.blocks) + len(self.shared)


def _unit(v):
    return v / np.linalg.norm(v)


def generate(spec: SynthSpec = SynthSpec()) -> SynthCorpus:
    rng = np.random.default_rng(spec.seed)
    blocks = [[block_term(b, i) for i in range(spec.terms_per_block)]
              for b in range(spec.n_blocks)]
    shared = [shared_term(i) for i in range(spec.n_shared)]

    centroids = np.linalg.qr(rng.standard_normal((spec.dim, spec.n_blocks)))[0].T
    words, ents = {}, {}
    for b, terms in enumerate(blocks):
        for t in terms:
            words[t] = _unit(centroids[b] + spec.word_noise * rng.standard_normal(spec.dim)
                             / np.sqrt(spec.dim))
        for j in range(spec.entities_per_block):
            ents[entity_id(b, j)] = _unit(
                centroids[b] + spec.entity_noise * rng.standard_normal(spec.dim)
                / np.sqrt(spec.dim))
    if shared:
        mid = _unit(centroids[0] + centroids[1])
        for t in shared:
            words[t] = _unit(mid + spec.shared_noise * rng.standard_normal(spec.dim)
                             / np.sqrt(spec.dim))

    docs, anns, labels = [], [], []
    lo, hi = spec.doc_len
    for d in range(spec.n_docs):
        b = d % spec.n_blocks
        n = int(rng.integers(lo, hi + 1))
        toks = []
        for _ in range(n):
            if shared and b < 2 and rng.random() < spec.shared_rate:
                toks.append(shared[int(rng.integers(len(shared)))])
            else:
                toks.append(blocks[b][int(rng.integers(len(blocks[b])))])
        title = " ".join(toks[:spec.title_len])
        description = " ".join(toks[spec.title_len:])
        doc_id = f"doc{d:05d}"
        if spec.entity_rate and rng.random() < spec.entity_rate:
            j = int(rng.integers(spec.entities_per_block))
            mention = entity_mention(b, j)
            title = f"{mention} {title}"
            conf = 0.95
            if spec.low_confidence_rate and rng.random() < spec.low_confidence_rate:
                conf = 0.5
            anns.append({"doc_id": doc_id, "field": "title", "start": 0,
                         "end": len(mention), "entity_id": entity_id(b, j),
                         "confidence": conf})
        docs.append(RawDocument(doc_id, title, description))
        labels.append(b)
    return SynthCorpus(documents=docs, annotations=anns, labels=labels,
                       blocks=blocks, shared=shared, word_vectors=words,
                       entity_vectors=ents, spec=spec)


def write_embeddings(path, word_vectors, entity_vectors, prefix=ENTITY_PREFIX):
    items = [(t, v) for t, v in sorted(word_vectors.items())]
    items += [(prefix + e, v) for e, v in sorted(entity_vectors.items())]
    dim = len(items[0][1])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(items)} {dim}\n")
        for t, v in items:
            fh.write(t + " " + " ".join(f"{x:.8f}" for x in v) + "\n")


def write_synth(corpus: SynthCorpus, directory) -> dict:
    """Write corpus.jsonl, annotations.jsonl, embeddings.txt and truth.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": directory / "corpus.jsonl",
        "annotations": directory / "annotations.jsonl",
        "embeddings": directory / "embeddings.txt",
    }
    write_corpus(paths["corpus"], corpus.documents)
    with open(paths["annotations"], "w", encoding="utf-8") as fh:
        for a in corpus.annotations:
            fh.write(json.dumps(a) + "\n")
    write_embeddings(paths["embeddings"], corpus.word_vectors, corpus.entity_vectors)
    truth = {"blocks": corpus.blocks, "shared": corpus.shared,
             "labels": corpus.labels}
    (directory / "truth.json").write_text(json.dumps(truth) + "\n")
    return {k: str(v) for k, v in paths.items()}


PRESETS = {
    "planted": SynthSpec(),
    # blocks 0 and 1 drown in loosely related shared words; entity mentions
    # are the reliable cue for which block a document belongs to
    "ambiguous": SynthSpec(terms_per_block=10, n_shared=40, shared_rate=0.6,
                           shared_noise=1.0, entity_rate=0.8),
}


def topic_purity(top_terms, blocks) -> float:
    """Share of a topic's terms that fall in its dominant planted block."""
    owner = {t: b for b, terms in enumerate(blocks) for t in terms}
    hits = np.bincount([owner[t] for t in top_terms if t in owner],
                       minlength=len(blocks))
    return float(hits.max() / len(top_terms)) if len(top_terms) else 0.0


# (alpha_word, alpha_ent) written into the generated config
PRESET_ALPHAS = {
    "planted": (0.4, 0.4),
    "ambiguous": (0.5, 0.8),
}
