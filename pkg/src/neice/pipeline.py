"""End-to-end orchestration: config, cached stages, single runs and sweeps."""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import logging
import shutil
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coherence import DEFAULT_WINDOW, cached_index, read_reference, score_model
from .corpus import (default_names, default_stopwords, ingest, ingest_annotations,
                     load_word_list, read_corpus)
from .embeddings import (ENTITY_PREFIX, build_similarity_matrix, load_embeddings,
                         related_word_indices)
from .errors import ConfigError, NeiceError
from .factorization import nmf, save_model, top_words
from .representation import (KINDS, cluwords, cluwords_parts, neice, normalize_rows,
                             tf_idf)

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    corpus: str | None = None
    annotations: str | None = None
    embeddings: str | None = None
    stopwords: str | None = None
    names: str | None = None
    reference: str | None = None
    output: str = "out"
    cache_dir: str | None = None

    representation: str = "neice"
    alpha_word: float = 0.4
    alpha_ent: float = 0.4
    k: int = 20
    top_n: int = 10
    min_term_freq: int = 5
    min_confidence: float = 0.9
    min_doc_tokens: int = 4
    dedupe_titles: bool = False
    use_default_names: bool = True
    entity_prefix: str = ENTITY_PREFIX
    prefixed_entities: bool = True
    normalize: bool = False

    max_iter: int = 300
    tol: float = 1e-5
    seed: int = 0
    init: str = "nndsvda"
    window_size: int = DEFAULT_WINDOW

    k_grid: list = field(default_factory=lambda: [20, 50, 100, 200])
    alpha_word_grid: list = field(default_factory=lambda: [0.2, 0.3, 0.4, 0.5])
    alpha_ent_grid: list = field(default_factory=lambda: [0.3, 0.4])
    jobs: int = 1

    def validate(self):
        if self.representation not in KINDS:
            raise ConfigError(f"representation must be one of {KINDS}")
        for name in ("alpha_word", "alpha_ent"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1)")
        for v in list(self.alpha_word_grid) + list(self.alpha_ent_grid):
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"grid value {v} outside [0, 1)")
        if self.k < 2 or any(k < 2 for k in self.k_grid):
            raise ConfigError("number of topics must be >= 2")
        if self.top_n < 2:
            raise ConfigError("top_n must be >= 2")
        if self.min_term_freq < 1:
            raise ConfigError("min_term_freq must be >= 1")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ConfigError("min_confidence outside [0, 1]")
        if self.max_iter < 1 or self.window_size < 1 or self.jobs < 1:
            raise ConfigError("max_iter, window_size and jobs must be >= 1")
        if not (self.k_grid and self.alpha_word_grid and self.alpha_ent_grid):
            raise ConfigError("sweep grids must be non-empty")
        if self.corpus is None:
            raise ConfigError("corpus path is required")
        if self.representation != "tfidf" and self.embeddings is None:
            raise ConfigError(f"{self.representation} needs an embeddings path")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def coerce_value(cfg_field, raw: str):
    """Parse a ``--set key=value`` string into the field's type."""
    default = cfg_field.default
    if cfg_field.default_factory is not dataclasses.MISSING:
        default = cfg_field.default_factory()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = [x for x in raw.replace(",", " ").split() if x]
            cast = type(default[0]) if default else float
            return [cast(x) for x in items]
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {cfg_field.name}")
    if raw.lower() in ("", "none", "null"):
        return None
    return raw


def apply_overrides(config: PipelineConfig, pairs) -> PipelineConfig:
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    changes = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        changes[key] = coerce_value(fields[key], raw.strip())
    return config.replace(**changes)


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Flat TOML file (or a run manifest JSON) plus key=value overrides."""
    data = {}
    if path is not None:
        path = Path(path)
        try:
            if path.suffix == ".json":
                data = json.loads(path.read_text())
                data = data.get("config", data)
            else:
                import tomli
                with open(path, "rb") as fh:
                    data = tomli.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        if any(isinstance(v, dict) for v in data.values()):
            raise ConfigError("config must be flat (no tables)")
    return apply_overrides(PipelineConfig.from_dict(data), overrides)


def file_hash(path) -> str | None:
    if path is None:
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dataset_stats(corpus, annotations=None) -> dict:
    """Dataset summary over the ingested documents."""
    n_mentions = sum(len(e) for e in corpus.entities)
    return {
        "n_docs": corpus.n_docs,
        "vocab_size": len(corpus.vocabulary),
        "ne_mentions": n_mentions,
        "docs_with_ne": sum(1 for e in corpus.entities if e),
        "mean_words_title": float(np.mean(corpus.title_lengths)) if corpus.title_lengths else 0.0,
        "mean_words_description": (float(np.mean(corpus.description_lengths))
                                   if corpus.description_lengths else 0.0),
        "dropped_short": corpus.n_dropped_short,
        "dropped_empty": corpus.n_dropped_empty,
        "rejected_annotations": annotations.n_rejected if annotations else 0,
        "unknown_doc_annotations": annotations.n_unknown_doc if annotations else 0,
    }


class StageCache:
    """Memoizes stage outputs by a key derived from their inputs.

    Keys hash the input file contents and the parameters a stage actually
    depends on, so the similarity matrix is shared across alpha_ent values
    and the entity-word sets across alpha_word values.
    """

    def __init__(self):
        self._store = {}
        self._lock = threading.RLock()
        self._hashes = {}

    def _hash(self, path):
        if path is None:
            return None
        with self._lock:
            if path not in self._hashes:
                self._hashes[path] = file_hash(path)
            return self._hashes[path]

    def get(self, key, build):
        with self._lock:
            if key not in self._store:
                self._store[key] = build()
            return self._store[key]

    def inputs_key(self, config):
        return (self._hash(config.corpus), self._hash(config.annotations),
                self._hash(config.stopwords), self._hash(config.names),
                config.use_default_names, config.min_term_freq, config.min_confidence,
                config.min_doc_tokens, config.dedupe_titles)

    def stopwords(self, config):
        return self.get(("stopwords", self._hash(config.stopwords)),
                        lambda: load_word_list(config.stopwords) if config.stopwords
                        else default_stopwords())

    def ingested(self, config):
        def build():
            docs = read_corpus(config.corpus)
            anns = ingest_annotations(config.annotations, docs, config.min_confidence)
            names = load_word_list(config.names) if config.names else (
                default_names() if config.use_default_names else frozenset())
            corpus = ingest(docs, anns, stopwords=self.stopwords(config), name_list=names,
                            min_term_freq=config.min_term_freq,
                            min_doc_tokens=config.min_doc_tokens,
                            dedupe_titles=config.dedupe_titles)
            return corpus, anns
        return self.get(("ingest",) + self.inputs_key(config), build)

    def embeddings(self, config):
        corpus, _ = self.ingested(config)
        key = ("emb", self._hash(config.embeddings), config.entity_prefix,
               config.prefixed_entities) + self.inputs_key(config)
        return self.get(key, lambda: load_embeddings(
            config.embeddings, corpus.vocabulary, corpus.entity_set,
            entity_prefix=config.entity_prefix,
            prefixed_entities=config.prefixed_entities))

    def cluwords_parts(self, config):
        corpus, _ = self.ingested(config)

        def build():
            table = self.embeddings(config)
            C = build_similarity_matrix(table, corpus.vocabulary, config.alpha_word)
            return cluwords_parts(corpus.bow, C.matrix)
        key = ("parts", self._hash(config.embeddings), config.alpha_word,
               config.entity_prefix, config.prefixed_entities) + self.inputs_key(config)
        return self.get(key, build)

    def related(self, config):
        corpus, _ = self.ingested(config)
        key = ("related", self._hash(config.embeddings), config.alpha_ent,
               config.entity_prefix, config.prefixed_entities) + self.inputs_key(config)
        return self.get(key, lambda: related_word_indices(
            self.embeddings(config), corpus.vocabulary, corpus.entity_set,
            config.alpha_ent))

    def representation(self, config):
        corpus, _ = self.ingested(config)
        kind = config.representation
        key = ("rep", kind, config.normalize,
               config.alpha_word if kind != "tfidf" else None,
               config.alpha_ent if kind == "neice" else None,
               self._hash(config.embeddings) if kind != "tfidf" else None,
               config.entity_prefix, config.prefixed_entities) + self.inputs_key(config)

        def build():
            if kind == "tfidf":
                rep = tf_idf(corpus.bow)
            elif kind == "cluwords":
                rep = cluwords(corpus.bow, None, parts=self.cluwords_parts(config))
            else:
                rep = neice(corpus.bow, None, corpus.entities, self.related(config),
                            parts=self.cluwords_parts(config))
            rep.params.update(alpha_word=config.alpha_word, alpha_ent=config.alpha_ent)
            return normalize_rows(rep) if config.normalize else rep
        return self.get(key, build)

    def reference(self, config):
        ref = config.reference or config.corpus
        return self.get(("ref", self._hash(ref), self._hash(config.stopwords)),
                        lambda: read_reference(ref, self.stopwords(config)))

    def index(self, config):
        corpus, _ = self.ingested(config)
        ref = config.reference or config.corpus
        key = ("index", self._hash(ref), config.window_size) + self.inputs_key(config)
        return self.get(key, lambda: cached_index(
            self.reference(config), config.window_size, corpus.vocabulary.terms,
            config.cache_dir))


@dataclass
class RunRecord:
    config: dict
    alpha_word: float
    alpha_ent: float
    k: int
    topics: list
    coherence: dict
    stats: dict
    timings: dict
    error: str | None = None

    @property
    def mean_cv(self):
        return self.coherence.get("mean_cv") if self.coherence else None


def _topics_tsv(summaries):
    return "".join("\t".join(s.terms) + "\n" for s in summaries)


def _topics_json(summaries):
    return json.dumps([{"topic": s.topic_id, "terms": s.terms,
                        "weights": [w for _, w in s.top_terms]} for s in summaries],
                      indent=2) + "\n"


def _write_outputs(directory, config, model, summaries, report, stats, timings):
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "topics.tsv").write_text(_topics_tsv(summaries), encoding="utf-8")
    (directory / "topics.json").write_text(_topics_json(summaries), encoding="utf-8")
    (directory / "coherence.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (directory / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    save_model(model, directory / "model")
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "seed": config.seed,
        "inputs": {name: file_hash(getattr(config, name))
                   for name in ("corpus", "annotations", "embeddings", "stopwords",
                                "names", "reference")},
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (directory / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")


class StageError(NeiceError):
    def __init__(self, stage, cause):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)


def _stage(name, timings, fn):
    t0 = time.perf_counter()
    try:
        return fn()
    except StageError:
        raise
    except (NeiceError, ValueError, OSError) as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - t0


def _execute(config, cache, write_to=None) -> RunRecord:
    timings = {}
    corpus, anns = _stage("ingest", timings, lambda: cache.ingested(config))
    rep = _stage("represent", timings, lambda: cache.representation(config))

    def factorize():
        model = nmf(rep.matrix, config.k, max_iter=config.max_iter, tol=config.tol,
                    seed=config.seed, init=config.init)
        return model, top_words(model, corpus.vocabulary.terms, config.top_n)
    model, summaries = _stage("factorize", timings, factorize)
    report = _stage("score", timings,
                    lambda: score_model(cache.index(config), summaries))

    stats = dataset_stats(corpus, anns)
    if write_to is not None:
        _stage("write", timings, lambda: _write_outputs(
            Path(write_to), config, model, summaries, report, stats, timings))
    return RunRecord(config=config.to_dict(), alpha_word=config.alpha_word,
                     alpha_ent=config.alpha_ent, k=config.k,
                     topics=[s.terms for s in summaries], coherence=report.to_dict(),
                     stats=stats, timings=timings)


def _atomic_output(target: Path, work):
    """Run ``work(tmpdir)`` and move the result into place, or clean up."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    try:
        result = work(tmp)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    tmp.rename(target)
    return result


def run_pipeline(config: PipelineConfig, cache: StageCache | None = None,
                 write: bool = True) -> RunRecord:
    """Ingest, represent, factorize, extract top words and score one point."""
    config.validate()
    cache = cache or StageCache()
    if not write:
        return _execute(config, cache)
    return _atomic_output(Path(config.output), lambda tmp: _execute(config, cache, tmp))


def grid_points(config: PipelineConfig):
    kind = config.representation
    word_grid = config.alpha_word_grid if kind != "tfidf" else [config.alpha_word]
    ent_grid = config.alpha_ent_grid if kind == "neice" else [config.alpha_ent]
    return [(aw, ae, k) for aw, ae in itertools.product(word_grid, ent_grid)
            for k in config.k_grid]


def point_name(aw, ae, k):
    return f"aw{aw:g}_ae{ae:g}_k{k}"


def sweep(config: PipelineConfig, write: bool = True) -> list:
    """One run per grid point; shared stages are built once.

    A failing point is recorded with its error and the sweep continues.
    """
    config.validate()
    cache = StageCache()
    points = grid_points(config)
    out_root = Path(config.output)

    # warm the shared stages in order so parallel jobs only read them
    cache.ingested(config)
    cache.index(config)
    for aw, ae in dict.fromkeys((aw, ae) for aw, ae, _ in points):
        try:
            cache.representation(config.replace(alpha_word=aw, alpha_ent=ae))
        except NeiceError:
            pass

    def job(point):
        aw, ae, k = point
        cfg = config.replace(alpha_word=aw, alpha_ent=ae, k=k,
                             output=str(out_root / point_name(aw, ae, k)))
        try:
            return run_pipeline(cfg, cache, write=write)
        except (NeiceError, ValueError) as exc:
            logger.error("grid point %s failed: %s", point_name(aw, ae, k), exc)
            return RunRecord(config=cfg.to_dict(), alpha_word=aw, alpha_ent=ae, k=k,
                             topics=[], coherence={}, stats={}, timings={},
                             error=str(exc))

    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        records = list(pool.map(job, points))
    if write:
        out_root.mkdir(parents=True, exist_ok=True)
        (out_root / "comparison.tsv").write_text(comparison_table(records))
        summary = {"points": [{"alpha_word": r.alpha_word, "alpha_ent": r.alpha_ent,
                               "k": r.k, "mean_cv": r.mean_cv, "error": r.error}
                              for r in records],
                   "best": best_alphas(records)}
        (out_root / "sweep.json").write_text(json.dumps(summary, indent=2) + "\n")
    return records


def comparison_table(records) -> str:
    """Rows are (alpha_word, alpha_ent) pairs, columns the K values."""
    ks = sorted({r.k for r in records})
    pairs = list(dict.fromkeys((r.alpha_word, r.alpha_ent) for r in records))
    cell = {(r.alpha_word, r.alpha_ent, r.k): r for r in records}
    lines = ["alpha_word\talpha_ent\t" + "\t".join(f"K={k}" for k in ks)]
    for aw, ae in pairs:
        vals = []
        for k in ks:
            r = cell.get((aw, ae, k))
            vals.append("ERR" if r is None or r.error else f"{100 * r.mean_cv:.1f}")
        lines.append(f"{aw:g}\t{ae:g}\t" + "\t".join(vals))
    return "\n".join(lines) + "\n"


def best_alphas(records) -> dict:
    """The (alpha_word, alpha_ent) pair with the highest C_V averaged over K."""
    scores = {}
    for r in records:
        if r.error is None:
            scores.setdefault((r.alpha_word, r.alpha_ent), []).append(r.mean_cv)
    if not scores:
        return {}
    (aw, ae), vals = max(scores.items(), key=lambda kv: (np.mean(kv[1]), -kv[0][0], -kv[0][1]))
    return {"alpha_word": aw, "alpha_ent": ae, "mean_cv": float(np.mean(vals))}
