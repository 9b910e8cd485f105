"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import synth
from .coherence import build_index, read_reference, score_model, write_report
from .corpus import default_stopwords, load_word_list
from .errors import ConfigError, NeiceError
from .factorization import nmf, save_model, top_words
from .pipeline import (StageCache, dataset_stats, load_config, run_pipeline, sweep,
                       _topics_json, _topics_tsv)
from .representation import read_triplets, write_triplets

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("-c", "--config", help="flat TOML config file or run manifest")
    p.add_argument("-s", "--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-o", "--output", help="output directory")


def _config(args):
    overrides = list(args.overrides)
    if getattr(args, "output", None):
        overrides.append(f"output={args.output}")
    return load_config(args.config, overrides)


def _write_vocab(path, terms):
    Path(path).write_text("".join(t + "\n" for t in terms), encoding="utf-8")


def _read_vocab(path):
    return [line.rstrip("\n") for line in open(path, encoding="utf-8") if line.strip()]


def cmd_config_show(args):
    cfg = _config(args)
    for key, value in dataclasses.asdict(cfg).items():
        print(f"{key} = {json.dumps(value)}")
    return EXIT_OK


def cmd_ingest(args):
    cfg = _config(args)
    if cfg.corpus is None:
        raise ConfigError("corpus path is required")
    corpus, anns = StageCache().ingested(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_vocab(out / "vocab.txt", corpus.vocabulary.terms)
    write_triplets(out / "bow.txt", corpus.bow)
    with open(out / "entities.jsonl", "w", encoding="utf-8") as fh:
        for doc_id, ents in zip(corpus.doc_ids, corpus.entities):
            fh.write(json.dumps({"doc_id": doc_id, "entities": ents}) + "\n")
    (out / "stats.json").write_text(json.dumps(dataset_stats(corpus, anns), indent=2) + "\n")
    print(f"{corpus.n_docs} documents, {len(corpus.vocabulary)} terms -> {out}")
    return EXIT_OK


def cmd_stats(args):
    cfg = _config(args)
    if cfg.corpus is None:
        raise ConfigError("corpus path is required")
    corpus, anns = StageCache().ingested(cfg)
    print(json.dumps(dataset_stats(corpus, anns), indent=2))
    return EXIT_OK


def cmd_represent(args):
    cfg = _config(args).validate()
    cache = StageCache()
    corpus, _ = cache.ingested(cfg)
    rep = cache.representation(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_triplets(out / "matrix.txt", rep.matrix)
    _write_vocab(out / "vocab.txt", corpus.vocabulary.terms)
    if args.debug and cfg.representation != "tfidf":
        parts = cache.cluwords_parts(cfg)
        write_triplets(out / "tf_star.txt", parts.tf_star)
        write_triplets(out / "mu.txt", parts.mu)
        write_triplets(out / "related_count.txt", parts.related_count)
    print(f"{rep.kind} matrix {rep.shape[0]}x{rep.shape[1]}, nnz={rep.matrix.nnz} -> {out}")
    return EXIT_OK


def cmd_factorize(args):
    cfg = _config(args)
    M = read_triplets(args.matrix)
    terms = _read_vocab(args.vocab)
    if len(terms) != M.shape[1]:
        raise ConfigError("vocabulary size does not match the matrix")
    try:
        model = nmf(M, cfg.k, max_iter=cfg.max_iter, tol=cfg.tol, seed=cfg.seed,
                    init=cfg.init)
    except ValueError as exc:
        raise ConfigError(str(exc))
    summaries = top_words(model, terms, cfg.top_n)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model")
    (out / "topics.tsv").write_text(_topics_tsv(summaries), encoding="utf-8")
    (out / "topics.json").write_text(_topics_json(summaries), encoding="utf-8")
    print(f"K={cfg.k}: {model.n_iter} iterations, loss {model.final_loss:.6g} -> {out}")
    return EXIT_OK


def _read_topics(path):
    path = Path(path)
    if path.suffix == ".json":
        return [t["terms"] for t in json.loads(path.read_text())]
    return [line.rstrip("\n").split("\t") for line in open(path, encoding="utf-8")
            if line.strip()]


def cmd_score(args):
    cfg = _config(args)
    ref = args.reference or cfg.reference or cfg.corpus
    if ref is None:
        raise ConfigError("a reference corpus is required")
    stop = load_word_list(cfg.stopwords) if cfg.stopwords else default_stopwords()
    topics = _read_topics(args.topics)
    terms = sorted({t for topic in topics for t in topic})
    index = build_index(read_reference(ref, stop), cfg.window_size, terms)
    report = score_model(index, topics)
    out = Path(args.report or Path(cfg.output) / "coherence.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out)
    print(f"mean C_V = {report.mean:.4f} over {len(topics)} topics -> {out}")
    return EXIT_OK


def cmd_run(args):
    cfg = _config(args)
    record = run_pipeline(cfg)
    print(f"{cfg.representation} K={cfg.k}: mean C_V = {record.mean_cv:.4f} -> {cfg.output}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    records = sweep(cfg)
    print((Path(cfg.output) / "comparison.tsv").read_text(), end="")
    failed = [r for r in records if r.error]
    if failed:
        print(f"{len(failed)} of {len(records)} grid points failed", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args):
    spec = dataclasses.replace(synth.PRESETS[args.preset], seed=args.seed)
    if args.docs:
        spec = dataclasses.replace(spec, n_docs=args.docs)
    corpus = synth.generate(spec)
    out = Path(args.output or "synth").resolve()
    paths = synth.write_synth(corpus, out)
    alpha_word, alpha_ent = synth.PRESET_ALPHAS[args.preset]
    lines = [f'corpus = "{paths["corpus"]}"',
             f'annotations = "{paths["annotations"]}"',
             f'embeddings = "{paths["embeddings"]}"',
             f"k = {spec.n_blocks}",
             f"alpha_word = {alpha_word}",
             f"alpha_ent = {alpha_ent}",
             f"k_grid = [{spec.n_blocks}]",
             f'output = "{out / "run"}"']
    (out / "config.toml").write_text("\n".join(lines) + "\n")
    print(f"{len(corpus.documents)} documents, {len(corpus.annotations)} annotations -> {out}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="neice", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("config", help="configuration utilities")
    csub = p.add_subparsers(dest="config_command", required=True, parser_class=_Parser)
    show = csub.add_parser("show", help="print every effective config value")
    _common(show)
    show.set_defaults(func=cmd_config_show)

    for name, func, text in [
        ("ingest", cmd_ingest, "tokenize, filter and write vocabulary + BoW"),
        ("stats", cmd_stats, "print dataset statistics"),
        ("run", cmd_run, "run the full pipeline for one configuration"),
        ("sweep", cmd_sweep, "run a grid over alpha_word, alpha_ent and K"),
    ]:
        p = sub.add_parser(name, help=text)
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("represent", help="build the weighted document-term matrix")
    _common(p)
    p.add_argument("--debug", action="store_true", help="also dump AC, mu and |V^{d,t}|")
    p.set_defaults(func=cmd_represent)

    p = sub.add_parser("factorize", help="NMF of a triplet matrix")
    _common(p)
    p.add_argument("--matrix", required=True)
    p.add_argument("--vocab", required=True)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("score", help="C_V coherence of topic lists")
    _common(p)
    p.add_argument("--topics", required=True, help="topics.json or topics.tsv")
    p.add_argument("--reference", help="reference corpus (JSONL or plain text)")
    p.add_argument("--report", help="output JSON path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="generate a synthetic planted-topic corpus")
    p.add_argument("-o", "--output")
    p.add_argument("--preset", choices=sorted(synth.PRESETS), default="planted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--docs", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NeiceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
