"""Short-text topic modeling with CluWords and entity-informed NEiCE weighting."""

__version__ = "0.1.0"

from .coherence import CoherenceReport, CooccurrenceIndex, build_index, cv_topic, npmi, score_model
from .corpus import Corpus, RawDocument, Vocabulary, build_bow, build_vocabulary, ingest, tokenize
from .embeddings import EmbeddingTable, SimilarityMatrix, build_similarity_matrix, cosine, load_embeddings
from .factorization import TopicModel, TopicSummary, nmf, top_words
from .representation import WeightedDocTermMatrix, cluwords, neice, tf_idf

__all__ = [
    "CoherenceReport", "CooccurrenceIndex", "Corpus", "EmbeddingTable", "RawDocument",
    "SimilarityMatrix", "TopicModel", "TopicSummary", "Vocabulary", "WeightedDocTermMatrix",
    "build_bow", "build_index", "build_similarity_matrix", "build_vocabulary", "cluwords",
    "cosine", "cv_topic", "ingest", "load_embeddings", "neice", "nmf", "npmi",
    "score_model", "tf_idf", "tokenize", "top_words",
]
