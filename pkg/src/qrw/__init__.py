"""Ensemble zero-shot query reformulation with BM25 retrieval, rank fusion and TREC-style evaluation."""

__version__ = "0.1.0"
