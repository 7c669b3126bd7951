"""Evaluation: TREC file I/O, effectiveness measures and significance tests."""

from qrw.eval.measures import (
    Measure,
    MeasureReport,
    average_precision,
    evaluate,
    ndcg_at_k,
    precision_at_k,
    recall_at_k,
    reciprocal_rank,
)
from qrw.eval.stats import holm_bonferroni, paired_t_test, t_sf_two_sided
from qrw.eval.trec_io import read_qrels, read_run, read_topics, write_qrels, write_run, write_topics

__all__ = [
    "Measure",
    "MeasureReport",
    "average_precision",
    "evaluate",
    "holm_bonferroni",
    "ndcg_at_k",
    "paired_t_test",
    "precision_at_k",
    "read_qrels",
    "read_run",
    "read_topics",
    "recall_at_k",
    "reciprocal_rank",
    "t_sf_two_sided",
    "write_qrels",
    "write_run",
    "write_topics",
]
