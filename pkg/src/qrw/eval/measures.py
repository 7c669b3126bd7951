"""Graded-relevance effectiveness measures.

Every per-query function takes the ranked doc_ids (or a Ranking) and the
judgments for that one query, and returns ``None`` when the measure is
undefined for the query (no relevant documents at the threshold). Undefined
queries are left out of the mean, as trec_eval does.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

from qrw.errors import ValidationError
from qrw.index import Ranking

MEASURE_RE = re.compile(r"^(ndcg|p|recall|map|rr)(?:@(\d+))?(?:\(rel=(\d+)\))?$")


def _ids(ranking) -> Sequence[str]:
    return ranking.doc_ids if isinstance(ranking, Ranking) else ranking


def _gain(grade: int, gain: str) -> float:
    if gain == "linear":
        return float(grade)
    if gain == "exponential":
        return 2.0**grade - 1.0
    raise ValidationError(f"unknown gain {gain!r}")


def ndcg_at_k(ranking, judged: dict[str, int], k: int, gain: str = "linear") -> float | None:
    if k < 1:
        raise ValidationError("k must be >= 1")
    ideal = sorted((_gain(g, gain) for g in judged.values() if g > 0), reverse=True)[:k]
    if not ideal:
        return None
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    dcg = 0.0
    for i, doc_id in enumerate(_ids(ranking)[:k]):
        grade = judged.get(doc_id, 0)
        if grade > 0:
            dcg += _gain(grade, gain) / math.log2(i + 2)
    return dcg / idcg


def _n_relevant(judged, threshold):
    return sum(1 for g in judged.values() if g >= threshold)


def precision_at_k(ranking, judged: dict[str, int], k: int, threshold: int = 1) -> float | None:
    if k < 1 or threshold < 1:
        raise ValidationError("k and threshold must be >= 1")
    if _n_relevant(judged, threshold) == 0:
        return None
    hits = sum(1 for d in _ids(ranking)[:k] if judged.get(d, 0) >= threshold)
    return hits / k


def recall_at_k(ranking, judged: dict[str, int], k: int, threshold: int = 1) -> float | None:
    if k < 1 or threshold < 1:
        raise ValidationError("k and threshold must be >= 1")
    n_rel = _n_relevant(judged, threshold)
    if n_rel == 0:
        return None
    hits = sum(1 for d in _ids(ranking)[:k] if judged.get(d, 0) >= threshold)
    return hits / n_rel


def average_precision(ranking, judged: dict[str, int], threshold: int = 1) -> float | None:
    if threshold < 1:
        raise ValidationError("threshold must be >= 1")
    n_rel = _n_relevant(judged, threshold)
    if n_rel == 0:
        return None
    hits, total = 0, 0.0
    for i, doc_id in enumerate(_ids(ranking), 1):
        if judged.get(doc_id, 0) >= threshold:
            hits += 1
            total += hits / i
    return total / n_rel


def reciprocal_rank(ranking, judged: dict[str, int], threshold: int = 1) -> float | None:
    if threshold < 1:
        raise ValidationError("threshold must be >= 1")
    if _n_relevant(judged, threshold) == 0:
        return None
    for i, doc_id in enumerate(_ids(ranking), 1):
        if judged.get(doc_id, 0) >= threshold:
            return 1.0 / i
    return 0.0


@dataclass(frozen=True)
class Measure:
    """A parsed measure name such as ``ndcg@10``, ``map`` or ``rr(rel=2)``."""

    kind: str
    cutoff: int | None = None
    threshold: int = 1

    @classmethod
    def parse(cls, name: str) -> "Measure":
        m = MEASURE_RE.match(name.strip().lower())
        if not m:
            raise ValidationError(f"unknown measure {name!r}")
        kind, cutoff, threshold = m.group(1), m.group(2), m.group(3)
        if kind in ("ndcg", "p", "recall") and cutoff is None:
            raise ValidationError(f"measure {name!r} needs a cutoff, e.g. {kind}@10")
        if kind in ("map", "rr") and cutoff is not None:
            raise ValidationError(f"measure {name!r} does not take a cutoff")
        if kind == "ndcg" and threshold is not None:
            raise ValidationError("ndcg uses graded gains, not a threshold")
        cutoff = int(cutoff) if cutoff is not None else None
        threshold = int(threshold) if threshold is not None else 1
        if (cutoff is not None and cutoff < 1) or threshold < 1:
            raise ValidationError(f"measure {name!r}: cutoff and threshold must be >= 1")
        return cls(kind, cutoff, threshold)

    @property
    def name(self) -> str:
        base = self.kind + (f"@{self.cutoff}" if self.cutoff else "")
        if self.kind != "ndcg" and (self.threshold != 1 or self.kind == "rr"):
            base += f"(rel={self.threshold})"
        return base

    @property
    def label(self) -> str:
        """Column label for aggregate tables; mean RR is reported as MRR."""
        names = {"ndcg": "nDCG", "p": "P", "recall": "R", "map": "MAP", "rr": "MRR"}
        base = names[self.kind] + (f"@{self.cutoff}" if self.cutoff else "")
        if self.kind == "rr" or (self.kind != "ndcg" and self.threshold != 1):
            base += f"(rel={self.threshold})"
        return base

    def __call__(self, ranking, judged: dict[str, int], gain: str = "linear") -> float | None:
        if self.kind == "ndcg":
            return ndcg_at_k(ranking, judged, self.cutoff, gain)
        if self.kind == "p":
            return precision_at_k(ranking, judged, self.cutoff, self.threshold)
        if self.kind == "recall":
            return recall_at_k(ranking, judged, self.cutoff, self.threshold)
        if self.kind == "map":
            return average_precision(ranking, judged, self.threshold)
        return reciprocal_rank(ranking, judged, self.threshold)


@dataclass
class MeasureReport:
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    aggregate: dict[str, float] = field(default_factory=dict)
    excluded: dict[str, list[str]] = field(default_factory=dict)
    measures: list[Measure] = field(default_factory=list)

    def values(self, measure: str, qids: Sequence[str]) -> list[float]:
        per = self.per_query[measure]
        return [per[q] for q in qids]


def evaluate(run: dict[str, Ranking], qrels: dict[str, dict[str, int]], measures, qids=None, gain: str = "linear") -> MeasureReport:
    """Evaluate ``run`` on ``qids`` (default: every judged query).

    A query missing from the run counts as an empty ranking.
    """
    parsed = [m if isinstance(m, Measure) else Measure.parse(m) for m in measures]
    if qids is None:
        qids = list(qrels)
    report = MeasureReport(measures=parsed)
    for measure in parsed:
        per, excluded = {}, []
        for qid in qids:
            ranking = run.get(qid)
            value = measure(ranking.doc_ids if ranking else [], qrels.get(qid, {}), gain)
            if value is None:
                excluded.append(qid)
            else:
                per[qid] = value
        report.per_query[measure.name] = per
        report.excluded[measure.name] = excluded
        report.aggregate[measure.name] = math.fsum(per.values()) / len(per) if per else 0.0
    return report
