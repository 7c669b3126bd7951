"""Rank fusion: reciprocal rank fusion and BM25 score fusion."""

from __future__ import annotations

from typing import Sequence

from qrw.errors import ValidationError
from qrw.index import Ranking

DEFAULT_K_RRF = 60.0


def _check_inputs(rankings: Sequence[Ranking]) -> str:
    if not rankings:
        raise ValidationError("fusion needs at least one ranking")
    qids = {r.qid for r in rankings}
    if len(qids) > 1:
        raise ValidationError(f"cannot fuse rankings of different queries: {sorted(qids)}")
    return rankings[0].qid


def rrf(rankings: Sequence[Ranking], k_rrf: float = DEFAULT_K_RRF, run_tag: str = "rrf", impute_missing: bool = False) -> Ranking:
    """Sum 1/(k_rrf + rank) over the lists that contain each document.

    With ``impute_missing`` a document absent from a list is scored as if it
    sat at rank ``len(list) + 1`` there.
    """
    qid = _check_inputs(rankings)
    if k_rrf <= 0:
        raise ValidationError("k_rrf must be positive")
    # sort inputs so the float summation order does not depend on list order
    per_doc: dict[str, list[float]] = {}
    universe = {e.doc_id for r in rankings for e in r.entries}
    for ranking in rankings:
        ranks = {e.doc_id: e.rank for e in ranking.entries}
        for doc_id in universe:
            if doc_id in ranks:
                per_doc.setdefault(doc_id, []).append(1.0 / (k_rrf + ranks[doc_id]))
            elif impute_missing:
                per_doc.setdefault(doc_id, []).append(1.0 / (k_rrf + len(ranking.entries) + 1))
    scores = {d: sum(sorted(parts)) for d, parts in per_doc.items()}
    return Ranking.from_scores(qid, scores, run_tag)


def score_fuse(rankings: Sequence[Ranking], agg: str = "sum", run_tag: str | None = None) -> Ranking:
    """Combine raw retrieval scores by ``sum`` or ``max``; absent documents contribute nothing."""
    qid = _check_inputs(rankings)
    if agg not in ("sum", "max"):
        raise ValidationError(f"agg must be 'sum' or 'max', got {agg!r}")
    per_doc: dict[str, list[float]] = {}
    for ranking in rankings:
        for e in ranking.entries:
            per_doc.setdefault(e.doc_id, []).append(e.score)
    if agg == "sum":
        scores = {d: sum(sorted(parts)) for d, parts in per_doc.items()}
    else:
        scores = {d: max(parts) for d, parts in per_doc.items()}
    return Ranking.from_scores(qid, scores, run_tag or f"score_{agg}")


def fuse(rankings: Sequence[Ranking], method: str = "rrf", k_rrf: float = DEFAULT_K_RRF, run_tag: str | None = None) -> Ranking:
    if method == "rrf":
        return rrf(rankings, k_rrf, run_tag or "rrf")
    if method == "score_sum":
        return score_fuse(rankings, "sum", run_tag)
    if method == "score_max":
        return score_fuse(rankings, "max", run_tag)
    raise ValidationError(f"unknown fusion method {method!r}")
