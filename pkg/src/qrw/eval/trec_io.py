"""Readers and writers for TREC run, qrels and topics files.

Formats::

    run     qid Q0 docid rank score tag     (score printed with 6 decimals)
    qrels   qid 0 docid grade
    topics  qid<TAB>title
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable

from qrw.errors import FormatError, ValidationError
from qrw.index import RankedDoc, Ranking

log = logging.getLogger(__name__)

Qrels = dict[str, dict[str, int]]
Run = dict[str, Ranking]
Topics = dict[str, str]


def format_run_line(qid: str, entry: RankedDoc, run_tag: str) -> str:
    return f"{qid} Q0 {entry.doc_id} {entry.rank} {entry.score:.6f} {run_tag}\n"


def write_run(rankings: Iterable[Ranking], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ranking in rankings:
            for entry in ranking.entries:
                fh.write(format_run_line(ranking.qid, entry, ranking.run_tag))


def run_to_text(rankings: Iterable[Ranking]) -> str:
    return "".join(format_run_line(r.qid, e, r.run_tag) for r in rankings for e in r.entries)


def read_run(path: str | Path) -> Run:
    """Parse a run file, enforcing consecutive ranks and unique doc_ids per query."""
    run: Run = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError("run line needs 6 fields: qid Q0 docid rank score tag", path, line_no, line)
            qid, _, doc_id, rank_s, score_s, tag = parts
            try:
                rank, score = int(rank_s), float(score_s)
            except ValueError:
                raise FormatError("rank must be an integer and score a number", path, line_no, line) from None
            ranking = run.get(qid)
            if ranking is None:
                ranking = run[qid] = Ranking(qid, [], tag)
            expected = len(ranking.entries) + 1
            if rank != expected:
                raise FormatError(f"rank gap: expected rank {expected}, got {rank}", path, line_no, line)
            if tag != ranking.run_tag:
                raise FormatError(f"run tag changes within query {qid}", path, line_no, line)
            if ranking.entries and score > ranking.entries[-1].score:
                raise FormatError("score increases with rank", path, line_no, line)
            if any(e.doc_id == doc_id for e in ranking.entries):
                raise FormatError(f"duplicate doc_id {doc_id} for query {qid}", path, line_no, line)
            ranking.entries.append(RankedDoc(doc_id, rank, score))
    return run


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid, judged in qrels.items():
            for doc_id, grade in judged.items():
                fh.write(f"{qid} 0 {doc_id} {grade}\n")


def read_qrels(path: str | Path) -> Qrels:
    """Parse qrels; negative grades (TREC's "judged, not relevant") are clamped to 0."""
    qrels: Qrels = {}
    clamped = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError("qrels line needs 4 fields: qid 0 docid grade", path, line_no, line)
            qid, _, doc_id, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError:
                raise FormatError("grade must be an integer", path, line_no, line) from None
            if grade < 0:
                clamped += 1
                grade = 0
            judged = qrels.setdefault(qid, {})
            if doc_id in judged:
                raise FormatError(f"duplicate judgment for {qid}/{doc_id}", path, line_no, line)
            judged[doc_id] = grade
    if clamped:
        log.warning("%s: clamped %d negative relevance grade(s) to 0", path, clamped)
    return qrels


def write_topics(topics: Topics, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid, title in topics.items():
            if "\t" in qid or "\t" in title or "\n" in title:
                raise ValidationError(f"topic {qid!r} contains a tab or newline")
            fh.write(f"{qid}\t{title}\n")


def read_topics(path: str | Path) -> Topics:
    topics: Topics = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise FormatError("topic line must be 'qid<TAB>title'", path, line_no, line)
            if parts[0] in topics:
                raise FormatError(f"duplicate topic id {parts[0]}", path, line_no, line)
            topics[parts[0]] = parts[1]
    return topics
