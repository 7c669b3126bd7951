"""GenQREnsemble / GenQRFusion and their relevance-feedback variants, from query to ranking."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from qrw.errors import EmptyReformulationError, FeedbackError, ValidationError
from qrw.fusion import DEFAULT_K_RRF, fuse
from qrw.index import BM25Params, Document, InvertedIndex, Ranking, WeightedQuery, search
from qrw.prompts import STYLES, InstructionSet, apply_filter, build_qr_prompt, parse_keywords

METHODS = ("bm25", "genqr", "ensemble", "fusion")
FEEDBACK = ("none", "prf", "oracle")
FUSION_METHODS = ("rrf", "score_sum", "score_max")


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "ensemble"
    n_instructions: int = 10
    beta: float = 1.0
    feedback: str = "none"
    feedback_depth: int = 5
    fusion_method: str = "rrf"
    k_rrf: float = DEFAULT_K_RRF
    filter: bool = False
    keyword_mode: str = "comma"
    style: str = "keyword_plain"
    context_position: str = "prepend"
    dedup_keywords: bool = False
    fallback_raw: bool = False
    k: int = 1000

    def __post_init__(self):
        def bad(name, msg):
            raise ValidationError(f"{name}: {msg}")

        if self.method not in METHODS:
            bad("method", f"must be one of {METHODS}, got {self.method!r}")
        if self.n_instructions < 1:
            bad("n_instructions", f"must be >= 1, got {self.n_instructions}")
        if not 0.0 <= self.beta <= 1.0:
            bad("beta", f"must be in [0, 1], got {self.beta}")
        if self.feedback not in FEEDBACK:
            bad("feedback", f"must be one of {FEEDBACK}, got {self.feedback!r}")
        if self.feedback != "none" and self.feedback_depth < 1:
            bad("feedback_depth", f"must be >= 1 when feedback is {self.feedback!r}, got {self.feedback_depth}")
        if self.feedback_depth < 0:
            bad("feedback_depth", f"must be >= 0, got {self.feedback_depth}")
        if self.fusion_method not in FUSION_METHODS:
            bad("fusion_method", f"must be one of {FUSION_METHODS}, got {self.fusion_method!r}")
        if self.k_rrf <= 0:
            bad("k_rrf", f"must be > 0, got {self.k_rrf}")
        if self.keyword_mode not in ("comma", "whitespace"):
            bad("keyword_mode", f"must be 'comma' or 'whitespace', got {self.keyword_mode!r}")
        if self.style not in STYLES:
            bad("style", f"must be one of {STYLES}, got {self.style!r}")
        if self.context_position not in ("prepend", "append"):
            bad("context_position", f"must be 'prepend' or 'append', got {self.context_position!r}")
        if self.k < 1:
            bad("k", f"must be >= 1, got {self.k}")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class ReformulationRecord:
    qid: str
    instruction_index: int
    raw_generation: str
    keywords: list[str]
    filtered: list[str] | None = None

    @property
    def final_keywords(self) -> list[str]:
        return self.filtered if self.filtered is not None else self.keywords

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Resources:
    index: InvertedIndex
    instructions: InstructionSet
    generator: object
    qrels: dict[str, dict[str, int]] | None = None
    filter_generator: object | None = None
    bm25: BM25Params = field(default_factory=BM25Params)
    workers: int = 1


@dataclass
class MethodResult:
    ranking: Ranking
    records: list[ReformulationRecord]
    query: WeightedQuery | None = None
    feedback_docs: list[str] = field(default_factory=list)


def select_feedback(qid: str, query_text: str, index: InvertedIndex, qrels, cfg: PipelineConfig,
                    bm25: BM25Params = BM25Params()) -> list[Document]:
    """Pick the m feedback documents: BM25 top-m (prf) or highest-graded judged docs (oracle)."""
    m = cfg.feedback_depth
    if cfg.feedback == "none":
        raise ValidationError("select_feedback called with feedback='none'")
    if cfg.feedback == "prf":
        first = search(index, index.query(qid, query_text), max(m, 1), bm25)
        if not first.entries:
            raise FeedbackError(f"query {qid}: first-pass retrieval returned nothing for feedback")
        return [index.document(d) for d in first.doc_ids[:m]]
    if qrels is None:
        raise ValidationError("oracle feedback needs qrels")
    judged = qrels.get(qid, {})
    relevant = sorted(((g, d) for d, g in judged.items() if g >= 1 and d in index.doc_lengths),
                      key=lambda item: (-item[0], item[1]))
    if not relevant:
        raise FeedbackError(f"query {qid}: no relevant judged documents for oracle feedback")
    return [index.document(d) for _, d in relevant[:m]]


def assemble_query(qid: str, query_text: str, keyword_lists: Sequence[Sequence[str]], index: InvertedIndex,
                   beta: float, dedup: bool = False) -> WeightedQuery:
    """Original tokens at weight 1, then keyword tokens at weight beta, in instruction order."""
    terms = [(t, 1.0) for t in index.analyze(query_text)]
    seen: set[str] = set()
    for keywords in keyword_lists:
        for kw in keywords:
            for token in index.analyze(kw):
                if dedup:
                    if token in seen:
                        continue
                    seen.add(token)
                terms.append((token, beta))
    return WeightedQuery(qid, terms)


def _reformulate_one(i: int, instruction: str, qid: str, query_text: str, cfg: PipelineConfig,
                     resources: Resources, context: list[Document] | None) -> ReformulationRecord:
    prompt = build_qr_prompt(instruction, query_text, cfg.style, context, cfg.context_position)
    raw = resources.generator.complete(prompt)
    keywords = parse_keywords(raw, cfg.keyword_mode)
    filtered = None
    if cfg.filter and keywords:
        filtered = apply_filter(query_text, keywords, resources.filter_generator or resources.generator)
    return ReformulationRecord(qid, i, raw, keywords, filtered)


def reformulate(qid: str, query_text: str, cfg: PipelineConfig, resources: Resources,
                context: list[Document] | None = None) -> list[ReformulationRecord]:
    """One generation per instruction (first n of the set), returned in instruction order."""
    instructions = resources.instructions.head(cfg.n_instructions).instructions
    jobs = list(enumerate(instructions, 1))
    if resources.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=resources.workers) as pool:
            return list(pool.map(lambda job: _reformulate_one(*job, qid, query_text, cfg, resources, context), jobs))
    return [_reformulate_one(i, instr, qid, query_text, cfg, resources, context) for i, instr in jobs]


def _feedback_context(qid, query_text, cfg, resources):
    if cfg.feedback == "none":
        return None
    return select_feedback(qid, query_text, resources.index, resources.qrels, cfg, resources.bm25)


def gen_qr_ensemble(qid: str, query_text: str, cfg: PipelineConfig, resources: Resources,
                    run_tag: str = "genqr_ensemble") -> MethodResult:
    context = _feedback_context(qid, query_text, cfg, resources)
    records = reformulate(qid, query_text, cfg, resources, context)
    keyword_lists = [r.final_keywords for r in records]
    if not any(keyword_lists):
        if not cfg.fallback_raw:
            raise EmptyReformulationError(qid)
        keyword_lists = []
    wq = assemble_query(qid, query_text, keyword_lists, resources.index, cfg.beta, cfg.dedup_keywords)
    ranking = search(resources.index, wq, cfg.k, resources.bm25, run_tag)
    return MethodResult(ranking, records, wq, [d.doc_id for d in context or []])


def gen_qr_fusion(qid: str, query_text: str, cfg: PipelineConfig, resources: Resources,
                  run_tag: str = "genqr_fusion") -> MethodResult:
    """Search once per instruction-specific reformulation and fuse the result lists."""
    context = _feedback_context(qid, query_text, cfg, resources)
    records = reformulate(qid, query_text, cfg, resources, context)
    if not any(r.final_keywords for r in records):
        if not cfg.fallback_raw:
            raise EmptyReformulationError(qid)
        wq = resources.index.query(qid, query_text)
        ranking = search(resources.index, wq, cfg.k, resources.bm25, run_tag)
        return MethodResult(ranking, records, wq, [d.doc_id for d in context or []])
    rankings = []
    for record in records:
        wq = assemble_query(qid, query_text, [record.final_keywords], resources.index, cfg.beta, cfg.dedup_keywords)
        rankings.append(search(resources.index, wq, cfg.k, resources.bm25, run_tag))
    if len(rankings) == 1:
        fused = rankings[0]
    else:
        nonempty = [r for r in rankings if r.entries] or rankings[:1]
        fused = fuse(nonempty, cfg.fusion_method, cfg.k_rrf, run_tag)
    return MethodResult(fused.truncate(cfg.k).retag(run_tag), records, None, [d.doc_id for d in context or []])


def gen_qr(qid: str, query_text: str, cfg: PipelineConfig, resources: Resources, run_tag: str = "genqr") -> MethodResult:
    """Single-instruction baseline: expand with the keywords generated for the first instruction only."""
    context = _feedback_context(qid, query_text, cfg, resources)
    record = _reformulate_one(1, resources.instructions[0], qid, query_text, cfg, resources, context)
    keywords = record.final_keywords
    if not keywords and not cfg.fallback_raw:
        raise EmptyReformulationError(qid)
    wq = assemble_query(qid, query_text, [keywords], resources.index, cfg.beta, cfg.dedup_keywords)
    ranking = search(resources.index, wq, cfg.k, resources.bm25, run_tag)
    return MethodResult(ranking, [record], wq, [d.doc_id for d in context or []])


def raw_bm25(qid: str, query_text: str, cfg: PipelineConfig, resources: Resources, run_tag: str = "bm25") -> MethodResult:
    wq = resources.index.query(qid, query_text)
    return MethodResult(search(resources.index, wq, cfg.k, resources.bm25, run_tag), [], wq)


def run_method(qid: str, query_text: str, cfg: PipelineConfig, resources: Resources, run_tag: str | None = None) -> MethodResult:
    """Dispatch on ``cfg.method``; feedback variants are selected by ``cfg.feedback``."""
    if cfg.method == "bm25":
        return raw_bm25(qid, query_text, cfg, resources, run_tag or "bm25")
    if cfg.method == "genqr":
        return gen_qr(qid, query_text, cfg, resources, run_tag or "genqr")
    if cfg.n_instructions > len(resources.instructions):
        raise ValidationError(
            f"n_instructions={cfg.n_instructions} exceeds the {len(resources.instructions)} instructions "
            f"in set {resources.instructions.name!r}"
        )
    if cfg.method == "ensemble":
        return gen_qr_ensemble(qid, query_text, cfg, resources, run_tag or "genqr_ensemble")
    return gen_qr_fusion(qid, query_text, cfg, resources, run_tag or "genqr_fusion")
