"""Experiment specs, variant comparison with significance marks, and parameter sweeps."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import yaml

from qrw.errors import (
    DegenerateSampleError,
    EmptyReformulationError,
    FeedbackError,
    GenerationError,
    QrwError,
    ValidationError,
)
from qrw.eval import evaluate, holm_bonferroni, paired_t_test, read_qrels, read_topics
from qrw.eval.measures import Measure
from qrw.eval.trec_io import run_to_text
from qrw.generation import GenerationCache, Generator, GeneratorConfig
from qrw.index import BM25Params, InvertedIndex, TokenizerConfig, build_index, read_corpus
from qrw.pipeline import PipelineConfig, ReformulationRecord, Resources, run_method
from qrw.prompts import load_instruction_set
from qrw.report import comparison_csv, comparison_table, rows_csv

log = logging.getLogger(__name__)

DEFAULT_METRICS = ["ndcg@10", "ndcg@20", "p@10", "map", "rr(rel=2)", "recall@10"]
MAX_FAILURE_RATE = 0.10
SWEEP_AXES = ("beta", "n_instructions", "feedback_m")
# per-query failures of these kinds skip the query; anything else aborts
RECOVERABLE = (GenerationError, EmptyReformulationError, FeedbackError)

_TOP_KEYS = {"corpus", "topics", "qrels", "instruction_set", "generator", "variants", "baseline", "metrics",
             "output_dir", "seed", "index", "gain", "alpha", "cache_dir", "workers"}
_INDEX_KEYS = {f.name for f in dataclasses.fields(TokenizerConfig)} | {f.name for f in dataclasses.fields(BM25Params)}
_GENERATOR_KEYS = {f.name for f in dataclasses.fields(GeneratorConfig)} - {"seed"}
_VARIANT_KEYS = {f.name for f in dataclasses.fields(PipelineConfig)} | {"name"}


@dataclass
class Variant:
    name: str
    config: PipelineConfig


@dataclass
class ExperimentSpec:
    corpus: Path
    topics: Path
    qrels: Path
    variants: list[Variant]
    baseline: str = "bm25"
    instruction_set: str = "general"
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    metrics: list[str] = field(default_factory=lambda: list(DEFAULT_METRICS))
    output_dir: Path = Path("qrw-out")
    seed: int = 0
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    bm25: BM25Params = field(default_factory=BM25Params)
    gain: str = "linear"
    alpha: float = 0.05
    cache_dir: Path | None = None
    workers: int = 1

    def variant(self, name: str) -> Variant:
        for v in self.variants:
            if v.name == name:
                return v
        raise ValidationError(f"no variant named {name!r}; have {[v.name for v in self.variants]}")


def _reject_unknown(section: str, given: dict, allowed: set) -> None:
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ValidationError(f"{section}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


def _build(cls, section: str, values: dict):
    try:
        return cls(**values)
    except ValidationError as exc:
        raise ValidationError(f"{section}: {exc}") from None
    except TypeError as exc:
        raise ValidationError(f"{section}: {exc}") from None


def parse_spec(raw: dict[str, Any], base_dir: Path, seed: int | None = None, output_dir: str | Path | None = None,
               cache_dir: str | Path | None = None) -> ExperimentSpec:
    """Validate a spec mapping.

    Input paths resolve against ``base_dir``; ``output_dir`` and ``cache_dir`` resolve against the working directory.
    """
    if not isinstance(raw, dict):
        raise ValidationError("experiment spec must be a mapping")
    _reject_unknown("spec", raw, _TOP_KEYS)

    def resolve(p):
        p = Path(p).expanduser()
        return p if p.is_absolute() else (base_dir / p)

    missing, paths = [], {}
    for key in ("corpus", "topics", "qrels"):
        if key not in raw:
            missing.append(f"{key} (not given)")
            continue
        p = resolve(raw[key])
        if not p.exists():
            missing.append(f"{key} ({p} does not exist)")
        paths[key] = p
    if missing:
        raise ValidationError("missing required path(s): " + "; ".join(missing))

    index_cfg = raw.get("index") or {}
    _reject_unknown("index", index_cfg, _INDEX_KEYS)
    tok_keys = {f.name for f in dataclasses.fields(TokenizerConfig)}
    tokenizer = _build(TokenizerConfig, "index", {k: v for k, v in index_cfg.items() if k in tok_keys})
    bm25 = _build(BM25Params, "index", {k: v for k, v in index_cfg.items() if k not in tok_keys})

    seed = int(raw.get("seed", 0)) if seed is None else seed
    gen_cfg = raw.get("generator") or {}
    _reject_unknown("generator", gen_cfg, _GENERATOR_KEYS)
    generator = _build(GeneratorConfig, "generator", {**gen_cfg, "seed": seed})

    raw_variants = raw.get("variants")
    if raw_variants is None:
        raw_variants = [{"name": "bm25", "method": "bm25"}, {"name": "genqr_ensemble", "method": "ensemble"}]
    if not isinstance(raw_variants, list) or not raw_variants:
        raise ValidationError("variants: must be a nonempty list")
    variants, names = [], set()
    for i, rv in enumerate(raw_variants):
        if not isinstance(rv, dict) or "name" not in rv:
            raise ValidationError(f"variants[{i}]: each variant needs a name")
        _reject_unknown(f"variants[{i}] ({rv['name']})", rv, _VARIANT_KEYS)
        if rv["name"] in names:
            raise ValidationError(f"variants: duplicate name {rv['name']!r}")
        names.add(rv["name"])
        cfg = _build(PipelineConfig, f"variants[{i}] ({rv['name']})", {k: v for k, v in rv.items() if k != "name"})
        variants.append(Variant(rv["name"], cfg))

    baseline = raw.get("baseline", "bm25")
    if baseline not in names:
        raise ValidationError(f"baseline: {baseline!r} is not one of the variants {sorted(names)}")

    metrics = raw.get("metrics") or list(DEFAULT_METRICS)
    for m in metrics:
        Measure.parse(m)
    gain = raw.get("gain", "linear")
    if gain not in ("linear", "exponential"):
        raise ValidationError(f"gain: must be 'linear' or 'exponential', got {gain!r}")
    alpha = float(raw.get("alpha", 0.05))
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha: must be in (0, 1), got {alpha}")
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ValidationError(f"workers: must be >= 1, got {workers}")

    instruction_set = str(raw.get("instruction_set", "general"))
    iset_path = resolve(instruction_set)
    if iset_path.suffix == ".txt":
        instruction_set = str(iset_path)
    load_instruction_set(instruction_set)

    out = output_dir if output_dir is not None else raw.get("output_dir", "qrw-out")
    cache = cache_dir if cache_dir is not None else raw.get("cache_dir")
    return ExperimentSpec(
        corpus=paths["corpus"], topics=paths["topics"], qrels=paths["qrels"],
        variants=variants, baseline=baseline, instruction_set=instruction_set,
        generator=generator, metrics=list(metrics), output_dir=Path(out).expanduser(), seed=seed,
        tokenizer=tokenizer, bm25=bm25, gain=gain, alpha=alpha,
        cache_dir=Path(cache).expanduser() if cache else None, workers=workers,
    )


def load_spec(path: str | Path, **overrides) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"spec file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML: {exc}") from exc
    return parse_spec(raw or {}, path.parent, **overrides)


# execution ---------------------------------------------------------------------

@dataclass
class VariantRun:
    name: str
    rankings: dict  # qid -> Ranking
    records: dict[str, list[ReformulationRecord]]
    failures: dict[str, str]


@dataclass
class Workspace:
    """Everything loaded once per experiment."""

    spec: ExperimentSpec
    index: InvertedIndex
    topics: dict[str, str]
    qrels: dict[str, dict[str, int]]
    resources: Resources

    @classmethod
    def open(cls, spec: ExperimentSpec, generator=None) -> "Workspace":
        index = build_index(read_corpus(spec.corpus), spec.tokenizer)
        topics = read_topics(spec.topics)
        qrels = read_qrels(spec.qrels)
        if generator is None:
            cache = GenerationCache(spec.cache_dir) if spec.cache_dir else None
            generator = Generator(spec.generator, cache)
        resources = Resources(index, load_instruction_set(spec.instruction_set), generator, qrels,
                              bm25=spec.bm25, workers=spec.workers)
        return cls(spec, index, topics, qrels, resources)


def execute_variant(ws: Workspace, name: str, cfg: PipelineConfig) -> VariantRun:
    rankings, records, failures = {}, {}, {}
    for qid, text in ws.topics.items():
        try:
            result = run_method(qid, text, cfg, ws.resources, run_tag=name)
        except RECOVERABLE as exc:
            log.warning("variant %s, query %s failed: %s", name, qid, exc)
            failures[qid] = f"{type(exc).__name__}: {exc}"
            continue
        rankings[qid] = result.ranking
        records[qid] = result.records
    return VariantRun(name, rankings, records, failures)


def _check_failures(ws: Workspace, failed: set) -> None:
    if len(failed) > MAX_FAILURE_RATE * len(ws.topics):
        raise QrwError(f"aborting: {len(failed)} of {len(ws.topics)} queries failed "
                       f"(limit {MAX_FAILURE_RATE:.0%}); first: {sorted(failed)[:5]}")


@dataclass
class ExperimentResult:
    table: str
    csv: str
    aggregates: dict[str, dict[str, float]]
    p_values: dict[str, dict[str, float]]
    significant: dict[str, dict[str, bool]]
    qids: list[str]
    failed: dict[str, str]
    runs: dict[str, VariantRun]
    output_dir: Path | None = None


def compare(reports: dict, baseline: str, measures: Sequence[str], alpha: float):
    """Paired t-tests against the baseline, Holm-corrected across variants per measure.

    A cell is significant when Holm rejects and the variant's mean is higher.
    """
    others = [v for v in reports if v != baseline]
    p_values = {v: {} for v in others}
    significant = {v: {} for v in others}
    for m in measures:
        base_per = reports[baseline].per_query[m]
        ps = []
        for v in others:
            per = reports[v].per_query[m]
            if set(per) != set(base_per):
                raise QrwError(f"measure {m}: variant {v} and baseline evaluated on different queries")
            qids = sorted(base_per)
            if len(qids) < 2:
                p = 1.0
            else:
                try:
                    p = paired_t_test([per[q] for q in qids], [base_per[q] for q in qids])
                except DegenerateSampleError:
                    p = 0.0
            p_values[v][m] = p
            ps.append(p)
        flags = holm_bonferroni(ps, alpha)
        for v, flag in zip(others, flags):
            significant[v][m] = flag and reports[v].aggregate[m] > reports[baseline].aggregate[m]
    return p_values, significant


def run_experiment(spec: ExperimentSpec, generator=None, write: bool = True) -> ExperimentResult:
    ws = Workspace.open(spec, generator)
    runs = {v.name: execute_variant(ws, v.name, v.config) for v in spec.variants}
    failed = {}
    for run in runs.values():
        for qid, why in run.failures.items():
            failed.setdefault(qid, f"{run.name}: {why}")
    _check_failures(ws, set(failed))
    qids = [q for q in ws.topics if q not in failed]

    measures = [Measure.parse(m) for m in spec.metrics]
    names = [m.name for m in measures]
    labels = {m.name: m.label for m in measures}
    reports = {}
    for name, run in runs.items():
        kept = {q: run.rankings[q] for q in qids}
        reports[name] = evaluate(kept, ws.qrels, measures, qids, spec.gain)
    aggregates = {name: r.aggregate for name, r in reports.items()}
    p_values, significant = compare(reports, spec.baseline, names, spec.alpha)

    variant_names = [v.name for v in spec.variants]
    table = comparison_table(variant_names, labels, aggregates, significant, spec.baseline)
    csv_text = comparison_csv(variant_names, labels, aggregates, p_values, significant, spec.baseline)
    result = ExperimentResult(table, csv_text, aggregates, p_values, significant, qids, failed, runs)

    if write:
        out = spec.output_dir
        (out / "runs").mkdir(parents=True, exist_ok=True)
        (out / "provenance").mkdir(parents=True, exist_ok=True)
        iset = Path(spec.instruction_set).stem
        for name, run in runs.items():
            (out / "runs" / f"{name}__{iset}.run").write_text(
                run_to_text(run.rankings[q] for q in qids), encoding="utf-8")
            with open(out / "provenance" / f"{name}__{iset}.jsonl", "w", encoding="utf-8") as fh:
                for q in qids:
                    for rec in run.records[q]:
                        fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        (out / "report.txt").write_text(table, encoding="utf-8")
        (out / "report.csv").write_text(csv_text, encoding="utf-8")
        per_query_rows = []
        for name in variant_names:
            for m in names:
                for q, value in reports[name].per_query[m].items():
                    per_query_rows.append([name, m, q, value])
        (out / "per_query.csv").write_text(rows_csv(["variant", "measure", "qid", "value"], per_query_rows), encoding="utf-8")
        (out / "failures.tsv").write_text("".join(f"{q}\t{why}\n" for q, why in sorted(failed.items())), encoding="utf-8")
        result.output_dir = out
    return result


# sweeps ------------------------------------------------------------------------

def sweep_config(base: PipelineConfig, axis: str, value) -> PipelineConfig:
    if axis == "beta":
        return base.replace(beta=float(value))
    if axis == "n_instructions":
        return base.replace(n_instructions=int(value))
    if axis == "feedback_m":
        m = int(value)
        if m == 0:
            return base.replace(feedback="none", feedback_depth=0)
        return base.replace(feedback=base.feedback if base.feedback != "none" else "prf", feedback_depth=m)
    raise ValidationError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")


def sweep_values(axis: str, values: Sequence) -> list:
    if axis == "beta":
        vals = sorted({float(v) for v in values} | {0.0, 1.0})
    else:
        vals = [int(v) for v in values]
    return vals


@dataclass
class SweepResult:
    axis: str
    variant: str
    values: list
    rows: list[list]
    header: list[str]
    csv: str
    path: Path | None = None


def sweep(spec: ExperimentSpec, axis: str, values: Sequence, variant: str | None = None,
          generator=None, write: bool = True) -> SweepResult:
    """Re-run one variant once per axis value; one CSV row of aggregate metrics per value.

    ``variant`` defaults to the first ensemble or fusion variant of the spec.
    """
    if axis not in SWEEP_AXES:
        raise ValidationError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if variant is None:
        candidates = [v for v in spec.variants if v.name != spec.baseline and v.config.method in ("ensemble", "fusion")]
        if not candidates:
            raise ValidationError("sweep needs a reformulation variant; none in spec")
        base = candidates[0]
    else:
        base = spec.variant(variant)
    vals = sweep_values(axis, values)
    configs = [sweep_config(base.config, axis, v) for v in vals]

    ws = Workspace.open(spec, generator)
    runs = [execute_variant(ws, base.name, cfg) for cfg in configs]
    failed = set().union(*(r.failures for r in runs))
    _check_failures(ws, failed)
    qids = [q for q in ws.topics if q not in failed]
    measures = [Measure.parse(m) for m in spec.metrics]
    header = [f"{axis}_value"] + [m.name for m in measures]
    rows = []
    for value, run in zip(vals, runs):
        report = evaluate({q: run.rankings[q] for q in qids}, ws.qrels, measures, qids, spec.gain)
        rows.append([value] + [report.aggregate[m.name] for m in measures])
    csv_text = rows_csv(header, rows)
    result = SweepResult(axis, base.name, vals, rows, header, csv_text)
    if write:
        spec.output_dir.mkdir(parents=True, exist_ok=True)
        result.path = spec.output_dir / f"sweep_{axis}.csv"
        result.path.write_text(csv_text, encoding="utf-8")
    return result
