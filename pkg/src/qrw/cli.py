"""Command line interface: ``qrw <verb> [options]``.

Exit status is 0 on success, 2 on validation errors (bad config, arguments or
input files) and 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from qrw.errors import QrwError, ValidationError
from qrw.eval import evaluate, read_qrels, read_run, read_topics, write_run
from qrw.eval.measures import Measure
from qrw.experiment import DEFAULT_METRICS, SWEEP_AXES, compare, load_spec, run_experiment, sweep
from qrw.fusion import fuse
from qrw.generation import GenerationCache, Generator, GeneratorConfig
from qrw.index import BM25Params, InvertedIndex, TokenizerConfig, build_index, read_corpus, search
from qrw.pipeline import PipelineConfig, Resources, run_method
from qrw.prompts import BASE_INSTRUCTION, load_instruction_set, paraphrase_instructions
from qrw.report import comparison_csv, comparison_table
from qrw.synthetic import bundled_spec_path

log = logging.getLogger("qrw")


def _generator(args) -> Generator:
    if args.config:
        cfg = load_spec(args.config, seed=args.seed).generator
    else:
        cfg = GeneratorConfig(seed=args.seed or 0)
    if getattr(args, "provider", None):
        cfg = cfg.replace(provider=args.provider)
    if getattr(args, "endpoint", None):
        cfg = cfg.replace(endpoint=args.endpoint)
    if getattr(args, "model", None):
        cfg = cfg.replace(model_name=args.model)
    cache = GenerationCache(args.cache_dir) if args.cache_dir else None
    return Generator(cfg, cache)


def _out(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path(default_name)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def cmd_index(args):
    tok = TokenizerConfig(lowercase=not args.no_lowercase, stopwords=not args.no_stopwords, stem=args.stem)
    index = build_index(read_corpus(args.corpus), tok)
    out = _out(args, "index.json")
    index.save(out)
    print(f"indexed {index.doc_count} documents, {len(index.postings)} terms -> {out}")


def cmd_paraphrase(args):
    base = args.base or BASE_INSTRUCTION
    iset = paraphrase_instructions(base, args.n, _generator(args), name=args.name)
    text = f"# provenance: {iset.provenance}\n" + iset.to_text()
    if args.out:
        _out(args, "").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        method=args.method, n_instructions=args.n, beta=args.beta, feedback=args.feedback,
        feedback_depth=args.m if args.feedback != "none" else 0, fusion_method=args.fusion,
        filter=args.filter, keyword_mode=args.keyword_mode, style=args.style,
        dedup_keywords=args.dedup_keywords, fallback_raw=args.fallback_raw, k=args.k,
    )


def cmd_reformulate(args):
    """Write one JSON line per query with its reformulation records, weighted query and ranking."""
    cfg = _pipeline_config(args)
    index = InvertedIndex.load(args.index)
    qrels = read_qrels(args.qrels) if args.qrels else None
    resources = Resources(index, load_instruction_set(args.instructions), _generator(args), qrels)
    topics = read_topics(args.topics)
    rankings = []
    out = _out(args, "reformulations.jsonl")
    with open(out, "w", encoding="utf-8") as fh:
        for qid, text in topics.items():
            result = run_method(qid, text, cfg, resources, run_tag=args.tag)
            rankings.append(result.ranking)
            fh.write(json.dumps({
                "qid": qid,
                "query": text,
                "records": [r.to_dict() for r in result.records],
                "weighted_query": result.query.terms if result.query else None,
                "feedback_docs": result.feedback_docs,
            }, ensure_ascii=False, sort_keys=True) + "\n")
    if args.run:
        write_run(rankings, args.run)
    print(f"{len(topics)} queries -> {out}")


def cmd_search(args):
    index = InvertedIndex.load(args.index)
    params = BM25Params(k1=args.k1, b=args.b, idf=args.idf)
    topics = read_topics(args.topics)
    rankings = [search(index, index.query(qid, text), args.k, params, args.tag) for qid, text in topics.items()]
    out = _out(args, "bm25.run")
    write_run(rankings, out)
    print(f"{len(rankings)} queries -> {out}")


def cmd_fuse(args):
    runs = [read_run(p) for p in args.runs]
    qids = list(dict.fromkeys(q for run in runs for q in run))
    fused = []
    for qid in qids:
        lists = [run[qid] for run in runs if qid in run]
        fused.append(fuse(lists, args.method, args.k_rrf, args.tag).truncate(args.k))
    out = _out(args, "fused.run")
    write_run(fused, out)
    print(f"fused {len(runs)} runs over {len(qids)} queries -> {out}")


def cmd_eval(args):
    qrels = read_qrels(args.qrels)
    metrics = args.metrics.split(",") if args.metrics else DEFAULT_METRICS
    measures = [Measure.parse(m) for m in metrics]
    names = [Path(p).name for p in args.runs]
    if len(set(names)) != len(names):
        names = [str(p) for p in args.runs]
    reports = {}
    for name, path in zip(names, args.runs):
        reports[name] = evaluate(read_run(path), qrels, measures, gain=args.gain)
    labels = {m.name: m.label for m in measures}
    aggregates = {n: r.aggregate for n, r in reports.items()}
    baseline = names[0]
    if len(names) > 1:
        p_values, significant = compare(reports, baseline, list(labels), args.alpha)
    else:
        p_values, significant = {}, {}
    sys.stdout.write(comparison_table(names, labels, aggregates, significant, baseline))
    if args.out:
        _out(args, "").write_text(comparison_csv(names, labels, aggregates, p_values, significant, baseline), encoding="utf-8")


def _spec(args):
    path = args.config or bundled_spec_path()
    return load_spec(path, seed=args.seed, output_dir=args.out, cache_dir=args.cache_dir)


def cmd_run(args):
    result = run_experiment(_spec(args))
    sys.stdout.write(result.table)
    print(f"outputs -> {result.output_dir}")


def cmd_sweep(args):
    values = [v for v in args.values.split(",") if v.strip()]
    result = sweep(_spec(args), args.axis, values, args.variant)
    sys.stdout.write(result.csv)
    print(f"-> {result.path}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment spec (YAML); run/sweep default to the bundled synthetic spec")
    common.add_argument("--seed", type=int, default=None, help="generator seed (overrides the spec)")
    common.add_argument("--cache-dir", help="directory for the generation cache")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qrw", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("index", parents=[common], help="build an index snapshot from a JSONL corpus")
    p.add_argument("corpus")
    p.add_argument("--no-lowercase", action="store_true")
    p.add_argument("--no-stopwords", action="store_true")
    p.add_argument("--stem", action="store_true", help="Porter stemming (needs nltk)")
    p.set_defaults(func=cmd_index)

    def generator_flags(p):
        p.add_argument("--provider", choices=["mock", "remote"])
        p.add_argument("--endpoint", help="chat-completions URL for the remote provider")
        p.add_argument("--model")

    p = sub.add_parser("paraphrase", parents=[common], help="paraphrase a base instruction into an instruction set")
    p.add_argument("--base", help="base instruction (default: the general reformulation instruction)")
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--name", default="paraphrased")
    generator_flags(p)
    p.set_defaults(func=cmd_paraphrase)

    p = sub.add_parser("reformulate", parents=[common], help="reformulate topics and record provenance")
    p.add_argument("--index", required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("--qrels", help="needed for oracle feedback")
    p.add_argument("--instructions", default="general", help="bundled set name or path to a .txt file")
    p.add_argument("--method", choices=["ensemble", "fusion"], default="ensemble")
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--feedback", choices=["none", "prf", "oracle"], default="none")
    p.add_argument("-m", type=int, default=5, help="feedback depth")
    p.add_argument("--fusion", choices=["rrf", "score_sum", "score_max"], default="rrf")
    p.add_argument("--filter", action="store_true")
    p.add_argument("--keyword-mode", choices=["comma", "whitespace"], default="comma")
    p.add_argument("--style", choices=["keyword_plain", "keyword_chat", "natural_language"], default="keyword_plain")
    p.add_argument("--dedup-keywords", action="store_true")
    p.add_argument("--fallback-raw", action="store_true")
    p.add_argument("-k", type=int, default=1000)
    p.add_argument("--tag", default="qrw")
    p.add_argument("--run", help="also write the resulting TREC run here")
    generator_flags(p)
    p.set_defaults(func=cmd_reformulate)

    p = sub.add_parser("search", parents=[common], help="raw-query BM25 run")
    p.add_argument("--index", required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("-k", type=int, default=1000)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--idf", choices=["lucene", "robertson"], default="lucene")
    p.add_argument("--tag", default="bm25")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("fuse", parents=[common], help="fuse existing TREC run files")
    p.add_argument("runs", nargs="+")
    p.add_argument("--method", choices=["rrf", "score_sum", "score_max"], default="rrf")
    p.add_argument("--k-rrf", type=float, default=60.0)
    p.add_argument("-k", type=int, default=1000)
    p.add_argument("--tag", default="fused")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", parents=[common], help="evaluate runs; the first run is the significance baseline")
    p.add_argument("--qrels", required=True)
    p.add_argument("runs", nargs="+")
    p.add_argument("--metrics", help=f"comma separated (default {','.join(DEFAULT_METRICS)})")
    p.add_argument("--gain", choices=["linear", "exponential"], default="linear")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", parents=[common], help="run an experiment spec")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="sweep beta, n_instructions or feedback_m")
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--variant", help="variant to sweep (default: first ensemble or fusion variant)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"qrw: error: {exc}", file=sys.stderr)
        return 2
    except (QrwError, OSError) as exc:
        print(f"qrw: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
