"""Builder for the bundled synthetic benchmark (120 documents, 20 queries, graded qrels).

For the odd-numbered queries the relevant documents are written with the
expansion terms the mock generator produces for that query under the
general instruction set and ``SEED``, while most of them avoid the query's
own words. Raw BM25 therefore misses them and keyword expansion finds them.
The even-numbered queries are plain lexical matches and act as controls.

Regenerate with ``python -m qrw.synthetic <dir>``; the shipped files are the
output for the constants below.
"""

from __future__ import annotations

import random
import sys
from importlib import resources
from pathlib import Path

from qrw.eval.trec_io import write_qrels, write_topics
from qrw.generation import load_mock_vocab, mock_complete
from qrw.index import Document, tokenize, write_corpus
from qrw.prompts import build_qr_prompt, load_instruction_set, parse_keywords

SEED = 13
INSTRUCTION_SET = "general"

QUERIES = [
    "do goldfish grow",
    "why do volcanoes erupt",
    "how are glaciers formed",
    "green tea antioxidants",
    "penguin mating rituals",
    "origami crane folding",
    "sourdough starter recipe",
    "honeybee colony collapse",
    "lighthouse keeper duties",
    "comet tail direction",
    "violin bow rosin",
    "saffron crocus cultivation",
    "tornado warning sirens",
    "coral reef bleaching",
    "chess opening gambits",
    "marathon runner cramps",
    "bamboo flooring durability",
    "octopus camouflage skin",
    "medieval castle moats",
    "telescope mirror grinding",
]

FILLER = """lorem ipsum dolor sit amet consectetur adipiscing elit sed eiusmod tempor incididunt
labore dolore magna aliqua enim minim veniam quis nostrud exercitation ullamco laboris nisi aliquip
commodo consequat duis aute irure reprehenderit voluptate velit esse cillum fugiat nulla pariatur
excepteur sint occaecat cupidatat proident sunt culpa officia deserunt mollit anim laborum
curabitur pretium tincidunt lacus nunc pulvinar sapien mauris vitae ultricies leo integer malesuada
pellentesque habitant morbi tristique senectus netus fames turpis egestas""".split()

GRADES = (3, 2, 1, 1)


def mock_expansions(query: str, seed: int = SEED) -> tuple[list[str], list[str]]:
    """Terms the mock adds for ``query``: (shared by all instructions, instruction-specific)."""
    iset = load_instruction_set(INSTRUCTION_SET)
    words = set(tokenize(query))
    per_instruction = []
    for instr in iset.instructions:
        raw = mock_complete(build_qr_prompt(instr, query), seed)
        per_instruction.append([k for k in parse_keywords(raw) if k not in words])
    shared = [k for k in per_instruction[0] if all(k in kws for kws in per_instruction)]
    specific = []
    for kws in per_instruction:
        specific += [k for k in kws if k not in shared and k not in specific]
    return shared, specific


def _doc(rng: random.Random, planted: list[str], n_filler: int) -> str:
    words = [rng.choice(FILLER) for _ in range(n_filler)] + planted
    rng.shuffle(words)
    return " ".join(words)


def build(seed: int = SEED):
    vocab = set(load_mock_vocab())
    for q in QUERIES:
        overlap = set(tokenize(q)) & vocab
        if overlap:
            raise AssertionError(f"query {q!r} uses mock vocabulary terms {overlap}")
    rng = random.Random(seed)
    docs, topics, qrels = [], {}, {}
    for qi, query in enumerate(QUERIES, 1):
        qid = f"q{qi:02d}"
        topics[qid] = query
        words = tokenize(query)
        planted = qi % 2 == 1
        judged = qrels.setdefault(qid, {})
        if planted:
            shared, specific = mock_expansions(query, seed)
        for j, grade in enumerate(GRADES):
            doc_id = f"{qid}-r{j + 1}"
            if planted:
                terms = list(shared) * 2 + rng.sample(specific, min(len(specific), 6))
                if grade == 3:
                    terms += words
            else:
                terms = rng.sample(words, rng.randint(1, len(words))) * 2
            docs.append(Document(doc_id, _doc(rng, terms, rng.randint(25, 40))))
            judged[doc_id] = grade
        for j in range(2):
            doc_id = f"{qid}-n{j + 1}"
            docs.append(Document(doc_id, _doc(rng, words * 3, rng.randint(20, 35))))
            judged[doc_id] = 0
    return docs, topics, qrels


SPEC_TEMPLATE = """\
# End-to-end experiment on the bundled synthetic benchmark (mock generator).
corpus: corpus.jsonl
topics: topics.tsv
qrels: qrels.txt
instruction_set: general
seed: {seed}
baseline: bm25
metrics: [ndcg@10, ndcg@20, p@10, map, rr(rel=2), recall@10]
generator:
  provider: mock
variants:
  - {{name: bm25, method: bm25}}
  - {{name: genqr, method: genqr}}
  - {{name: genqr_ensemble, method: ensemble, n_instructions: 10}}
  - {{name: genqr_ensemble_b05, method: ensemble, n_instructions: 10, beta: 0.05}}
  - {{name: genqr_fusion, method: fusion, n_instructions: 10, fusion_method: rrf}}
  - {{name: genqr_ensemble_rf, method: ensemble, n_instructions: 10, feedback: prf, feedback_depth: 5}}
  - {{name: genqr_fusion_rf, method: fusion, n_instructions: 10, feedback: prf, feedback_depth: 5}}
  - {{name: genqr_ensemble_rf_oracle, method: ensemble, n_instructions: 10, feedback: oracle, feedback_depth: 5}}
  - {{name: genqr_fusion_rf_oracle, method: fusion, n_instructions: 10, feedback: oracle, feedback_depth: 5}}
"""


def write(directory: str | Path, seed: int = SEED) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    docs, topics, qrels = build(seed)
    write_corpus(docs, directory / "corpus.jsonl")
    write_topics(topics, directory / "topics.tsv")
    write_qrels(qrels, directory / "qrels.txt")
    (directory / "experiment.yaml").write_text(SPEC_TEMPLATE.format(seed=seed), encoding="utf-8")


def bundled_dir() -> Path:
    return Path(str(resources.files("qrw.data").joinpath("synthetic")))


def bundled_spec_path() -> Path:
    return bundled_dir() / "experiment.yaml"


if __name__ == "__main__":
    write(sys.argv[1] if len(sys.argv) > 1 else bundled_dir())
