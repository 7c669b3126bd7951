"""Tokenization, inverted index construction and BM25 retrieval."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from qrw.errors import DuplicateDocumentError, FormatError, UnknownDocumentError, ValidationError

STOPWORDS_FILE = "stopwords_en_v1.txt"
SNAPSHOT_FORMAT = "qrw-index"
SNAPSHOT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+")


@lru_cache(maxsize=None)
def load_stopwords(name: str = STOPWORDS_FILE) -> frozenset[str]:
    text = resources.files("qrw.data").joinpath(name).read_text(encoding="utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


@lru_cache(maxsize=1)
def _porter():
    try:
        from nltk.stem import PorterStemmer
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ValidationError("stemming requires nltk (pip install 'qrw[stem]')") from exc
    return PorterStemmer()


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    stopwords: bool = True
    stem: bool = False


DEFAULT_TOKENIZER = TokenizerConfig()


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Split ``text`` on runs of non-alphanumeric characters and normalize.

    >>> tokenize("Do Goldfish grow?", TokenizerConfig(stopwords=False))
    ['do', 'goldfish', 'grow']
    """
    if config.lowercase:
        text = text.lower()
    tokens = _TOKEN_RE.findall(text)
    if config.stopwords:
        stop = load_stopwords()
        # stopword list is lowercase; compare case-insensitively when lowercase is off
        tokens = [t for t in tokens if t.lower() not in stop]
    if config.stem:
        stemmer = _porter()
        tokens = [stemmer.stem(t, to_lowercase=config.lowercase) for t in tokens]
    return tokens


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    length_tokens: int = 0


def read_corpus(path: str | Path) -> Iterator[Document]:
    """Yield documents from a JSON-lines file with ``doc_id`` and ``text`` fields."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id, text = obj["doc_id"], obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"bad corpus record ({exc})", path, line_no, line.rstrip("\n")) from exc
            if not isinstance(doc_id, str) or not doc_id or not isinstance(text, str):
                raise FormatError("doc_id must be a nonempty string and text a string", path, line_no, line.rstrip("\n"))
            yield Document(doc_id, text)


def write_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({"doc_id": doc.doc_id, "text": doc.text}, ensure_ascii=False) + "\n")


class WeightedQuery(NamedTuple):
    """A bag of (term, weight) pairs. Repeated terms are allowed and add up."""

    qid: str
    terms: list[tuple[str, float]]

    @classmethod
    def from_text(cls, qid: str, text: str, config: TokenizerConfig = DEFAULT_TOKENIZER, weight: float = 1.0):
        return cls(qid, [(t, weight) for t in tokenize(text, config)])


class RankedDoc(NamedTuple):
    doc_id: str
    rank: int
    score: float


@dataclass
class Ranking:
    qid: str
    entries: list[RankedDoc] = field(default_factory=list)
    run_tag: str = "qrw"

    @classmethod
    def from_scores(cls, qid: str, scores: dict[str, float], run_tag: str = "qrw", k: int | None = None) -> "Ranking":
        """Order by descending score with ties broken by ascending doc_id."""
        ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        if k is not None:
            ordered = ordered[:k]
        return cls(qid, [RankedDoc(d, i, s) for i, (d, s) in enumerate(ordered, 1)], run_tag)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def scores(self) -> dict[str, float]:
        return {e.doc_id: e.score for e in self.entries}

    def truncate(self, k: int) -> "Ranking":
        return Ranking(self.qid, self.entries[:k], self.run_tag)

    def retag(self, run_tag: str) -> "Ranking":
        return Ranking(self.qid, list(self.entries), run_tag)

    def check(self) -> None:
        """Raise ValidationError if ranks, scores or doc_ids break the ranking invariants."""
        seen = set()
        for i, entry in enumerate(self.entries, 1):
            if entry.rank != i:
                raise ValidationError(f"query {self.qid}: expected rank {i}, got {entry.rank}")
            if entry.doc_id in seen:
                raise ValidationError(f"query {self.qid}: duplicate doc_id {entry.doc_id!r}")
            seen.add(entry.doc_id)
            if i > 1 and entry.score > self.entries[i - 2].score:
                raise ValidationError(f"query {self.qid}: score increases at rank {i}")


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75
    idf: str = "lucene"  # or "robertson"

    def __post_init__(self):
        if self.k1 < 0:
            raise ValidationError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValidationError(f"b must be in [0, 1], got {self.b}")
        if self.idf not in ("lucene", "robertson"):
            raise ValidationError(f"idf must be 'lucene' or 'robertson', got {self.idf!r}")


class InvertedIndex:
    """Immutable in-memory postings plus the collection statistics BM25 needs.

    ``postings`` maps a term to ``(doc_id, tf)`` pairs sorted by doc_id.
    Document texts are kept so feedback documents can be rendered into prompts.
    """

    def __init__(self, postings, doc_lengths, documents=None, tokenizer=DEFAULT_TOKENIZER):
        self.postings: dict[str, list[tuple[str, int]]] = postings
        self.doc_lengths: dict[str, int] = doc_lengths
        self.documents: dict[str, Document] = documents or {}
        self.tokenizer: TokenizerConfig = tokenizer
        self.doc_count = len(doc_lengths)
        self.avg_doc_len = sum(doc_lengths.values()) / self.doc_count if self.doc_count else 0.0
        self._tf = {term: dict(plist) for term, plist in postings.items()}

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, doc_id: str) -> int:
        return self._tf.get(term, {}).get(doc_id, 0)

    def document(self, doc_id: str) -> Document:
        try:
            return self.documents[doc_id]
        except KeyError:
            raise UnknownDocumentError(doc_id) from None

    def analyze(self, text: str) -> list[str]:
        return tokenize(text, self.tokenizer)

    def query(self, qid: str, text: str) -> WeightedQuery:
        return WeightedQuery.from_text(qid, text, self.tokenizer)

    def stats(self) -> dict:
        return {
            "doc_count": self.doc_count,
            "avg_doc_len": self.avg_doc_len,
            "doc_lengths": dict(sorted(self.doc_lengths.items())),
            "postings": {t: list(p) for t, p in sorted(self.postings.items())},
        }

    def __eq__(self, other):
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        return (
            self.stats() == other.stats()
            and self.tokenizer == other.tokenizer
            and self.documents == other.documents
        )

    # snapshot ------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "tokenizer": asdict(self.tokenizer),
            "doc_lengths": dict(sorted(self.doc_lengths.items())),
            "postings": {t: [[d, tf] for d, tf in p] for t, p in sorted(self.postings.items())},
            "documents": {d: self.documents[d].text for d in sorted(self.documents)},
        }
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n", encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"index snapshot is not valid JSON: {exc}", path) from exc
        if payload.get("format") != SNAPSHOT_FORMAT:
            raise FormatError("not a qrw index snapshot", path)
        if payload.get("version") != SNAPSHOT_VERSION:
            raise FormatError(f"unsupported snapshot version {payload.get('version')}", path)
        lengths = payload["doc_lengths"]
        postings = {t: [(d, tf) for d, tf in p] for t, p in payload["postings"].items()}
        docs = {d: Document(d, text, lengths[d]) for d, text in payload["documents"].items()}
        return cls(postings, lengths, docs, TokenizerConfig(**payload["tokenizer"]))


def build_index(docs: Iterable[Document], config: TokenizerConfig = DEFAULT_TOKENIZER) -> InvertedIndex:
    """Index ``docs``; the result does not depend on input order."""
    lengths: dict[str, int] = {}
    documents: dict[str, Document] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for doc in docs:
        if doc.doc_id in lengths:
            raise DuplicateDocumentError(doc.doc_id)
        if not doc.doc_id:
            raise ValidationError("empty doc_id")
        tokens = tokenize(doc.text, config)
        lengths[doc.doc_id] = len(tokens)
        documents[doc.doc_id] = Document(doc.doc_id, doc.text, len(tokens))
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc.doc_id, tf))
    for plist in postings.values():
        plist.sort()
    return InvertedIndex(postings, lengths, documents, config)


def idf(index: InvertedIndex, term: str, params: BM25Params = BM25Params()) -> float:
    n, df = index.doc_count, index.df(term)
    ratio = (n - df + 0.5) / (df + 0.5)
    return math.log(ratio + 1.0) if params.idf == "lucene" else math.log(ratio)


def _term_score(tf: int, idf_t: float, doc_len: int, avg_len: float, params: BM25Params) -> float:
    norm = 1.0 - params.b + params.b * doc_len / avg_len if avg_len > 0 else 1.0
    return idf_t * (tf * (params.k1 + 1.0)) / (tf + params.k1 * norm)


def bm25_score(index: InvertedIndex, query: WeightedQuery, doc_id: str, params: BM25Params = BM25Params()) -> float:
    if doc_id not in index.doc_lengths:
        raise UnknownDocumentError(doc_id)
    doc_len = index.doc_lengths[doc_id]
    score = 0.0
    for term, weight in query.terms:
        tf = index.tf(term, doc_id)
        if tf:
            score += weight * _term_score(tf, idf(index, term, params), doc_len, index.avg_doc_len, params)
    return score


def search(
    index: InvertedIndex,
    query: WeightedQuery,
    k: int = 1000,
    params: BM25Params = BM25Params(),
    run_tag: str = "bm25",
) -> Ranking:
    """Term-at-a-time BM25 over the postings; zero-score documents are dropped."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    acc: dict[str, float] = {}
    for term, weight in query.terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf_t = idf(index, term, params)
        for doc_id, tf in plist:
            contrib = weight * _term_score(tf, idf_t, index.doc_lengths[doc_id], index.avg_doc_len, params)
            acc[doc_id] = acc.get(doc_id, 0.0) + contrib
    scores = {d: s for d, s in acc.items() if s != 0.0}
    return Ranking.from_scores(query.qid, scores, run_tag, k)
