"""Instruction sets, prompt templates, keyword parsing, filtering and interpretability judging."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from qrw.errors import ValidationError
from qrw.index import Document

BASE_INSTRUCTION = "Improve the search effectiveness by suggesting expansion terms for the query"

PARAPHRASE_PROMPT = "Generate {n} paraphrases for the following instruction:"

RF_PREFIX = "Based on the given context information {C}, "

KEYWORD_CHAT_PREAMBLE = (
    "You are a helpful assistant who directly provides comma separated keywords or expansion terms. "
    "Provide as many expansion terms or keywords as possible related to the query. "
    "And do not explain yourself."
)

NATURAL_LANGUAGE_PREAMBLE = (
    "You are a helpful assistant who directly provides a natural language reformulated query with "
    "novel keywords related to the user's original query. "
    "Do not explain yourself. Just return a natural language query."
)

INTERPRETABILITY_TEMPLATE = (
    "Which one of the following query reformulations for the original query {query} is more "
    "interpretable and easy to comprehend and understand for a reader. First analyze both the "
    "reformulations and provide a short explanation why one is more interpretable than the other "
    "and then specify reformulation A or reformulation B as your final option\n"
    "Reformulation A: {a}\n"
    "Reformulation B: {b}\n"
    "Specify either A or B."
)

FILTER_TEMPLATE_FILE = "filter_prompt_v1.txt"

STYLES = ("keyword_plain", "keyword_chat", "natural_language")


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


@dataclass
class InstructionSet:
    name: str
    instructions: list[str]
    provenance: str = "bundled"

    def __post_init__(self):
        if not self.instructions:
            raise ValidationError(f"instruction set {self.name!r} is empty")
        seen = set()
        for instr in self.instructions:
            key = _normalize_ws(instr)
            if not key:
                raise ValidationError(f"instruction set {self.name!r} contains a blank instruction")
            if key in seen:
                raise ValidationError(f"instruction set {self.name!r} repeats {instr!r}")
            seen.add(key)

    def __len__(self):
        return len(self.instructions)

    def __getitem__(self, i):
        return self.instructions[i]

    def head(self, n: int) -> "InstructionSet":
        if not 1 <= n <= len(self.instructions):
            raise ValidationError(f"n_instructions={n} outside 1..{len(self.instructions)} for set {self.name!r}")
        return InstructionSet(self.name, self.instructions[:n], self.provenance)

    def to_text(self) -> str:
        return "".join(instr + "\n" for instr in self.instructions)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(f"# provenance: {self.provenance}\n" + self.to_text(), encoding="utf-8")


def parse_instruction_text(text: str, name: str, provenance: str = "user") -> InstructionSet:
    lines = [ln.strip() for ln in text.splitlines()]
    return InstructionSet(name, [ln for ln in lines if ln and not ln.startswith("#")], provenance)


def bundled_instruction_sets() -> list[str]:
    folder = resources.files("qrw.data").joinpath("instructions")
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".txt"))


def load_instruction_set(name_or_path: str | Path) -> InstructionSet:
    """Load a bundled set by name (e.g. ``general``) or any instruction file by path."""
    path = Path(name_or_path)
    if path.suffix == ".txt" and path.exists():
        return parse_instruction_text(path.read_text(encoding="utf-8"), path.stem, "user")
    res = resources.files("qrw.data").joinpath("instructions", f"{name_or_path}.txt")
    if not res.is_file():
        raise ValidationError(
            f"unknown instruction set {str(name_or_path)!r}; bundled: {', '.join(bundled_instruction_sets())}"
        )
    return parse_instruction_text(res.read_text(encoding="utf-8"), str(name_or_path), "bundled")


# paraphrasing ------------------------------------------------------------------

_NUMBERING_RE = re.compile(r"^(?:\(?\d+[.):]|[-*•])(?:\s+|$)")


def parse_paraphrases(raw: str) -> list[str]:
    out = []
    for line in raw.splitlines():
        line = line.strip()
        prev = None
        while line != prev:
            prev = line
            line = _NUMBERING_RE.sub("", line).strip().strip("\"'“”").strip()
        if not line or line.endswith(":"):
            continue
        out.append(line)
    return out


def paraphrase_instructions(base: str, n: int, generator, name: str = "paraphrased") -> InstructionSet:
    """Ask ``generator`` for paraphrases of ``base``; returns base plus the first n-1 distinct ones."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if n == 1:
        return InstructionSet(name, [base], "paraphrased")
    raw = generator.complete(f"{PARAPHRASE_PROMPT.format(n=n)} {base}")
    kept, seen = [base], {_normalize_ws(base)}
    for para in parse_paraphrases(raw):
        key = _normalize_ws(para)
        if key not in seen:
            seen.add(key)
            kept.append(para)
    if len(kept) < n:
        raise ValidationError(f"needed {n - 1} paraphrases, parsed only {len(kept) - 1}")
    return InstructionSet(name, kept[:n], "paraphrased")


# reformulation prompts ---------------------------------------------------------

def context_string(docs: Sequence[Document]) -> str:
    return " ".join(d.text for d in docs)


def build_qr_prompt(instruction: str, query: str, style: str = "keyword_plain",
                    context_docs: Sequence[Document] | None = None, context_position: str = "prepend") -> str:
    """Render a reformulation prompt.

    With ``context_docs`` the feedback texts, joined by single spaces in rank
    order, are put in front of the instruction (or after the query when
    ``context_position="append"``).
    """
    if not query.strip():
        raise ValidationError("query must be nonempty")
    if style not in STYLES:
        raise ValidationError(f"unknown prompt style {style!r}")
    if context_position not in ("prepend", "append"):
        raise ValidationError(f"context_position must be 'prepend' or 'append', got {context_position!r}")
    prefix = suffix = ""
    if context_docs is not None:
        if len(context_docs) == 0:
            raise ValidationError("feedback requested but no context documents given")
        rf = RF_PREFIX.replace("{C}", context_string(context_docs))
        if context_position == "prepend":
            prefix = rf
        else:
            suffix = " " + rf.rstrip()
    if style == "natural_language":
        return f"{NATURAL_LANGUAGE_PREAMBLE}\n{prefix}{query}{suffix}"
    line = f"{prefix}{instruction}: {query}{suffix}"
    if style == "keyword_chat":
        return f"{KEYWORD_CHAT_PREAMBLE}\n{line}"
    return line


# keyword parsing ---------------------------------------------------------------

_KW_NUMBERING_RE = re.compile(r"^\(?\d+[.)](?:\s+|$)")


def _trim(s: str) -> str:
    start, end = 0, len(s)
    while start < end and not s[start].isalnum():
        start += 1
    while end > start and not s[end - 1].isalnum():
        end -= 1
    return s[start:end]


def normalize_keyword(item: str) -> str:
    s = _normalize_ws(item.lower())
    prev = None
    while s != prev:
        prev = s
        s = _trim(_KW_NUMBERING_RE.sub("", s))
        s = _normalize_ws(s.lower())
    return s


def parse_keywords(raw: str, mode: str = "comma") -> list[str]:
    """Split generated text into normalized, de-duplicated keywords.

    ``comma`` splits on commas and line breaks, ``whitespace`` on any whitespace.
    """
    if mode == "comma":
        items = re.split(r"[,\n\r]", raw)
    elif mode == "whitespace":
        items = raw.split()
    else:
        raise ValidationError(f"keyword mode must be 'comma' or 'whitespace', got {mode!r}")
    out: dict[str, None] = {}
    for item in items:
        kw = normalize_keyword(item)
        if kw:
            out.setdefault(kw, None)
    return list(out)


# filtering ---------------------------------------------------------------------

def filter_template() -> str:
    return resources.files("qrw.data").joinpath(FILTER_TEMPLATE_FILE).read_text(encoding="utf-8").rstrip("\n")


def build_filter_prompt(query: str, keywords: Sequence[str]) -> str:
    if not keywords:
        raise ValidationError("filter needs a nonempty keyword list")
    return filter_template().format(query=query, keywords=", ".join(keywords))


def apply_filter(query: str, keywords: Sequence[str], generator) -> list[str]:
    return parse_keywords(generator.complete(build_filter_prompt(query, keywords)), "comma")


# interpretability judging ------------------------------------------------------

def build_interpretability_prompt(original_query: str, reformulation_a: str, reformulation_b: str) -> str:
    if not reformulation_a.strip() or not reformulation_b.strip():
        raise ValidationError("both reformulations must be nonempty")
    return INTERPRETABILITY_TEMPLATE.format(query=original_query, a=reformulation_a, b=reformulation_b)


_VERDICT_RE = re.compile(
    r"^(?:.*?\b(?i:answer|option|choice|verdict)\s*(?i:is)?\s*[:\-]?\s*)?"
    r"(?:\*\*)?(?i:reformulation\s+)?\(?([AB])\)?(?:\*\*)?[.!]?$"
)


def parse_verdict(text: str) -> str:
    """Return "A", "B" or "undecided" from the judge's last nonempty line."""
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        return "undecided"
    last = lines[-1]
    if last.lower().startswith("specify either"):
        return "undecided"
    m = _VERDICT_RE.match(last)
    if not m:
        return "undecided"
    return m.group(1)


@dataclass
class JudgeResult:
    winner: str  # "A" (first reformulation), "B" (second) or "tie"
    first_order: str = field(default="undecided")
    second_order: str = field(default="undecided")


def combine_verdicts(first: str, second: str) -> JudgeResult:
    """``first`` judged (A=r1, B=r2); ``second`` judged the swapped order (A=r2, B=r1)."""
    swapped = {"A": "B", "B": "A"}.get(second, "undecided")
    winner = first if first == swapped and first in ("A", "B") else "tie"
    return JudgeResult(winner, first, second)


def judge_pair_both_orders(original_query: str, reformulation_a: str, reformulation_b: str, generator) -> JudgeResult:
    """Judge twice with the positions swapped; disagreement is reported as a tie."""
    first = parse_verdict(generator.complete(build_interpretability_prompt(original_query, reformulation_a, reformulation_b)))
    second = parse_verdict(generator.complete(build_interpretability_prompt(original_query, reformulation_b, reformulation_a)))
    return combine_verdicts(first, second)
