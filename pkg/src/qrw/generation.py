"""Text generation providers: a chat-completion HTTP client, an offline mock, and a disk cache."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol

import httpx

from qrw.errors import GenerationError, HTTPStatusError, TransportError, ValidationError
from qrw.index import tokenize

log = logging.getLogger(__name__)

API_KEY_ENV = "QRW_API_KEY"
MOCK_VOCAB_FILE = "mock_vocab_v1.txt"


class TextGenerator(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class GeneratorConfig:
    provider: str = "mock"
    model_name: str = "mock"
    top_p: float = 0.92
    top_k: int = 200
    repetition_penalty: float = 1.2
    max_new_tokens: int = 256
    seed: int = 0
    temperature: float = 1.0
    # remote transport
    endpoint: str | None = None
    api_key: str | None = field(default=None, repr=False)
    forward_extra_params: bool = False
    timeout: float = 60.0
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff: float = 1.0

    def __post_init__(self):
        if self.provider not in ("mock", "remote"):
            raise ValidationError(f"generator.provider must be 'mock' or 'remote', got {self.provider!r}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValidationError(f"generator.top_p must be in (0, 1], got {self.top_p}")
        if self.top_k < 1:
            raise ValidationError(f"generator.top_k must be >= 1, got {self.top_k}")
        if self.repetition_penalty < 1.0:
            raise ValidationError(f"generator.repetition_penalty must be >= 1, got {self.repetition_penalty}")
        if self.max_new_tokens < 1:
            raise ValidationError(f"generator.max_new_tokens must be >= 1, got {self.max_new_tokens}")
        if self.temperature < 0:
            raise ValidationError(f"generator.temperature must be >= 0, got {self.temperature}")
        if self.max_in_flight < 1 or self.max_attempts < 1:
            raise ValidationError("generator.max_in_flight and generator.max_attempts must be >= 1")

    def fingerprint(self) -> str:
        """Hash of the settings that influence the generated text."""
        keys = ["provider", "model_name", "top_p", "top_k", "repetition_penalty", "max_new_tokens", "temperature"]
        if self.provider == "mock":
            keys.append("seed")
        payload = {k: getattr(self, k) for k in keys}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> "GeneratorConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class GenerationRecord:
    prompt: str
    config_fingerprint: str
    output: str
    timestamp: str
    provider: str

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), ensure_ascii=False, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GenerationRecord":
        return cls(**json.loads(text))


class GenerationCache:
    """One JSON file per (prompt, config fingerprint) under ``directory``.

    Writes go to a temporary file first and are renamed into place, so readers
    never observe a partial record.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    @staticmethod
    def key(prompt: str, fingerprint: str) -> str:
        return hashlib.sha256(f"{fingerprint}\n{prompt}".encode("utf-8")).hexdigest()

    def path(self, prompt: str, fingerprint: str) -> Path:
        return self.directory / f"{self.key(prompt, fingerprint)}.json"

    def _lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def get(self, prompt: str, fingerprint: str) -> GenerationRecord | None:
        path = self.path(prompt, fingerprint)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        except OSError as exc:
            log.warning("unreadable cache entry %s: %s", path, exc)
            return None
        try:
            record = GenerationRecord.from_json(text)
        except (json.JSONDecodeError, TypeError) as exc:
            log.warning("corrupt cache entry %s treated as a miss: %s", path, exc)
            return None
        if record.prompt != prompt or record.config_fingerprint != fingerprint:
            log.warning("cache entry %s does not match its key; treated as a miss", path)
            return None
        return record

    def put(self, record: GenerationRecord) -> None:
        key = self.key(record.prompt, record.config_fingerprint)
        target = self.directory / f"{key}.json"
        with self._lock(key):
            fd, tmp = tempfile.mkstemp(prefix=f".{key}.", suffix=".tmp", dir=self.directory)
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(record.to_json())
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


# mock provider ---------------------------------------------------------------

@lru_cache(maxsize=None)
def load_mock_vocab(name: str = MOCK_VOCAB_FILE) -> tuple[str, ...]:
    text = resources.files("qrw.data").joinpath(name).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))


def _pick(vocab, *parts) -> str:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return vocab[int.from_bytes(digest[:8], "big") % len(vocab)]


_PARAPHRASE_RE = re.compile(r"^Generate (\d+) paraphrases for the following instruction:\s*(.*)$", re.S)


def split_query_line(prompt: str) -> tuple[str, str]:
    """Return (instruction part, query part) of the prompt's final nonempty line."""
    lines = [ln for ln in prompt.splitlines() if ln.strip()]
    last = lines[-1] if lines else ""
    head, sep, tail = last.rpartition(": ")
    return (head, tail) if sep else ("", last)


def mock_complete(prompt: str, seed: int = 0, max_new_tokens: int = 256) -> str:
    """Deterministic stand-in for an LLM.

    For keyword prompts the output is a comma-separated list: the query's own
    content words, then for each of them one vocabulary term keyed on
    (seed, word) and one keyed on (seed, instruction, word). The second term is
    what makes paraphrased instructions produce different keywords.
    Paraphrase prompts get numbered variants of the instruction instead.
    """
    vocab = load_mock_vocab()
    m = _PARAPHRASE_RE.match(prompt.strip())
    if m:
        count, base = int(m.group(1)), m.group(2).strip()
        lines = []
        for i in range(1, count + 1):
            lines.append(f"{i}. {base} using {_pick(vocab, seed, 'paraphrase', base, i)} variant {i}")
        return "\n".join(lines)

    instruction, query = split_query_line(prompt)
    words = list(dict.fromkeys(tokenize(query)))
    keywords = list(words)
    for w in words:
        keywords.append(_pick(vocab, seed, w))
        keywords.append(_pick(vocab, seed, instruction, w))
    keywords = list(dict.fromkeys(keywords))[:max_new_tokens]
    return ", ".join(keywords)


# remote provider -------------------------------------------------------------

class RemoteProvider:
    """Chat-completion client (OpenAI-compatible wire format) with retries and an in-flight bound."""

    RETRY_STATUS = {408, 429, 500, 502, 503, 504}

    def __init__(self, config: GeneratorConfig, transport: httpx.BaseTransport | None = None, sleep: Callable[[float], None] = time.sleep):
        if not config.endpoint:
            raise ValidationError("generator.endpoint is required for the remote provider")
        self.config = config
        self.api_key = config.api_key or os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self.client = httpx.Client(transport=transport, headers=headers, timeout=config.timeout)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep

    def request_body(self, prompt: str) -> dict:
        cfg = self.config
        body = {
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_new_tokens,
        }
        if cfg.forward_extra_params:
            body["top_k"] = cfg.top_k
            body["repetition_penalty"] = cfg.repetition_penalty
        else:
            log.debug("top_k/repetition_penalty not forwarded (forward_extra_params is off)")
        return body

    def complete(self, prompt: str) -> str:
        body = self.request_body(prompt)
        last_error: Exception | None = None
        for attempt in range(1, self.config.max_attempts + 1):
            if attempt > 1:
                self._sleep(self.config.backoff * 2 ** (attempt - 2))
            try:
                with self._slots:
                    response = self.client.post(self.config.endpoint, json=body)
            except httpx.TransportError as exc:
                log.warning("generation request attempt %d failed: %s", attempt, exc)
                last_error = exc
                continue
            if response.status_code in self.RETRY_STATUS and attempt < self.config.max_attempts:
                log.warning("generation request attempt %d got HTTP %d", attempt, response.status_code)
                continue
            if response.status_code != 200:
                raise HTTPStatusError(response.status_code, response.text, attempt)
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GenerationError(f"malformed completion response: {response.text[:200]}") from exc
        raise TransportError(f"generation request failed: {last_error}", self.config.max_attempts)

    def close(self):
        self.client.close()


class Generator:
    """Provider plus optional cache; the object every pipeline component calls."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig(), cache: GenerationCache | None = None,
                 transport: httpx.BaseTransport | None = None, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.cache = cache
        self.fingerprint = config.fingerprint()
        self._remote = RemoteProvider(config, transport, sleep) if config.provider == "remote" else None

    def complete(self, prompt: str) -> str:
        if not prompt:
            raise ValidationError("prompt must be nonempty")
        if self.cache is not None:
            hit = self.cache.get(prompt, self.fingerprint)
            if hit is not None:
                return hit.output
        if self._remote is not None:
            output = self._remote.complete(prompt)
        else:
            output = mock_complete(prompt, self.config.seed, self.config.max_new_tokens)
        if self.cache is not None:
            self.cache.put(GenerationRecord(
                prompt=prompt,
                config_fingerprint=self.fingerprint,
                output=output,
                timestamp=datetime.now(timezone.utc).isoformat(),
                provider=self.config.provider,
            ))
        return output


def complete(prompt: str, config: GeneratorConfig, cache: GenerationCache | None = None) -> str:
    return Generator(config, cache).complete(prompt)
