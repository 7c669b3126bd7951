import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest

from qrw.errors import GenerationError, HTTPStatusError, TransportError, ValidationError
from qrw.generation import (
    GenerationCache,
    GenerationRecord,
    Generator,
    GeneratorConfig,
    RemoteProvider,
    mock_complete,
    split_query_line,
)
from qrw.prompts import BASE_INSTRUCTION, build_qr_prompt

PROMPT = "Improve the search effectiveness by suggesting expansion terms for the query: do goldfish grow"


class TestMock:
    def test_frozen_outputs(self):
        assert mock_complete(PROMPT, 0) == "goldfish, grow, regulation, factors, economics, equipment"
        assert mock_complete(PROMPT, 1) == "goldfish, grow, tradition, curriculum, examples, vaccine"

    def test_deterministic(self):
        assert mock_complete(PROMPT, 7) == mock_complete(PROMPT, 7)

    def test_instruction_changes_output(self):
        other = "Suggest expansion terms for the query: do goldfish grow"
        assert mock_complete(other, 0) != mock_complete(PROMPT, 0)
        assert mock_complete(other, 0).startswith("goldfish, grow")

    def test_uses_final_line(self):
        chat = build_qr_prompt(BASE_INSTRUCTION, "do goldfish grow", style="keyword_chat")
        assert "\n" in chat
        assert mock_complete(chat, 0) == mock_complete(PROMPT, 0)

    def test_max_new_tokens_caps_items(self):
        assert len(mock_complete(PROMPT, 0, max_new_tokens=3).split(", ")) == 3

    def test_paraphrase_prompt(self):
        out = mock_complete("Generate 3 paraphrases for the following instruction: Do X.", 0)
        lines = out.splitlines()
        assert len(lines) == 3 and lines[0].startswith("1. Do X.")
        assert len(set(lines)) == 3

    def test_split_query_line(self):
        assert split_query_line("a\nb: c: d") == ("b: c", "d")
        assert split_query_line("no colon") == ("", "no colon")


class TestConfig:
    def test_defaults(self):
        cfg = GeneratorConfig()
        assert (cfg.top_p, cfg.top_k, cfg.repetition_penalty, cfg.max_new_tokens) == (0.92, 200, 1.2, 256)

    @pytest.mark.parametrize("field,value", [("top_p", 0.0), ("top_p", 1.5), ("top_k", 0),
                                             ("repetition_penalty", 0.5), ("provider", "gpt")])
    def test_rejects(self, field, value):
        with pytest.raises(ValidationError, match=field):
            GeneratorConfig(**{field: value})

    def test_fingerprint(self):
        a = GeneratorConfig()
        assert a.fingerprint() == GeneratorConfig().fingerprint()
        assert a.fingerprint() != a.replace(seed=1).fingerprint()
        assert a.fingerprint() != a.replace(top_p=0.5).fingerprint()
        assert a.fingerprint() == a.replace(timeout=3).fingerprint()


class TestCache:
    def test_put_get(self, tmp_path):
        cache = GenerationCache(tmp_path)
        rec = GenerationRecord("p", "fp", "out", "t", "mock")
        assert cache.get("p", "fp") is None
        cache.put(rec)
        assert cache.get("p", "fp") == rec
        assert cache.get("p", "other") is None

    def test_corrupt_entry_is_a_miss(self, tmp_path, caplog):
        cache = GenerationCache(tmp_path)
        cache.path("p", "fp").write_text("{not json")
        assert cache.get("p", "fp") is None
        assert "corrupt" in caplog.text

    def test_mismatched_entry_is_a_miss(self, tmp_path):
        cache = GenerationCache(tmp_path)
        cache.path("p", "fp").write_text(GenerationRecord("q", "fp", "o", "t", "mock").to_json())
        assert cache.get("p", "fp") is None

    def test_concurrent_puts_leave_valid_record(self, tmp_path):
        cache = GenerationCache(tmp_path)
        recs = [GenerationRecord("p", "fp", f"out{i}", "t", "mock") for i in range(40)]
        with ThreadPoolExecutor(8) as pool:
            list(pool.map(cache.put, recs))
        assert cache.get("p", "fp") in recs
        assert [p.name for p in tmp_path.iterdir()] == [cache.path("p", "fp").name]

    def test_generator_uses_cache(self, tmp_path):
        cache = GenerationCache(tmp_path)
        gen = Generator(GeneratorConfig(), cache)
        first = gen.complete(PROMPT)
        record = cache.get(PROMPT, gen.fingerprint)
        assert record.output == first and record.provider == "mock"
        cache.put(GenerationRecord(PROMPT, gen.fingerprint, "cached!", "t", "mock"))
        assert gen.complete(PROMPT) == "cached!"

    def test_empty_prompt(self):
        with pytest.raises(ValidationError):
            Generator().complete("")


def ok(content="a, b"):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def remote(handler, sleeps=None, **kw):
    cfg = GeneratorConfig(provider="remote", endpoint="http://llm.test/v1/chat/completions", model_name="m", **kw)
    return RemoteProvider(cfg, httpx.MockTransport(handler), sleep=(sleeps.append if sleeps is not None else lambda s: None))


class TestRemote:
    def test_request_body(self, monkeypatch):
        monkeypatch.setenv("QRW_API_KEY", "secret")
        seen = {}

        def handler(request):
            seen["body"] = json.loads(request.content)
            seen["auth"] = request.headers.get("authorization")
            return ok("x, y")

        assert remote(handler).complete("hello") == "x, y"
        body = seen["body"]
        assert body["top_p"] == 0.92 and body["max_tokens"] == 256 and body["model"] == "m"
        assert body["messages"] == [{"role": "user", "content": "hello"}]
        assert "top_k" not in body and "repetition_penalty" not in body
        assert seen["auth"] == "Bearer secret"

    def test_extra_params_forwarded_when_enabled(self):
        body = remote(lambda r: ok(), forward_extra_params=True).request_body("p")
        assert body["top_k"] == 200 and body["repetition_penalty"] == 1.2

    def test_retries_with_backoff(self):
        calls, sleeps = [], []

        def handler(request):
            calls.append(1)
            return httpx.Response(503) if len(calls) < 3 else ok("done")

        assert remote(handler, sleeps).complete("p") == "done"
        assert len(calls) == 3 and sleeps == [1.0, 2.0]

    def test_transport_errors_exhaust(self):
        def handler(request):
            raise httpx.ConnectError("down")

        with pytest.raises(TransportError) as info:
            remote(handler).complete("p")
        assert info.value.attempts == 3

    def test_status_error_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(400, text="bad request")

        with pytest.raises(HTTPStatusError) as info:
            remote(handler).complete("p")
        assert info.value.status == 400 and len(calls) == 1

    def test_persistent_5xx_raises_status(self):
        with pytest.raises(HTTPStatusError) as info:
            remote(lambda r: httpx.Response(500)).complete("p")
        assert info.value.attempts == 3

    def test_malformed_response(self):
        with pytest.raises(GenerationError):
            remote(lambda r: httpx.Response(200, json={"nope": 1})).complete("p")

    def test_in_flight_bound(self):
        active, peak, lock = [0], [0], threading.Lock()

        def handler(request):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.02)
            with lock:
                active[0] -= 1
            return ok()

        provider = remote(handler, max_in_flight=2)
        with ThreadPoolExecutor(8) as pool:
            list(pool.map(provider.complete, [f"p{i}" for i in range(16)]))
        assert peak[0] <= 2

    def test_endpoint_required(self):
        with pytest.raises(ValidationError):
            Generator(GeneratorConfig(provider="remote"))

    def test_generator_routes_to_remote(self, tmp_path):
        cfg = GeneratorConfig(provider="remote", endpoint="http://llm.test/x")
        gen = Generator(cfg, GenerationCache(tmp_path), transport=httpx.MockTransport(lambda r: ok("remote out")))
        assert gen.complete("p") == "remote out"
        assert gen.cache.get("p", gen.fingerprint).provider == "remote"
