"""Uniform client for text-generation and judging backends.

Every other module goes through this gateway, never to the network directly.
Responses are cached content-addressed by request hash so dataset generation is
resumable and audits reproducible. The deterministic mock transport keeps the
whole pipeline runnable offline: captioning and graph parsing echo the
grammar-valid fact lines embedded in the prompt, paraphrase is identity, and
judging scores by token overlap.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field

import httpx

from .graph import GraphParseError, parse_caption_to_graph

log = logging.getLogger(__name__)

TASKS = ("caption", "graph_parse", "paraphrase", "judge")

JUDGE_PROMPT_VERSION = "judge-v1"
JUDGE_PROMPT = """You are scoring a candidate answer against a reference answer.
Assign integer scores from 0 to 5 for ci (correctness of information),
do (detail orientation), and cu (contextual understanding), plus ave, the
overall answer quality on the same 0-5 scale.
Reply with JSON only: {{"ci": int, "do": int, "cu": int, "ave": float, "acc_attrs": {{}}}}
QUESTION:
{question}
REFERENCE:
{reference}
CANDIDATE:
{candidate}"""

PARAPHRASE_MARKER = "TEXT:\n"


class TransientError(Exception):
    """Retryable upstream failure (timeouts, 429, 5xx)."""


class GatewayError(Exception):
    """Non-transient service failure; carries the upstream status when known."""

    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


class CacheCorruptionError(Exception):
    pass


class JudgeParseError(Exception):
    """Judge reply did not parse; the raw payload is preserved for audit."""

    def __init__(self, message, raw):
        self.raw = raw
        super().__init__(message)


@dataclass(frozen=True)
class GatewayRequest:
    task: str
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 1024
    model: str = "mock"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task {self.task!r} not in {TASKS}")

    @property
    def idempotency_key(self) -> str:
        canonical = json.dumps(
            {"task": self.task, "prompt": self.prompt, "temperature": self.temperature,
             "max_tokens": self.max_tokens, "model": self.model},
            sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class JudgeScores:
    ci: int
    do_: int
    cu: int
    ave: float
    acc_attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, v in (("ci", self.ci), ("do", self.do_), ("cu", self.cu), ("ave", self.ave)):
            if not 0 <= v <= 5:
                raise ValueError(f"{name}={v} outside the 0-5 Likert range")


# ---------------------------------------------------------------------------
# Transports


def _grammar_lines(text: str) -> list:
    """Largest subset of prompt lines that parses as one grammar document."""
    kept = [l.strip() for l in text.split("\n") if l.strip() and not l.strip().startswith("#")]
    while kept:
        try:
            parse_caption_to_graph("\n".join(kept), modality="rgb")
            return kept
        except GraphParseError as exc:
            if exc.line is None:
                return []
            del kept[exc.line - 1]
        except ValueError:
            return []
    return []


def _tokens(text: str) -> list:
    return re.findall(r"[a-z0-9]+", text.lower())


class MockTransport:
    """Bit-deterministic offline stand-in for the chat service."""

    def __init__(self, malformed: bool = False):
        self.malformed = malformed
        self.calls = 0

    def __call__(self, req: GatewayRequest) -> str:
        self.calls += 1
        if req.task in ("caption", "graph_parse"):
            lines = _grammar_lines(req.prompt)
            return "\n".join(lines) if lines else ""
        if req.task == "paraphrase":
            idx = req.prompt.find(PARAPHRASE_MARKER)
            return req.prompt[idx + len(PARAPHRASE_MARKER):] if idx >= 0 else req.prompt
        if self.malformed:
            return "The candidate deserves top marks, great work!"
        return self._judge_reply(req.prompt)

    def _judge_reply(self, prompt: str) -> str:
        def section(name, until):
            start = prompt.index(f"{name}:\n") + len(name) + 2
            end = prompt.index(f"\n{until}:\n", start) if until else len(prompt)
            return prompt[start:end]

        reference = section("REFERENCE", "CANDIDATE")
        candidate = section("CANDIDATE", None)
        ref_tokens = _tokens(reference)
        cand_tokens = _tokens(candidate)
        if not cand_tokens:
            score = 0
        elif cand_tokens == ref_tokens:
            score = 5
        else:
            overlap = len(set(cand_tokens) & set(ref_tokens)) / max(1, len(set(ref_tokens)))
            score = round(5 * overlap)
        return json.dumps({"ci": score, "do": score, "cu": score,
                           "ave": float(score), "acc_attrs": {}})


class HttpTransport:
    """OpenAI-compatible chat completion call; key comes from FORGE_LLM_KEY."""

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get("FORGE_LLM_KEY", "")
        self.timeout = timeout

    def __call__(self, req: GatewayRequest) -> str:
        payload = {
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        try:
            resp = httpx.post(f"{self.base_url}/chat/completions", json=payload,
                              headers={"Authorization": f"Bearer {self.api_key}"},
                              timeout=self.timeout)
        except httpx.TransportError as exc:
            raise TransientError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"status {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"service error {resp.status_code}: {resp.text[:200]}",
                               status=resp.status_code)
        return resp.json()["choices"][0]["message"]["content"]


# ---------------------------------------------------------------------------
# Gateway


class Gateway:
    """Caching, retrying front door to whichever transport is configured."""

    def __init__(self, transport=None, cache_dir=None, max_retries: int = 3,
                 backoff_base: float = 1.0, sleep=time.sleep):
        self.transport = transport if transport is not None else MockTransport()
        self.cache_dir = cache_dir if cache_dir is not None else os.environ.get("FORGE_CACHE_DIR")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self.upstream_calls = 0
        self.retries = 0
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _key_lock(self, key):
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _cache_path(self, task, key):
        return os.path.join(self.cache_dir, "cache", task, f"{key}.json")

    def _cache_read(self, task, key):
        if self.cache_dir is None:
            return None
        path = self._cache_path(task, key)
        if not os.path.exists(path):
            return None
        with open(path, "r", encoding="utf-8") as f:
            envelope = json.load(f)
        digest = hashlib.sha256(envelope["response"].encode("utf-8")).hexdigest()
        if digest != envelope["checksum"]:
            raise CacheCorruptionError(f"checksum mismatch in {path}")
        return envelope["response"]

    def _cache_write(self, task, key, response):
        if self.cache_dir is None:
            return
        path = self._cache_path(task, key)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        if os.path.exists(path):  # write-once: never clobber a published response
            return
        envelope = {"task": task, "key": key, "response": response,
                    "checksum": hashlib.sha256(response.encode("utf-8")).hexdigest()}
        tmp = f"{path}.tmp.{os.getpid()}.{threading.get_ident()}"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(envelope, f, ensure_ascii=False)
        os.replace(tmp, path)

    def complete(self, req: GatewayRequest) -> str:
        """Resolve a request through the cache, retrying transient failures."""
        key = req.idempotency_key
        with self._key_lock(key):
            cached = self._cache_read(req.task, key)
            if cached is not None:
                return cached
            attempt = 0
            while True:
                try:
                    self.upstream_calls += 1
                    response = self.transport(req)
                    break
                except TransientError as exc:
                    if attempt >= self.max_retries:
                        raise GatewayError(
                            f"gave up after {attempt} retries: {exc}") from exc
                    self._sleep(self.backoff_base * (2 ** attempt))
                    attempt += 1
                    self.retries += 1
                    log.warning("transient failure (%s), retry %d/%d",
                                exc, attempt, self.max_retries)
            self._cache_write(req.task, key, response)
            return response

    def judge(self, question: str, reference: str, candidate: str,
              model: str = "mock") -> JudgeScores:
        """Likert-score a candidate against a reference via the judge protocol."""
        for name, v in (("question", question), ("reference", reference)):
            if not v:
                raise ValueError(f"{name} must be non-empty")
        prompt = JUDGE_PROMPT.format(question=question, reference=reference,
                                     candidate=candidate)
        raw = self.complete(GatewayRequest(task="judge", prompt=prompt, model=model))
        try:
            doc = json.loads(raw)
            return JudgeScores(ci=int(doc["ci"]), do_=int(doc["do"]), cu=int(doc["cu"]),
                               ave=float(doc["ave"]), acc_attrs=dict(doc.get("acc_attrs", {})))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise JudgeParseError(f"unparseable judge reply: {exc}", raw=raw) from None
