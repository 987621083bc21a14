"""Chat-completion gateway: HTTP client, answer parsing, scripted oracles.

All gateways share one entry point, :meth:`GatewayBase.ask`: render-time
option metadata goes in, a parsed :class:`ChoiceResult` comes out, and an
append-only JSONL audit record is written per call. Answer parsing is
rule-based and documented in the README; abstention is a value, never an
exception.

The scripted oracles exist for testing and offline experiments: they
answer deterministically from structured knowledge of the prompt instead
of calling a model.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .errors import ApiError, TransportError
from .prompts import Prompt, PromptOption

_LETTER_TOKEN = re.compile(r"(?<![A-Za-z0-9])([A-Z]{1,2})(?![A-Za-z0-9])")

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})

REFUSAL_TEXT = "Unable to decide."


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 16
    seed: int | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt text is empty")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")


@dataclass(frozen=True)
class ChoiceResult:
    """A parsed model answer: option index, or None with an abstain reason."""

    index: int | None
    reason: str = ""
    raw: str = ""

    @property
    def chosen(self) -> bool:
        return self.index is not None


def parse_choice(raw: str, options: Sequence[PromptOption]) -> ChoiceResult:
    """Map raw response text onto the option list.

    Precedence: (1) standalone uppercase option letters; exactly one
    distinct letter decides, two or more abstain as ambiguous. (2) unique
    case-insensitive containment of exactly one option's entity label.
    (3) abstain as unparseable.
    """
    letters = {option.letter: i for i, option in enumerate(options)}
    found = {m.group(1) for m in _LETTER_TOKEN.finditer(raw) if m.group(1) in letters}
    if len(found) == 1:
        return ChoiceResult(letters[found.pop()], raw=raw)
    if len(found) > 1:
        return ChoiceResult(None, f"multiple option letters: {', '.join(sorted(found))}", raw)
    lowered = raw.lower()
    contained = [
        i for i, option in enumerate(options)
        if option.label and option.label.lower() in lowered
    ]
    if len(contained) == 1:
        return ChoiceResult(contained[0], raw=raw)
    return ChoiceResult(None, "unparseable", raw)


class GatewayBase:
    """Shared ask/parse/audit plumbing for HTTP and oracle gateways."""

    def __init__(self, audit_path: str | Path | None = None):
        self.audit_path = Path(audit_path) if audit_path else None
        self._audit_lock = threading.Lock()

    def respond(self, prompt: Prompt, *, source: int, round_index: int = 0) -> str:
        raise NotImplementedError

    def ask(self, prompt: Prompt, *, source: int, round_index: int = 0) -> ChoiceResult:
        started = time.monotonic()
        try:
            raw = self.respond(prompt, source=source, round_index=round_index)
        except TransportError as exc:
            self._audit(
                prompt, source, round_index, None,
                time.monotonic() - started, failure=str(exc),
            )
            raise
        result = parse_choice(raw, prompt.options)
        self._audit(prompt, source, round_index, result, time.monotonic() - started)
        return result

    def _audit(
        self,
        prompt: Prompt,
        source: int,
        round_index: int,
        result: ChoiceResult | None,
        elapsed: float,
        failure: str | None = None,
    ) -> None:
        if self.audit_path is None:
            return
        if result is None:
            outcome = {"transport_error": failure}
        elif result.chosen:
            outcome = {"chosen": result.index, "target": prompt.options[result.index].target}
        else:
            outcome = {"abstain": result.reason}
        record = {
            "request_hash": hashlib.sha256(prompt.rendered.encode("utf-8")).hexdigest(),
            "prompt_kind": prompt.kind.value,
            "source": source,
            "round": round_index,
            "raw_response": result.raw if result is not None else None,
            "outcome": outcome,
            "latency_ms": round(elapsed * 1000.0, 3),
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._audit_lock:
            with open(self.audit_path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")


# -- scripted oracles ---------------------------------------------------------


class TruthfulOracle(GatewayBase):
    """Answers the letter of the gold candidate, or refuses if absent."""

    def __init__(self, gold: Mapping[int, int], audit_path=None):
        super().__init__(audit_path)
        self.gold = dict(gold)

    def respond(self, prompt: Prompt, *, source: int, round_index: int = 0) -> str:
        target = self.gold.get(source)
        for option in prompt.options:
            if option.target == target:
                return option.letter
        return REFUSAL_TEXT


class FirstOptionOracle(GatewayBase):
    """Pure positional bias: always answers the first option."""

    def respond(self, prompt: Prompt, *, source: int, round_index: int = 0) -> str:
        return prompt.options[0].letter


class FixedAnswerOracle(GatewayBase):
    """Returns one fixed text for every prompt."""

    def __init__(self, text: str, audit_path=None):
        super().__init__(audit_path)
        self.text = text

    def respond(self, prompt: Prompt, *, source: int, round_index: int = 0) -> str:
        return self.text


class PositionBiasedOracle(GatewayBase):
    """Samples an option position from fixed weights, content-blind.

    Pure given (weights, seed, prompt): the draw is keyed on a hash of
    the rendered text, so repeated calls agree and different permutations
    draw independently.
    """

    def __init__(self, bias: Sequence[float], seed: int, audit_path=None):
        super().__init__(audit_path)
        if not bias or any(w < 0 for w in bias):
            raise ValueError("bias weights must be non-empty and non-negative")
        self.bias = tuple(float(w) for w in bias)
        self.seed = seed

    def respond(self, prompt: Prompt, *, source: int, round_index: int = 0) -> str:
        m = len(prompt.options)
        weights = list(self.bias[:m])
        weights += [self.bias[-1]] * (m - len(weights))
        if sum(weights) == 0:
            weights = [1.0] * m
        digest = hashlib.sha256(f"{self.seed}:{prompt.rendered}".encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        position = rng.choices(range(m), weights=weights)[0]
        return prompt.options[position].letter


# -- HTTP gateway ----------------------------------------------------------------


class TokenBucket:
    """Blocking token bucket; refills continuously at ``rate`` per second."""

    def __init__(self, rate: float, capacity: float | None = None):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(rate, 1.0)
        self._tokens = self.capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                deficit = (1.0 - self._tokens) / self.rate
            time.sleep(deficit)


@dataclass
class GatewayConfig:
    endpoint: str
    model: str
    api_key: str | None = None
    temperature: float = 0.0
    max_tokens: int = 16
    seed: int | None = None
    timeout: float = 30.0
    retries: int = 3
    concurrency: int = 8
    requests_per_second: float | None = None
    backoff: float = 0.5


class HttpGateway(GatewayBase):
    """Chat-completions client with retry, concurrency cap, and rate limit.

    Sends the standard JSON body (``model``, ``messages`` with a single
    user message, ``temperature``, ``max_tokens``, optional ``seed``) and
    reads the first choice's message content. Transient failures
    (transport errors, 429, 5xx) retry with exponential backoff up to
    ``config.retries`` extra attempts, then raise TransportError; other
    non-success statuses raise ApiError immediately.
    """

    def __init__(
        self,
        config: GatewayConfig,
        audit_path: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        super().__init__(audit_path)
        self.config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(config.concurrency)
        self._bucket = (
            TokenBucket(config.requests_per_second)
            if config.requests_per_second
            else None
        )

    def request_for(self, prompt_text: str) -> CompletionRequest:
        return CompletionRequest(
            model=self.config.model,
            prompt=prompt_text,
            temperature=self.config.temperature,
            max_tokens=self.config.max_tokens,
            seed=self.config.seed,
        )

    def respond(self, prompt: Prompt, *, source: int, round_index: int = 0) -> str:
        return self.complete(self.request_for(prompt.rendered))

    def complete(self, request: CompletionRequest) -> str:
        body: dict = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"

        delay = self.config.backoff
        last_failure = "no attempt made"
        for attempt in range(self.config.retries + 1):
            if attempt:
                time.sleep(delay)
                delay *= 2
            if self._bucket is not None:
                self._bucket.acquire()
            with self._slots:
                try:
                    response = self._client.post(self.config.endpoint, json=body, headers=headers)
                except httpx.HTTPError as exc:
                    last_failure = f"transport error: {exc}"
                    continue
            if response.status_code == 200:
                return self._extract_content(response)
            if response.status_code in RETRYABLE_STATUSES:
                last_failure = f"status {response.status_code}"
                continue
            raise ApiError(response.status_code, response.text)
        raise TransportError(
            f"exhausted {self.config.retries + 1} attempts against "
            f"{self.config.endpoint}: {last_failure}"
        )

    @staticmethod
    def _extract_content(response: httpx.Response) -> str:
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError):
            raise ApiError(response.status_code, f"malformed payload: {response.text[:200]}") from None
        if not isinstance(content, str):
            raise ApiError(response.status_code, "message content is not text")
        return content

    def close(self) -> None:
        self._client.close()
