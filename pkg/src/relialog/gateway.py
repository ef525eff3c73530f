"""Pluggable completion-provider gateway: token-budget chunk planning,
retry with exponential backoff, bounded concurrency, and an audit trail."""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol

import httpx

BUDGET_SAFETY_FACTOR = 0.9
BACKOFF_BASE_S = 2.0
BACKOFF_FACTOR = 2.0
DEFAULT_MAX_INFLIGHT = 4


class GatewayError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class PlanError(GatewayError):
    pass


class AuthFailure(GatewayError):
    def __init__(self, message: str = "authentication rejected"):
        super().__init__("auth_failure", message)


class RateLimited(GatewayError):
    def __init__(self, message: str = "rate limited"):
        super().__init__("rate_limited", message)


class ProviderTimeout(GatewayError):
    def __init__(self, message: str = "request timed out"):
        super().__init__("timeout", message)


class ContextOverflow(GatewayError):
    def __init__(self, message: str = "prompt exceeds provider context window"):
        super().__init__("context_overflow", message)


class TransientProviderError(GatewayError):
    def __init__(self, message: str):
        super().__init__("transient", message)


class RetriesExhausted(GatewayError):
    def __init__(self, last: GatewayError, attempts: int):
        super().__init__("retries_exhausted", f"gave up after {attempts} attempts; last: {last}")
        self.last = last
        self.attempts = attempts


_RETRYABLE = (RateLimited, ProviderTimeout, TransientProviderError)
_FATAL = (AuthFailure, ContextOverflow)


@dataclass(frozen=True, slots=True)
class ProviderProfile:
    name: str
    context_window_tokens: int
    max_output_tokens: int
    request_timeout_s: int = 120
    max_retries: int = 3

    def __post_init__(self) -> None:
        if not (self.context_window_tokens > self.max_output_tokens > 0):
            raise ValueError("profile requires context_window_tokens > max_output_tokens > 0")

    def prompt_token_budget(self) -> float:
        return BUDGET_SAFETY_FACTOR * (self.context_window_tokens - self.max_output_tokens)


#: Built-in profiles. "mock" mirrors a large-window model so whole corpora fit
#: in one request; "mock-small" forces chunking for packed/sampled runs.
BUILTIN_PROFILES = {
    "mock": ProviderProfile("mock", context_window_tokens=1_000_000, max_output_tokens=16_000),
    "mock-small": ProviderProfile("mock-small", context_window_tokens=8_000, max_output_tokens=1_000),
}


class ChunkStrategy(str, Enum):
    FULL = "full"
    SAMPLED_FRACTION = "sampled_fraction"
    PACKED = "packed"


@dataclass(frozen=True)
class ChunkPlan:
    strategy: ChunkStrategy
    chunks: tuple[tuple[str, ...], ...]
    chunk_token_estimates: tuple[int, ...]
    seed: int
    sample_fraction: float | None = None

    def selected_ids(self) -> list[str]:
        return [log_id for chunk in self.chunks for log_id in chunk]


def plan_chunks(
    log_ids: list[str],
    per_log_token_estimates: dict[str, int],
    overhead_tokens: int,
    profile: ProviderProfile,
    strategy: ChunkStrategy,
    seed: int = 0,
    sample_fraction: float | None = None,
) -> ChunkPlan:
    """Split log ids into request chunks that respect the profile's token budget.

    full: one chunk or an error. packed: greedy first-fit in the given order.
    sampled_fraction: seeded uniform sample without replacement (selection is
    keyed on the sorted id set, so it is invariant to input permutation),
    then packed.
    """
    for log_id in log_ids:
        if per_log_token_estimates.get(log_id, 0) <= 0:
            raise PlanError("bad_estimate", f"missing or non-positive token estimate for {log_id!r}")
    budget = profile.prompt_token_budget()
    if overhead_tokens >= budget:
        raise PlanError("overhead_exceeds_budget", "prompt shell alone exceeds the token budget")

    def pack(ids: list[str]) -> tuple[list[list[str]], list[int]]:
        chunks: list[list[str]] = []
        totals: list[int] = []
        for log_id in ids:
            estimate = per_log_token_estimates[log_id]
            if overhead_tokens + estimate > budget:
                raise PlanError(
                    "single_log_exceeds_budget",
                    f"log {log_id!r} alone would exceed the prompt token budget",
                )
            for index, total in enumerate(totals):
                if total + estimate <= budget:
                    chunks[index].append(log_id)
                    totals[index] = total + estimate
                    break
            else:
                chunks.append([log_id])
                totals.append(overhead_tokens + estimate)
        return chunks, totals

    if strategy is ChunkStrategy.FULL:
        total = overhead_tokens + sum(per_log_token_estimates[i] for i in log_ids)
        if total > budget:
            raise PlanError(
                "full_payload_too_large",
                f"payload estimate {total} exceeds budget {budget:.0f}; use packed or sampled_fraction",
            )
        chunks, totals = [list(log_ids)], [total]
    elif strategy is ChunkStrategy.PACKED:
        chunks, totals = pack(list(log_ids))
    elif strategy is ChunkStrategy.SAMPLED_FRACTION:
        if sample_fraction is None or not (0 < sample_fraction <= 1):
            raise PlanError("bad_fraction", "sampled_fraction requires a fraction in (0, 1]")
        k = round(sample_fraction * len(log_ids))
        selected = set(random.Random(seed).sample(sorted(log_ids), k))
        chunks, totals = pack([i for i in log_ids if i in selected])
    else:  # pragma: no cover - enum is closed
        raise PlanError("bad_strategy", f"unknown strategy {strategy!r}")

    return ChunkPlan(
        strategy=strategy,
        chunks=tuple(tuple(chunk) for chunk in chunks),
        chunk_token_estimates=tuple(totals),
        seed=seed,
        sample_fraction=sample_fraction if strategy is ChunkStrategy.SAMPLED_FRACTION else None,
    )


class Provider(Protocol):
    name: str

    def complete(self, prompt_text: str) -> str: ...


class GatewayClient:
    """Wraps a provider with retry/backoff, bounded concurrency, and auditing.

    Transient failures (rate limits, timeouts) are retried with exponential
    backoff (base 2 s, factor 2, jitter) up to profile.max_retries; auth
    failures and context overflows are never retried.
    """

    def __init__(
        self,
        provider: Provider,
        profile: ProviderProfile,
        *,
        audit_path: str | Path | None = None,
        prompt_dump_dir: str | Path | None = None,
        sleep: Callable[[float], None] = time.sleep,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
        jitter_seed: int = 0,
    ):
        self.provider = provider
        self.profile = profile
        self.audit_path = Path(audit_path) if audit_path else None
        self.prompt_dump_dir = Path(prompt_dump_dir) if prompt_dump_dir else None
        self._sleep = sleep
        self.max_inflight = max_inflight
        self._rng = random.Random(jitter_seed)
        self._audit_lock = threading.Lock()

    def _dump_prompt(self, prompt_text: str) -> None:
        if self.prompt_dump_dir is None:
            return
        # Content-addressed name: identical prompts map to one file, so dumps
        # stay deterministic under concurrency and across reruns.
        digest = hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()[:16]
        self.prompt_dump_dir.mkdir(parents=True, exist_ok=True)
        path = self.prompt_dump_dir / f"prompt_{digest}.txt"
        if not path.exists():
            path.write_text(prompt_text, encoding="utf-8")

    def _audit(self, record: dict) -> None:
        if self.audit_path is None:
            return
        record = {"ts": datetime.now(timezone.utc).isoformat(), **record}
        line = json.dumps(record, ensure_ascii=False)
        with self._audit_lock:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def complete(self, prompt_text: str) -> str:
        self._dump_prompt(prompt_text)
        attempt = 0
        while True:
            attempt += 1
            base = {
                "provider": self.provider.name,
                "profile": self.profile.name,
                "attempt": attempt,
                "prompt_chars": len(prompt_text),
            }
            try:
                response = self.provider.complete(prompt_text)
            except _FATAL as exc:
                self._audit({**base, "status": exc.code})
                raise
            except _RETRYABLE as exc:
                self._audit({**base, "status": exc.code})
                if attempt > self.profile.max_retries:
                    raise RetriesExhausted(exc, attempts=attempt)
                delay = BACKOFF_BASE_S * BACKOFF_FACTOR ** (attempt - 1)
                delay *= 1.0 + 0.25 * self._rng.random()
                self._sleep(delay)
                continue
            self._audit({**base, "status": "ok", "response_chars": len(response)})
            return response

    def complete_many(self, prompts: list[str]) -> list[str]:
        """Complete several prompts; results are merged strictly in input order."""
        if not prompts:
            return []
        if len(prompts) == 1 or self.max_inflight <= 1:
            return [self.complete(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=min(self.max_inflight, len(prompts))) as pool:
            futures = [pool.submit(self.complete, p) for p in prompts]
            return [f.result() for f in futures]


class OpenAICompatProvider:
    """Adapter for HTTPS chat-completion endpoints with an OpenAI-style shape.

    Credentials come from an environment variable, never from config files.
    Requests pin the provider's most deterministic setting (temperature 0).
    """

    def __init__(
        self,
        name: str,
        base_url: str,
        model: str,
        *,
        api_key_env: str = "RELIALOG_API_KEY",
        timeout_s: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.name = name
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.params = {"temperature": 0}
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def complete(self, prompt_text: str) -> str:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise AuthFailure(f"environment variable {self.api_key_env} is not set")
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {api_key}"},
                json={
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt_text}],
                    **self.params,
                },
            )
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise TransientProviderError(str(exc)) from exc
        if response.status_code in (401, 403):
            raise AuthFailure(f"provider returned HTTP {response.status_code}")
        if response.status_code == 429:
            raise RateLimited()
        if response.status_code == 408:
            raise ProviderTimeout("provider returned HTTP 408")
        if response.status_code == 400 and b"context" in response.content.lower():
            raise ContextOverflow(response.text[:200])
        if response.status_code >= 500:
            raise TransientProviderError(f"provider returned HTTP {response.status_code}")
        if response.status_code != 200:
            raise TransientProviderError(f"unexpected HTTP {response.status_code}: {response.text[:200]}")
        body = response.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransientProviderError(f"malformed provider response body: {exc}") from exc
