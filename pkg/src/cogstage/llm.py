"""Provider-agnostic chat-completion access with token/cost accounting.

Two LLM roles exist (the reasoning engine that plans, the aggregator that
writes reports); each maps to a provider + model through
:class:`LlmRoleConfig`.  Every completion appends to a
:class:`CostLedger`; money is held as integer micro-dollars so ledger
totals are exact sums regardless of append order.

The scripted :class:`MockProvider` and the callable-backed
:class:`FunctionProvider` let the whole pipeline run deterministically with
zero network; :class:`HttpProvider` speaks the common chat-completions JSON
shape for real deployments.  Transport retries (network faults) live here
and are bounded; *semantic* retries (bad JSON from the model) belong to the
planner/aggregator, not the gateway.
"""

from __future__ import annotations

import csv
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_EVEN
from typing import Callable, Iterable, Optional, Protocol, Sequence

import httpx

Message = tuple[str, str]  # (role in {system, user, assistant}, text)

_VALID_MESSAGE_ROLES = {"system", "user", "assistant"}


class GatewayError(RuntimeError):
    pass


class ProviderUnavailable(GatewayError):
    pass


class AuthFailure(GatewayError):
    pass


class ContextTooLong(GatewayError):
    pass


class EmptyLedger(GatewayError):
    pass


@dataclass(frozen=True)
class CompletionUsage:
    input_tokens: int
    output_tokens: int

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class LlmRoleConfig:
    role: str  # "reasoning_engine" | "aggregator"
    provider_id: str
    model_name: str
    endpoint: str = ""
    credentials_ref: str = ""  # environment variable holding the API key
    temperature: float = 0.0
    max_output_tokens: int = 2048


MICRO = Decimal("0.000001")


def _usd(micro_usd: int) -> Decimal:
    return (Decimal(micro_usd) * MICRO).quantize(MICRO)


def compute_cost(usage: CompletionUsage, price_per_input_token: Decimal,
                 price_per_output_token: Decimal) -> Decimal:
    """Linear token cost in USD, exact decimal arithmetic, 6 fractional digits."""
    price_in = Decimal(str(price_per_input_token))
    price_out = Decimal(str(price_per_output_token))
    if price_in < 0 or price_out < 0:
        raise ValueError("per-token prices must be non-negative")
    cost = usage.input_tokens * price_in + usage.output_tokens * price_out
    return cost.quantize(MICRO, rounding=ROUND_HALF_EVEN)


@dataclass
class PricingTable:
    """Per-token USD prices keyed by (provider_id, model_name)."""

    prices: dict[tuple[str, str], tuple[Decimal, Decimal]] = field(default_factory=dict)

    def set(self, provider_id: str, model_name: str,
            price_in, price_out) -> None:
        pin, pout = Decimal(str(price_in)), Decimal(str(price_out))
        if pin < 0 or pout < 0:
            raise ValueError("per-token prices must be non-negative")
        self.prices[(provider_id, model_name)] = (pin, pout)

    def lookup(self, provider_id: str, model_name: str) -> tuple[Decimal, Decimal]:
        return self.prices.get((provider_id, model_name), (Decimal(0), Decimal(0)))


@dataclass(frozen=True)
class LedgerEntry:
    case_id: str
    role: str
    input_tokens: int
    output_tokens: int
    cost_micro_usd: int

    @property
    def cost_usd(self) -> Decimal:
        return _usd(self.cost_micro_usd)


class CostLedger:
    """Append-only, thread-safe record of every completion's token cost."""

    def __init__(self) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> list[LedgerEntry]:
        with self._lock:
            return list(self._entries)

    def total_usd(self) -> Decimal:
        return _usd(sum(e.cost_micro_usd for e in self.entries))

    def total_for_case(self, case_id: str) -> Decimal:
        return _usd(sum(e.cost_micro_usd for e in self.entries if e.case_id == case_id))

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case_id", "role", "input_tokens", "output_tokens", "cost_usd"])
            for e in self.entries:
                writer.writerow([e.case_id, e.role, e.input_tokens, e.output_tokens,
                                 f"{e.cost_usd:.6f}"])


def summarize_ledger(ledger: CostLedger, n_cases: int) -> tuple[Decimal, Decimal]:
    """(average cost per case, overall cost) over ``n_cases`` cases."""
    entries = ledger.entries
    if not entries:
        raise EmptyLedger("ledger has no entries")
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    overall = _usd(sum(e.cost_micro_usd for e in entries))
    avg = (overall / n_cases).quantize(MICRO, rounding=ROUND_HALF_EVEN)
    return avg, overall


@dataclass(frozen=True)
class ProviderReply:
    text: str
    usage: CompletionUsage


class Provider(Protocol):
    def complete(self, messages: Sequence[Message], config: LlmRoleConfig) -> ProviderReply: ...


def _approx_tokens(text: str) -> int:
    # Rough 4-chars-per-token heuristic, only used by offline providers.
    return max(1, len(text) // 4)


class MockProvider:
    """Scripted completion queue for tests: (pattern -> reply, usage) pairs.

    Each call consumes the first unused entry whose regex matches the
    concatenated message text; identical scripts and messages always produce
    identical replies.  An exhausted or unmatched script raises
    :class:`ProviderUnavailable` (mirroring a dead backend).
    """

    def __init__(self, script: Iterable[tuple[str, str, Optional[CompletionUsage]]]):
        self._script = [
            (re.compile(pattern, re.DOTALL), reply, usage)
            for pattern, reply, usage in script
        ]
        self._used = [False] * len(self._script)
        self.calls: list[list[Message]] = []

    def complete(self, messages: Sequence[Message], config: LlmRoleConfig) -> ProviderReply:
        if not messages:
            raise ValueError("messages must be non-empty")
        self.calls.append(list(messages))
        haystack = "\n".join(text for _, text in messages)
        for i, (pattern, reply, usage) in enumerate(self._script):
            if not self._used[i] and pattern.search(haystack):
                self._used[i] = True
                if usage is None:
                    usage = CompletionUsage(_approx_tokens(haystack), _approx_tokens(reply))
                return ProviderReply(reply, usage)
        raise ProviderUnavailable("mock script exhausted or no pattern matched")


class FunctionProvider:
    """Provider backed by a deterministic function of the messages."""

    def __init__(self, fn: Callable[[Sequence[Message]], str]):
        self._fn = fn

    def complete(self, messages: Sequence[Message], config: LlmRoleConfig) -> ProviderReply:
        if not messages:
            raise ValueError("messages must be non-empty")
        text = self._fn(messages)
        prompt = "\n".join(t for _, t in messages)
        return ProviderReply(text, CompletionUsage(_approx_tokens(prompt), _approx_tokens(text)))


class HttpProvider:
    """Chat-completions HTTP adapter (OpenAI-style request/response JSON).

    Credentials come only from the environment variable named by the role
    config, never from config file contents.  Transient transport faults
    (429, 5xx, timeouts) are retried up to ``max_transport_retries`` with
    exponential backoff before surfacing as :class:`ProviderUnavailable`.
    """

    def __init__(self, *, max_transport_retries: int = 3, backoff_base: float = 0.5,
                 transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self._retries = max_transport_retries
        self._backoff = backoff_base
        self._transport = transport
        self._sleep = sleep

    def complete(self, messages: Sequence[Message], config: LlmRoleConfig) -> ProviderReply:
        if not messages:
            raise ValueError("messages must be non-empty")
        api_key = os.environ.get(config.credentials_ref, "") if config.credentials_ref else ""
        body = {
            "model": config.model_name,
            "messages": [{"role": r, "content": t} for r, t in messages],
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error: Optional[Exception] = None
        for attempt in range(self._retries + 1):
            try:
                with httpx.Client(transport=self._transport, timeout=60.0) as client:
                    response = client.post(config.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
                self._sleep(self._backoff * (2 ** attempt))
                continue
            if response.status_code in (401, 403):
                raise AuthFailure(f"provider returned HTTP {response.status_code}")
            if response.status_code == 413 or (
                response.status_code == 400 and "context" in response.text.lower()
            ):
                raise ContextTooLong(response.text[:500])
            if response.status_code >= 500 or response.status_code == 429:
                last_error = GatewayError(f"HTTP {response.status_code}")
                self._sleep(self._backoff * (2 ** attempt))
                continue
            if response.status_code != 200:
                raise GatewayError(f"unexpected HTTP {response.status_code}: {response.text[:500]}")
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            return ProviderReply(
                text,
                CompletionUsage(
                    int(usage.get("prompt_tokens", 0)),
                    int(usage.get("completion_tokens", 0)),
                ),
            )
        raise ProviderUnavailable(f"transport retries exhausted: {last_error}")


class LlmGateway:
    """Routes role configs to providers and accounts every call."""

    def __init__(self, providers: dict[str, Provider],
                 pricing: Optional[PricingTable] = None,
                 ledger: Optional[CostLedger] = None):
        self._providers = dict(providers)
        self.pricing = pricing or PricingTable()
        self.ledger = ledger or CostLedger()

    def register_provider(self, provider_id: str, provider: Provider) -> None:
        self._providers[provider_id] = provider

    def complete(self, config: LlmRoleConfig, messages: Sequence[Message],
                 case_id: str = "") -> tuple[str, CompletionUsage]:
        if not messages:
            raise ValueError("messages must be non-empty")
        for role, _ in messages:
            if role not in _VALID_MESSAGE_ROLES:
                raise ValueError(f"invalid message role {role!r}")
        try:
            provider = self._providers[config.provider_id]
        except KeyError:
            raise ProviderUnavailable(f"no provider registered as {config.provider_id!r}") from None
        reply = provider.complete(list(messages), config)
        price_in, price_out = self.pricing.lookup(config.provider_id, config.model_name)
        cost = compute_cost(reply.usage, price_in, price_out)
        self.ledger.append(LedgerEntry(
            case_id=case_id,
            role=config.role,
            input_tokens=reply.usage.input_tokens,
            output_tokens=reply.usage.output_tokens,
            cost_micro_usd=int(cost / MICRO),
        ))
        return reply.text, reply.usage


def load_role_configs(path: str) -> dict[str, LlmRoleConfig]:
    """Load {role: config} from a JSON config file.

    Expected shape: {"roles": {"reasoning_engine": {...}, "aggregator": {...}}}
    with per-role provider_id/model_name/endpoint/credentials_ref fields.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    configs = {}
    for role, spec in data.get("roles", {}).items():
        configs[role] = LlmRoleConfig(
            role=role,
            provider_id=spec["provider_id"],
            model_name=spec.get("model_name", ""),
            endpoint=spec.get("endpoint", ""),
            credentials_ref=spec.get("credentials_ref", ""),
            temperature=float(spec.get("temperature", 0.0)),
            max_output_tokens=int(spec.get("max_output_tokens", 2048)),
        )
    return configs
