"""Provider-agnostic chat and web-search transport with record/replay.

Every model interaction flows through :class:`Gateway`, which routes each
role to its configured model, retries transient transport failures with
exponential backoff, and supports three modes:

- ``live``: requests go to the transport, nothing is persisted.
- ``record``: live requests, responses persisted one file per digest.
- ``replay``: responses come from the fixture store only; a missing
  digest raises :class:`~evoloop.errors.FixtureMiss` and no transport
  call is ever made.

Request digests are stable across hosts: volatile fields (absolute paths
under temp/home roots, ISO timestamps, UUIDs) are masked before hashing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import FixtureMiss, ModelError, TransportError

logger = logging.getLogger(__name__)

ROLES = ("planner", "searcher", "reflector", "writer", "coder", "debugger")

#: Default model per role. Plain config strings; nothing downstream
#: depends on a particular vendor.
DEFAULT_ROUTING = {
    "planner": "o4-mini",
    "reflector": "o4-mini",
    "debugger": "o4-mini",
    "searcher": "gpt-4o",
    "writer": "o3-mini",
    "coder": "o3-mini",
}

#: Default sampling temperature per role family.
RESEARCH_TEMPERATURE = 0.7
CODING_TEMPERATURE = 0.2
_CODING_ROLES = {"coder", "debugger"}


def default_temperature(role: str) -> float:
    return CODING_TEMPERATURE if role in _CODING_ROLES else RESEARCH_TEMPERATURE


@dataclass(frozen=True)
class RoleRouting:
    """Mapping from pipeline role to model identifier; all six required."""

    models: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_ROUTING))

    def __post_init__(self):
        missing = [r for r in ROLES if r not in self.models]
        if missing:
            raise ValueError(f"routing must map every role; missing {missing}")

    def model_for(self, role: str) -> str:
        if role not in self.models:
            raise ValueError(f"unknown role {role!r}")
        return self.models[role]


@dataclass(frozen=True)
class ChatRequest:
    role: str
    system: str
    user: str
    temperature: Optional[float] = None
    max_output_tokens: int = 4096

    def __post_init__(self):
        if not self.system.strip() or not self.user.strip():
            raise ValueError("chat request requires non-empty system and user messages")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)
    latency: float = 0.0


@dataclass(frozen=True)
class SearchResult:
    title: str
    identifier: str
    snippet: str


# --- volatile-field masking (documented list: paths, timestamps, UUIDs) ---

_UUID_RE = re.compile(
    r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}"
)
_TIMESTAMP_RE = re.compile(
    r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:?\d{2})?"
)
# Absolute paths under roots that vary per host/run (workspaces, temp dirs,
# home directories). Deliberately not all absolute paths: /usr/bin/env in
# code content is stable and meaningful.
_VOLATILE_PATH_RE = re.compile(
    r"(?:/private)?/(?:tmp|var/tmp|var/folders|home|root|Users)(?:/[\w.\-+%~]+)*"
)


def mask_volatile(text: str) -> str:
    """Replace host- and run-specific substrings with stable tags."""
    text = _UUID_RE.sub("<uuid>", text)
    text = _TIMESTAMP_RE.sub("<timestamp>", text)
    text = _VOLATILE_PATH_RE.sub("<path>", text)
    return text


def canonical_digest(req: ChatRequest, model: str) -> str:
    """Stable hash identifying a chat request across runs and hosts."""
    payload = {
        "kind": "chat",
        "role": req.role,
        "model": model,
        "system": mask_volatile(req.system),
        "user": mask_volatile(req.user),
        "temperature": req.temperature,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def search_digest(query: str, model: str) -> str:
    payload = {"kind": "search", "model": model, "query": mask_volatile(query)}
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class FixtureStore:
    """One human-readable JSON file per request digest under a directory."""

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, digest: str) -> Path:
        return self.root / f"{digest}.json"

    def load(self, digest: str) -> Optional[dict]:
        path = self.path_for(digest)
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def save(self, digest: str, record: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.path_for(digest)
        path.write_text(
            json.dumps(record, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
            encoding="utf-8",
        )


class LiveTransport:
    """HTTPS chat-completion and web-search transport.

    ``send(kind, payload)`` posts to ``<base_url>/chat`` or
    ``<base_url>/search`` with a bearer credential read from
    ``api_key_env``. Raises :class:`TransportError` on network faults and
    5xx responses (marked transient so the gateway retries them).
    """

    def __init__(self, base_url: str, api_key_env: str = "EVOLOOP_API_KEY",
                 timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.calls = 0

    def send(self, kind: str, payload: dict) -> dict:
        import os

        import httpx

        self.calls += 1
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = f"{self.base_url}/{kind}"
        try:
            resp = httpx.post(url, json=payload, headers=headers, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure calling {url}: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"{url} returned {resp.status_code}")
        if resp.status_code >= 400:
            raise ModelError(f"{url} returned {resp.status_code}: {resp.text[:500]}")
        return resp.json()


class RateLimiter:
    """Per-model minimum spacing between requests (requests/minute)."""

    def __init__(self, requests_per_minute: Optional[float],
                 clock: Callable[[], float] = time.monotonic,
                 sleeper: Callable[[float], None] = time.sleep):
        self.interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._clock = clock
        self._sleeper = sleeper
        self._last: dict[str, float] = {}
        self._lock = threading.Lock()

    def acquire(self, model: str) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = self._clock()
            wait = self._last.get(model, -self.interval) + self.interval - now
            if wait > 0:
                self._sleeper(wait)
                now = self._clock()
            self._last[model] = now


@dataclass
class GatewayConfig:
    mode: str = "replay"  # live | record | replay
    routing: RoleRouting = field(default_factory=RoleRouting)
    fixtures_dir: Optional[Path] = None
    max_attempts: int = 3
    backoff_base: float = 0.5
    requests_per_minute: Optional[float] = None
    base_url: str = "https://api.example.invalid/v1"
    api_key_env: str = "EVOLOOP_API_KEY"

    def __post_init__(self):
        if self.mode not in ("live", "record", "replay"):
            raise ValueError(f"mode must be live/record/replay, got {self.mode!r}")
        if self.mode in ("record", "replay") and self.fixtures_dir is None:
            raise ValueError(f"{self.mode} mode requires fixtures_dir")


class Gateway:
    """Role-routed chat and web-search access with retries and replay."""

    def __init__(self, config: GatewayConfig, transport=None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.config = config
        self.transport = transport
        if transport is None and config.mode in ("live", "record"):
            self.transport = LiveTransport(config.base_url, config.api_key_env)
        self.store = FixtureStore(config.fixtures_dir) if config.fixtures_dir else None
        self._sleeper = sleeper
        self._limiter = RateLimiter(config.requests_per_minute, sleeper=sleeper)
        # Per-role token/latency accounting for run reports.
        self.usage: dict[str, dict[str, float]] = {}

    # --- public API ---

    def chat(self, req: ChatRequest) -> ChatResponse:
        model = self.config.routing.model_for(req.role)
        digest = canonical_digest(req, model)

        if self.config.mode == "replay":
            record = self.store.load(digest)
            if record is None:
                raise FixtureMiss(digest, "chat")
            resp = ChatResponse(
                text=record["response"]["text"],
                usage=record["response"].get("usage", {}),
                latency=0.0,
            )
            self._account(req.role, resp)
            return resp

        payload = {
            "model": model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": (req.temperature if req.temperature is not None
                            else default_temperature(req.role)),
            "max_tokens": req.max_output_tokens,
        }
        started = time.monotonic()
        raw = self._send_with_retry("chat", payload, model)
        latency = time.monotonic() - started
        try:
            text = raw["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ModelError(f"malformed chat response: {raw!r:.500}") from exc
        resp = ChatResponse(text=text or "", usage=raw.get("usage", {}), latency=latency)

        if self.config.mode == "record":
            self.store.save(digest, {
                "digest": digest,
                "kind": "chat",
                "request": {
                    "role": req.role,
                    "model": model,
                    "system": req.system,
                    "user": req.user,
                    "temperature": payload["temperature"],
                },
                "response": {"text": resp.text, "usage": resp.usage},
            })
        self._account(req.role, resp)
        return resp

    def web_search(self, query: str) -> list[SearchResult]:
        """Run a web search; returns (title, identifier, snippet) results."""
        model = self.config.routing.model_for("searcher")
        digest = search_digest(query, model)

        if self.config.mode == "replay":
            record = self.store.load(digest)
            if record is None:
                raise FixtureMiss(digest, "search")
            return self._parse_results(record["response"])

        payload = {"query": query, "model": model}
        raw = self._send_with_retry("search", payload, model)
        results = self._parse_results(raw)
        if self.config.mode == "record":
            self.store.save(digest, {
                "digest": digest,
                "kind": "search",
                "request": {"query": query, "model": model},
                "response": raw,
            })
        return results

    def usage_report(self) -> dict[str, dict[str, float]]:
        return {role: dict(stats) for role, stats in self.usage.items()}

    # --- internals ---

    @staticmethod
    def _parse_results(raw: dict) -> list[SearchResult]:
        results = raw.get("results")
        if results is None or not isinstance(results, list):
            offset = len(json.dumps(raw)[:200])
            raise ModelError(
                f"malformed search payload (scanned {offset} bytes, no 'results' array)"
            )
        parsed = []
        for i, item in enumerate(results):
            if not isinstance(item, dict) or "title" not in item:
                raise ModelError(f"malformed search payload at result offset {i}")
            parsed.append(SearchResult(
                title=str(item.get("title", "")),
                identifier=str(item.get("id", item.get("identifier", ""))),
                snippet=str(item.get("snippet", "")),
            ))
        return parsed

    def _send_with_retry(self, kind: str, payload: dict, model: str) -> dict:
        last_error: Optional[TransportError] = None
        for attempt in range(self.config.max_attempts):
            if attempt > 0:
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                self._sleeper(delay)
            self._limiter.acquire(model)
            try:
                return self.transport.send(kind, payload)
            except TransportError as exc:
                last_error = exc
                logger.warning("transport attempt %d/%d failed: %s",
                               attempt + 1, self.config.max_attempts, exc)
        raise TransportError(
            f"{kind} request failed after {self.config.max_attempts} attempts: {last_error}"
        )

    def _account(self, role: str, resp: ChatResponse) -> None:
        stats = self.usage.setdefault(
            role, {"calls": 0, "prompt_tokens": 0, "completion_tokens": 0, "latency": 0.0}
        )
        stats["calls"] += 1
        stats["prompt_tokens"] += resp.usage.get("prompt_tokens", 0)
        stats["completion_tokens"] += resp.usage.get("completion_tokens", 0)
        stats["latency"] += resp.latency
