"""Shared test helpers: scripted gateways, fixture writers, tiny problems."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from evoloop.context import AlgorithmDescription, CandidateProgram
from evoloop.errors import TransportError
from evoloop.gateway import (
    ChatRequest,
    ChatResponse,
    FixtureStore,
    Gateway,
    GatewayConfig,
    SearchResult,
    canonical_digest,
    search_digest,
)


@dataclass
class QueueGateway:
    """Duck-typed gateway popping scripted replies; records every request."""

    chat_replies: list[str] = field(default_factory=list)
    search_replies: list[list[SearchResult]] = field(default_factory=list)
    chat_requests: list[ChatRequest] = field(default_factory=list)
    search_queries: list[str] = field(default_factory=list)

    def chat(self, req: ChatRequest) -> ChatResponse:
        self.chat_requests.append(req)
        if not self.chat_replies:
            raise AssertionError("QueueGateway ran out of scripted chat replies")
        return ChatResponse(text=self.chat_replies.pop(0))

    def web_search(self, query: str) -> list[SearchResult]:
        self.search_queries.append(query)
        if not self.search_replies:
            raise AssertionError("QueueGateway ran out of scripted search replies")
        reply = self.search_replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


class CountingTransport:
    """Transport stub that fails the test if it is ever used."""

    def __init__(self, forbid: bool = True):
        self.calls = 0
        self.forbid = forbid

    def send(self, kind, payload):
        self.calls += 1
        if self.forbid:
            raise AssertionError(f"unexpected network activity: {kind} request")
        raise TransportError("stub transport has no backend")


def write_chat_fixture(fixtures_dir, req: ChatRequest, model: str, text: str) -> str:
    """Record a chat fixture exactly as the gateway's record mode would."""
    digest = canonical_digest(req, model)
    FixtureStore(fixtures_dir).save(digest, {
        "digest": digest,
        "kind": "chat",
        "request": {"role": req.role, "model": model, "system": req.system,
                    "user": req.user, "temperature": req.temperature},
        "response": {"text": text, "usage": {}},
    })
    return digest


def write_search_fixture(fixtures_dir, query: str, model: str,
                         results: list[dict]) -> str:
    digest = search_digest(query, model)
    FixtureStore(fixtures_dir).save(digest, {
        "digest": digest,
        "kind": "search",
        "request": {"query": query, "model": model},
        "response": {"results": results},
    })
    return digest


def replay_gateway(fixtures_dir) -> Gateway:
    return Gateway(GatewayConfig(mode="replay", fixtures_dir=Path(fixtures_dir)))


def make_program(pid: str, score=None, files=None, *, summary=None,
                 island=0, parent_id=None, generation=0,
                 update_count=0) -> CandidateProgram:
    return CandidateProgram(
        id=pid,
        files=files or {"main.py": f"print({pid!r})\n"},
        description=AlgorithmDescription(summary=summary or f"program {pid}"),
        score=score,
        island=island,
        parent_id=parent_id,
        generation=generation,
        update_count=update_count,
    )


@pytest.fixture
def problem_dir_factory(tmp_path):
    """Build a minimal problem directory around a given evaluator script."""

    def build(evaluator_source: str, *, name="stub", timeout=60.0,
              description="Maximize the stub score.", subdir="problem"):
        root = tmp_path / subdir
        root.mkdir(parents=True, exist_ok=True)
        (root / "description.md").write_text(description, encoding="utf-8")
        (root / "evaluator.py").write_text(evaluator_source, encoding="utf-8")
        (root / "problem.toml").write_text(
            "\n".join([
                f'name = "{name}"',
                f"timeout = {timeout}",
                'metric_direction = "maximize"',
                "",
                "[files]",
                'description = "description.md"',
                'evaluator = "evaluator.py"',
                "",
                "[evaluator]",
                'command = "python3 {evaluator} {workdir} {metrics_out}"',
            ]),
            encoding="utf-8",
        )
        return root

    return build


ECHO_EVALUATOR = """\
import json, sys

with open(sys.argv[2], "w") as handle:
    json.dump({"score": 0.5, "extra": 1.0}, handle)
"""

FAILING_EVALUATOR = """\
import sys

sys.stderr.write("deliberate failure: bad input shape\\n")
sys.exit(3)
"""

SLEEPING_EVALUATOR = """\
import time

time.sleep(60)
"""


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
