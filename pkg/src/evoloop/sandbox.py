"""Sandboxed program evaluation with a bounded debugging loop.

Each evaluation materializes the candidate files into a fresh working
directory, runs the problem's evaluator command with ``{workdir}`` and a
fresh ``{metrics_out}`` path substituted, enforces the timeout by killing
the whole process group, and parses the metrics JSON the evaluator wrote
(required key: ``score``). Failures never raise; they come back as
``Failed``/``TimedOut`` outcomes. Only orchestrator-level faults (an
unwritable workspace) propagate.
"""

from __future__ import annotations

import json
import logging
import math
import os
import shlex
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from . import coder
from .context import ProblemSpec
from .errors import DuplicatePath, FixtureMiss, ModelError, ParseError, SearchNotFound

logger = logging.getLogger(__name__)

#: Environment variables forwarded into evaluator processes.
ENV_WHITELIST = ("PATH", "HOME", "LANG", "LC_ALL", "PYTHONPATH", "TMPDIR",
                 "VIRTUAL_ENV", "PYTHONHASHSEED")

DEFAULT_GRACE = 10.0


class EvaluationStatus(Enum):
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    TIMED_OUT = "timed_out"


@dataclass
class EvaluationOutcome:
    status: EvaluationStatus
    score: float
    metrics: dict[str, float] = field(default_factory=dict)
    runtime: float = 0.0
    diagnostics: str = ""
    debug_attempts_used: int = 0

    @property
    def succeeded(self) -> bool:
        return self.status is EvaluationStatus.SUCCEEDED


def _check_paths(files: dict[str, str]) -> None:
    if not files:
        raise ValueError("cannot evaluate an empty file set")
    for path in files:
        p = Path(path)
        if p.is_absolute() or ".." in p.parts:
            raise ValueError(f"file path escapes the workspace: {path!r}")


def _kill_group(pid: int) -> None:
    try:
        os.killpg(os.getpgid(pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        try:
            os.kill(pid, signal.SIGKILL)
        except OSError:
            pass


class Sandbox:
    """Evaluation runner with a concurrency cap and per-run isolation."""

    def __init__(self, max_parallel: int = 1, grace: float = DEFAULT_GRACE,
                 workspace_root=None):
        if max_parallel < 1:
            raise ValueError(f"max_parallel must be >= 1, got {max_parallel}")
        self.grace = grace
        self.workspace_root = Path(workspace_root) if workspace_root else None
        self._slots = threading.BoundedSemaphore(max_parallel)

    def run_evaluation(self, files: dict[str, str],
                       problem: ProblemSpec) -> EvaluationOutcome:
        """Run the evaluator once against a fresh materialization of ``files``."""
        _check_paths(files)
        with self._slots:
            return self._run_once(files, problem)

    def _run_once(self, files: dict[str, str], problem: ProblemSpec) -> EvaluationOutcome:
        if self.workspace_root is not None:
            self.workspace_root.mkdir(parents=True, exist_ok=True)
        run_dir = Path(tempfile.mkdtemp(prefix="evoloop-eval-", dir=self.workspace_root))
        workdir = run_dir / "workspace"
        metrics_path = run_dir / "metrics.json"
        try:
            workdir.mkdir()
            for rel, content in files.items():
                target = workdir / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(content, encoding="utf-8")

            argv = [
                token.replace("{workdir}", str(workdir))
                     .replace("{metrics_out}", str(metrics_path))
                for token in shlex.split(problem.evaluator_command)
            ]
            env = {name: os.environ[name] for name in ENV_WHITELIST
                   if name in os.environ}
            env["EVOLVE_WORKDIR"] = str(workdir)

            started = time.monotonic()
            proc = subprocess.Popen(
                argv, cwd=workdir, env=env, text=True,
                stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                start_new_session=True,
            )
            timed_out = False
            try:
                stdout, stderr = proc.communicate(timeout=problem.timeout)
            except subprocess.TimeoutExpired:
                timed_out = True
                _kill_group(proc.pid)
                try:
                    stdout, stderr = proc.communicate(timeout=self.grace)
                except subprocess.TimeoutExpired:  # pragma: no cover - pathological
                    stdout, stderr = "", ""
            runtime = time.monotonic() - started
            diagnostics = _combine_streams(stdout, stderr)

            if timed_out:
                diagnostics += (f"\n[evaluation timed out after {problem.timeout:g} s; "
                                f"process tree killed]")
                return EvaluationOutcome(EvaluationStatus.TIMED_OUT, 0.0,
                                         runtime=runtime,
                                         diagnostics=diagnostics.strip())
            if proc.returncode != 0:
                diagnostics += f"\n[evaluator exited with status {proc.returncode}]"
                return EvaluationOutcome(EvaluationStatus.FAILED, 0.0,
                                         runtime=runtime,
                                         diagnostics=diagnostics.strip())

            metrics, problem_note = _read_metrics(metrics_path)
            if metrics is None:
                diagnostics += f"\n[metrics protocol violation: {problem_note}]"
                return EvaluationOutcome(EvaluationStatus.FAILED, 0.0,
                                         runtime=runtime,
                                         diagnostics=diagnostics.strip())
            score = metrics["score"]
            if not math.isfinite(score) or score < 0:
                logger.warning("metrics protocol violation: score %r coerced to 0", score)
                score = 0.0
                metrics["score"] = 0.0
            return EvaluationOutcome(EvaluationStatus.SUCCEEDED, score,
                                     metrics=metrics, runtime=runtime,
                                     diagnostics=diagnostics.strip())
        finally:
            shutil.rmtree(run_dir, ignore_errors=True)

    def evaluate_with_debugging(self, files: dict[str, str], problem: ProblemSpec,
                                budget: int, gateway=None
                                ) -> tuple[dict[str, str], EvaluationOutcome]:
        """Evaluate; on failure, ask the debugger for a fix and retry.

        Stops at the first success or when ``budget`` corrective attempts
        are exhausted, in which case the score is forced to 0. Debugger
        parse/model failures end the loop early (logged); replay fixture
        misses propagate.
        """
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        if budget > 0 and gateway is None:
            raise ValueError("a gateway is required when the debug budget is positive")

        attempts = 0
        outcome = self.run_evaluation(files, problem)
        while not outcome.succeeded and attempts < budget:
            excerpt = outcome.diagnostics[-coder.ERROR_EXCERPT_CHARS:]
            try:
                fix = coder.debug_once(gateway, files, excerpt, attempts, budget)
            except FixtureMiss:
                raise
            except (ParseError, ModelError) as exc:
                logger.warning("debugger failed on attempt %d, stopping: %s",
                               attempts + 1, exc)
                attempts += 1
                break
            attempts += 1
            try:
                files = coder.apply_diff(files, fix)
            except (SearchNotFound, DuplicatePath) as exc:
                logger.warning("debug fix %d did not apply: %s", attempts, exc)
            report = coder.DebugReport(attempt=attempts, error_excerpt=excerpt,
                                       applied_fix=fix)
            logger.debug("debug attempt %d applied %d edits", report.attempt,
                         len(fix.edits))
            outcome = self.run_evaluation(files, problem)

        outcome.debug_attempts_used = attempts
        if not outcome.succeeded:
            outcome.score = 0.0
        return files, outcome


def _combine_streams(stdout: Optional[str], stderr: Optional[str]) -> str:
    parts = []
    if stdout:
        parts.append(stdout)
    if stderr:
        parts.append(stderr)
    return "\n".join(parts)


def _read_metrics(path: Path) -> tuple[Optional[dict], str]:
    """Parse the evaluator's metrics file; (None, reason) on violation."""
    if not path.is_file():
        return None, f"evaluator wrote no metrics file at {path}"
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        return None, f"metrics file is not valid JSON: {exc}"
    if not isinstance(data, dict):
        return None, "metrics file must contain a JSON object"
    if "score" not in data:
        return None, 'metrics object is missing required key "score"'
    if not isinstance(data["score"], (int, float)) or isinstance(data["score"], bool):
        return None, f'metrics key "score" must be a number, got {data["score"]!r}'
    metrics = {k: float(v) for k, v in data.items()
               if isinstance(v, (int, float)) and not isinstance(v, bool)}
    metrics["score"] = float(data["score"])
    return metrics, ""
