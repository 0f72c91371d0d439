"""The end-to-end evolution loop.

Evaluates the initial algorithm, then per iteration: sample a candidate
and inspirations, research a proposal, apply the proposed diffs (with one
self-reflection pass), evaluate under the debug budget, and insert the
child into the database. A checkpoint is written after every insert, so
an interrupted run resumes to an identical trajectory. Per-iteration
model or parse failures produce a score-0 child and the loop continues;
only unrecoverable faults (bad config, replay fixture misses) abort.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import coder, research
from .context import (
    AlgorithmDescription,
    CandidateProgram,
    UserInstructions,
    load_initial_algorithm,
    load_problem,
    render_coding_context,
    render_research_context,
)
from .errors import (
    DuplicatePath,
    EmptyIdeas,
    EmptyProposal,
    EvoloopError,
    FixtureMiss,
    ModelError,
    ParseError,
    SearchNotFound,
)
from .evodb import DbConfig, EvolutionDatabase, read_checkpoint, write_checkpoint
from .gateway import Gateway, GatewayConfig, RoleRouting
from .research import ResearchConfig
from .sandbox import Sandbox

logger = logging.getLogger(__name__)

RUN_CHECKPOINT_FORMAT = "evoloop-run"
TRAJECTORY_FORMAT = "evoloop-trajectory"
TRAJECTORY_FIELDS = ("iteration", "program_id", "title", "refinement", "score",
                     "best_so_far", "debug_attempts", "wall_time")

#: Per-iteration failures that score 0 and keep the loop running.
_RECOVERABLE = (ParseError, ModelError, EmptyIdeas, EmptyProposal,
                SearchNotFound, DuplicatePath)


@dataclass
class RunConfig:
    problem_dir: str
    initial_dir: str
    max_iterations: int
    initial_description: Optional[str] = None  # default: <initial_dir>/algorithm.md
    instructions: str = ""
    mode: str = "replay"  # live | record | replay
    fixtures_dir: Optional[str] = None
    checkpoint_dir: str = "checkpoints"
    db: DbConfig = field(default_factory=DbConfig)
    research: ResearchConfig = field(default_factory=ResearchConfig)
    routing: Optional[dict[str, str]] = None
    debug_budget: int = 5
    timeout_override: Optional[float] = None
    parallel_evaluations: int = 1
    seed: int = 0
    base_url: str = "https://api.example.invalid/v1"
    api_key_env: str = "EVOLOOP_API_KEY"
    #: Checkpoint and stop after this iteration (resumable); None runs to K.
    stop_after_iteration: Optional[int] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.mode not in ("live", "record", "replay"):
            raise ValueError(f"mode must be live/record/replay, got {self.mode!r}")

    def to_payload(self) -> dict:
        payload = dataclasses.asdict(self)
        payload["db"] = dataclasses.asdict(self.db)
        payload["research"] = dataclasses.asdict(self.research)
        payload["research"]["early_weights"] = list(self.research.early_weights)
        payload["research"]["late_weights"] = list(self.research.late_weights)
        return payload

    @classmethod
    def from_payload(cls, payload: dict) -> "RunConfig":
        data = dict(payload)
        db = DbConfig(**data.pop("db"))
        res = dict(data.pop("research"))
        res["early_weights"] = tuple(res["early_weights"])
        res["late_weights"] = tuple(res["late_weights"])
        return cls(db=db, research=ResearchConfig(**res), **data)


@dataclass(frozen=True)
class TrajectoryRow:
    iteration: int
    program_id: str
    title: str
    refinement: bool
    score: float
    best_so_far: float
    debug_attempts: int
    wall_time: float

    def to_record(self) -> dict:
        return {name: getattr(self, name) for name in TRAJECTORY_FIELDS}

    @classmethod
    def from_record(cls, record: dict) -> "TrajectoryRow":
        return cls(**{name: record[name] for name in TRAJECTORY_FIELDS})


@dataclass
class RunResult:
    best: CandidateProgram
    trajectory: list[TrajectoryRow]
    database: EvolutionDatabase
    trajectory_path: Path
    checkpoint_path: Path
    completed: bool
    gateway: Gateway


def write_trajectory(path, rows: list[TrajectoryRow]) -> None:
    """One record per line with a self-describing header, stable order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"format": TRAJECTORY_FORMAT, "version": 1,
                         "fields": list(TRAJECTORY_FIELDS)}, ensure_ascii=False)]
    lines.extend(json.dumps(row.to_record(), ensure_ascii=False) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trajectory(path) -> list[TrajectoryRow]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise EvoloopError(f"trajectory file {path} is empty")
    header = json.loads(lines[0])
    if header.get("format") != TRAJECTORY_FORMAT:
        raise EvoloopError(f"{path} is not a trajectory file")
    return [TrajectoryRow.from_record(json.loads(line))
            for line in lines[1:] if line.strip()]


class _Runner:
    """Mutable state for one run; everything deterministic under replay."""

    def __init__(self, cfg: RunConfig, transport=None):
        self.cfg = cfg
        self.problem = load_problem(cfg.problem_dir)
        if cfg.timeout_override is not None:
            self.problem = dataclasses.replace(self.problem,
                                               timeout=cfg.timeout_override)
        desc_path = cfg.initial_description or str(Path(cfg.initial_dir) / "algorithm.md")
        self.initial = load_initial_algorithm(cfg.initial_dir, desc_path)
        self.instructions = UserInstructions(cfg.instructions)
        routing = RoleRouting(dict(cfg.routing)) if cfg.routing else RoleRouting()
        self.gateway = Gateway(GatewayConfig(
            mode=cfg.mode,
            routing=routing,
            fixtures_dir=Path(cfg.fixtures_dir) if cfg.fixtures_dir else None,
            base_url=cfg.base_url,
            api_key_env=cfg.api_key_env,
        ), transport=transport)
        self.sandbox = Sandbox(max_parallel=cfg.parallel_evaluations)
        self.db = EvolutionDatabase(cfg.db, seed=cfg.seed)
        self.rows: list[TrajectoryRow] = []
        self.iteration = 0

    # --- timing: replay runs must be byte-reproducible ---

    def _elapsed(self, started: float) -> float:
        if self.cfg.mode == "replay":
            return 0.0
        return round(time.monotonic() - started, 3)

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.cfg.checkpoint_dir) / "run.ckpt.json"

    @property
    def trajectory_path(self) -> Path:
        return Path(self.cfg.checkpoint_dir) / "trajectory.jsonl"

    def checkpoint(self) -> None:
        write_checkpoint(self.checkpoint_path, RUN_CHECKPOINT_FORMAT, {
            "run_config": self.cfg.to_payload(),
            "iteration": self.iteration,
            "rows": [row.to_record() for row in self.rows],
            "db": self.db.to_payload(),
        })

    def seed_initial(self) -> None:
        started = time.monotonic()
        files, outcome = self.sandbox.evaluate_with_debugging(
            self.initial.files, self.problem, self.cfg.debug_budget, self.gateway)
        description = dataclasses.replace(self.initial.description,
                                          performance=outcome.score)
        program = CandidateProgram(
            id="p0000", files=files, description=description,
            score=outcome.score, metrics=outcome.metrics, island=0,
        )
        self.db.insert(program)
        self.rows.append(TrajectoryRow(
            iteration=0, program_id=program.id,
            title=description.summary, refinement=False,
            score=outcome.score, best_so_far=self.db.best_program().score or 0.0,
            debug_attempts=outcome.debug_attempts_used,
            wall_time=self._elapsed(started),
        ))
        self.checkpoint()

    def run_iteration(self, t: int) -> None:
        started = time.monotonic()
        progress = t / self.cfg.max_iterations
        candidate = self.db.sample_candidate()
        inspirations = self.db.sample_inspirations(candidate,
                                                   self.cfg.db.num_inspirations)
        ctx = render_research_context(
            self.problem, candidate, inspirations, self.instructions, progress,
            stage_threshold=self.cfg.research.stage_threshold,
            max_inspirations=self.cfg.db.num_inspirations,
        )
        try:
            child, attempts = self._produce_child(t, progress, candidate, ctx)
        except FixtureMiss:
            raise
        except _RECOVERABLE as exc:
            logger.warning("iteration %d failed (%s), storing score-0 program",
                           t, exc)
            child = CandidateProgram(
                id=f"p{t:04d}", parent_id=candidate.id,
                generation=candidate.generation + 1, files=dict(candidate.files),
                description=AlgorithmDescription(
                    summary=f"iteration failed: {type(exc).__name__}",
                    motivation=str(exc),
                ),
                score=0.0, island=candidate.island,
                update_count=candidate.update_count,
            )
            attempts = 0
        self.db.insert(child)
        self.iteration = t
        self.rows.append(TrajectoryRow(
            iteration=t, program_id=child.id,
            title=child.description.summary,
            refinement=child.update_count > candidate.update_count,
            score=child.score or 0.0,
            best_so_far=self.db.best_program().score or 0.0,
            debug_attempts=attempts,
            wall_time=self._elapsed(started),
        ))
        self.checkpoint()

    def _produce_child(self, t: int, progress: float,
                       candidate: CandidateProgram,
                       ctx) -> tuple[CandidateProgram, int]:
        proposal = research.run_research(self.gateway, ctx, candidate.update_count,
                                         progress, self.cfg.research)
        coding_ctx = render_coding_context(proposal, candidate)
        diff = coder.propose_diff(self.gateway, coding_ctx, candidate.files)
        files = coder.apply_diff(candidate.files, diff)
        reflection = coder.self_reflect(self.gateway, files, proposal)
        if reflection:
            try:
                files = coder.apply_diff(files, reflection)
            except (SearchNotFound, DuplicatePath) as exc:
                logger.warning("reflection fix did not apply, keeping files: %s", exc)
        files, outcome = self.sandbox.evaluate_with_debugging(
            files, self.problem, self.cfg.debug_budget, self.gateway)

        idea = proposal.chosen_idea()
        description = AlgorithmDescription(
            motivation=idea.description,
            summary=idea.title,
            pseudo_code=idea.pseudo_code,
            performance=outcome.score,
            originality=idea.originality,
            future_potential=idea.future_potential,
            difficulty=idea.difficulty,
        )
        child = CandidateProgram(
            id=f"p{t:04d}", parent_id=candidate.id,
            generation=candidate.generation + 1, files=files,
            description=description, score=outcome.score,
            metrics=outcome.metrics, island=candidate.island,
            update_count=candidate.update_count + 1 if idea.refinement else 0,
        )
        return child, outcome.debug_attempts_used

    def finish(self, completed: bool) -> RunResult:
        write_trajectory(self.trajectory_path, self.rows)
        return RunResult(
            best=self.db.best_program(),
            trajectory=list(self.rows),
            database=self.db,
            trajectory_path=self.trajectory_path,
            checkpoint_path=self.checkpoint_path,
            completed=completed,
            gateway=self.gateway,
        )


def run(cfg: RunConfig, transport=None) -> RunResult:
    """Run the loop from scratch; returns the best program and trajectory."""
    runner = _Runner(cfg, transport=transport)
    runner.seed_initial()
    return _drive(runner)


def resume(checkpoint_path, transport=None) -> RunResult:
    """Continue an interrupted run from its checkpoint file."""
    payload = read_checkpoint(checkpoint_path, RUN_CHECKPOINT_FORMAT)
    cfg = RunConfig.from_payload(payload["run_config"])
    cfg.stop_after_iteration = None
    runner = _Runner(cfg, transport=transport)
    runner.db = EvolutionDatabase.from_payload(payload["db"])
    runner.rows = [TrajectoryRow.from_record(r) for r in payload["rows"]]
    runner.iteration = payload["iteration"]
    logger.info("resuming run at iteration %d of %d", runner.iteration + 1,
                cfg.max_iterations)
    return _drive(runner)


def _drive(runner: _Runner) -> RunResult:
    cfg = runner.cfg
    for t in range(runner.iteration + 1, cfg.max_iterations + 1):
        runner.run_iteration(t)
        if cfg.stop_after_iteration is not None and t >= cfg.stop_after_iteration:
            logger.info("stopping after iteration %d as configured", t)
            return runner.finish(completed=t >= cfg.max_iterations)
    return runner.finish(completed=True)


def improvement_percent(initial: float, best: float) -> Optional[float]:
    """Relative gain over the initial score; None when initial is 0."""
    if initial == 0:
        return None
    return (best - initial) / initial * 100.0


def report(rows: list[TrajectoryRow], database: Optional[EvolutionDatabase] = None,
           usage: Optional[dict] = None) -> str:
    """Human-readable run summary with the per-iteration table."""
    lines = ["# Run report", ""]
    if not rows:
        lines.append("No iterations recorded.")
        return "\n".join(lines) + "\n"

    initial = rows[0].score
    best = max(row.best_so_far for row in rows)
    gain = improvement_percent(initial, best)
    lines.append(f"Initial score: {initial:.4f}")
    lines.append(f"Best score:    {best:.4f}")
    lines.append(f"Improvement:   {'n/a' if gain is None else f'{gain:.2f}%'}")
    failures = sum(1 for row in rows[1:] if row.score == 0)
    lines.append(f"Iterations:    {len(rows) - 1} ({failures} scored zero)")
    lines.append("")
    lines.append("| iter | program | title | mode | score | best | debug | time (s) |")
    lines.append("|-----:|---------|-------|------|------:|-----:|------:|---------:|")
    for row in rows:
        mode = "refine" if row.refinement else "new"
        title = row.title if len(row.title) <= 40 else row.title[:37] + "..."
        lines.append(
            f"| {row.iteration} | {row.program_id} | {title} | {mode} "
            f"| {row.score:.4f} | {row.best_so_far:.4f} | {row.debug_attempts} "
            f"| {row.wall_time:.3f} |"
        )
    if database is not None:
        lines.append("")
        lines.append(f"Programs stored: {len(database.programs)}; "
                     f"archive cells occupied: {len(database.archive)}")
    if usage:
        lines.append("")
        lines.append("Model usage by role:")
        for role, stats in sorted(usage.items()):
            lines.append(f"  {role}: {stats.get('calls', 0):.0f} calls, "
                         f"{stats.get('prompt_tokens', 0):.0f} prompt tokens, "
                         f"{stats.get('completion_tokens', 0):.0f} completion tokens")
    return "\n".join(lines) + "\n"
