"""Problem, algorithm, and instruction inputs, and the prompt contexts built from them.

Loads a problem directory (manifest + description + evaluator) and an
initial algorithm tree (files + algorithm.md), and renders the prompt
bundles consumed by the research and coding stages. Everything here is
read-only after load; renderers are pure functions.
"""

from __future__ import annotations

import logging
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import prompts
from .errors import (
    EmptyCodebase,
    EmptyProposal,
    MalformedDescription,
    MalformedManifest,
    MissingDescription,
    MissingEvaluator,
    UnreadableFile,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "problem.toml"
DEFAULT_TIMEOUT = 1800.0
#: Progress fraction at which the stage directive flips from feasibility
#: to impact.
DEFAULT_STAGE_THRESHOLD = 0.5
DEFAULT_MAX_INSPIRATIONS = 5

#: Directory/file names skipped when capturing an algorithm tree.
_SKIP_DIRS = {"__pycache__", ".git", ".hg", ".svn", ".venv", "node_modules"}
_SKIP_SUFFIXES = {".pyc", ".pyo"}


@dataclass(frozen=True)
class ProblemSpec:
    """A scientific problem: evaluator, data, description, and budget."""

    name: str
    description: str
    evaluator_command: str
    data_path: Optional[Path]
    timeout: float = DEFAULT_TIMEOUT
    metric_direction: str = "maximize"
    root_dir: Optional[Path] = None

    def __post_init__(self):
        if not self.description.strip():
            raise MissingDescription("problem description is empty")
        if self.timeout <= 0:
            raise MalformedManifest(f"timeout must be positive, got {self.timeout}")
        if self.metric_direction != "maximize":
            raise MalformedManifest(
                f"metric_direction must be 'maximize', got {self.metric_direction!r}"
            )
        for placeholder in ("{workdir}", "{metrics_out}"):
            if self.evaluator_command.count(placeholder) != 1:
                raise MalformedManifest(
                    f"evaluator command must contain {placeholder} exactly once: "
                    f"{self.evaluator_command!r}"
                )


@dataclass
class AlgorithmDescription:
    """Textual description of an algorithm, with optional self-ratings."""

    motivation: str = ""
    summary: str = ""
    pseudo_code: str = ""
    performance: Optional[float] = None
    originality: Optional[float] = None
    future_potential: Optional[float] = None
    difficulty: Optional[float] = None

    def __post_init__(self):
        if not self.summary.strip():
            raise MalformedDescription("algorithm summary must be non-empty")
        for name in ("originality", "future_potential", "difficulty"):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 10:
                raise MalformedDescription(f"{name} must be in [0, 10], got {value}")


@dataclass
class CandidateProgram:
    """A versioned multi-file codebase plus its description and placement."""

    id: str
    files: dict[str, str]
    description: AlgorithmDescription
    parent_id: Optional[str] = None
    generation: int = 0
    score: Optional[float] = None  # None until evaluated; 0.0 marks failure
    metrics: dict[str, float] = field(default_factory=dict)
    island: int = 0
    cell: Optional[tuple[int, int, int]] = None
    update_count: int = 0

    def __post_init__(self):
        if not self.files:
            raise EmptyCodebase(f"program {self.id} has no files")
        if self.generation < 0:
            raise ValueError(f"generation must be non-negative, got {self.generation}")
        if self.score is not None and self.score < 0:
            raise ValueError(f"score must be non-negative, got {self.score}")
        if self.update_count < 0:
            raise ValueError(f"update_count must be non-negative, got {self.update_count}")

    def concatenated_code(self) -> str:
        """All file contents joined in path order, used for code features."""
        return "\n".join(self.files[p] for p in sorted(self.files))


@dataclass(frozen=True)
class UserInstructions:
    """Free-form user constraints and preferences; may be empty."""

    text: str = ""


@dataclass(frozen=True)
class PromptBundle:
    """A rendered system+user prompt pair with routing metadata."""

    system: str
    user: str
    metadata: dict

    def __post_init__(self):
        if not self.system.strip() or not self.user.strip():
            raise ValueError("prompt bundle requires non-empty system and user texts")


def load_problem(problem_dir) -> ProblemSpec:
    """Load and validate a problem directory.

    Expects ``problem.toml`` naming the description file, the evaluator
    entry file, the evaluator command template, and optional data path /
    timeout / metric direction. All paths come back absolute.
    """
    root = Path(problem_dir).resolve()
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MalformedManifest(f"manifest not found: {manifest_path}")
    try:
        manifest = tomllib.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise MalformedManifest(f"cannot parse {manifest_path}: {exc}") from exc

    files = manifest.get("files", {})
    if not isinstance(files, dict):
        raise MalformedManifest(f"{manifest_path}: [files] must be a table")

    description_name = files.get("description", "description.md")
    description_path = root / description_name
    if not description_path.is_file():
        raise MissingDescription(f"description file not found: {description_path}")
    description = description_path.read_text(encoding="utf-8")
    if not description.strip():
        raise MissingDescription(f"description file is empty: {description_path}")

    evaluator_name = files.get("evaluator", "evaluator.py")
    evaluator_path = root / evaluator_name
    if not evaluator_path.is_file():
        raise MissingEvaluator(f"evaluator entry not found: {evaluator_path}")

    evaluator_table = manifest.get("evaluator", {})
    command = evaluator_table.get("command")
    if not command or not isinstance(command, str):
        raise MalformedManifest(f"{manifest_path}: [evaluator].command is required")
    # {evaluator} resolves now; {workdir} and {metrics_out} resolve per run.
    if "{evaluator}" in command:
        command = command.replace("{evaluator}", str(evaluator_path))

    data_path: Optional[Path] = None
    data_name = files.get("data")
    if data_name:
        data_path = root / data_name
        if not data_path.exists():
            raise MalformedManifest(f"{manifest_path}: data path not found: {data_path}")
    elif (root / "data").exists():
        data_path = root / "data"

    timeout = manifest.get("timeout", DEFAULT_TIMEOUT)
    if not isinstance(timeout, (int, float)) or isinstance(timeout, bool):
        raise MalformedManifest(f"{manifest_path}: timeout must be a number, got {timeout!r}")

    return ProblemSpec(
        name=manifest.get("name", root.name),
        description=description,
        evaluator_command=command,
        data_path=data_path,
        timeout=float(timeout),
        metric_direction=manifest.get("metric_direction", "maximize"),
        root_dir=root,
    )


# Section headings recognized in algorithm.md, mapped to description fields.
_SECTION_FIELDS = {
    "motivation": "motivation",
    "summary": "summary",
    "pseudo-code": "pseudo_code",
    "pseudocode": "pseudo_code",
    "pseudo code": "pseudo_code",
    "performance": "performance",
    "originality": "originality",
    "future potential": "future_potential",
    "difficulty": "difficulty",
}
_NUMERIC_FIELDS = {"performance", "originality", "future_potential", "difficulty"}
_HEADING_RE = re.compile(r"^#{1,6}\s+(.+?)\s*$")


def parse_algorithm_description(text: str) -> AlgorithmDescription:
    """Parse an algorithm.md body with labeled markdown sections."""
    sections: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in text.splitlines():
        heading = _HEADING_RE.match(line)
        if heading:
            key = _SECTION_FIELDS.get(heading.group(1).strip().lower())
            current = key
            if key is not None:
                sections.setdefault(key, [])
            continue
        if current is not None:
            sections[current].append(line)

    kwargs: dict = {}
    for field_name, lines in sections.items():
        body = "\n".join(lines).strip()
        if field_name in _NUMERIC_FIELDS:
            if body:
                try:
                    kwargs[field_name] = float(body.split()[0])
                except ValueError as exc:
                    raise MalformedDescription(
                        f"section {field_name!r} must be numeric, got {body!r}"
                    ) from exc
        else:
            kwargs[field_name] = body
    return AlgorithmDescription(**kwargs)


def load_initial_algorithm(code_dir, description_path) -> CandidateProgram:
    """Capture a codebase byte-exactly and pair it with its description.

    Returns a generation-0 program with no parent and no score. File keys
    are POSIX-style paths relative to ``code_dir``, in sorted order.
    """
    root = Path(code_dir).resolve()
    desc_path = Path(description_path).resolve()

    files: dict[str, str] = {}
    if root.is_dir():
        for path in sorted(root.rglob("*")):
            if not path.is_file():
                continue
            rel = path.relative_to(root)
            if any(part in _SKIP_DIRS for part in rel.parts):
                continue
            if path.suffix in _SKIP_SUFFIXES:
                continue
            if path == desc_path:
                continue
            try:
                files[rel.as_posix()] = path.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise UnreadableFile(path, str(exc)) from exc
    if not files:
        raise EmptyCodebase(f"no files found under {root}")

    try:
        desc_text = desc_path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(desc_path, str(exc)) from exc
    description = parse_algorithm_description(desc_text)

    return CandidateProgram(id="initial", files=files, description=description)


def format_score(score: Optional[float]) -> str:
    """Scores are rendered at 4 decimal places in prompts."""
    return "unscored" if score is None else f"{score:.4f}"


def _format_rating(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:g}"


def render_research_context(
    problem: ProblemSpec,
    candidate: CandidateProgram,
    inspirations: list[CandidateProgram],
    instructions: UserInstructions,
    progress: float,
    *,
    stage_threshold: float = DEFAULT_STAGE_THRESHOLD,
    max_inspirations: int = DEFAULT_MAX_INSPIRATIONS,
) -> PromptBundle:
    """Render the research-stage user context.

    The user text embeds, in order: problem description, user
    instructions, the candidate's description and score, one block per
    inspiration, and the stage directive chosen by ``progress``.
    """
    if not 0 <= progress <= 1:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    if len(inspirations) > max_inspirations:
        raise ValueError(
            f"{len(inspirations)} inspirations exceed the configured cap {max_inspirations}"
        )

    desc = candidate.description
    candidate_block = prompts.CANDIDATE_BLOCK_TEMPLATE.format(
        summary=desc.summary,
        motivation=desc.motivation or "n/a",
        pseudo_code=desc.pseudo_code or "n/a",
        score=format_score(candidate.score),
    )

    inspiration_section = ""
    for i, insp in enumerate(inspirations, 1):
        inspiration_section += prompts.INSPIRATION_BLOCK_TEMPLATE.format(
            index=i,
            summary=insp.description.summary,
            score=format_score(insp.score),
            originality=_format_rating(insp.description.originality),
            future_potential=_format_rating(insp.description.future_potential),
            difficulty=_format_rating(insp.description.difficulty),
        )
        inspiration_section += "\n"

    early = progress < stage_threshold
    directive = prompts.STAGE_DIRECTIVE_EARLY if early else prompts.STAGE_DIRECTIVE_LATE

    user = prompts.RESEARCH_USER_TEMPLATE.format(
        problem_description=problem.description.strip(),
        user_instructions=instructions.text.strip() or "(none)",
        candidate_block=candidate_block,
        inspiration_section=inspiration_section,
        stage_directive=directive,
    )
    return PromptBundle(
        system=prompts.RESEARCH_CONTEXT_SYSTEM,
        user=user,
        metadata={
            "role": "research",
            "stage": "feasibility" if early else "impact",
            "progress": progress,
        },
    )


def render_coding_context(proposal, candidate: CandidateProgram) -> PromptBundle:
    """Render the coding-stage context: serialized codebase + chosen idea.

    ``proposal`` is a research.ResearchProposal; imported lazily to keep
    this module free of a cycle.
    """
    from .coder import serialize

    idea = proposal.chosen_idea()
    if not idea.pseudo_code.strip():
        raise EmptyProposal("chosen idea has no pseudo-code")

    user = prompts.CODING_USER_TEMPLATE.format(
        serialized_codebase=serialize(candidate.files),
        title=idea.title,
        description=idea.description,
        pseudo_code=idea.pseudo_code,
    )
    return PromptBundle(
        system=prompts.CODER_SYSTEM,
        user=user,
        metadata={"role": "coder", "candidate": candidate.id},
    )
