"""Feedback-driven algorithm discovery.

Evolves a multi-file candidate program through repeated cycles of
research-informed proposal generation, diff-based code editing with
bounded debugging, sandboxed evaluation, and quality-diversity selection
over island populations and a MAP-Elites archive.
"""

from .context import (
    AlgorithmDescription,
    CandidateProgram,
    ProblemSpec,
    PromptBundle,
    UserInstructions,
    load_initial_algorithm,
    load_problem,
    render_coding_context,
    render_research_context,
)
from .evodb import (
    CellIndex,
    DbConfig,
    EvolutionDatabase,
    FeatureVector,
    bin_features,
    compute_features,
    levenshtein,
)
from .gateway import ChatRequest, ChatResponse, Gateway, GatewayConfig, RoleRouting
from .orchestrator import RunConfig, RunResult, TrajectoryRow, report, resume, run
from .research import ResearchConfig, ResearchProposal, run_research
from .sandbox import EvaluationOutcome, EvaluationStatus, Sandbox

__version__ = "0.1.0"

__all__ = [
    "AlgorithmDescription",
    "CandidateProgram",
    "CellIndex",
    "ChatRequest",
    "ChatResponse",
    "DbConfig",
    "EvaluationOutcome",
    "EvaluationStatus",
    "EvolutionDatabase",
    "FeatureVector",
    "Gateway",
    "GatewayConfig",
    "ProblemSpec",
    "PromptBundle",
    "ResearchConfig",
    "ResearchProposal",
    "RoleRouting",
    "RunConfig",
    "RunResult",
    "Sandbox",
    "TrajectoryRow",
    "UserInstructions",
    "bin_features",
    "compute_features",
    "levenshtein",
    "load_initial_algorithm",
    "load_problem",
    "render_coding_context",
    "render_research_context",
    "report",
    "resume",
    "run",
    "run_research",
]
