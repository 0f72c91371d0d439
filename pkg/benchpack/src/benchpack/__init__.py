"""Bundled benchmark problem pack: circle packing plus score transforms."""

from .baseline import initial_algorithm, pack_circles
from .geometry import (
    DEFAULT_TOLERANCE,
    MalformedPacking,
    Packing,
    ValidationResult,
    Violation,
    grid_packing,
    validate,
)
from .paths import problem_dir
from .scoring import (
    REQUIRED_COUNTS,
    MissingN,
    dump_solutions,
    load_solutions,
    score_packings,
)
from .transforms import DivisionDomain, UnknownMetric, known_metrics, transform

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOLERANCE",
    "DivisionDomain",
    "MalformedPacking",
    "MissingN",
    "Packing",
    "REQUIRED_COUNTS",
    "UnknownMetric",
    "ValidationResult",
    "Violation",
    "dump_solutions",
    "grid_packing",
    "initial_algorithm",
    "known_metrics",
    "load_solutions",
    "pack_circles",
    "problem_dir",
    "score_packings",
    "transform",
    "validate",
]
