"""Benchmark scoring: mean sum of radii over n = 26..32, invalid scores 0."""

from __future__ import annotations

import json
from pathlib import Path

from .geometry import DEFAULT_TOLERANCE, MalformedPacking, Packing, validate

REQUIRED_COUNTS = tuple(range(26, 33))


class MissingN(Exception):
    """A required circle count has no packing in the solution set."""

    def __init__(self, n: int):
        self.n = n
        super().__init__(f"no packing supplied for n={n}")


def score_packings(solutions: dict[int, Packing],
                   tol: float = DEFAULT_TOLERANCE) -> tuple[float, dict[str, float]]:
    """Mean sum of radii across n = 26..32; invalid packings contribute 0.

    Returns the score and the full metrics map (per-n sums and validity
    flags) written to the evaluator's metrics file.
    """
    metrics: dict[str, float] = {}
    total = 0.0
    for n in REQUIRED_COUNTS:
        if n not in solutions:
            raise MissingN(n)
        packing = solutions[n]
        if packing.n != n:
            raise MalformedPacking(
                f"solution registered for n={n} contains {packing.n} circles")
        result = validate(packing, tol)
        contribution = packing.sum_radii() if result.valid else 0.0
        metrics[f"sum_{n}"] = contribution
        metrics[f"valid_{n}"] = 1.0 if result.valid else 0.0
        total += contribution
    score = total / len(REQUIRED_COUNTS)
    metrics["score"] = score
    return score, metrics


def load_solutions(path) -> dict[int, Packing]:
    """Read the interchange format: a JSON array of {n, centers, radii}."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise MalformedPacking("solutions file must contain a JSON array")
    solutions: dict[int, Packing] = {}
    for record in raw:
        packing = Packing.from_dict(record)
        solutions[packing.n] = packing
    return solutions


def dump_solutions(solutions: dict[int, Packing], path) -> None:
    records = [solutions[n].to_dict() for n in sorted(solutions)]
    Path(path).write_text(json.dumps(records), encoding="utf-8")
