"""The bundled initial algorithm, importable for tests and analysis.

The implementation lives in the problem pack itself
(``problems/circle_packing/initial_algorithm/packer.py``) because that
standalone file tree is the artifact an evolution run edits; this module
loads it from there so there is a single source of truth.
"""

from __future__ import annotations

import importlib.util
import logging

from .geometry import Packing
from .paths import problem_dir
from .scoring import REQUIRED_COUNTS

logger = logging.getLogger(__name__)


def _load_packer():
    path = problem_dir("circle_packing") / "initial_algorithm" / "packer.py"
    spec = importlib.util.spec_from_file_location("benchpack._packer", path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


_packer = _load_packer()
pack_circles = _packer.pack_circles


def initial_algorithm(seed: int = 0, max_iterations: int | None = None
                      ) -> dict[int, Packing]:
    """Solve every required n with the SLSQP baseline; seeds are logged.

    Non-convergence is expected at times; the solver's final iterate is
    emitted regardless and left to the validator to judge.
    """
    kwargs = {} if max_iterations is None else {"max_iterations": max_iterations}
    solutions: dict[int, Packing] = {}
    for n in REQUIRED_COUNTS:
        logger.info("packing n=%d with seed %d", n, seed + n)
        centers, radii = pack_circles(n, seed=seed + n, **kwargs)
        solutions[n] = Packing(n, centers, radii)
    return solutions
