"""Acceptance gate for the problem pack, one pass/fail line per criterion."""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from benchpack.baseline import initial_algorithm
from benchpack.geometry import Packing, grid_packing, validate
from benchpack.scoring import REQUIRED_COUNTS, score_packings
from benchpack.transforms import transform


@contextmanager
def criterion(name: str, budget_seconds: float):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    elapsed = time.monotonic() - started
    print(f"[ACCEPTANCE] {name}: PASS ({elapsed:.1f} s, budget {budget_seconds:.0f} s)")
    assert elapsed < budget_seconds, f"{name} exceeded its runtime budget"


def test_validator_fixtures_and_grid_score():
    with criterion("validator fixtures + grid score 29/12", 60.0):
        coincident = Packing(2, np.array([[0.5, 0.5], [0.5, 0.5]]),
                             np.array([0.3, 0.3]))
        assert not validate(coincident).valid

        boundary = Packing(1, np.array([[0.05, 0.5]]), np.array([0.1]))
        assert not validate(boundary).valid

        inscribed = Packing(1, np.array([[0.5, 0.5]]), np.array([0.5]))
        assert validate(inscribed).valid

        for n in REQUIRED_COUNTS:
            assert validate(grid_packing(n), tol=1e-9).valid

        score, _ = score_packings({n: grid_packing(n) for n in REQUIRED_COUNTS})
        assert score == pytest.approx(29 / 12, abs=1e-9)


def test_baseline_reproduction_band():
    with criterion("baseline band: 5-seed mean in [0, 1.5], < 2.4", 300.0):
        scores = []
        for seed in range(5):
            solutions = initial_algorithm(seed=seed)
            score, _ = score_packings(solutions)
            scores.append(score)
        mean = sum(scores) / len(scores)
        print(f"  per-seed scores: {['%.4f' % s for s in scores]}, mean {mean:.4f}")
        assert 0.0 <= mean <= 1.5
        assert mean < 2.4
        assert all(s < 2.4 for s in scores)


def test_metric_transform_endpoints():
    with criterion("transform endpoints exact to 1e-12", 10.0):
        assert abs(transform("mcrmse", 0.0) - 1.0) < 1e-12
        assert abs(transform("nrmse", 0.001) - 1.0) < 1e-12
        assert abs(transform("wmae_r2", 0.0, 1.0) - 1.0) < 1e-12
