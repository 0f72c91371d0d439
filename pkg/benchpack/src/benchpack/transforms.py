"""Score transforms mapping each task's native metric to a maximize-only scalar."""

from __future__ import annotations

import math


class UnknownMetric(Exception):
    """No transform registered under that metric name."""


class DivisionDomain(Exception):
    """Input outside the transform's domain (e.g. negative nRMSE)."""


#: 1/(nRMSE * 1e3) diverges as nRMSE -> 0; outputs are capped here so the
#: transform stays finite.
NRMSE_CAP = 1e6


def _mcrmse(value: float) -> float:
    if value < 0:
        raise DivisionDomain(f"MCRMSE must be >= 0, got {value}")
    return 1.0 / (1.0 + value)


def _nrmse(value: float) -> float:
    if value < 0:
        raise DivisionDomain(f"nRMSE must be >= 0, got {value}")
    if value == 0:
        return NRMSE_CAP
    return min(1.0 / (value * 1e3), NRMSE_CAP)


def _levenshtein(value: float) -> float:
    return 1.0 - value


def _wmae_r2(wmae: float, r2: float) -> float:
    if wmae < 0:
        raise DivisionDomain(f"wMAE must be >= 0, got {wmae}")
    return 0.5 / (1.0 + wmae) + 0.5 * r2


def _auc(auc_mean: float, auc_std: float) -> float:
    # Implemented verbatim; note that a larger spread across model
    # initializations raises the score, counterintuitive as that is.
    return 0.5 * auc_mean + 0.5 * auc_std


def _identity(value: float) -> float:
    return value


_TRANSFORMS = {
    "mcrmse": (_mcrmse, 1),
    "nrmse": (_nrmse, 1),
    "levenshtein": (_levenshtein, 1),
    "wmae_r2": (_wmae_r2, 2),
    "auc": (_auc, 2),
    # Metrics already on a maximize-only scale pass through unchanged.
    "sum_of_radii": (_identity, 1),
    "smape": (_identity, 1),
    "map": (_identity, 1),
    "pearson": (_identity, 1),
}


def transform(metric_name: str, *values: float) -> float:
    """Apply the named transform; output is finite for in-domain input."""
    key = metric_name.lower()
    if key not in _TRANSFORMS:
        raise UnknownMetric(f"no transform named {metric_name!r}; "
                            f"known: {sorted(_TRANSFORMS)}")
    func, arity = _TRANSFORMS[key]
    if len(values) != arity:
        raise TypeError(f"{metric_name} takes {arity} value(s), got {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise DivisionDomain(f"{metric_name} inputs must be finite, got {values}")
    return func(*values)


def known_metrics() -> list[str]:
    return sorted(_TRANSFORMS)
