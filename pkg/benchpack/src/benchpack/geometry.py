"""Circle packings in the unit square and their validity checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MalformedPacking(Exception):
    """Structural mismatch between n, centers, and radii."""


@dataclass(frozen=True)
class Violation:
    """A single validity failure with its location and magnitude."""

    kind: str            # "radius" | "boundary" | "overlap"
    indices: tuple       # (i,) for radius/boundary, (i, j) for overlap
    magnitude: float     # how far past the constraint, always > 0
    detail: str = ""

    def __str__(self):
        where = ",".join(str(i) for i in self.indices)
        return f"{self.kind}[{where}] by {self.magnitude:.3e} {self.detail}".strip()


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    violations: tuple[Violation, ...] = ()


@dataclass
class Packing:
    """n circles: centers in unit-square coordinates, positive radii."""

    n: int
    centers: np.ndarray  # shape (n, 2)
    radii: np.ndarray    # shape (n,)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        if self.n < 1:
            raise MalformedPacking(f"need at least one circle, got n={self.n}")
        if self.centers.shape != (self.n, 2):
            raise MalformedPacking(
                f"centers shape {self.centers.shape} does not match n={self.n}")
        if self.radii.shape != (self.n,):
            raise MalformedPacking(
                f"radii shape {self.radii.shape} does not match n={self.n}")
        if not (np.isfinite(self.centers).all() and np.isfinite(self.radii).all()):
            raise MalformedPacking("centers and radii must be finite")

    def sum_radii(self) -> float:
        return float(self.radii.sum())

    def to_dict(self) -> dict:
        return {"n": self.n, "centers": self.centers.tolist(),
                "radii": self.radii.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Packing":
        try:
            return cls(int(data["n"]), np.array(data["centers"], dtype=float),
                       np.array(data["radii"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedPacking(f"bad packing record: {exc}") from exc


DEFAULT_TOLERANCE = 1e-6


def validate(packing: Packing, tol: float = DEFAULT_TOLERANCE) -> ValidationResult:
    """Report every boundary and overlap violation beyond ``tol``.

    A packing is valid iff all radii are positive, every circle lies
    inside [0, 1]^2 to within ``tol``, and every pair keeps
    dist >= r_i + r_j - tol. The verdict is independent of circle order.
    """
    violations: list[Violation] = []
    centers, radii = packing.centers, packing.radii

    for i in np.nonzero(radii <= 0)[0]:
        violations.append(Violation("radius", (int(i),), float(-radii[i]) or 0.0,
                                    "non-positive radius"))

    lower = centers - radii[:, None]       # x - r, y - r must be >= -tol
    upper = centers + radii[:, None] - 1.0  # x + r - 1, y + r - 1 must be <= tol
    for axis, name in ((0, "x"), (1, "y")):
        for i in np.nonzero(lower[:, axis] < -tol)[0]:
            violations.append(Violation("boundary", (int(i),),
                                        float(-lower[i, axis]), f"{name}-min"))
        for i in np.nonzero(upper[:, axis] > tol)[0]:
            violations.append(Violation("boundary", (int(i),),
                                        float(upper[i, axis]), f"{name}-max"))

    if packing.n > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        required = radii[:, None] + radii[None, :]
        gap = dist - required                     # must be >= -tol for i != j
        ii, jj = np.triu_indices(packing.n, k=1)
        bad = gap[ii, jj] < -tol
        for i, j, overlap in zip(ii[bad], jj[bad], -gap[ii, jj][bad]):
            violations.append(Violation("overlap", (int(i), int(j)), float(overlap)))

    return ValidationResult(valid=not violations, violations=tuple(violations))


def grid_packing(n: int) -> Packing:
    """Equal circles on a ceil(sqrt(n)) grid; always valid by construction."""
    k = int(np.ceil(np.sqrt(n)))
    r = 1.0 / (2 * k)
    cells = [((2 * col + 1) * r, (2 * row + 1) * r)
             for row in range(k) for col in range(k)]
    centers = np.array(cells[:n])
    return Packing(n, centers, np.full(n, r))
