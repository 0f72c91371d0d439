"""Evolutionary memory: island populations plus a MAP-Elites archive.

Islands hold the candidate pool (sampled with an exploit/explore split);
the archive keeps the best program per feature cell and feeds inspiration
sampling. Features are (performance, diversity, complexity), each in
[0, 1], binned onto a cubic grid. The whole state, including the random
stream, checkpoints to a single integrity-checked JSON file.

Single-writer: all mutations go through one owner; snapshots may be read
concurrently.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .context import AlgorithmDescription, CandidateProgram
from .errors import CorruptCheckpoint, EmptyDatabase, ScoreMissing

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "evoloop-evodb"
CHECKPOINT_VERSION = 1

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @njit(cache=True)
    def _lev_kernel(a, b):  # pragma: no cover - compiled
        la, lb = len(a), len(b)
        prev = np.arange(lb + 1, dtype=np.int64)
        cur = np.empty(lb + 1, dtype=np.int64)
        for i in range(1, la + 1):
            cur[0] = i
            for j in range(1, lb + 1):
                cost = 0 if a[i - 1] == b[j - 1] else 1
                best = prev[j] + 1
                if cur[j - 1] + 1 < best:
                    best = cur[j - 1] + 1
                if prev[j - 1] + cost < best:
                    best = prev[j - 1] + cost
                cur[j] = best
            prev, cur = cur, prev
        return prev[lb]


def _encode(text: str) -> np.ndarray:
    """Code points as uint32, so distances are over characters, not bytes."""
    return np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)


def _lev_python(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if _HAVE_NUMBA:
        return int(_lev_kernel(_encode(a), _encode(b)))
    return _lev_python(a, b)


def _lev_arrays(a: np.ndarray, b: np.ndarray) -> int:
    if len(a) == 0:
        return len(b)
    if len(b) == 0:
        return len(a)
    if _HAVE_NUMBA:
        return int(_lev_kernel(a, b))
    return _lev_python(a.tobytes().decode("utf-32-le"), b.tobytes().decode("utf-32-le"))


@dataclass(frozen=True)
class FeatureVector:
    """(performance, diversity, complexity), each in [0, 1]."""

    performance: float
    diversity: float
    complexity: float

    def __post_init__(self):
        for name in ("performance", "diversity", "complexity"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


class CellIndex(NamedTuple):
    p_bin: int
    d_bin: int
    c_bin: int


@dataclass(frozen=True)
class DbConfig:
    num_islands: int = 5
    population_size: int = 25
    archive_size: int = 10
    num_inspirations: int = 5
    elite_ratio: float = 0.1
    exploitation_prob: float = 0.7
    migration_interval: int = 25
    migration_ratio: float = 0.1
    bins_per_dim: int = 10

    def __post_init__(self):
        for name in ("num_islands", "population_size", "archive_size",
                     "num_inspirations", "migration_interval", "bins_per_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("elite_ratio", "exploitation_prob", "migration_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    @property
    def island_capacity(self) -> int:
        return max(1, self.population_size // self.num_islands)


def compute_features(candidate: CandidateProgram,
                     population: list[CandidateProgram]) -> FeatureVector:
    """Feature vector of ``candidate`` relative to ``population``.

    Performance is the score over the population's max score (floor 0);
    complexity is total code length over the max length; diversity is the
    mean edit distance to every other member, over the population's max
    such mean. A singleton population gives diversity 0 and complexity 1.
    """
    members = list(population)
    if candidate.id not in {m.id for m in members}:
        members.append(candidate)
    codes = {m.id: m.concatenated_code() for m in members}

    max_score = max((m.score or 0.0) for m in members)
    performance = (candidate.score or 0.0) / max_score if max_score > 0 else 0.0

    max_len = max(len(code) for code in codes.values())
    complexity = len(codes[candidate.id]) / max_len if max_len > 0 else 1.0

    if len(members) == 1:
        return FeatureVector(min(performance, 1.0), 0.0, 1.0)

    def mean_distance(mid: str) -> float:
        dists = [levenshtein(codes[mid], codes[other.id])
                 for other in members if other.id != mid]
        return sum(dists) / len(dists)

    means = {m.id: mean_distance(m.id) for m in members}
    max_mean = max(means.values())
    diversity = means[candidate.id] / max_mean if max_mean > 0 else 0.0

    return FeatureVector(min(performance, 1.0), min(diversity, 1.0), min(complexity, 1.0))


def bin_features(features: FeatureVector, bins: int) -> CellIndex:
    """Map each component to floor(x * bins), clamped into [0, bins-1]."""

    def one(x: float) -> int:
        return min(bins - 1, int(math.floor(x * bins)))

    return CellIndex(one(features.performance), one(features.diversity),
                     one(features.complexity))


class EvolutionDatabase:
    """Island populations + MAP-Elites archive over all stored programs.

    Evicted programs stay in ``programs`` for lineage and reporting; the
    feature population ("the others" that diversity and complexity are
    measured against) is the currently retained set: island members,
    archive occupants, and the global best.
    """

    def __init__(self, config: DbConfig = DbConfig(), seed: Optional[int] = 0):
        self.config = config
        self.programs: dict[str, CandidateProgram] = {}
        self.islands: list[list[str]] = [[] for _ in range(config.num_islands)]
        self.archive: dict[CellIndex, str] = {}
        self.best_id: Optional[str] = None
        self.insert_counter = 0
        self.rng = random.Random(seed)
        self._max_score = 0.0
        # Lazy feature caches: raw mean distance and code length at insert time.
        self._mean_dist: dict[str, float] = {}
        self._code_len: dict[str, int] = {}
        self._code_arr: dict[str, np.ndarray] = {}

    # --- introspection ---

    def living_ids(self) -> list[str]:
        """Retained programs, in deterministic order, without duplicates."""
        seen: dict[str, None] = {}
        for island in self.islands:
            for pid in island:
                seen.setdefault(pid)
        for pid in self.archive.values():
            seen.setdefault(pid)
        if self.best_id is not None:
            seen.setdefault(self.best_id)
        return list(seen)

    def total_population(self) -> int:
        """Occupied island slots (shared references count per island)."""
        return sum(len(island) for island in self.islands)

    def best_program(self) -> CandidateProgram:
        if self.best_id is None:
            raise EmptyDatabase("no programs stored")
        return self.programs[self.best_id]

    def _score(self, pid: str) -> float:
        return self.programs[pid].score or 0.0

    # --- insertion ---

    def insert(self, program: CandidateProgram) -> None:
        """Store a scored program, update archive/best, maybe migrate."""
        if program.score is None:
            raise ScoreMissing(f"program {program.id} has no realized score")
        if program.id in self.programs:
            raise ValueError(f"duplicate program id {program.id}")

        if program.parent_id is not None and program.parent_id in self.programs:
            island_idx = self.programs[program.parent_id].island
        elif 0 <= program.island < self.config.num_islands:
            island_idx = program.island
        else:
            island_idx = 0

        features, mean_dist = self._features_lazy(program)
        cell = bin_features(features, self.config.bins_per_dim)
        program.island = island_idx
        program.cell = tuple(cell)

        self.programs[program.id] = program
        self.islands[island_idx].append(program.id)
        code = program.concatenated_code()
        self._code_len[program.id] = len(code)
        self._code_arr[program.id] = _encode(code)
        self._mean_dist[program.id] = mean_dist

        if program.score > self._max_score:
            self._max_score = program.score
        if self.best_id is None or program.score > self._score(self.best_id):
            self.best_id = program.id

        self._update_archive(cell, program)
        self._enforce_island_capacity(island_idx)
        # Migration can leave other islands above per-island capacity, so
        # the global cap needs its own check here.
        self._enforce_population_cap()

        self.insert_counter += 1
        if self.insert_counter % self.config.migration_interval == 0:
            self.migrate()

    def _features_lazy(self, program: CandidateProgram) -> tuple[FeatureVector, float]:
        """O(population) feature computation using cached peer means.

        Peers' mean distances are the values cached when they were
        inserted; they are not recomputed retroactively. Returns the
        feature vector and the program's raw mean distance (for caching).
        """
        living = self.living_ids()
        code = program.concatenated_code()
        arr = _encode(code)

        max_score = max(self._max_score, program.score or 0.0)
        performance = (program.score or 0.0) / max_score if max_score > 0 else 0.0

        lengths = [self._code_len[pid] for pid in living] + [len(code)]
        max_len = max(lengths)
        complexity = len(code) / max_len if max_len > 0 else 1.0

        if not living:
            return FeatureVector(min(performance, 1.0), 0.0, 1.0), 0.0

        dists = [_lev_arrays(arr, self._code_arr[pid]) for pid in living]
        mean = sum(dists) / len(dists)
        max_mean = max([self._mean_dist[pid] for pid in living] + [mean])
        diversity = mean / max_mean if max_mean > 0 else 0.0

        features = FeatureVector(min(performance, 1.0), min(diversity, 1.0),
                                 min(complexity, 1.0))
        return features, mean

    def _update_archive(self, cell: CellIndex, program: CandidateProgram) -> None:
        incumbent = self.archive.get(cell)
        if incumbent is None:
            if len(self.archive) >= self.config.archive_size:
                lowest = min(self.archive,
                             key=lambda c: (self._score(self.archive[c]), c))
                evicted = self.archive.pop(lowest)
                logger.debug("archive full: dropped cell %s (elite %s)", lowest, evicted)
                self._prune_caches(evicted)
            self.archive[cell] = program.id
        elif program.score > self._score(incumbent):
            self.archive[cell] = program.id
            self._prune_caches(incumbent)

    def _enforce_island_capacity(self, island_idx: int) -> None:
        island = self.islands[island_idx]
        while len(island) > self.config.island_capacity:
            evictable = [pid for pid in island if pid != self.best_id]
            if not evictable:
                break
            victim = min(evictable, key=lambda pid: (self._score(pid), island.index(pid)))
            island.remove(victim)
            self._prune_caches(victim)

    def _prune_caches(self, pid: str) -> None:
        if pid in set(self.living_ids()):
            return
        self._code_arr.pop(pid, None)
        self._code_len.pop(pid, None)
        self._mean_dist.pop(pid, None)

    # --- sampling ---

    def sample_candidate(self) -> CandidateProgram:
        """Pick an island uniformly, then exploit its best or explore.

        With probability ``exploitation_prob`` returns the island's
        best-score member; otherwise a uniform draw over the island's
        remaining members (the best itself if it is alone).
        """
        non_empty = [i for i, island in enumerate(self.islands) if island]
        if not non_empty:
            raise EmptyDatabase("cannot sample from an empty database")
        island = self.islands[self.rng.choice(non_empty)]
        best = max(island, key=self._score)
        if self.rng.random() < self.config.exploitation_prob:
            return self.programs[best]
        others = [pid for pid in island if pid != best]
        if not others:
            return self.programs[best]
        return self.programs[self.rng.choice(others)]

    def sample_inspirations(self, candidate: CandidateProgram,
                            n: Optional[int] = None) -> list[CandidateProgram]:
        """Up to ``n`` distinct inspirations for ``candidate``.

        Always includes the global best (unless it is the candidate), then
        ceil(elite_ratio * archive occupancy) top-score archive elites,
        then occupied cells reached by a random walk (each axis stepped by
        -1/0/+1, up to 10 retries per slot) around the candidate's cell.
        Unfilled slots are dropped.
        """
        if n is None:
            n = self.config.num_inspirations
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")

        chosen: list[str] = []

        def take(pid: Optional[str]) -> bool:
            if pid and pid != candidate.id and pid not in chosen and pid in self.programs:
                chosen.append(pid)
                return True
            return False

        take(self.best_id)

        elite_slots = math.ceil(self.config.elite_ratio * len(self.archive))
        elites = sorted(self.archive.values(), key=lambda pid: (-self._score(pid), pid))
        filled = 0
        for pid in elites:
            if filled >= elite_slots or len(chosen) >= n:
                break
            if take(pid):
                filled += 1

        cell = candidate.cell
        if cell is not None:
            bins = self.config.bins_per_dim
            for _slot in range(n - len(chosen)):
                for _retry in range(10):
                    neighbor = CellIndex(*(
                        min(bins - 1, max(0, cell[axis] + self.rng.choice((-1, 0, 1))))
                        for axis in range(3)
                    ))
                    if take(self.archive.get(neighbor)):
                        break

        return [self.programs[pid] for pid in chosen[:n]]

    # --- migration ---

    def migrate(self) -> None:
        """Copy each island's top programs to its ring neighbors.

        Neighbors are computed over the non-empty islands, so a single
        populated island is a no-op. Copies are shared references;
        duplicates are not re-added. The population cap is restored by
        evicting the lowest-score non-best occupied slots.
        """
        active = [i for i, island in enumerate(self.islands) if island]
        if len(active) <= 1:
            return

        planned: list[tuple[int, list[str]]] = []
        for pos, i in enumerate(active):
            island = self.islands[i]
            count = math.ceil(self.config.migration_ratio * len(island))
            top = sorted(island, key=lambda pid: (-self._score(pid), island.index(pid)))[:count]
            left = active[(pos - 1) % len(active)]
            right = active[(pos + 1) % len(active)]
            targets = [left] if left == right else [left, right]
            for target in targets:
                if target != i:
                    planned.append((target, top))

        for target, ids in planned:
            for pid in ids:
                if pid not in self.islands[target]:
                    self.islands[target].append(pid)

        self._enforce_population_cap()

    def _enforce_population_cap(self) -> None:
        """Evict lowest-score non-best occupied slots until within cap."""
        while self.total_population() > self.config.population_size:
            slots = [
                (self._score(pid), island_idx, pos, pid)
                for island_idx, island in enumerate(self.islands)
                for pos, pid in enumerate(island)
                if pid != self.best_id
            ]
            if not slots:
                break
            _, island_idx, pos, pid = min(slots)
            self.islands[island_idx].pop(pos)
            self._prune_caches(pid)

    # --- checkpointing ---

    def to_payload(self) -> dict:
        """JSON-safe snapshot of the full state, including the RNG."""
        version, internal, gauss = self.rng.getstate()
        return {
            "config": asdict(self.config),
            "programs": {pid: _program_to_dict(p) for pid, p in self.programs.items()},
            "islands": [list(island) for island in self.islands],
            "archive": [[list(cell), pid] for cell, pid in sorted(self.archive.items())],
            "best_id": self.best_id,
            "insert_counter": self.insert_counter,
            "max_score": self._max_score,
            "mean_dist": dict(self._mean_dist),
            "code_len": dict(self._code_len),
            "rng_state": [version, list(internal), gauss],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "EvolutionDatabase":
        try:
            db = cls(DbConfig(**payload["config"]), seed=None)
            db.programs = {pid: _program_from_dict(d)
                           for pid, d in payload["programs"].items()}
            db.islands = [list(island) for island in payload["islands"]]
            db.archive = {CellIndex(*cell): pid for cell, pid in payload["archive"]}
            db.best_id = payload["best_id"]
            db.insert_counter = payload["insert_counter"]
            db._max_score = payload["max_score"]
            db._mean_dist = dict(payload["mean_dist"])
            db._code_len = {pid: int(n) for pid, n in payload["code_len"].items()}
            version, internal, gauss = payload["rng_state"]
            db.rng.setstate((version, tuple(internal), gauss))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptCheckpoint(f"malformed checkpoint payload: {exc}") from exc
        for pid in db.living_ids():
            db._code_arr[pid] = _encode(db.programs[pid].concatenated_code())
        return db

    def checkpoint(self, path) -> None:
        write_checkpoint(path, CHECKPOINT_FORMAT, self.to_payload())

    @classmethod
    def restore(cls, path) -> "EvolutionDatabase":
        payload = read_checkpoint(path, CHECKPOINT_FORMAT)
        return cls.from_payload(payload)


# --- checkpoint container (shared with the orchestrator) ---

def _canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def write_checkpoint(path, fmt: str, payload: dict) -> None:
    """Write a versioned, digest-protected JSON container atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "format": fmt,
        "version": CHECKPOINT_VERSION,
        "sha256": hashlib.sha256(_canonical_json(payload).encode("utf-8")).hexdigest(),
        "payload": payload,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(document, indent=1, ensure_ascii=False), encoding="utf-8")
    os.replace(tmp, path)


def read_checkpoint(path, fmt: str) -> dict:
    """Read a checkpoint container, verifying format and digest."""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(document, dict) or document.get("format") != fmt:
        raise CorruptCheckpoint(
            f"{path}: expected format {fmt!r}, got {document.get('format')!r}"
            if isinstance(document, dict) else f"{path}: not a checkpoint document"
        )
    payload = document.get("payload")
    digest = hashlib.sha256(_canonical_json(payload).encode("utf-8")).hexdigest()
    if digest != document.get("sha256"):
        raise CorruptCheckpoint(f"{path}: integrity digest mismatch")
    return payload


def _program_to_dict(program: CandidateProgram) -> dict:
    data = asdict(program)
    if data["cell"] is not None:
        data["cell"] = list(data["cell"])
    return data


def _program_from_dict(data: dict) -> CandidateProgram:
    data = dict(data)
    desc = data.pop("description")
    cell = data.pop("cell")
    return CandidateProgram(
        description=AlgorithmDescription(**desc),
        cell=tuple(cell) if cell is not None else None,
        **data,
    )
