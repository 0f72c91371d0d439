"""Evolutionary database: distances, features, islands, archive, checkpoints."""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_program
from evoloop.errors import CorruptCheckpoint, EmptyDatabase, ScoreMissing
from evoloop.evodb import (
    CellIndex,
    DbConfig,
    EvolutionDatabase,
    FeatureVector,
    bin_features,
    compute_features,
    levenshtein,
)


def oracle_levenshtein(a: str, b: str) -> int:
    """Independent full-matrix dynamic-programming edit distance."""
    rows, cols = len(a) + 1, len(b) + 1
    table = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        table[i][0] = i
    for j in range(cols):
        table[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(
                table[i - 1][j] + 1,
                table[i][j - 1] + 1,
                table[i - 1][j - 1] + cost,
            )
    return table[-1][-1]


class TestLevenshtein:
    def test_pure_insertions(self):
        assert levenshtein("", "abc") == 3

    def test_identity(self):
        assert levenshtein("x", "x") == 0

    def test_kitten_sitting(self):
        assert oracle_levenshtein("kitten", "sitting") == 3
        assert levenshtein("kitten", "sitting") == 3

    def test_matches_oracle_on_random_pairs(self):
        rng = random.Random(7)
        for _ in range(300):
            a = "".join(rng.choice("abcdef") for _ in range(rng.randrange(0, 32)))
            b = "".join(rng.choice("abcdef") for _ in range(rng.randrange(0, 32)))
            assert levenshtein(a, b) == oracle_levenshtein(a, b)

    def test_unicode_is_per_character(self):
        assert levenshtein("café", "cafe") == 1
        assert levenshtein("你好", "你") == 1

    @settings(max_examples=150, deadline=None)
    @given(st.text(max_size=64), st.text(max_size=64), st.text(max_size=64))
    def test_metric_properties(self, a, b, c):
        ab = levenshtein(a, b)
        assert ab == levenshtein(b, a)
        assert (ab == 0) == (a == b)
        assert ab <= levenshtein(a, c) + levenshtein(c, b)


class TestFeatures:
    def test_singleton_population(self):
        p = make_program("a", score=1.0)
        f = compute_features(p, [p])
        assert f.diversity == 0.0
        assert f.complexity == 1.0

    def test_identical_programs_have_zero_diversity(self):
        a = make_program("a", score=1.0, files={"m": "same code"})
        b = make_program("b", score=2.0, files={"m": "same code"})
        for member in (a, b):
            assert compute_features(member, [a, b]).diversity == 0.0

    def test_complexity_normalized_by_max_length(self):
        programs = [
            make_program("a", score=1.0, files={"m": "x" * 10}),
            make_program("b", score=1.0, files={"m": "x" * 20}),
            make_program("c", score=1.0, files={"m": "x" * 40}),
        ]
        # Hand-computed: lengths 10/20/40 over max 40.
        expected = [0.25, 0.5, 1.0]
        for program, want in zip(programs, expected):
            assert compute_features(program, programs).complexity == pytest.approx(want)

    def test_performance_normalized_by_max_score(self):
        a = make_program("a", score=1.0)
        b = make_program("b", score=4.0)
        assert compute_features(a, [a, b]).performance == pytest.approx(0.25)
        assert compute_features(b, [a, b]).performance == pytest.approx(1.0)

    def test_feature_vector_bounds_enforced(self):
        with pytest.raises(ValueError):
            FeatureVector(1.5, 0.0, 0.0)


class TestBinning:
    def test_floor_arithmetic(self):
        assert bin_features(FeatureVector(0.55, 0.0, 0.99), 10) == CellIndex(5, 0, 9)

    def test_boundary_clamp(self):
        assert bin_features(FeatureVector(1.0, 1.0, 1.0), 10) == CellIndex(9, 9, 9)

    def test_bin_edges(self):
        assert bin_features(FeatureVector(0.0999, 0.1, 0.1001), 10) == CellIndex(0, 1, 1)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
    )
    def test_indices_always_in_range(self, p, d, c):
        cell = bin_features(FeatureVector(p, d, c), 10)
        assert all(0 <= idx <= 9 for idx in cell)


def quiet_config(**overrides) -> DbConfig:
    """Default config with migration pushed out of the way."""
    params = dict(migration_interval=10_000)
    params.update(overrides)
    return DbConfig(**params)


class TestInsert:
    def test_first_insert(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        db.insert(make_program("a", score=1.0))
        assert db.islands[0] == ["a"]
        assert db.best_id == "a"
        assert len(db.archive) == 1

    def test_score_required(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        with pytest.raises(ScoreMissing):
            db.insert(make_program("a", score=None))

    def test_child_inherits_parent_island(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        db.insert(make_program("root", score=1.0, island=3))
        child = make_program("child", score=2.0, parent_id="root", island=0)
        db.insert(child)
        assert child.island == 3
        assert "child" in db.islands[3]

    def test_26th_insert_evicts_island_minimum(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        # Simulation oracle: scripted scores, island k gets 5 roots.
        scores = {}
        for island in range(5):
            for slot in range(5):
                pid = f"i{island}s{slot}"
                score = 1.0 + island + slot * 0.1
                scores[pid] = score
                db.insert(make_program(pid, score=score, island=island))
        assert db.total_population() == 25

        expected_victim = min(
            (pid for pid in db.islands[2]), key=lambda pid: scores[pid]
        )
        db.insert(make_program("newcomer", score=9.0, island=2))
        assert db.total_population() == 25
        assert expected_victim not in db.islands[2]
        assert "newcomer" in db.islands[2]

    def test_global_best_never_evicted(self):
        db = EvolutionDatabase(quiet_config(num_islands=1, population_size=2), seed=0)
        db.insert(make_program("best", score=10.0))
        db.insert(make_program("mid", score=5.0))
        db.insert(make_program("low", score=1.0))  # island over capacity
        assert "best" in db.islands[0]
        assert db.best_id == "best"

    def test_duplicate_id_rejected(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        db.insert(make_program("a", score=1.0))
        with pytest.raises(ValueError):
            db.insert(make_program("a", score=2.0))

    def test_archive_keeps_best_per_cell(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        db.insert(make_program("a", score=1.0, files={"m": "some code"}))
        # Identical code and score profile lands in the same cell but lower.
        db.insert(make_program("b", score=0.5, files={"m": "some code"}))
        for cell, occupant in db.archive.items():
            mapped = [p for p in db.programs.values() if p.cell == tuple(cell)]
            assert db.programs[occupant].score == max(p.score for p in mapped)

    def test_archive_capacity_evicts_lowest_cell(self):
        db = EvolutionDatabase(quiet_config(archive_size=3, population_size=50,
                                            num_islands=1), seed=0)
        rng = random.Random(3)
        for i in range(30):
            code = "".join(rng.choice("abcdefgh\n ") for _ in range(rng.randrange(5, 60)))
            db.insert(make_program(f"p{i}", score=rng.random() * 5,
                                   files={"m": code}))
        assert len(db.archive) <= 3


class TestSampling:
    def test_single_program_always_returned(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        db.insert(make_program("only", score=1.0))
        assert all(db.sample_candidate().id == "only" for _ in range(20))

    def test_empty_database(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        with pytest.raises(EmptyDatabase):
            db.sample_candidate()

    def test_exploitation_frequency(self):
        # Statistical oracle: one island of scores {1, 2, 3}; the best is
        # returned with probability 0.7; exploration picks the others.
        db = EvolutionDatabase(quiet_config(), seed=1234)
        for pid, score in (("low", 1.0), ("mid", 2.0), ("high", 3.0)):
            db.insert(make_program(pid, score=score, island=0))
        draws = 10_000
        hits = sum(db.sample_candidate().id == "high" for _ in range(draws))
        assert hits / draws == pytest.approx(0.7, abs=0.02)

    def test_same_seed_same_sequence(self):
        def sequence(seed):
            db = EvolutionDatabase(quiet_config(), seed=seed)
            for island in range(3):
                for slot in range(3):
                    db.insert(make_program(f"i{island}s{slot}", score=island + slot,
                                           island=island))
            return [db.sample_candidate().id for _ in range(50)]

        assert sequence(99) == sequence(99)
        assert sequence(99) != sequence(100)


def dense_archive_db(bins=10):
    """White-box fixture: 27 occupied cells around (1, 1, 1)."""
    db = EvolutionDatabase(DbConfig(archive_size=27, migration_interval=10_000), seed=5)
    score = 0.1
    for i, cell in enumerate(itertools.product(range(3), repeat=3)):
        program = make_program(f"n{i}", score=score)
        program.cell = cell
        db.programs[program.id] = program
        db.archive[CellIndex(*cell)] = program.id
        db.islands[0].append(program.id)
        score += 0.1
    db.best_id = max(db.programs, key=lambda pid: db.programs[pid].score)
    return db


class TestInspirations:
    def test_lone_candidate_gets_nothing(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        only = make_program("only", score=1.0)
        db.insert(only)
        assert db.sample_inspirations(only, 5) == []

    def test_two_programs_forced_choice(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        a = make_program("a", score=1.0)
        b = make_program("b", score=2.0)
        db.insert(a)
        db.insert(b)
        inspirations = db.sample_inspirations(a, 5)
        assert [p.id for p in inspirations] == ["b"]

    def test_dense_neighborhood_fills_all_slots(self):
        db = dense_archive_db()
        candidate = db.programs[db.archive[CellIndex(1, 1, 1)]]
        inspirations = db.sample_inspirations(candidate, 5)
        assert len(inspirations) == 5
        assert inspirations[0].id == db.best_id
        ids = [p.id for p in inspirations]
        assert len(set(ids)) == 5
        assert candidate.id not in ids

    def test_never_returns_candidate(self):
        db = dense_archive_db()
        candidate = db.programs[db.best_id]
        for _ in range(20):
            assert candidate.id not in [p.id for p in db.sample_inspirations(candidate, 5)]


class TestMigration:
    def test_single_nonempty_island_is_noop(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        for i in range(3):
            db.insert(make_program(f"p{i}", score=float(i), island=0))
        before = [list(isl) for isl in db.islands]
        db.migrate()
        assert [list(isl) for isl in db.islands] == before

    def test_empty_state_is_noop(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        db.migrate()
        assert db.total_population() == 0

    def test_best_of_each_island_copied_to_both_neighbors(self):
        # ceil(0.1 * 5) = 1 program out of each island to each neighbor.
        db = EvolutionDatabase(quiet_config(population_size=100), seed=0)
        best = {}
        for island in range(5):
            for slot in range(5):
                pid = f"i{island}s{slot}"
                db.insert(make_program(pid, score=island * 10 + slot, island=island))
            best[island] = f"i{island}s4"
        db.migrate()
        for island in range(5):
            members = set(db.islands[island])
            assert best[(island - 1) % 5] in members
            assert best[(island + 1) % 5] in members

    def test_population_cap_enforced_after_migration(self):
        db = EvolutionDatabase(quiet_config(), seed=0)
        for island in range(5):
            for slot in range(5):
                db.insert(make_program(f"i{island}s{slot}", score=island * 10 + slot,
                                       island=island))
        assert db.total_population() == 25
        db.migrate()
        assert db.total_population() <= 25
        assert db.best_id in {pid for isl in db.islands for pid in isl}

    def test_fires_exactly_on_interval_multiples(self):
        fired = []
        db = EvolutionDatabase(DbConfig(migration_interval=25), seed=0)
        original = db.migrate
        db.migrate = lambda: (fired.append(db.insert_counter), original())
        for i in range(80):
            db.insert(make_program(f"p{i}", score=float(i % 7), island=i % 5))
        assert fired == [25, 50, 75]


class TestCheckpoint:
    def _populated(self):
        db = EvolutionDatabase(DbConfig(), seed=42)
        for i in range(12):
            db.insert(make_program(f"p{i}", score=float(i % 5), island=i % 5,
                                   files={"m": f"code {i}\n" * (i + 1)}))
        return db

    def test_round_trip_is_structural_identity(self, tmp_path):
        db = self._populated()
        path = tmp_path / "state.ckpt.json"
        db.checkpoint(path)
        restored = EvolutionDatabase.restore(path)
        assert restored.to_payload() == db.to_payload()

    def test_rng_stream_continues_identically(self, tmp_path):
        db = self._populated()
        path = tmp_path / "state.ckpt.json"
        db.checkpoint(path)
        restored = EvolutionDatabase.restore(path)
        original_draws = [db.sample_candidate().id for _ in range(25)]
        restored_draws = [restored.sample_candidate().id for _ in range(25)]
        assert original_draws == restored_draws

    def test_truncated_file_rejected(self, tmp_path):
        db = self._populated()
        path = tmp_path / "state.ckpt.json"
        db.checkpoint(path)
        data = path.read_text(encoding="utf-8")
        path.write_text(data[: len(data) // 2], encoding="utf-8")
        with pytest.raises(CorruptCheckpoint):
            EvolutionDatabase.restore(path)

    def test_tampered_payload_rejected(self, tmp_path):
        db = self._populated()
        path = tmp_path / "state.ckpt.json"
        db.checkpoint(path)
        data = path.read_text(encoding="utf-8").replace('"insert_counter": 12',
                                                        '"insert_counter": 13')
        path.write_text(data, encoding="utf-8")
        with pytest.raises(CorruptCheckpoint):
            EvolutionDatabase.restore(path)


class TestInvariantsUnderRandomOps:
    def test_randomized_operation_mix(self):
        rng = random.Random(2024)
        db = EvolutionDatabase(DbConfig(), seed=7)
        next_id = 0
        for _ in range(2_000):
            op = rng.random()
            if op < 0.45 or not db.programs:
                code = "".join(rng.choice("abcxyz\n ") for _ in range(rng.randrange(3, 40)))
                parent = (rng.choice(sorted(db.programs)) if db.programs
                          and rng.random() < 0.7 else None)
                program = make_program(
                    f"p{next_id}", score=round(rng.random() * 10, 3),
                    files={"m": code}, parent_id=parent,
                    island=rng.randrange(5),
                    generation=db.programs[parent].generation + 1 if parent else 0,
                )
                cell_before = dict(db.archive)
                db.insert(program)
                # Archive keeps the per-cell maximum.
                cell = CellIndex(*program.cell)
                if cell in db.archive:
                    incumbent = db.programs[db.archive[cell]]
                    assert incumbent.score >= program.score or incumbent.id == program.id
                    if cell in cell_before:
                        previous = db.programs[cell_before[cell]]
                        assert incumbent.score >= previous.score
                next_id += 1
            elif op < 0.85:
                candidate = db.sample_candidate()
                db.sample_inspirations(candidate, 5)
            else:
                db.migrate()

            assert db.total_population() <= db.config.population_size
            assert len(db.archive) <= db.config.archive_size
            best_score = db.programs[db.best_id].score
            assert all(best_score >= (p.score or 0.0) for p in db.programs.values())
            assert all(pid in db.programs for isl in db.islands for pid in isl)
            assert all(0 <= idx <= 9 for cell in db.archive for idx in cell)
