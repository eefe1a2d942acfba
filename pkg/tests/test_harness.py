import csv
import json
import math

import numpy as np
import pytest

from agr.exact import exact_solve
from agr.exceptions import DegenerateGoalSet, MissingFactorizationMetadata
from agr.harness import (
    ENTROPY_COLUMNS,
    RETURN_COLUMNS,
    Batch,
    BatchStats,
    compare_exact,
    compare_variants,
    emit_results,
    goal_belief,
    normalized_entropy,
    run_batch,
)
from agr.pbvi import pbvi_solve
from agr.pomdp import ConstantPolicy, belief_update
from agr.variants import VariantKind, make_lb_a, make_ub

from conftest import corridor, random_model


def test_goal_belief_initial(corridor10):
    assert np.allclose(goal_belief(corridor10, corridor10.initial_belief), np.full(21, 1 / 21), atol=1e-15)


def test_goal_belief_point_mass(corridor10):
    b = np.zeros(corridor10.num_states)
    b[17] = 1.0
    bg = goal_belief(corridor10, b)
    assert bg.sum() == 1.0 and np.count_nonzero(bg) == 1
    assert bg[corridor10.factors.state_goal[17]] == 1.0


def test_goal_belief_after_observing_plus_one(corridor10):
    m = corridor10
    b = belief_update(m, m.initial_belief, m.action_index("A_obs"), m.observation_index("0|+1"))
    bg = goal_belief(m, b)
    assert np.allclose(bg[11:], 0.1) and bg[:11].sum() == 0


def test_goal_belief_needs_factors():
    with pytest.raises(MissingFactorizationMetadata):
        goal_belief(random_model(0), [1.0, 0.0])


def test_entropy_spot_values():
    assert abs(normalized_entropy(np.full(21, 1 / 21)) - 1.0) <= 1e-9
    assert normalized_entropy(np.eye(21)[4]) == 0.0
    two = np.zeros(21)
    two[[3, 9]] = 0.5
    assert abs(normalized_entropy(two) - math.log(2) / math.log(21)) <= 1e-9
    assert abs(normalized_entropy(two) - 0.2276) < 1e-4


def test_entropy_degenerate():
    with pytest.raises(DegenerateGoalSet):
        normalized_entropy([1.0])


@pytest.fixture(scope="module")
def work_batch(corridor10):
    return run_batch(corridor10, ConstantPolicy(corridor10.action_index("A_work")), 1000, seed=7)


def test_record_invariants(work_batch, corridor10):
    assert len(work_batch.records) == 1000
    for rec in work_batch.records[:50]:
        assert len(rec.per_step) <= corridor10.horizon
        g = sum(corridor10.discount**t * s.reward for t, s in enumerate(rec.per_step))
        assert abs(g - rec.return_) <= 1e-9
        assert all(0.0 <= s.goal_entropy <= 1.0 for s in rec.per_step)


def test_stats_population_std(work_batch):
    r = np.array([rec.return_ for rec in work_batch.records])
    s = work_batch.stats
    assert s.mean_return == pytest.approx(r.mean(), abs=1e-12)
    assert s.std_return == pytest.approx(r.std(ddof=0), abs=1e-12)
    assert s.se_return == pytest.approx(s.std_return / math.sqrt(1000))


def test_lb_a_corridor_batch(corridor10):
    lba = make_lb_a(corridor10)
    batch = run_batch(lba, pbvi_solve(lba), 200, seed=0)
    assert batch.stats.std_return == 0.0
    assert batch.stats.mean_return == pytest.approx(157.08, abs=0.01)
    h = np.array(batch.stats.entropy_mean)
    assert np.all(np.abs(h - 1.0) <= 1e-9)
    assert batch.stats.entropy_min == batch.stats.entropy_max


def test_single_episode_reproducible(corridor10):
    pol = ConstantPolicy(corridor10.action_index("A_obs"))
    a = run_batch(corridor10, pol, 1, seed=3).records[0]
    b = run_batch(corridor10, pol, 1, seed=3).records[0]
    assert a == b


def test_parallel_matches_serial():
    m = corridor(3)
    pol = ConstantPolicy(m.action_index("A_obs"))
    serial = run_batch(m, pol, 40, seed=2)
    parallel = run_batch(m, pol, 40, seed=2, n_jobs=2)
    assert serial.records == parallel.records
    assert serial.stats == parallel.stats


def test_tracked_belief_matches_replay(corridor1):
    _, tree = exact_solve(corridor1)
    batch = run_batch(corridor1, tree, 50, seed=1, keep_beliefs=True)
    for rec in batch.records:
        b = np.asarray(corridor1.initial_belief)
        for step, tracked in zip(rec.per_step, rec.beliefs):
            b = belief_update(corridor1, b, step.action, step.observation)
            assert np.allclose(b, tracked, atol=1e-12)


def test_ub_entropy_zero_once_goal_is_pinned(corridor10):
    ub = make_ub(corridor10)
    batch = run_batch(ub, ConstantPolicy(ub.action_index("A_work")), 300, seed=5)
    goals = [int(g) for g in corridor10.factors.goal_labels]
    for rec in batch.records:
        g = goals[rec.true_goal]
        # target stands on g after |g| moves and is seen there; waiting one more step pins it
        first_wait = abs(g) + 1
        h = rec.entropies
        assert h[min(abs(g), len(h) - 1)] == 0.0
        assert np.all(h[first_wait:] == 0.0)
        assert np.all(h[:abs(g) - 1] > 0.0) if abs(g) > 1 and abs(g) < 10 else True


def test_empty_batch_emit(tmp_path):
    batch = Batch([], BatchStats.from_records([]), "empty")
    paths = emit_results(batch, tmp_path)
    assert paths["entropy"].read_text().strip() == ",".join(ENTROPY_COLUMNS)
    assert paths["returns"].read_text().strip() == ",".join(RETURN_COLUMNS)
    summary = json.loads(paths["summary"].read_text())
    assert summary["n_episodes"] == 0 and summary["mean_return"] is None


def test_emit_matches_stats(tmp_path, work_batch):
    paths = emit_results(work_batch, tmp_path, prefix="w")
    with open(paths["returns"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1000
    # independent single pass (Welford) over the CSV
    n, mean, m2 = 0, 0.0, 0.0
    for row in rows:
        x = float(row["return"])
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
    assert mean == pytest.approx(work_batch.stats.mean_return, abs=1e-9)
    assert math.sqrt(m2 / n) == pytest.approx(work_batch.stats.std_return, abs=1e-9)
    summary = json.loads(paths["summary"].read_text())
    assert summary["mean_return"] == work_batch.stats.mean_return
    with open(paths["entropy"]) as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == ENTROPY_COLUMNS


def test_emit_deterministic(tmp_path, work_batch):
    a = emit_results(work_batch, tmp_path / "a")
    b = emit_results(work_batch, tmp_path / "b")
    for k in a:
        assert a[k].read_bytes() == b[k].read_bytes()


def test_emit_io_error_names_path(tmp_path, work_batch):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_results(work_batch, blocker / "sub")


def test_compare_matches_exact_ordering(corridor1):
    values, _ = compare_exact(corridor1)
    report = compare_variants(corridor1, n_episodes=300, seed=0, solve=lambda m: exact_solve(m)[1])
    assert report.passed
    means = {k: b.stats.mean_return for k, b in report.batches.items()}
    order_exact = sorted(values, key=values.get)
    order_sim = sorted(means, key=means.get)
    assert order_exact == order_sim
    assert "lb-a" in report.table()
    json.dumps(report.summary())


def test_compare_seed_reproducible():
    m = corridor(2, horizon=8)
    a = compare_variants(m, n_episodes=100, seed=4).summary()
    b = compare_variants(m, n_episodes=100, seed=4).summary()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_undiscounted_option(corridor10):
    pol = ConstantPolicy(corridor10.action_index("A_work"))
    batch = run_batch(corridor10, pol, 3, seed=0, discount=1.0)
    assert all(rec.return_ == 300.0 for rec in batch.records)
