import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agr.exceptions import EpisodeFinished, InvalidModel, ZeroProbabilityObservation
from agr.harness import goal_belief
from agr.pomdp import (
    ConstantPolicy,
    SimState,
    TabularPOMDP,
    belief_update,
    check_model,
    evaluate_policy,
    observation_distribution,
    sample_step,
)

from conftest import corridor, random_model, seeds


def chain(n=3, reward=1.0, horizon=5, discount=0.9):
    # deterministic s -> s+1 (last state absorbing), observation = state
    T = np.zeros((1, n, n))
    for s in range(n):
        T[0, s, min(s + 1, n - 1)] = 1.0
    O = np.eye(n)[None]
    b0 = np.eye(n)[0]
    return TabularPOMDP(T, np.full((n, 1), reward), O, b0, horizon=horizon, discount=discount)


def test_deterministic_belief_update():
    m = chain()
    b = belief_update(m, m.initial_belief, 0, 1)
    assert np.array_equal(b, [0.0, 1.0, 0.0])


def test_zero_probability_observation():
    m = chain()
    with pytest.raises(ZeroProbabilityObservation):
        belief_update(m, m.initial_belief, 0, 2)


def test_rejects_unnormalized_rows():
    T = np.array([[[0.5, 0.4], [0.0, 1.0]]])
    with pytest.raises(InvalidModel):
        TabularPOMDP(T, np.zeros((2, 1)), np.ones((1, 2, 1)), [1.0, 0.0])


def test_rejects_bad_initial_belief():
    with pytest.raises(InvalidModel):
        TabularPOMDP(np.eye(2)[None], np.zeros((2, 1)), np.ones((1, 2, 1)), [0.7, 0.7])


def test_corridor_observe_after_one_step(corridor10):
    m = corridor10
    f = m.factors
    a = m.action_index("A_obs")
    o = m.observation_index("0|+1")
    b = belief_update(m, m.initial_belief, a, o)
    bg = goal_belief(m, b)
    goals = np.array([int(g) for g in f.goal_labels])
    assert np.allclose(bg[goals >= 1], 0.1, atol=1e-12)
    assert bg[goals < 1].sum() == 0.0
    target_at = np.array([m.state_labels[s].split("|")[1] for s in np.flatnonzero(b)])
    assert set(target_at) == {"+1"}


def test_corridor_work_null_observation_keeps_goal_marginal(corridor10):
    m = corridor10
    a = m.action_index("A_work")
    o = m.observation_index("0|null")
    b = belief_update(m, m.initial_belief, a, o)
    assert np.allclose(goal_belief(m, b), 1 / 21, atol=1e-12)
    # brute force: same thing by explicit sums over the dense tables
    T, O = m.dense_transition()[a], m.dense_observation()[a]
    brute = O[:, o] * (m.initial_belief @ T)
    assert np.allclose(b, brute / brute.sum(), atol=1e-12)


def test_sample_step_deterministic_chain():
    m = chain()
    rng = np.random.default_rng(0)
    r, o, sim = sample_step(m, SimState(0), 0, rng)
    assert (r, o, sim.true_state, sim.step) == (1.0, 1, 1, 1)


def test_sample_step_past_horizon():
    m = chain(horizon=1)
    with pytest.raises(EpisodeFinished):
        sample_step(m, SimState(0, step=1), 0, np.random.default_rng(0))


def _state(m, label):
    return m.state_labels.index(label)


def test_corridor_work_reward_and_null_observation(corridor10):
    m = corridor10
    s = _state(m, "0|+0|+3")
    r, o, sim = sample_step(m, SimState(s), m.action_index("A_work"), np.random.default_rng(1))
    assert r == 10.0
    assert m.observation_labels[o] == "0|null"
    assert m.state_labels[sim.true_state] == "0|+1|+3"


def test_corridor_correct_door(corridor10):
    m = corridor10
    s = _state(m, "0|+3|+3")
    r, _, sim = sample_step(m, SimState(s, step=5), m.action_index("A_open(+3)"), np.random.default_rng(1))
    assert r == 100.0
    assert m.state_labels[sim.true_state] == "0|done|+3"


def test_idle_returns_zero(corridor10):
    returns = evaluate_policy(corridor10, ConstantPolicy(corridor10.action_index("A_idle")), 20, seed=3)
    assert returns == [0.0] * 20


def test_work_returns_geometric_series(corridor10):
    returns = evaluate_policy(corridor10, ConstantPolicy(corridor10.action_index("A_work")), 20, seed=3)
    expected = 10 * (1 - 0.95**30) / 0.05
    assert np.allclose(returns, expected, atol=1e-9)
    assert abs(expected - 157.08) < 0.01


def test_evaluate_policy_seeded():
    m = random_model(5, horizon=6)
    pol = ConstantPolicy(0)
    assert evaluate_policy(m, pol, 30, seed=9) == evaluate_policy(m, pol, 30, seed=9)


@settings(max_examples=1000, deadline=None)
@given(seeds, st.integers(0, 2**31), st.data())
def test_belief_update_normalized(seed, bseed, data):
    m = random_model(seed)
    rng = np.random.default_rng(bseed)
    b = rng.dirichlet(np.ones(m.num_states))
    b[rng.random(m.num_states) < 0.3] = 0.0
    if b.sum() == 0:
        b[0] = 1.0
    b /= b.sum()
    a = data.draw(st.integers(0, m.num_actions - 1))
    p_obs = observation_distribution(m, b, a)
    o = data.draw(st.sampled_from(np.flatnonzero(p_obs > 1e-12).tolist()))
    nb = belief_update(m, b, a, o)
    assert abs(nb.sum() - 1.0) <= 1e-9
    assert nb.min() >= 0.0


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_random_models_pass_checks(seed):
    check_model(random_model(seed))


def test_model_is_immutable(corridor1):
    with pytest.raises(Exception):
        corridor1.horizon = 3
    with pytest.raises(ValueError):
        corridor1.reward[0, 0] = 1.0


def test_observation_distribution_sums_to_one():
    m = corridor(2)
    for a in range(m.num_actions):
        assert abs(observation_distribution(m, m.initial_belief, a).sum() - 1) < 1e-12
