import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agr.compiler import (
    AgrSpec,
    ObservationRelation,
    ObserverDomain,
    TargetDomain,
    compile_spec,
    enumerate_states,
    observation_entry,
    reward_entry,
    transition_entry,
    validate,
)
from agr.domains.corridor import build_corridor, corridor_sizes
from agr.exceptions import SpecInconsistent
from agr.harness import goal_belief
from agr.pomdp import belief_update

from conftest import corridor, seeds


def random_spec(seed, terminate=False):
    rng = np.random.default_rng(seed)
    n_sp = int(rng.integers(1, 4))
    n_plan, n_obs, n_dec = int(rng.integers(1, 3)), int(rng.integers(0, 2)), int(rng.integers(2, 4))
    n_st = int(rng.integers(3, 6))
    term = n_st - 1
    n_g = n_dec
    moves = np.array([[rng.integers(s, term) if s < term else term for _ in range(n_g)] for s in range(n_st)])
    wait = rng.integers(0, term, size=n_dec)
    pcost = rng.integers(-5, 5, size=(n_sp, n_plan)).astype(float)
    ocost = rng.integers(0, 4, size=(n_sp, n_st, max(n_obs, 1))).astype(float)

    def behavior(s, g, decided):
        return term if decided or s == term else int(moves[s, g])

    def succeeds(sp_, s, g, k):
        return s != term and g == k and s == wait[k]

    observer = ObserverDomain(
        states=tuple(f"p{i}" for i in range(n_sp)), initial=0,
        planning_actions=tuple(f"plan{i}" for i in range(n_plan)),
        observe_actions=tuple(f"obs{i}" for i in range(n_obs)),
        decide_actions=tuple(f"dec{i}" for i in range(n_dec)),
        transition=rng.integers(0, n_sp, size=(n_sp, n_plan)), planning_cost=pcost,
        observe_cost=lambda sp_, s, k: ocost[sp_, s, k],
        decide_cost=lambda sp_, s, g, k: -50.0 if succeeds(sp_, s, g, k) else 20.0,
        own_task_actions=("plan0",),
    )
    hidden = int(rng.integers(1, 3))
    observable_of = np.arange(n_st) // hidden
    target = TargetDomain(
        states=tuple(f"t{i}" for i in range(n_st)), observable=tuple(f"v{i}" for i in range(observable_of.max() + 1)),
        observable_of=observable_of, initial=0, terminal=term, goals=tuple(f"g{i}" for i in range(n_g)),
        behavior=behavior, decision_succeeds=succeeds,
    )
    vis = rng.random((n_sp, n_st)) < 0.3
    return AgrSpec(observer, target, ObservationRelation(vis), horizon=4, terminate_on_decision=terminate)


def test_corridor_sizes_n10():
    m = corridor(10)
    assert (m.num_states, m.num_actions, m.num_observations) == (462, 24, 23)


def test_corridor_sizes_n1():
    m = corridor(1)
    assert (m.num_states, m.num_actions, m.num_observations) == (12, 6, 5)


@pytest.mark.parametrize("n", range(1, 11))
def test_closed_form_sizes(n):
    m = corridor(n)
    assert (m.num_states, m.num_actions, m.num_observations) == corridor_sizes(n)
    assert corridor_sizes(n) == ((2 * n + 2) * (2 * n + 1), 2 * n + 4, 2 * n + 3)


def test_initial_belief_uniform_over_goals(corridor10):
    b = corridor10.initial_belief
    assert np.count_nonzero(b) == 21
    assert np.allclose(goal_belief(corridor10, b), 1 / 21)
    starts = {corridor10.state_labels[s].rsplit("|", 1)[0] for s in np.flatnonzero(b)}
    assert starts == {"0|+0"}


@settings(max_examples=60, deadline=None)
@given(seeds, st.booleans())
def test_compiled_tables_match_entry_functions(seed, terminate):
    spec = random_spec(seed, terminate)
    m = compile_spec(spec)
    states = enumerate_states(spec)
    T, O, R = m.dense_transition(), m.dense_observation(), np.asarray(m.reward)
    n_to = len(spec.target.observable)
    for a in range(m.num_actions):
        for i, s in enumerate(states):
            assert R[i, a] == reward_entry(spec, s, a)
            row = [transition_entry(spec, s, a, s2) for s2 in states]
            assert sum(row) == 1.0
            assert np.array_equal(T[a, i], row)
            obs = [observation_entry(spec, divmod(z, n_to + 1), a, s) for z in range(m.num_observations)]
            assert sum(obs) == 1.0
            assert np.array_equal(O[a, i], obs)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_goal_component_absorbing(seed):
    m = compile_spec(random_spec(seed))
    g = m.factors.state_goal
    for t in m.transition:
        coo = t.tocoo()
        assert np.array_equal(g[coo.row], g[coo.col])


def test_rows_exactly_one(corridor10, map_model):
    for m in (corridor10, map_model):
        for t in m.transition:
            assert np.array_equal(np.asarray(t.sum(axis=1)).ravel(), np.ones(m.num_states))
        for o in m.observation:
            assert np.array_equal(np.asarray(o.sum(axis=1)).ravel(), np.ones(m.num_states))


def _corridor_spec():
    return build_corridor(n=10)


def _s(spec, sp_, pos, goal):
    t = spec.target
    lbl = lambda p: p if p == "done" else f"{p:+d}"
    return sp_, t.states.index(lbl(pos)), t.goals.index(lbl(goal))


def test_transition_entry_examples():
    spec = _corridor_spec()
    obs_a = spec.action_labels.index("A_obs")
    s = _s(spec, 0, 1, 3)
    # goal never changes
    assert transition_entry(spec, s, obs_a, _s(spec, 0, 2, 4)) == 0.0
    for a in range(spec.num_actions):
        if spec.action_kind(a)[0] != "decide":
            assert transition_entry(spec, s, a, _s(spec, 0, 2, 3)) == 1.0


def test_observe_action_keeps_observer_state():
    rng_spec = next(random_spec(s) for s in range(100) if len(random_spec(s).observer.states) > 1
                    and random_spec(s).observer.observe_actions)
    a = len(rng_spec.observer.planning_actions)
    st_next = rng_spec.target.behavior(0, 0, False)
    assert transition_entry(rng_spec, (0, 0, 0), a, (1, st_next, 0)) == 0.0
    assert transition_entry(rng_spec, (0, 0, 0), a, (0, st_next, 0)) == 1.0


def test_reward_entry_examples():
    spec = _corridor_spec()
    idx = spec.action_labels.index
    s = _s(spec, 0, 2, 3)
    assert reward_entry(spec, s, idx("A_work")) == 10.0
    assert reward_entry(spec, s, idx("A_idle")) == 0.0
    assert reward_entry(spec, s, idx("A_obs")) == -2.0
    assert reward_entry(spec, _s(spec, 0, 3, 3), idx("A_open(+3)")) == 100.0
    assert reward_entry(spec, _s(spec, 0, 2, 3), idx("A_open(+3)")) == -100.0
    assert reward_entry(spec, _s(spec, 0, 3, 3), idx("A_open(+2)")) == -100.0
    assert reward_entry(spec, _s(spec, 0, "done", 3), idx("A_open(+3)")) == -100.0


def test_observation_entry_examples():
    spec = _corridor_spec()
    idx = spec.action_labels.index
    null = spec.null_observation
    s2 = _s(spec, 0, 2, 3)
    pos = s2[1]
    assert observation_entry(spec, (0, pos), idx("A_obs"), s2) == 1.0
    assert observation_entry(spec, (0, null), idx("A_obs"), s2) == 0.0
    assert observation_entry(spec, (0, null), idx("A_work"), s2) == 1.0
    assert observation_entry(spec, (0, pos), idx("A_work"), s2) == 0.0
    # own state always exact
    multi = next(random_spec(s) for s in range(100) if len(random_spec(s).observer.states) > 1)
    assert observation_entry(multi, (1, multi.null_observation), 0, (0, 0, 0)) == 0.0


def test_null_observation_keeps_goal_marginal_at_step_one(corridor10):
    b = belief_update(corridor10, corridor10.initial_belief, corridor10.action_index("A_idle"),
                      corridor10.observation_index("0|null"))
    assert np.allclose(goal_belief(corridor10, b), goal_belief(corridor10, corridor10.initial_belief))


def test_wrong_decision_continues_by_default():
    spec = build_corridor(n=2)
    m = compile_spec(spec)
    s = m.state_labels.index("0|+0|+2")
    nxt = m.transition[m.action_index("A_open(-1)")][s].indices[0]
    assert m.state_labels[nxt] == "0|+1|+2"
    term = compile_spec(build_corridor(n=2, terminate_on_decision=True))
    nxt = term.transition[term.action_index("A_open(-1)")][s].indices[0]
    assert term.state_labels[nxt] == "0|done|+2"


def test_validate_rejects_overlapping_actions():
    spec = random_spec(3)
    ob = spec.observer
    bad = AgrSpec(
        ObserverDomain(ob.states, ob.initial, ob.planning_actions, ob.observe_actions,
                       ob.decide_actions[:-1] + ob.planning_actions[:1], ob.transition, ob.planning_cost),
        spec.target, spec.relation,
    )
    with pytest.raises(SpecInconsistent, match="disjoint"):
        validate(bad)


def test_validate_rejects_partial_transition():
    spec = random_spec(4)
    ob = spec.observer
    bad_ob = ObserverDomain(ob.states, ob.initial, ob.planning_actions, ob.observe_actions, ob.decide_actions,
                            ob.transition[:, :0], ob.planning_cost)
    with pytest.raises(SpecInconsistent, match="total"):
        validate(AgrSpec(bad_ob, spec.target, spec.relation))


def test_validate_rejects_non_absorbing_terminal():
    spec = random_spec(5)
    tg = spec.target
    bad = TargetDomain(tg.states, tg.observable, tg.observable_of, tg.initial, tg.terminal, tg.goals,
                       behavior=lambda s, g, d: 0, decision_succeeds=tg.decision_succeeds)
    with pytest.raises(SpecInconsistent, match="absorbing"):
        validate(AgrSpec(spec.observer, bad, spec.relation))


def test_validate_rejects_cycling_target():
    spec = random_spec(6)
    tg = spec.target
    n = len(tg.states) - 1
    bad = TargetDomain(tg.states, tg.observable, tg.observable_of, tg.initial, tg.terminal, tg.goals,
                       behavior=lambda s, g, d: tg.terminal if s == tg.terminal else (s + 1) % n,
                       decision_succeeds=tg.decision_succeeds)
    with pytest.raises(SpecInconsistent, match="never settles"):
        validate(AgrSpec(spec.observer, bad, spec.relation))


def test_goal_prior_override():
    prior = np.zeros(21)
    prior[[0, 20]] = 0.5
    m = compile_spec(build_corridor(n=10, goal_prior=prior))
    assert np.allclose(goal_belief(m, m.initial_belief), prior)
