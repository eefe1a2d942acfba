"""Factored active goal recognition problems and their compilation to POMDPs.

The joint state is (observer state, target state, goal).  Actions are the
observer's planning actions, followed by observation actions, followed by
decision actions; global action indices follow that order.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import SpecInconsistent
from .pomdp import Factorization, TabularPOMDP

PLAN, OBSERVE, DECIDE = "plan", "observe", "decide"


@dataclass(frozen=True)
class ObserverDomain:
    """The observer's own planning problem plus its observation/decision actions.

    ``transition[s, k]`` is the successor of state ``s`` under the k-th
    planning action; ``planning_cost[s, k]`` is its cost.  ``observe_cost``
    is called as ``(s_P, s_T, k)`` and ``decide_cost`` as ``(s_P, s_T, g, k)``
    with ``k`` the index within the respective action class.  Rewards are the
    negated costs.
    """

    states: tuple
    initial: int
    planning_actions: tuple
    observe_actions: tuple
    decide_actions: tuple
    transition: np.ndarray
    planning_cost: np.ndarray
    observe_cost: Callable = lambda sp_, st, k: 0.0
    decide_cost: Callable = lambda sp_, st, g, k: 0.0
    own_task_actions: tuple = ()


@dataclass(frozen=True)
class TargetDomain:
    """Deterministic goal-directed target.

    ``behavior(s_T, g, decided)`` returns the next target state; ``decided``
    is True when the observer has just taken a successful decision action.
    ``decision_succeeds(s_P, s_T, g, k)`` says whether decision action ``k``
    is the correct one in that joint state.
    """

    states: tuple
    observable: tuple
    observable_of: np.ndarray
    initial: int
    terminal: int
    goals: tuple
    behavior: Callable
    decision_succeeds: Callable


@dataclass(frozen=True)
class ObservationRelation:
    """Joint (observer state, target state) pairs that reveal the target."""

    visible: np.ndarray

    @classmethod
    def empty(cls, n_observer, n_target):
        return cls(np.zeros((n_observer, n_target), dtype=bool))

    def __contains__(self, pair):
        return bool(self.visible[pair[0], pair[1]])


@dataclass(frozen=True)
class AgrSpec:
    observer: ObserverDomain
    target: TargetDomain
    relation: ObservationRelation
    horizon: int = 30
    discount: float = 0.95
    goal_prior: Optional[np.ndarray] = None
    terminate_on_decision: bool = False
    name: str = "agr"
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def action_labels(self):
        o = self.observer
        return tuple(o.planning_actions) + tuple(o.observe_actions) + tuple(o.decide_actions)

    @property
    def num_actions(self):
        return len(self.action_labels)

    def action_kind(self, a):
        """Split a global action index into (class, index within class)."""
        o = self.observer
        n_p, n_o = len(o.planning_actions), len(o.observe_actions)
        if a < n_p:
            return PLAN, a
        if a < n_p + n_o:
            return OBSERVE, a - n_p
        if a < self.num_actions:
            return DECIDE, a - n_p - n_o
        raise IndexError(f"action index {a} out of range")

    def prior(self):
        n = len(self.target.goals)
        if self.goal_prior is None:
            return np.full(n, 1.0 / n)
        return np.asarray(self.goal_prior, dtype=float)

    @property
    def null_observation(self):
        return len(self.target.observable)


def validate(spec):
    """Check every structural invariant; raises SpecInconsistent naming the first violation."""
    ob, tg = spec.observer, spec.target
    classes = [set(ob.planning_actions), set(ob.observe_actions), set(ob.decide_actions)]
    if sum(len(c) for c in classes) != len(set().union(*classes)):
        raise SpecInconsistent("action sets must be pairwise disjoint")
    n_sp, n_pa = len(ob.states), len(ob.planning_actions)
    if not 0 <= ob.initial < n_sp:
        raise SpecInconsistent("observer initial state out of range")
    trans = np.asarray(ob.transition)
    if trans.shape != (n_sp, n_pa):
        raise SpecInconsistent(f"observer transition must be total on states x planning actions, shape {(n_sp, n_pa)}")
    if n_pa and (trans.min() < 0 or trans.max() >= n_sp):
        raise SpecInconsistent("observer transition leads outside the state set")
    if np.asarray(ob.planning_cost).shape != (n_sp, n_pa):
        raise SpecInconsistent("planning cost table must be indexed (observer state, planning action)")
    if not set(ob.own_task_actions) <= set(ob.planning_actions):
        raise SpecInconsistent("own-task actions must be planning actions")

    n_st, n_g = len(tg.states), len(tg.goals)
    if n_g == 0:
        raise SpecInconsistent("goal set is empty")
    if not (0 <= tg.initial < n_st and 0 <= tg.terminal < n_st):
        raise SpecInconsistent("target initial/terminal state out of range")
    obs_of = np.asarray(tg.observable_of)
    if obs_of.shape != (n_st,) or obs_of.min() < 0 or obs_of.max() >= len(tg.observable):
        raise SpecInconsistent("observable component map must cover every target state")
    for st in range(n_st):
        for g in range(n_g):
            for flag in (False, True):
                nxt = tg.behavior(st, g, flag)
                if not (isinstance(nxt, (int, np.integer)) and 0 <= nxt < n_st):
                    raise SpecInconsistent(f"target behavior is not total: ({st}, {g}, {flag}) -> {nxt!r}")
    for g in range(n_g):
        if tg.behavior(tg.terminal, g, False) != tg.terminal or tg.behavior(tg.terminal, g, True) != tg.terminal:
            raise SpecInconsistent("terminal target state must be absorbing")
        cur = tg.initial
        for _ in range(n_st + 1):
            nxt = tg.behavior(cur, g, False)
            if nxt == cur or nxt == tg.terminal:
                break
            cur = nxt
        else:
            raise SpecInconsistent(f"target never settles for goal {tg.goals[g]!r}")

    vis = np.asarray(spec.relation.visible)
    if vis.shape != (n_sp, n_st):
        raise SpecInconsistent(f"visibility relation must have shape {(n_sp, n_st)}")
    prior = spec.prior()
    if prior.shape != (n_g,) or prior.min() < 0 or abs(prior.sum() - 1.0) > 1e-9:
        raise SpecInconsistent("goal prior must be a distribution over goals")
    if spec.horizon < 0 or not 0.0 <= spec.discount <= 1.0:
        raise SpecInconsistent("horizon must be >= 0 and discount in [0, 1]")
    return spec


def _decided(spec, a, s):
    kind, k = spec.action_kind(a)
    if kind != DECIDE:
        return False
    if spec.terminate_on_decision:
        return True
    sp_, st, g = s
    return bool(spec.target.decision_succeeds(sp_, st, g, k))


def next_state(spec, s, a):
    """The unique successor of joint state ``s`` under action ``a``."""
    sp_, st, g = s
    kind, k = spec.action_kind(a)
    sp_next = int(spec.observer.transition[sp_, k]) if kind == PLAN else sp_
    st_next = int(spec.target.behavior(st, g, _decided(spec, a, s)))
    return sp_next, st_next, g


def transition_entry(spec, s, a, s_next):
    """Probability of (s_P', s_T', g') given joint state ``s`` and action ``a``."""
    sp_, st, g = s
    sp2, st2, g2 = s_next
    if g != g2:
        return 0.0
    kind, k = spec.action_kind(a)
    if st2 != spec.target.behavior(st, g, _decided(spec, a, s)):
        return 0.0
    if kind == PLAN:
        return float(spec.observer.transition[sp_, k] == sp2)
    return float(sp_ == sp2)


def reward_entry(spec, s, a):
    sp_, st, g = s
    kind, k = spec.action_kind(a)
    ob = spec.observer
    if kind == PLAN:
        return -float(ob.planning_cost[sp_, k])
    if kind == OBSERVE:
        return -float(ob.observe_cost(sp_, st, k))
    return -float(ob.decide_cost(sp_, st, g, k))


def revealed(spec, a, s_next):
    kind, _ = spec.action_kind(a)
    return kind == OBSERVE or bool(spec.relation.visible[s_next[0], s_next[1]])


def observation_of(spec, a, s_next):
    """(observer state, target component) observed on arrival in ``s_next``."""
    sp2, st2, _ = s_next
    if revealed(spec, a, s_next):
        return sp2, int(spec.target.observable_of[st2])
    return sp2, spec.null_observation


def observation_entry(spec, o, a, s_next):
    """Probability of observation ``o = (o_P, o_T)``; ``o_T`` equal to
    ``spec.null_observation`` is the null symbol."""
    return float(tuple(o) == observation_of(spec, a, s_next))


def enumerate_states(spec, reachable_only=False):
    n_sp, n_st, n_g = len(spec.observer.states), len(spec.target.states), len(spec.target.goals)
    if not reachable_only:
        return [(a, b, c) for a in range(n_sp) for b in range(n_st) for c in range(n_g)]
    prior = spec.prior()
    start = [(spec.observer.initial, spec.target.initial, g) for g in range(n_g) if prior[g] > 0]
    seen = set(start)
    queue = deque(start)
    while queue:
        s = queue.popleft()
        for a in range(spec.num_actions):
            nxt = next_state(spec, s, a)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return sorted(seen)


def compile_spec(spec, reachable_only=False):
    """Build the tabular AGR POMDP.

    With ``reachable_only`` the state space is restricted to joint states
    reachable from the initial belief support; otherwise it is the full
    product of observer states, target states and goals.
    """
    validate(spec)
    ob, tg = spec.observer, spec.target
    states = enumerate_states(spec, reachable_only)
    index = {s: i for i, s in enumerate(states)}
    n_s, n_a = len(states), spec.num_actions
    n_to = len(tg.observable)
    n_z = len(ob.states) * (n_to + 1)
    state_arr = np.array(states, dtype=np.int64).reshape(-1, 3)

    reward = np.empty((n_s, n_a))
    transitions, observations = [], []
    for a in range(n_a):
        cols = np.empty(n_s, dtype=np.int64)
        obs_cols = np.empty(n_s, dtype=np.int64)
        for i, s in enumerate(states):
            reward[i, a] = reward_entry(spec, s, a)
            cols[i] = index[next_state(spec, s, a)]
            o_p, o_t = observation_of(spec, a, s)
            obs_cols[i] = o_p * (n_to + 1) + o_t
        ones = np.ones(n_s)
        rows = np.arange(n_s)
        transitions.append(sp.csr_matrix((ones, (rows, cols)), shape=(n_s, n_s)))
        observations.append(sp.csr_matrix((ones, (rows, obs_cols)), shape=(n_s, n_z)))

    prior = spec.prior()
    b0 = np.zeros(n_s)
    for g in range(len(tg.goals)):
        s = (ob.initial, tg.initial, g)
        if prior[g] > 0:
            b0[index[s]] = prior[g]

    labels = spec.action_labels
    factors = Factorization(
        state_observer=state_arr[:, 0].copy(),
        state_target=state_arr[:, 1].copy(),
        state_goal=state_arr[:, 2].copy(),
        target_observable=np.asarray(tg.observable_of, dtype=np.int64),
        n_observer_states=len(ob.states),
        n_target_observable=n_to,
        goal_labels=tuple(tg.goals),
        planning_actions=tuple(range(len(ob.planning_actions))),
        observe_actions=tuple(range(len(ob.planning_actions), len(ob.planning_actions) + len(ob.observe_actions))),
        decide_actions=tuple(range(len(ob.planning_actions) + len(ob.observe_actions), n_a)),
        own_task_actions=tuple(labels.index(x) for x in ob.own_task_actions),
    )
    target_obs_labels = tuple(str(x) for x in tg.observable) + ("null",)
    obs_labels = tuple(f"{ob.states[p]}|{target_obs_labels[t]}" for p in range(len(ob.states)) for t in range(n_to + 1))
    state_labels = tuple(f"{ob.states[p]}|{tg.states[t]}|{tg.goals[g]}" for p, t, g in states)
    return TabularPOMDP(
        transition=transitions,
        reward=reward,
        observation=observations,
        initial_belief=b0,
        horizon=spec.horizon,
        discount=spec.discount,
        state_labels=state_labels,
        action_labels=tuple(str(x) for x in labels),
        observation_labels=obs_labels,
        factors=factors,
    )
