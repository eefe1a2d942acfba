"""Enumerated discrete POMDPs, belief arithmetic and seeded simulation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import EpisodeFinished, InvalidModel, ZeroProbabilityObservation

PROB_TOL = 1e-9


@dataclass(frozen=True)
class Factorization:
    """Index bookkeeping for models compiled from an observer/target/goal product.

    States are triples (observer state, target state, goal); observations are
    pairs (observer state, target observable component or null).
    """

    state_observer: np.ndarray
    state_target: np.ndarray
    state_goal: np.ndarray
    target_observable: np.ndarray
    n_observer_states: int
    n_target_observable: int
    goal_labels: tuple
    planning_actions: tuple
    observe_actions: tuple
    decide_actions: tuple
    own_task_actions: tuple = ()

    @property
    def n_goals(self):
        return len(self.goal_labels)

    @property
    def null_target_observation(self):
        return self.n_target_observable

    def observation_index(self, observer_state, target_obs):
        return observer_state * (self.n_target_observable + 1) + target_obs

    def split_observation(self, o):
        return divmod(int(o), self.n_target_observable + 1)

    def revealing_observation(self, s):
        """Observation that exposes the target's observable component at ``s``."""
        t = self.state_target[s]
        return self.observation_index(self.state_observer[s], self.target_observable[t])


def _as_csr_stack(tables, shape):
    out = []
    for m in tables:
        m = sp.csr_matrix(m, dtype=float)
        if m.shape != shape:
            raise InvalidModel(f"expected slice of shape {shape}, got {m.shape}")
        m.eliminate_zeros()
        m.sort_indices()
        out.append(m)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class TabularPOMDP:
    """Fully enumerated finite-horizon POMDP.

    ``transition[a]`` is a sparse (S, S) matrix with rows ``s`` and columns
    ``s'``; ``observation[a]`` is a sparse (S, Z) matrix with rows ``s'`` and
    columns ``o``; ``reward`` is a dense (S, A) array.  Dense 3-D arrays of
    shape (A, S, S) / (A, S, Z) are accepted and converted.
    """

    transition: Sequence
    reward: np.ndarray
    observation: Sequence
    initial_belief: np.ndarray
    horizon: int = 30
    discount: float = 0.95
    state_labels: Optional[tuple] = None
    action_labels: Optional[tuple] = None
    observation_labels: Optional[tuple] = None
    factors: Optional[Factorization] = field(default=None, repr=False)

    def __post_init__(self):
        reward = np.array(self.reward, dtype=float)
        if reward.ndim != 2:
            raise InvalidModel("reward must be a (states, actions) table")
        n_s, n_a = reward.shape
        trans = self.transition
        obs = self.observation
        if len(trans) != n_a or len(obs) != n_a:
            raise InvalidModel("transition/observation need one slice per action")
        n_z = sp.csr_matrix(obs[0]).shape[1]
        object.__setattr__(self, "transition", _as_csr_stack(trans, (n_s, n_s)))
        object.__setattr__(self, "observation", _as_csr_stack(obs, (n_s, n_z)))
        reward.setflags(write=False)
        object.__setattr__(self, "reward", reward)
        b0 = np.array(self.initial_belief, dtype=float)
        b0.setflags(write=False)
        object.__setattr__(self, "initial_belief", b0)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "discount", float(self.discount))
        for name, n in (("state_labels", n_s), ("action_labels", n_a), ("observation_labels", n_z)):
            labels = getattr(self, name)
            if labels is None:
                labels = tuple(str(i) for i in range(n))
            labels = tuple(labels)
            if len(labels) != n:
                raise InvalidModel(f"{name} has {len(labels)} entries, expected {n}")
            object.__setattr__(self, name, labels)
        check_model(self)

    @property
    def num_states(self):
        return self.reward.shape[0]

    @property
    def num_actions(self):
        return self.reward.shape[1]

    @property
    def num_observations(self):
        return self.observation[0].shape[1]

    @cached_property
    def transition_T(self):
        """Per-action transposed transitions, (S', S), for belief propagation."""
        return tuple(t.T.tocsr() for t in self.transition)

    @cached_property
    def observation_csc(self):
        return tuple(o.tocsc() for o in self.observation)

    def dense_transition(self):
        return np.stack([t.toarray() for t in self.transition])

    def dense_observation(self):
        return np.stack([o.toarray() for o in self.observation])

    def transition_prob(self, s, a, s_next):
        return float(self.transition[a][s, s_next])

    def observation_prob(self, o, a, s_next):
        return float(self.observation[a][s_next, o])

    def with_(self, **changes):
        """Copy with some fields replaced (tables revalidated)."""
        return replace(self, **changes)

    def action_index(self, label):
        return self.action_labels.index(label)

    def observation_index(self, label):
        return self.observation_labels.index(label)


def _check_stochastic_rows(m, what, a):
    sums = np.asarray(m.sum(axis=1)).ravel()
    bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
    if bad.size:
        raise InvalidModel(f"{what} rows for action {a} do not sum to 1 (first bad row {bad[0]}: {sums[bad[0]]!r})")
    if m.nnz and (m.data.min() < 0 or m.data.max() > 1 + PROB_TOL):
        raise InvalidModel(f"{what} for action {a} has entries outside [0, 1]")


def check_model(model):
    """Validate stochasticity of every table; raises InvalidModel."""
    for a, t in enumerate(model.transition):
        _check_stochastic_rows(t, "transition", a)
    for a, o in enumerate(model.observation):
        _check_stochastic_rows(o, "observation", a)
    check_belief(model.initial_belief, model.num_states)
    if model.horizon < 0:
        raise InvalidModel("horizon must be non-negative")
    if not 0.0 <= model.discount <= 1.0:
        raise InvalidModel("discount must lie in [0, 1]")
    if not np.all(np.isfinite(model.reward)):
        raise InvalidModel("reward table has non-finite entries")
    return model


def check_belief(b, n_states=None):
    b = np.asarray(b, dtype=float)
    if b.ndim != 1:
        raise InvalidModel("belief must be a 1-D probability vector")
    if n_states is not None and b.shape[0] != n_states:
        raise InvalidModel(f"belief has {b.shape[0]} entries, model has {n_states} states")
    if b.min(initial=0.0) < -PROB_TOL or abs(b.sum() - 1.0) > PROB_TOL:
        raise InvalidModel("belief must be non-negative and sum to 1")
    return b


def predict_belief(model, b, a):
    """Next-state distribution before conditioning on the observation."""
    return model.transition_T[a] @ b


def observation_likelihood(model, a, o):
    return model.observation_csc[a][:, o].toarray().ravel()


def belief_update(model, b, a, o):
    """Bayes filter step: b'(s') is proportional to O(o|a,s') sum_s T(s'|s,a) b(s)."""
    unnorm = predict_belief(model, b, a) * observation_likelihood(model, a, o)
    z = unnorm.sum()
    if z <= 0.0:
        raise ZeroProbabilityObservation(
            f"observation {model.observation_labels[o]!r} impossible after action {model.action_labels[a]!r}"
        )
    return unnorm / z


def observation_distribution(model, b, a):
    """Probability of each observation after taking ``a`` in belief ``b``."""
    return model.observation[a].T @ predict_belief(model, b, a)


@dataclass(frozen=True)
class SimState:
    true_state: int
    step: int = 0
    rng_seed: Optional[int] = None


def sample_initial_state(model, rng):
    b0 = model.initial_belief
    return int(rng.choice(b0.shape[0], p=b0))


def _sample_row(m, row, rng):
    lo, hi = m.indptr[row], m.indptr[row + 1]
    idx = m.indices[lo:hi]
    if idx.size == 1:
        return int(idx[0])
    p = m.data[lo:hi]
    return int(idx[rng.choice(idx.size, p=p / p.sum())])


def sample_step(model, sim, a, rng):
    """Advance the true environment one step; returns (reward, observation, sim')."""
    if sim.step >= model.horizon:
        raise EpisodeFinished(f"episode already reached horizon {model.horizon}")
    s = sim.true_state
    r = float(model.reward[s, a])
    s_next = _sample_row(model.transition[a], s, rng)
    o = _sample_row(model.observation[a], s_next, rng)
    return r, o, SimState(s_next, sim.step + 1, sim.rng_seed)


def episode_rng(seed, episode):
    """Private random stream for one episode, independent of run order."""
    return np.random.default_rng([int(seed), int(episode)])


class ConstantPolicy:
    """Always takes the same action."""

    def __init__(self, action):
        self.action_index = int(action)

    def action(self, belief, step=0, history=()):
        return self.action_index


def simulate_episode(model, policy, rng, track_belief=True):
    """Run one episode; returns (initial state, list of (a, o, r, belief))."""
    s0 = sample_initial_state(model, rng)
    sim = SimState(s0)
    b = model.initial_belief
    history = []
    steps = []
    while sim.step < model.horizon:
        a = policy.action(b, sim.step, tuple(history))
        r, o, sim = sample_step(model, sim, a, rng)
        if track_belief:
            b = belief_update(model, b, a, o)
        history.append((a, o))
        steps.append((a, o, r, b))
    return s0, steps


def discounted_return(rewards, discount):
    g = 0.0
    for r in reversed(rewards):
        g = r + discount * g
    return g


def evaluate_policy(model, policy, n_episodes, seed=0):
    """Discounted return of each of ``n_episodes`` seeded episodes."""
    returns = []
    for i in range(n_episodes):
        _, steps = simulate_episode(model, policy, episode_rng(seed, i))
        returns.append(discounted_return([r for _, _, r, _ in steps], model.discount))
    return returns
