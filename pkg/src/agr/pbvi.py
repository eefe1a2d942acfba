"""Finite-horizon point-based value iteration with time-indexed alpha vectors.

Beliefs are grown per time step by enumerating every (action, observation)
successor and keeping the ones farthest in L1 from what is already held;
later epochs add the beliefs visited by seeded rollouts of the current
policy.  Every vector kept is the value of an actual conditional plan, so
``max_alpha <alpha, b>`` never exceeds the optimal value at ``b``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .exact import belief_key
from .exceptions import DimensionMismatch, InvalidParams, NonConvergence
from .pomdp import belief_update, check_model, episode_rng, sample_initial_state, sample_step, SimState

FORMAT_NAME = "agr-alpha-policy"
FORMAT_VERSION = 1
TIE_RTOL = 1e-12


@dataclass
class SolverParams:
    belief_set_target_size: int = 2500
    backup_epochs: int = 10
    convergence_residual: float = 1e-6
    expansion_seed: int = 0
    rollouts_per_epoch: int = 100
    exploration: float = 0.15
    breadth_fraction: float = 0.5

    def validate(self):
        for name in ("belief_set_target_size", "backup_epochs", "rollouts_per_epoch"):
            if int(getattr(self, name)) < 1:
                raise InvalidParams(f"{name} must be a positive integer")
        if self.convergence_residual <= 0:
            raise InvalidParams("convergence_residual must be positive")
        if int(self.expansion_seed) < 0:
            raise InvalidParams("expansion_seed must be non-negative")
        if not 0.0 <= self.exploration <= 1.0 or not 0.0 < self.breadth_fraction <= 1.0:
            raise InvalidParams("exploration must lie in [0, 1] and breadth_fraction in (0, 1]")
        return self


class AlphaVectorPolicy:
    """One alpha-vector set per time step; ``vectors[t]`` is (K_t, S)."""

    def __init__(self, vectors, actions, metadata=None):
        if not vectors or any(len(v) == 0 for v in vectors):
            raise InvalidParams("every time step needs at least one alpha vector")
        self.vectors = [np.asarray(v, dtype=float) for v in vectors]
        self.actions = [np.asarray(a, dtype=np.int64) for a in actions]
        self.metadata = dict(metadata or {})

    @property
    def horizon(self):
        return len(self.vectors)

    @property
    def num_states(self):
        return self.vectors[0].shape[1]

    def _step(self, step):
        return min(int(step), self.horizon - 1)

    def value(self, belief, step=0):
        return float((self.vectors[self._step(step)] @ _check_dim(self, belief)).max())

    def action(self, belief, step=0, history=()):
        return policy_action(self, belief, step)

    def __len__(self):
        return sum(len(v) for v in self.vectors)

    def save(self, path):
        save_policy(self, path)

    @classmethod
    def load(cls, path):
        return load_policy(path)


def _check_dim(policy, belief):
    b = np.asarray(belief, dtype=float)
    if b.ndim != 1 or b.shape[0] != policy.num_states:
        raise DimensionMismatch(f"belief of shape {b.shape} for a policy over {policy.num_states} states")
    return b


def policy_action(policy, belief, step=0):
    """Action tag of the best vector at ``belief``; ties go to the lowest action index."""
    b = _check_dim(policy, belief)
    t = policy._step(step)
    vals = policy.vectors[t] @ b
    best = vals.max()
    tied = vals >= best - TIE_RTOL * max(1.0, abs(best))
    return int(policy.actions[t][tied].min())


class _Tables:
    """Per-action arrays shared by expansion and backups."""

    def __init__(self, model):
        self.model = model
        self.S, self.A, self.Z = model.num_states, model.num_actions, model.num_observations
        self.R = np.asarray(model.reward)
        self.gamma = model.discount
        self.T = model.transition
        self.TT = model.transition_T
        self.O = model.observation
        self.obs_idx, self.obs_val = [], []
        for o in self.O:
            counts = np.diff(o.indptr)
            m = int(counts.max())
            idx = np.zeros((self.S, m), dtype=np.int64)
            val = np.zeros((self.S, m))
            for j in range(m):
                has = counts > j
                idx[has, j] = o.indices[o.indptr[:-1][has] + j]
                val[has, j] = o.data[o.indptr[:-1][has] + j]
            self.obs_idx.append(idx)
            self.obs_val.append(val)

    def successors(self, B, a):
        """Unnormalized successor beliefs of each row of ``B`` under action ``a``.

        Returns (parent row, observation, sparse matrix of successor rows); the
        row sums are the observation probabilities.
        """
        P = (self.TT[a] @ B.T).T
        n_idx, s_idx = np.nonzero(P)
        p = P[n_idx, s_idx]
        O = self.O[a]
        starts = O.indptr[s_idx]
        rep = O.indptr[s_idx + 1] - starts
        total = int(rep.sum())
        offsets = np.arange(total) - np.repeat(np.cumsum(rep) - rep, rep)
        flat = np.repeat(starts, rep) + offsets
        o_idx = O.indices[flat]
        vals = np.repeat(p, rep) * O.data[flat]
        keep = vals > 0
        key = np.repeat(n_idx, rep)[keep] * self.Z + o_idx[keep]
        ukeys, inv = np.unique(key, return_inverse=True)
        Q = sp.csr_matrix((vals[keep], (inv, np.repeat(s_idx, rep)[keep])), shape=(len(ukeys), self.S))
        return ukeys // self.Z, ukeys % self.Z, Q


class BeliefSet:
    """Beliefs held per time step, each with the (action, observation) trace reaching it."""

    def __init__(self, horizon, n_states):
        self.horizon = horizon
        self.n_states = n_states
        self.beliefs = [[] for _ in range(horizon)]
        self.traces = [[] for _ in range(horizon)]
        self._keys = [set() for _ in range(horizon)]

    def add(self, step, belief, trace):
        key = belief_key(belief)
        if key in self._keys[step]:
            return False
        self._keys[step].add(key)
        self.beliefs[step].append(np.asarray(belief, dtype=float))
        self.traces[step].append(tuple(trace))
        return True

    def contains(self, step, belief):
        return belief_key(belief) in self._keys[step]

    def matrix(self, step):
        if not self.beliefs[step]:
            return np.zeros((0, self.n_states))
        return np.vstack(self.beliefs[step])

    def __len__(self):
        return sum(len(b) for b in self.beliefs)

    def __iter__(self):
        for t in range(self.horizon):
            for b, tr in zip(self.beliefs[t], self.traces[t]):
                yield t, b, tr


def _farthest_first(cands, existing, budget, rng):
    """Indices of up to ``budget`` candidates, greedily farthest (L1) from ``existing``."""
    if budget <= 0 or len(cands) == 0:
        return []
    order = rng.permutation(len(cands))
    cands = cands[order]
    dist = np.full(len(cands), np.inf)
    for e in existing:
        np.minimum(dist, np.abs(cands - e).sum(axis=1), out=dist)
    picked = []
    for _ in range(min(budget, len(cands))):
        i = int(np.argmax(dist))
        if dist[i] <= 0:
            break
        picked.append(int(order[i]))
        np.minimum(dist, np.abs(cands - cands[i]).sum(axis=1), out=dist)
    return picked


def expand_beliefs(model, params=None, budget=None, tables=None):
    """Reachable beliefs per time step, starting from the initial belief.

    At most ``budget`` beliefs are returned (default: the target size).
    Deterministic for a fixed ``params.expansion_seed``.
    """
    params = (params or SolverParams()).validate()
    tables = tables or _Tables(model)
    budget = params.belief_set_target_size if budget is None else int(budget)
    horizon = max(model.horizon, 1)
    bset = BeliefSet(horizon, model.num_states)
    bset.add(0, model.initial_belief, ())
    per_step = math.ceil((budget - 1) / max(model.horizon - 1, 1)) if budget > 1 else 0
    rng = np.random.default_rng([int(params.expansion_seed), 0])
    for t in range(model.horizon - 1):
        room = min(per_step, budget - len(bset))
        if room <= 0:
            break
        B = bset.matrix(t)
        rows, traces, keys = [], [], set()
        for a in range(tables.A):
            parent, obs, Q = tables.successors(B, a)
            if Q.shape[0] == 0:
                continue
            norm = np.asarray(Q.sum(axis=1)).ravel()
            dense = Q.multiply(1.0 / norm[:, None]).toarray()
            for i in range(dense.shape[0]):
                k = belief_key(dense[i])
                if k in keys or k in bset._keys[t + 1]:
                    continue
                keys.add(k)
                rows.append(dense[i])
                traces.append(bset.traces[t][parent[i]] + ((a, int(obs[i])),))
        if not rows:
            continue
        cands = np.vstack(rows)
        for i in _farthest_first(cands, bset.beliefs[t + 1], room, rng):
            bset.add(t + 1, cands[i], traces[i])
    return bset


def _blind_vectors(tables, horizon):
    out = [None] * horizon
    nxt = np.zeros((tables.A, tables.S))
    for t in range(horizon - 1, -1, -1):
        cur = np.empty_like(nxt)
        for a in range(tables.A):
            cur[a] = tables.R[:, a] + tables.gamma * (tables.T[a] @ nxt[a])
        out[t] = cur
        nxt = cur
    return out


def _backup(tables, B, nxt_vectors):
    """Point-based Bellman backup of beliefs ``B`` against the next step's vectors.

    Returns (vectors, action tags), one per belief.
    """
    N = B.shape[0]
    G = nxt_vectors
    qvals = np.empty((N, tables.A))
    realized = []
    for a in range(tables.A):
        parent, obs, Q = tables.successors(B, a)
        scores = np.asarray(Q @ G.T)
        kbest = scores.argmax(axis=1)
        best = scores[np.arange(len(kbest)), kbest]
        qvals[:, a] = B @ tables.R[:, a] + tables.gamma * np.bincount(parent, weights=best, minlength=N)
        realized.append((parent, obs, kbest))
    chosen = qvals.argmax(axis=1)
    vectors = np.empty((N, tables.S))
    for a in np.unique(chosen):
        rows = np.flatnonzero(chosen == a)
        default = np.asarray(tables.O[a].T @ G.T).argmax(axis=1)
        kstar = np.tile(default, (len(rows), 1))
        parent, obs, kbest = realized[a]
        local = np.full(N, -1)
        local[rows] = np.arange(len(rows))
        sel = local[parent] >= 0
        kstar[local[parent[sel]], obs[sel]] = kbest[sel]
        idx, val = tables.obs_idx[a], tables.obs_val[a]
        cols = np.arange(tables.S)
        V = np.zeros((len(rows), tables.S))
        for j in range(idx.shape[1]):
            V += val[:, j] * G[kstar[:, idx[:, j]], cols]
        vectors[rows] = tables.R[:, a] + tables.gamma * np.asarray(tables.T[a] @ V.T).T
    return vectors, chosen


def _prune(vectors, actions, witnesses):
    """Keep vectors that are best at some witness belief, then drop pointwise-dominated ones."""
    order = np.argsort(actions, kind="stable")
    vectors, first = np.unique(vectors[order], axis=0, return_index=True)
    actions = actions[order][first]  # duplicates keep their lowest action tag
    if witnesses is not None and len(witnesses):
        vals = witnesses @ vectors.T
        keep = np.zeros(len(vectors), dtype=bool)
        for row in vals:
            best = row.max()
            tied = np.flatnonzero(row >= best - TIE_RTOL * max(1.0, abs(best)))
            keep[tied[np.argmin(actions[tied])]] = True
        vectors, actions = vectors[keep], actions[keep]
    dominated = np.zeros(len(vectors), dtype=bool)
    for i in range(len(vectors)):
        ge = np.all(vectors >= vectors[i], axis=1)
        ge[i] = False
        dominated[i] = ge.any()
    return vectors[~dominated], actions[~dominated]


def _sweep(tables, bset, horizon, blind, previous):
    """One backward pass over all time steps; returns per-step (vectors, actions)."""
    sets = [None] * horizon
    nxt = np.zeros((1, tables.S))
    for t in range(horizon - 1, -1, -1):
        B = bset.matrix(t)
        parts_v = [blind[t]]
        parts_a = [np.arange(tables.A)]
        if len(B):
            v, a = _backup(tables, B, nxt)
            parts_v.append(v)
            parts_a.append(a)
        if previous is not None:
            parts_v.append(previous[t][0])
            parts_a.append(previous[t][1])
        witnesses = np.vstack([B, tables.model.initial_belief[None]]) if t == 0 else B
        vecs, acts = _prune(np.vstack(parts_v), np.concatenate(parts_a), witnesses if len(witnesses) else None)
        # blind vectors stay available for beliefs off the point set
        vecs, acts = _prune(np.vstack([vecs, blind[t]]), np.concatenate([acts, np.arange(tables.A)]), None)
        sets[t] = (vecs, acts)
        nxt = vecs
    return sets


def _rollout_beliefs(model, policy, bset, n_rollouts, seed, epoch, exploration, budget):
    added = 0
    for r in range(n_rollouts):
        if len(bset) >= budget:
            break
        rng = np.random.default_rng([int(seed), 1, int(epoch), r])
        sim = SimState(sample_initial_state(model, rng))
        b = model.initial_belief
        trace = []
        while sim.step < model.horizon:
            if len(bset) >= budget:
                break
            if bset.add(sim.step, b, trace):
                added += 1
            if rng.random() < exploration:
                a = int(rng.integers(model.num_actions))
            else:
                a = policy_action(policy, b, sim.step)
            _, o, sim = sample_step(model, sim, a, rng)
            b = belief_update(model, b, a, o)
            trace.append((a, o))
    return added


def pbvi_solve(model, params=None):
    """Alpha-vector policy for ``model`` over its full horizon.

    The value estimate at the initial belief never decreases from one epoch
    to the next; a NonConvergence warning reports the final residual when
    the epoch budget runs out before it falls below
    ``params.convergence_residual``.
    """
    params = (params or SolverParams()).validate()
    check_model(model)
    horizon = model.horizon
    if horizon == 0:
        return AlphaVectorPolicy([np.zeros((1, model.num_states))], [np.zeros(1, dtype=np.int64)],
                                 {"epochs": 0, "belief_set_size": 0, "residual": 0.0, "value_history": [0.0]})
    tables = _Tables(model)
    budget = params.belief_set_target_size
    bset = expand_beliefs(model, params, budget=max(1, int(budget * params.breadth_fraction)), tables=tables)
    blind = _blind_vectors(tables, horizon)
    sets, history, residual = None, [], np.inf
    b0 = model.initial_belief
    policy = None
    for epoch in range(params.backup_epochs):
        sets = _sweep(tables, bset, horizon, blind, sets)
        policy = AlphaVectorPolicy([v for v, _ in sets], [a for _, a in sets])
        value = policy.value(b0, 0)
        if history:
            residual = abs(value - history[-1])
        history.append(value)
        if epoch + 1 < params.backup_epochs:
            added = _rollout_beliefs(model, policy, bset, params.rollouts_per_epoch, params.expansion_seed,
                                     epoch, params.exploration, budget)
            if added == 0 and len(history) > 1 and residual < params.convergence_residual:
                break
    if len(history) > 1 and residual >= params.convergence_residual:
        warnings.warn(NonConvergence(f"value at b0 still moved by {residual:.3g} in the last epoch"))
    policy.metadata = {
        "epochs": len(history),
        "belief_set_size": len(bset),
        "residual": float(residual) if np.isfinite(residual) else None,
        "value_history": [float(v) for v in history],
        "params": asdict(params),
    }
    policy.belief_set = bset
    return policy


class PointBasedValueIteration(BaseEstimator):
    """scikit-learn style wrapper: ``fit(model)`` then ``predict(beliefs)``."""

    def __init__(self, belief_set_target_size=2500, backup_epochs=10, convergence_residual=1e-6,
                 expansion_seed=0, rollouts_per_epoch=100, exploration=0.15, breadth_fraction=0.5):
        self.belief_set_target_size = belief_set_target_size
        self.backup_epochs = backup_epochs
        self.convergence_residual = convergence_residual
        self.expansion_seed = expansion_seed
        self.rollouts_per_epoch = rollouts_per_epoch
        self.exploration = exploration
        self.breadth_fraction = breadth_fraction

    def solver_params(self):
        return SolverParams(**self.get_params())

    def fit(self, model, y=None):
        self.policy_ = pbvi_solve(model, self.solver_params())
        self.value_ = self.policy_.value(model.initial_belief, 0)
        self.n_states_ = model.num_states
        return self

    def predict(self, beliefs, step=0):
        beliefs = np.atleast_2d(np.asarray(beliefs, dtype=float))
        return np.array([policy_action(self.policy_, b, step) for b in beliefs], dtype=np.int64)

    def value(self, beliefs, step=0):
        beliefs = np.atleast_2d(np.asarray(beliefs, dtype=float))
        return np.array([self.policy_.value(b, step) for b in beliefs])


def save_policy(policy, path):
    """Write ``policy`` as ``.json`` (text) or ``.npz`` (binary) by extension."""
    path = Path(path)
    meta = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "num_states": policy.num_states,
            "horizon": policy.horizon, "metadata": policy.metadata}
    if path.suffix == ".json":
        meta["steps"] = [{"actions": a.tolist(), "vectors": v.tolist()} for v, a in zip(policy.vectors, policy.actions)]
        path.write_text(json.dumps(meta))
        return path
    counts = np.array([len(v) for v in policy.vectors], dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, header=np.array(json.dumps(meta)), counts=counts,
                            vectors=np.vstack(policy.vectors), actions=np.concatenate(policy.actions))
    return path


def load_policy(path):
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        _check_header(data, path)
        steps = data["steps"]
        return AlphaVectorPolicy([np.array(s["vectors"], dtype=float) for s in steps],
                                 [np.array(s["actions"], dtype=np.int64) for s in steps], data["metadata"])
    with np.load(path, allow_pickle=False) as z:
        data = json.loads(str(z["header"]))
        _check_header(data, path)
        splits = np.cumsum(z["counts"])[:-1]
        vectors = np.split(z["vectors"], splits)
        actions = np.split(z["actions"], splits)
    return AlphaVectorPolicy(vectors, actions, data["metadata"])


def _check_header(data, path):
    if data.get("format") != FORMAT_NAME:
        raise InvalidParams(f"{path}: not an alpha-vector policy file")
    if data.get("version") != FORMAT_VERSION:
        raise InvalidParams(f"{path}: unsupported policy file version {data.get('version')!r}")
