"""Exact finite-horizon solving by expectimax over the belief tree."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import TreeTooLarge, UndefinedPolicyAction
from .pomdp import check_model

TIE_TOL = 1e-12


def belief_key(b, decimals=12):
    nz = np.flatnonzero(b > 0.5 * 10.0 ** -decimals)
    return tuple(nz.tolist()), tuple(np.round(b[nz], decimals).tolist())


@dataclass(eq=False)
class PolicyNode:
    action: int
    value: float
    children: dict = field(default_factory=dict)


class PolicyTree:
    """Conditional plan: an action per node, a child per possible observation."""

    def __init__(self, root, horizon):
        self.root = root
        self.horizon = horizon

    def node_at(self, history):
        node = self.root
        for depth, (a, o) in enumerate(history):
            if node is None or a != node.action:
                raise UndefinedPolicyAction(f"history diverges from the plan at depth {depth}")
            node = node.children.get(o)
            if node is None:
                raise UndefinedPolicyAction(f"no plan for observation {o} at depth {depth}")
        return node

    def action(self, belief=None, step=0, history=()):
        node = self.node_at(history)
        if node is None:
            raise UndefinedPolicyAction(f"plan exhausted after {len(history)} steps")
        return node.action

    def actions_used(self):
        seen, stack, out = set(), [self.root], set()
        while stack:
            node = stack.pop()
            if node is None or id(node) in seen:
                continue
            seen.add(id(node))
            out.add(node.action)
            stack.extend(node.children.values())
        return out


class _Expectimax:
    def __init__(self, model, node_cap):
        self.model = model
        self.node_cap = node_cap
        self.T = model.dense_transition()
        self.O = model.dense_observation()
        self.R = np.asarray(model.reward)
        self.gamma = model.discount
        self.memo = {}

    def successors(self, b, a):
        pb = b @ self.T[a]
        joint = pb[:, None] * self.O[a]
        probs = joint.sum(axis=0)
        for o in np.flatnonzero(probs > 0):
            yield int(o), float(probs[o]), joint[:, o] / probs[o]

    def value(self, b, k):
        if k == 0:
            return 0.0
        key = (k, belief_key(b))
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0]
        best_q, best_a = -np.inf, 0
        for a in range(self.model.num_actions):
            q = float(b @ self.R[:, a])
            if k > 1:
                future = 0.0
                for _, p, nb in self.successors(b, a):
                    future += p * self.value(nb, k - 1)
                q += self.gamma * future
            if q > best_q + TIE_TOL:
                best_q, best_a = q, a
        self.memo[key] = (best_q, best_a)
        if len(self.memo) > self.node_cap:
            raise TreeTooLarge(f"belief tree exceeded node cap {self.node_cap}")
        return best_q

    def plan(self, b, k, cache):
        if k == 0:
            return None
        key = (k, belief_key(b))
        if key in cache:
            return cache[key]
        v, a = self.memo[key]
        node = PolicyNode(a, v)
        cache[key] = node
        if k > 1:
            for o, _, nb in self.successors(b, a):
                node.children[o] = self.plan(nb, k - 1, cache)
        return node


def exact_solve(model, horizon=None, node_cap=200_000):
    """Optimal expected discounted return from the initial belief and its plan.

    Raises TreeTooLarge when more than ``node_cap`` distinct belief nodes are
    needed.
    """
    check_model(model)
    horizon = model.horizon if horizon is None else int(horizon)
    solver = _Expectimax(model, node_cap)
    b0 = np.asarray(model.initial_belief, dtype=float)
    value = solver.value(b0, horizon)
    root = solver.plan(b0, horizon, {})
    return value, PolicyTree(root, horizon)


def exact_value_at(model, belief, horizon=None, node_cap=200_000):
    horizon = model.horizon if horizon is None else int(horizon)
    return _Expectimax(model, node_cap).value(np.asarray(belief, dtype=float), horizon)


class ExactSolver(BaseEstimator):
    """Estimator wrapper around :func:`exact_solve` for tiny models."""

    def __init__(self, horizon=None, node_cap=200_000):
        self.horizon = horizon
        self.node_cap = node_cap

    def fit(self, model, y=None):
        self.value_, self.policy_ = exact_solve(model, self.horizon, self.node_cap)
        return self

    def predict(self, histories):
        return np.array([self.policy_.action(history=h) for h in histories], dtype=int)
