"""Lower- and upper-bound comparison models derived from a compiled AGR POMDP."""
from __future__ import annotations

import enum

import numpy as np
import scipy.sparse as sp

from .exceptions import EmptyActionSet, InvalidParams, MissingFactorizationMetadata

DEFAULT_PENALTY = 1e6


class VariantKind(str, enum.Enum):
    AGR = "agr"
    LB_A = "lb-a"
    LB_T = "lb-t"
    UB = "ub"


def _require_factors(model):
    if model.factors is None:
        raise MissingFactorizationMetadata("model carries no observer/target/goal factorization")
    return model.factors


def penalize(model, actions, penalty=DEFAULT_PENALTY):
    """Subtract ``penalty`` from the reward of every action in ``actions``."""
    actions = sorted({int(a) for a in actions})
    if not actions:
        raise EmptyActionSet("no actions to penalize")
    bound = model.horizon * float(np.abs(model.reward).max(initial=0.0))
    if penalty <= bound:
        raise InvalidParams(f"penalty {penalty} does not exceed the largest attainable |return| {bound}")
    reward = np.array(model.reward)
    reward[:, actions] -= penalty
    return model.with_(reward=reward)


def make_lb_a(model, decide_actions=None, penalty=DEFAULT_PENALTY):
    """Variant that abandons goal recognition: decision actions are penalized."""
    if decide_actions is None:
        decide_actions = _require_factors(model).decide_actions
    return penalize(model, decide_actions, penalty)


def make_lb_t(model, own_task_actions=None, penalty=DEFAULT_PENALTY):
    """Variant that abandons the observer's own task (``A_work`` in both domains)."""
    if own_task_actions is None:
        own_task_actions = _require_factors(model).own_task_actions
    return penalize(model, own_task_actions, penalty)


def make_ub(model):
    """Variant where every action reveals the target's observable state for free."""
    f = _require_factors(model)
    n_s = model.num_states
    rows = np.arange(n_s)
    cols = np.array([f.revealing_observation(s) for s in range(n_s)], dtype=np.int64)
    obs = sp.csr_matrix((np.ones(n_s), (rows, cols)), shape=(n_s, model.num_observations))
    return model.with_(observation=[obs] * model.num_actions)


def make_variant(model, kind, penalty=DEFAULT_PENALTY):
    kind = VariantKind(kind)
    if kind is VariantKind.AGR:
        return model
    if kind is VariantKind.LB_A:
        return make_lb_a(model, penalty=penalty)
    if kind is VariantKind.LB_T:
        return make_lb_t(model, penalty=penalty)
    return make_ub(model)


def variant_family(model, penalty=DEFAULT_PENALTY):
    """All four variants keyed by :class:`VariantKind`, in AGR/LB-A/LB-T/UB order."""
    return {kind: make_variant(model, kind, penalty) for kind in VariantKind}
