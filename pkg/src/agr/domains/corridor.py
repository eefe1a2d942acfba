"""Corridor domain: a target walks to a hidden goal door along a 1-D corridor.

The observer is stateless; it can idle, work, pay to look at the target, or
open one of the doors.  Opening the goal door while the target stands at it
sends the target to its terminal state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..compiler import AgrSpec, ObservationRelation, ObserverDomain, TargetDomain
from ..exceptions import InvalidParams


@dataclass(frozen=True)
class CorridorParams:
    n: int = 10
    idle: float = 0.0
    work: float = 10.0
    observe_cost: float = 2.0
    decide_correct: float = 100.0
    decide_wrong: float = -100.0
    target_start: int = 0
    horizon: int = 30
    discount: float = 0.95
    terminate_on_decision: bool = False
    goal_prior: Optional[tuple] = None

    def validate(self):
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParams(f"corridor half-length must be an integer >= 1, got {self.n!r}")
        if abs(self.target_start) > self.n:
            raise InvalidParams("target start must lie inside the corridor")
        if self.horizon < 0 or not 0.0 <= self.discount <= 1.0:
            raise InvalidParams("horizon must be >= 0 and discount in [0, 1]")
        if self.goal_prior is not None and len(self.goal_prior) != 2 * self.n + 1:
            raise InvalidParams("goal prior needs one entry per position")
        return self


def positions(n):
    return list(range(-n, n + 1))


def build_corridor(params=None, **overrides):
    """AgrSpec of the corridor domain with half-length ``params.n``."""
    if params is None:
        params = CorridorParams(**overrides)
    elif overrides:
        raise InvalidParams("pass either a CorridorParams or keyword overrides, not both")
    params.validate()
    n = params.n
    pos = positions(n)
    n_pos = len(pos)
    terminal = n_pos

    def behavior(st, g, decided):
        if st == terminal or decided:
            return terminal
        return st + int(np.sign(g - st))

    def decision_succeeds(sp_, st, g, k):
        return st != terminal and st == g and k == g

    def decide_cost(sp_, st, g, k):
        if decision_succeeds(sp_, st, g, k):
            return -params.decide_correct
        return -params.decide_wrong

    observer = ObserverDomain(
        states=("0",),
        initial=0,
        planning_actions=("A_idle", "A_work"),
        observe_actions=("A_obs",),
        decide_actions=tuple(f"A_open({p:+d})" for p in pos),
        transition=np.zeros((1, 2), dtype=np.int64),
        planning_cost=np.array([[-params.idle, -params.work]]),
        observe_cost=lambda sp_, st, k: params.observe_cost,
        decide_cost=decide_cost,
        own_task_actions=("A_work",),
    )
    target_labels = tuple(f"{p:+d}" for p in pos) + ("done",)
    target = TargetDomain(
        states=target_labels,
        observable=target_labels,
        observable_of=np.arange(n_pos + 1),
        initial=params.target_start + n,
        terminal=terminal,
        goals=tuple(f"{p:+d}" for p in pos),
        behavior=behavior,
        decision_succeeds=decision_succeeds,
    )
    prior = None if params.goal_prior is None else np.asarray(params.goal_prior, dtype=float)
    return AgrSpec(
        observer=observer,
        target=target,
        relation=ObservationRelation.empty(1, n_pos + 1),
        horizon=params.horizon,
        discount=params.discount,
        goal_prior=prior,
        terminate_on_decision=params.terminate_on_decision,
        name=f"corridor-n{n}",
        metadata={"domain": "corridor", "params": params},
    )


def corridor_sizes(n):
    """Closed-form (|S|, |A|, |Z|) of the compiled corridor."""
    return (2 * n + 2) * (2 * n + 1), 2 * n + 4, 2 * n + 3
