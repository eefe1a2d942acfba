"""Seeded episode batches, goal-belief entropy traces and variant comparison."""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .exceptions import DegenerateGoalSet, MissingFactorizationMetadata
from .pomdp import SimState, belief_update, episode_rng, sample_initial_state, sample_step
from .variants import DEFAULT_PENALTY, VariantKind, variant_family

ENTROPY_COLUMNS = ("episode", "step", "entropy", "action", "reward")
RETURN_COLUMNS = ("episode", "seed", "true_goal", "return")


def goal_belief(model, belief):
    """Marginal probability of each goal under a joint belief."""
    f = model.factors
    if f is None:
        raise MissingFactorizationMetadata("goal marginal needs the observer/target/goal factorization")
    return np.bincount(f.state_goal, weights=np.asarray(belief, dtype=float), minlength=f.n_goals)


def normalized_entropy(goal_probs):
    """Shannon entropy of a goal distribution divided by log of the number of goals."""
    p = np.asarray(goal_probs, dtype=float)
    if p.size < 2:
        raise DegenerateGoalSet("normalized entropy needs at least two goals")
    nz = p[p > 0]
    h = float(-(nz * np.log(nz)).sum() / math.log(p.size))
    return min(max(h, 0.0), 1.0)


@dataclass
class StepRecord:
    action: int
    observation: int
    reward: float
    goal_entropy: float


@dataclass
class EpisodeRecord:
    episode: int
    seed: int
    true_goal: int
    per_step: list
    return_: float
    beliefs: list = field(default=None, repr=False)

    @property
    def entropies(self):
        return np.array([s.goal_entropy for s in self.per_step])


@dataclass
class BatchStats:
    n_episodes: int
    mean_return: float
    std_return: float
    se_return: float
    initial_entropy: float
    entropy_mean: list
    entropy_min: list
    entropy_max: list
    entropy_se: list

    @classmethod
    def from_records(cls, records, initial_entropy=1.0):
        records = sorted(records, key=lambda r: r.episode)
        n = len(records)
        returns = np.array([r.return_ for r in records])
        if n == 0:
            return cls(0, None, None, None, initial_entropy, [], [], [], [])
        length = max(len(r.per_step) for r in records)
        ent = np.full((n, length), np.nan)
        for i, r in enumerate(records):
            ent[i, : len(r.per_step)] = r.entropies
        # statistics works in exact arithmetic: identical returns give std exactly 0
        std = statistics.pstdev(returns.tolist())
        return cls(
            n_episodes=n,
            mean_return=statistics.fmean(returns.tolist()),
            std_return=std,
            se_return=std / math.sqrt(n),
            initial_entropy=initial_entropy,
            entropy_mean=np.nanmean(ent, axis=0).tolist(),
            entropy_min=np.nanmin(ent, axis=0).tolist(),
            entropy_max=np.nanmax(ent, axis=0).tolist(),
            entropy_se=(np.nanstd(ent, axis=0) / np.sqrt(np.sum(~np.isnan(ent), axis=0))).tolist(),
        )


@dataclass
class Batch:
    records: list
    stats: BatchStats
    label: str = ""


def _run_episode(model, policy, episode, seed, discount, keep_beliefs, cache):
    rng = episode_rng(seed, episode)
    s0 = sample_initial_state(model, rng)
    sim = SimState(s0, 0, seed)
    b = model.initial_belief
    history = ()
    steps, beliefs, g = [], [], 0.0
    while sim.step < model.horizon:
        t = sim.step
        hit = cache.get(history)
        a = hit if hit is not None else policy.action(b, t, history)
        cache[history] = a
        r, o, sim = sample_step(model, sim, a, rng)
        history = history + ((a, o),)
        key = ("b", history)
        nb = cache.get(key)
        if nb is None:
            nb = belief_update(model, b, a, o)
            cache[key] = nb
            cache[("h", history)] = normalized_entropy(goal_belief(model, nb))
        b = nb
        steps.append(StepRecord(int(a), int(o), float(r), cache[("h", history)]))
        if keep_beliefs:
            beliefs.append(b)
        g += discount ** t * r
    goal = int(model.factors.state_goal[s0])
    return EpisodeRecord(episode, int(seed), goal, steps, g, beliefs if keep_beliefs else None)


def _run_chunk(model, policy, episodes, seed, discount, keep_beliefs):
    cache = {}
    return [_run_episode(model, policy, i, seed, discount, keep_beliefs, cache) for i in episodes]


def run_batch(model, policy, n_episodes, seed=0, discount=None, keep_beliefs=False, n_jobs=1, label=""):
    """Simulate ``n_episodes`` seeded episodes while tracking the exact belief.

    Each episode draws its true state (hence its goal) from the initial
    belief with a private random stream derived from ``(seed, episode)``,
    so results do not depend on ``n_jobs``.  ``discount`` defaults to the
    model's; pass 1.0 for undiscounted returns.
    """
    if model.factors is None:
        raise MissingFactorizationMetadata("run_batch needs a compiled AGR model")
    discount = model.discount if discount is None else float(discount)
    episodes = list(range(n_episodes))
    if n_jobs == 1 or n_episodes < 2:
        records = _run_chunk(model, policy, episodes, seed, discount, keep_beliefs)
    else:
        chunks = [episodes[i::n_jobs] for i in range(n_jobs)]
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_run_chunk)(model, policy, c, seed, discount, keep_beliefs) for c in chunks if c
        )
        records = sorted((r for p in parts for r in p), key=lambda r: r.episode)
    h0 = normalized_entropy(goal_belief(model, model.initial_belief))
    return Batch(records, BatchStats.from_records(records, h0), label)


@dataclass
class OrderingCheck:
    lower: str
    upper: str
    lower_mean: float
    upper_mean: float
    slack: float
    passed: bool


def _check(lower, upper, stats, slack_se):
    a, b = stats[lower], stats[upper]
    slack = slack_se * math.sqrt(a.se_return**2 + b.se_return**2)
    return OrderingCheck(lower.value, upper.value, a.mean_return, b.mean_return, slack,
                         bool(a.mean_return <= b.mean_return + slack))


def compare_variants(model, solver_params=None, n_episodes=1000, seed=0, slack_se=1.0, solve=None, n_jobs=1,
                     penalty=DEFAULT_PENALTY):
    """Solve and simulate all four variants of ``model`` and check their ordering.

    Checks are LB-T <= AGR, LB-A <= AGR and AGR <= UB on batch means, each
    allowed ``slack_se`` standard errors of the difference.
    """
    from .pbvi import pbvi_solve

    solve = solve or (lambda m: pbvi_solve(m, solver_params))
    family = variant_family(model, penalty)
    batches, policies = {}, {}
    for kind, variant in family.items():
        policy = solve(variant)
        policies[kind] = policy
        batches[kind] = run_batch(variant, policy, n_episodes, seed, n_jobs=n_jobs, label=kind.value)
    stats = {k: b.stats for k, b in batches.items()}
    checks = [
        _check(VariantKind.LB_T, VariantKind.AGR, stats, slack_se),
        _check(VariantKind.LB_A, VariantKind.AGR, stats, slack_se),
        _check(VariantKind.AGR, VariantKind.UB, stats, slack_se),
    ]
    return ComparisonReport(batches, policies, checks)


@dataclass
class ComparisonReport:
    batches: dict
    policies: dict
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        out = {"variants": {}, "checks": [asdict(c) for c in self.checks], "passed": self.passed}
        for kind, batch in self.batches.items():
            s = batch.stats
            out["variants"][kind.value] = {
                "mean_return": s.mean_return,
                "std_return": s.std_return,
                "se_return": s.se_return,
                "n_episodes": s.n_episodes,
                "entropy_mean": s.entropy_mean,
            }
        return out

    def table(self):
        lines = [f"{'variant':<6} {'mean':>9} {'st.d.':>8}"]
        for kind in (VariantKind.UB, VariantKind.AGR, VariantKind.LB_A, VariantKind.LB_T):
            s = self.batches[kind].stats
            lines.append(f"{kind.value:<6} {s.mean_return:>9.2f} {s.std_return:>8.2f}")
        for c in self.checks:
            lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.lower} <= {c.upper}: "
                         f"{c.lower_mean:.2f} <= {c.upper_mean:.2f} (+{c.slack:.2f})")
        return "\n".join(lines)


def compare_exact(model, horizon=None, node_cap=200_000, tol=1e-6, penalty=DEFAULT_PENALTY):
    """Exact values of all variants and the bound inequalities between them."""
    from .exact import exact_solve

    values = {k: exact_solve(v, horizon, node_cap)[0] for k, v in variant_family(model, penalty).items()}
    checks = {
        "lb-a <= agr": values[VariantKind.LB_A] <= values[VariantKind.AGR] + tol,
        "lb-t <= agr": values[VariantKind.LB_T] <= values[VariantKind.AGR] + tol,
        "agr <= ub": values[VariantKind.AGR] <= values[VariantKind.UB] + tol,
    }
    return values, checks


def _open(path, mode="w"):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, mode, newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_results(batch, out_dir, prefix="", extra=None):
    """Write the entropy trace CSV, per-episode returns CSV and JSON summary.

    Returns the three paths.  ``extra`` is merged into the summary (e.g. a
    comparison report).
    """
    out_dir = Path(out_dir)
    stem = f"{prefix}_" if prefix else ""
    paths = {
        "entropy": out_dir / f"{stem}entropy.csv",
        "returns": out_dir / f"{stem}returns.csv",
        "summary": out_dir / f"{stem}summary.json",
    }
    with _open(paths["entropy"]) as fh:
        w = csv.writer(fh)
        w.writerow(ENTROPY_COLUMNS)
        for rec in batch.records:
            for t, s in enumerate(rec.per_step):
                w.writerow((rec.episode, t, repr(s.goal_entropy), s.action, repr(s.reward)))
    with _open(paths["returns"]) as fh:
        w = csv.writer(fh)
        w.writerow(RETURN_COLUMNS)
        for rec in batch.records:
            w.writerow((rec.episode, rec.seed, rec.true_goal, repr(rec.return_)))
    summary = {"label": batch.label, **asdict(batch.stats)}
    if extra:
        summary.update(extra)
    with _open(paths["summary"]) as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
    return paths
