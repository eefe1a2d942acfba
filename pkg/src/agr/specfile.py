"""Declarative YAML description of an AGR problem.

A file names the observer's states and actions, a table of deterministic
moves for observer and target, costs, the goals with the decision action
that names each, and the visibility pairs.  Anything not listed defaults
to "stay put" (moves) or zero (costs).  See ``docs/spec_format.md``.

Every error carries the file, line and dotted field path.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .compiler import AgrSpec, ObservationRelation, ObserverDomain, TargetDomain, validate
from .exceptions import SpecFileError, SpecInconsistent

WILDCARD = "*"


class YamlDoc:
    """Parsed YAML plus the source line of every node, keyed by field path."""

    def __init__(self, text, path=None):
        self.path = path
        self.lines = {}
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            self.data = {} if node is None else self._convert(loader, node, ())
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            raise SpecFileError(f"invalid YAML: {exc.problem or exc.context}", path=path,
                                line=mark.line + 1 if mark else None) from None
        finally:
            loader.dispose()

    def _convert(self, loader, node, key):
        self.lines[key] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k_node, v_node in node.value:
                k = loader.construct_object(k_node, deep=True)
                if k in out:
                    raise SpecFileError(f"duplicate key {k!r}", path=self.path,
                                        line=k_node.start_mark.line + 1, field=_dotted(key + (k,)))
                out[k] = self._convert(loader, v_node, key + (k,))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(loader, v, key + (i,)) for i, v in enumerate(node.value)]
        return loader.construct_object(node, deep=True)

    def error(self, msg, key):
        key = tuple(key)
        probe = key
        while probe and probe not in self.lines:
            probe = probe[:-1]
        return SpecFileError(msg, path=self.path, line=self.lines.get(probe), field=_dotted(key) or None)

    def get(self, key, default=None, required=False, kind=None):
        node = self.data
        for k in key:
            if not isinstance(node, dict) or k not in node:
                if required:
                    raise self.error("missing required field", key)
                return default
            node = node[k]
        if kind is not None:
            kinds = kind if isinstance(kind, tuple) else (kind,)
            if not isinstance(node, kinds) or (isinstance(node, bool) and bool not in kinds):
                names = "/".join(t.__name__ for t in kinds)
                raise self.error(f"expected {names}, got {type(node).__name__}", key)
        return node

    def unknown_keys(self, key, allowed):
        node = self.get(key, {})
        if not isinstance(node, dict):
            raise self.error("expected a mapping", key)
        for k in node:
            if k not in allowed:
                raise self.error(f"unknown field (allowed: {', '.join(sorted(allowed))})", tuple(key) + (k,))


def _dotted(key):
    out = ""
    for k in key:
        out += f"[{k}]" if isinstance(k, int) else (f".{k}" if out else str(k))
    return out


def load_yaml(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecFileError(f"cannot read: {exc.strerror or exc}", path=path) from None
    return YamlDoc(text, path)


def _names(doc, key, required=True, allow_empty=False):
    items = doc.get(key, [] if not required else None, required=required, kind=list)
    if not items and not allow_empty:
        raise doc.error("must list at least one name", key)
    seen = set()
    for i, x in enumerate(items):
        if not isinstance(x, (str, int)) or isinstance(x, bool):
            raise doc.error("names must be strings", tuple(key) + (i,))
        if str(x) == WILDCARD:
            raise doc.error("'*' is reserved", tuple(key) + (i,))
        if str(x) in seen:
            raise doc.error(f"duplicate name {x!r}", tuple(key) + (i,))
        seen.add(str(x))
    return tuple(str(x) for x in items)


def _lookup(doc, key, value, names, what, wildcard=False):
    value = str(value)
    if wildcard and value == WILDCARD:
        return list(range(len(names)))
    if value not in names:
        raise doc.error(f"unknown {what} {value!r}", key)
    return [names.index(value)]


def _rows(doc, key, width):
    rows = doc.get(key, [], kind=list)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != width:
            raise doc.error(f"each entry must be a list of {width} items", tuple(key) + (i,))
    return rows


def _number(doc, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise doc.error("expected a number", key)
    return float(value)


TOP_FIELDS = {"name", "horizon", "discount", "terminate_on_decision", "goal_prior", "observer", "target", "visible"}
OBSERVER_FIELDS = {"states", "initial", "planning_actions", "own_task_actions", "observe_actions",
                   "decide_actions", "transitions", "planning_costs", "observe_costs", "decide_costs"}
TARGET_FIELDS = {"states", "initial", "terminal", "observable", "goals", "moves", "decisions"}


def parse_spec(doc):
    """Build an :class:`AgrSpec` from a :class:`YamlDoc`."""
    if not isinstance(doc.data, dict):
        raise doc.error("top level must be a mapping", ())
    doc.unknown_keys((), TOP_FIELDS)
    doc.unknown_keys(("observer",), OBSERVER_FIELDS)
    doc.unknown_keys(("target",), TARGET_FIELDS)
    doc.get(("observer",), required=True)
    doc.get(("target",), required=True)

    # observer
    S_P = _names(doc, ("observer", "states"))
    plan = _names(doc, ("observer", "planning_actions"), allow_empty=True, required=False)
    obs = _names(doc, ("observer", "observe_actions"), allow_empty=True, required=False)
    dec = _names(doc, ("observer", "decide_actions"))
    own = _names(doc, ("observer", "own_task_actions"), allow_empty=True, required=False)
    labels = plan + obs + dec
    if len(set(labels)) != len(labels):
        raise doc.error("action names must be unique across planning/observe/decide", ("observer",))
    for i, a in enumerate(own):
        if a not in plan:
            raise doc.error("own-task actions must be planning actions", ("observer", "own_task_actions", i))
    init_key = ("observer", "initial")
    sp0 = _lookup(doc, init_key, doc.get(init_key, required=True), S_P, "observer state")[0]

    trans = np.tile(np.arange(len(S_P))[:, None], (1, len(plan)))
    for i, (s, a, s2) in enumerate(_rows(doc, ("observer", "transitions"), 3)):
        k = ("observer", "transitions", i)
        nxt = _lookup(doc, k + (2,), s2, S_P, "observer state")[0]
        for si in _lookup(doc, k + (0,), s, S_P, "observer state", wildcard=True):
            for ai in _lookup(doc, k + (1,), a, plan, "planning action", wildcard=True):
                trans[si, ai] = nxt

    pcost = np.zeros((len(S_P), len(plan)))
    for i, (s, a, c) in enumerate(_rows(doc, ("observer", "planning_costs"), 3)):
        k = ("observer", "planning_costs", i)
        c = _number(doc, k + (2,), c)
        for si in _lookup(doc, k + (0,), s, S_P, "observer state", wildcard=True):
            for ai in _lookup(doc, k + (1,), a, plan, "planning action", wildcard=True):
                pcost[si, ai] = c

    ocost_key = ("observer", "observe_costs")
    raw = doc.get(ocost_key, 0.0)
    if isinstance(raw, dict):
        ocost = np.zeros(len(obs))
        for a, c in raw.items():
            ocost[_lookup(doc, ocost_key + (a,), a, obs, "observe action")[0]] = _number(doc, ocost_key + (a,), c)
    else:
        ocost = np.full(len(obs), _number(doc, ocost_key, raw))

    dkey = ("observer", "decide_costs")
    doc.unknown_keys(dkey, {"correct", "wrong"})
    d_ok = _number(doc, dkey + ("correct",), doc.get(dkey + ("correct",), 0.0))
    d_bad = _number(doc, dkey + ("wrong",), doc.get(dkey + ("wrong",), 0.0))

    # target
    S_T = _names(doc, ("target", "states"))
    st0 = _lookup(doc, ("target", "initial"), doc.get(("target", "initial"), required=True), S_T, "target state")[0]
    term_key = ("target", "terminal")
    term = _lookup(doc, term_key, doc.get(term_key, required=True), S_T, "target state")[0]
    if st0 == term:
        raise doc.error("target must not start in the terminal state", ("target", "initial"))
    okey = ("target", "observable")
    omap = doc.get(okey, None)
    if omap is None:
        observable, observable_of = S_T, np.arange(len(S_T))
    else:
        if not isinstance(omap, dict):
            raise doc.error("expected a mapping from target state to observable label", okey)
        observable = tuple(dict.fromkeys(str(v) for v in omap.values()))
        observable_of = np.full(len(S_T), -1)
        for s, v in omap.items():
            observable_of[_lookup(doc, okey + (s,), s, S_T, "target state")[0]] = observable.index(str(v))
        missing = [S_T[i] for i in np.flatnonzero(observable_of < 0)]
        if missing:
            raise doc.error(f"no observable label for target states {missing}", okey)
    goals = _names(doc, ("target", "goals"))
    if len(goals) < 2:
        raise doc.error("need at least two goals", ("target", "goals"))

    moves = np.tile(np.arange(len(S_T))[:, None], (1, len(goals)))
    for i, (s, g, s2) in enumerate(_rows(doc, ("target", "moves"), 3)):
        k = ("target", "moves", i)
        nxt = _lookup(doc, k + (2,), s2, S_T, "target state")[0]
        for si in _lookup(doc, k + (0,), s, S_T, "target state", wildcard=True):
            for gi in _lookup(doc, k + (1,), g, goals, "goal", wildcard=True):
                moves[si, gi] = nxt
    moves[term, :] = term

    # decision k succeeds iff the goal matches and (optionally) the target is in one of `at`
    dk = ("target", "decisions")
    dmap = doc.get(dk, required=True, kind=dict)
    dec_goal = np.full(len(dec), -1)
    dec_at = [None] * len(dec)
    for a, entry in dmap.items():
        k = _lookup(doc, dk + (a,), a, dec, "decide action")[0]
        if isinstance(entry, dict):
            doc.unknown_keys(dk + (a,), {"goal", "at"})
            g_val = doc.get(dk + (a, "goal"), required=True)
            at = doc.get(dk + (a, "at"), None, kind=list)
            if at is not None:
                dec_at[k] = {_lookup(doc, dk + (a, "at", j), x, S_T, "target state")[0] for j, x in enumerate(at)}
        else:
            g_val = entry
        dec_goal[k] = _lookup(doc, dk + (a,), g_val, goals, "goal")[0]
    if (dec_goal < 0).any():
        raise doc.error(f"decide actions without a goal: {[dec[i] for i in np.flatnonzero(dec_goal < 0)]}", dk)

    visible = np.zeros((len(S_P), len(S_T)), dtype=bool)
    for i, (s, t) in enumerate(_rows(doc, ("visible",), 2)):
        for si in _lookup(doc, ("visible", i, 0), s, S_P, "observer state", wildcard=True):
            for ti in _lookup(doc, ("visible", i, 1), t, S_T, "target state", wildcard=True):
                visible[si, ti] = True

    def succeeds(sp_, st, g, k):
        return st != term and g == dec_goal[k] and (dec_at[k] is None or st in dec_at[k])

    def behavior(st, g, decided):
        return term if decided else int(moves[st, g])

    observer = ObserverDomain(
        states=S_P, initial=sp0, planning_actions=plan, observe_actions=obs, decide_actions=dec,
        transition=trans, planning_cost=pcost,
        observe_cost=lambda sp_, st, k: float(ocost[k]),
        decide_cost=lambda sp_, st, g, k: d_ok if succeeds(sp_, st, g, k) else d_bad,
        own_task_actions=own,
    )
    target = TargetDomain(
        states=S_T, observable=observable, observable_of=observable_of, initial=st0, terminal=term,
        goals=goals, behavior=behavior, decision_succeeds=succeeds,
    )
    prior = doc.get(("goal_prior",), None, kind=list)
    if prior is not None:
        prior = np.array([_number(doc, ("goal_prior", i), p) for i, p in enumerate(prior)])
        if prior.shape != (len(goals),) or (prior < 0).any() or abs(prior.sum() - 1) > 1e-9:
            raise doc.error("goal_prior must be a distribution over the goals", ("goal_prior",))
    horizon = doc.get(("horizon",), 30, kind=int)
    if horizon < 1:
        raise doc.error("horizon must be positive", ("horizon",))
    discount = _number(doc, ("discount",), doc.get(("discount",), 0.95))
    if not 0 < discount <= 1:
        raise doc.error("discount must lie in (0, 1]", ("discount",))
    spec = AgrSpec(
        observer=observer, target=target, relation=ObservationRelation(visible),
        horizon=horizon, discount=discount, goal_prior=prior,
        terminate_on_decision=doc.get(("terminate_on_decision",), False, kind=bool),
        name=str(doc.get(("name",), Path(doc.path).stem if doc.path else "agr")),
    )
    try:
        validate(spec)
    except SpecInconsistent as exc:
        raise SpecFileError(str(exc), path=doc.path) from None
    return spec


def loads_spec(text, path=None):
    return parse_spec(YamlDoc(text, path))


def load_spec(path):
    return parse_spec(load_yaml(path))
