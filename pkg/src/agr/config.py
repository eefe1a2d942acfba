"""Run configuration: which domain, its parameters, and solver/experiment settings.

Example (YAML)::

    domain: corridor        # corridor | map | spec
    corridor: {n: 10}
    horizon: 30
    discount: 0.95
    variant: agr            # agr | lb-a | lb-t | ub
    seed: 0
    episodes: 1000
    solver: {belief_set_target_size: 2500, backup_epochs: 10}

For ``domain: map`` give ``map: {layout: path/to/layout.txt}`` (omit for the
built-in layout); for ``domain: spec`` give ``spec: path/to/problem.yaml``.
Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .compiler import compile_spec
from .domains.corridor import CorridorParams, build_corridor
from .domains.gridmap import MapRewards, VisibilityRule, build_map, default_map_layout, load_layout
from .exceptions import InvalidParams
from .pbvi import SolverParams
from .specfile import YamlDoc, load_spec, load_yaml
from .variants import DEFAULT_PENALTY, VariantKind, make_variant

DOMAINS = ("corridor", "map", "spec")


@dataclass
class RunConfig:
    domain: str = "corridor"
    corridor: dict = field(default_factory=dict)
    layout: Optional[Path] = None
    visibility: dict = field(default_factory=dict)
    map_rewards: dict = field(default_factory=dict)
    spec: Optional[Path] = None
    horizon: int = 30
    discount: float = 0.95
    terminate_on_decision: bool = False
    variant: str = "agr"
    penalty: float = DEFAULT_PENALTY
    seed: int = 0
    episodes: int = 1000
    n_jobs: int = 1
    node_cap: int = 200_000
    solver: SolverParams = field(default_factory=SolverParams)
    # horizon/discount written in the config override those inside a spec file
    explicit_timing: bool = False

    def spec_object(self):
        """The uncompiled AgrSpec for the configured domain."""
        if self.domain == "corridor":
            return build_corridor(CorridorParams(**{**self.corridor, "horizon": self.horizon, "discount": self.discount,
                                                    "terminate_on_decision": self.terminate_on_decision}))
        if self.domain == "map":
            vis = VisibilityRule(**self.visibility)
            layout = default_map_layout() if self.layout is None else load_layout(self.layout)
            layout = replace(layout, visibility=vis)
            return build_map(layout, MapRewards(**self.map_rewards), horizon=self.horizon, discount=self.discount,
                             terminate_on_decision=self.terminate_on_decision)
        if self.spec is None:
            raise InvalidParams("domain 'spec' needs a spec file")
        spec = load_spec(self.spec)
        if self.explicit_timing:
            spec = replace(spec, horizon=self.horizon, discount=self.discount)
        return spec

    def model(self, variant=None):
        """Compiled POMDP of the configured domain and variant."""
        spec = self.spec_object()
        model = compile_spec(spec, reachable_only=self.domain == "map")
        return make_variant(model, variant or self.variant, self.penalty)


def _section(doc, key, allowed):
    node = doc.get((key,), {}, kind=dict)
    doc.unknown_keys((key,), allowed)
    return dict(node)


TOP = {"domain", "corridor", "map", "spec", "horizon", "discount", "terminate_on_decision", "variant",
       "penalty", "seed", "episodes", "n_jobs", "node_cap", "solver"}


def parse_config(doc):
    if not isinstance(doc.data, dict):
        raise doc.error("top level must be a mapping", ())
    doc.unknown_keys((), TOP)
    base = doc.path.parent if doc.path else Path(".")
    cfg = RunConfig()
    domain = doc.get(("domain",), "corridor", kind=str)
    if domain not in DOMAINS:
        raise doc.error(f"domain must be one of {', '.join(DOMAINS)}", ("domain",))
    cfg.domain = domain
    corridor_fields = {f.name for f in fields(CorridorParams)} - {"horizon", "discount", "terminate_on_decision"}
    cfg.corridor = _section(doc, "corridor", corridor_fields)
    m = _section(doc, "map", {"layout", "visibility", "rewards"})
    if m.get("layout") is not None:
        cfg.layout = base / str(m["layout"])
    if "visibility" in m:
        doc.unknown_keys(("map", "visibility"), {"mode", "radius"})
        cfg.visibility = dict(m["visibility"])
        if cfg.visibility.get("mode", "ray") not in ("ray", "axis"):
            raise doc.error("visibility mode must be 'ray' or 'axis'", ("map", "visibility", "mode"))
    if "rewards" in m:
        doc.unknown_keys(("map", "rewards"), {f.name for f in fields(MapRewards)})
        cfg.map_rewards = dict(m["rewards"])
    spec = doc.get(("spec",), None, kind=str)
    if spec is not None:
        cfg.spec = base / spec
    elif domain == "spec":
        raise doc.error("domain 'spec' needs a 'spec' path", ("spec",))
    cfg.explicit_timing = "horizon" in doc.data or "discount" in doc.data
    cfg.horizon = doc.get(("horizon",), cfg.horizon, kind=int)
    if cfg.horizon < 1:
        raise doc.error("horizon must be positive", ("horizon",))
    cfg.discount = float(doc.get(("discount",), cfg.discount, kind=(int, float)))
    if not 0 < cfg.discount <= 1:
        raise doc.error("discount must lie in (0, 1]", ("discount",))
    cfg.terminate_on_decision = doc.get(("terminate_on_decision",), False, kind=bool)
    variant = doc.get(("variant",), "agr", kind=str)
    if variant not in {v.value for v in VariantKind}:
        raise doc.error(f"variant must be one of {', '.join(v.value for v in VariantKind)}", ("variant",))
    cfg.variant = variant
    cfg.penalty = float(doc.get(("penalty",), cfg.penalty, kind=(int, float)))
    for name in ("seed", "episodes", "n_jobs", "node_cap"):
        value = doc.get((name,), getattr(cfg, name), kind=int)
        if value < (0 if name == "seed" else 1):
            raise doc.error(f"{name} out of range", (name,))
        setattr(cfg, name, value)
    solver = _section(doc, "solver", {f.name for f in fields(SolverParams)})
    try:
        cfg.solver = SolverParams(**solver).validate()
    except (InvalidParams, TypeError) as exc:
        raise doc.error(str(exc), ("solver",)) from None
    try:
        if domain == "corridor":
            CorridorParams(**cfg.corridor).validate()
    except (InvalidParams, TypeError) as exc:
        raise doc.error(str(exc), ("corridor",)) from None
    return cfg


def load_config(path):
    return parse_config(load_yaml(path))


def loads_config(text, path=None):
    return parse_config(YamlDoc(text, Path(path) if path else None))
