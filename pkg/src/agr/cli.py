"""Command line entry point: ``agr build|solve|simulate|compare|oracle``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import RunConfig, load_config
from .exceptions import AgrError, DimensionMismatch
from .harness import compare_exact, compare_variants, emit_results, run_batch
from .pbvi import load_policy, pbvi_solve, save_policy
from .pomdp_format import write_pomdp
from .variants import VariantKind, make_variant


def _common(p):
    p.add_argument("config", nargs="?", type=Path, help="YAML run configuration")
    p.add_argument("--domain", choices=("corridor", "map", "spec"))
    p.add_argument("--n", type=int, help="corridor half-length")
    p.add_argument("--layout", type=Path, help="ASCII map layout file")
    p.add_argument("--spec", type=Path, help="declarative AGR problem file")
    p.add_argument("--horizon", type=int)
    p.add_argument("--discount", type=float)
    p.add_argument("--variant", choices=[v.value for v in VariantKind])
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--belief-set-size", type=int, help="PBVI belief set target size")
    p.add_argument("--epochs", type=int, help="PBVI backup epochs")


def build_parser():
    parser = argparse.ArgumentParser(prog="agr", description="Active goal recognition POMDP toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="compile a problem and report its size")
    _common(p)
    p.add_argument("--export-pomdp", type=Path, metavar="PATH", help="write the compiled model as a .pomdp file")

    p = sub.add_parser("solve", help="run point-based value iteration and save the policy")
    _common(p)
    p.add_argument("-o", "--output", type=Path, required=True, help="policy file (.npz or .json)")

    p = sub.add_parser("simulate", help="simulate seeded episodes and write CSV/JSON results")
    _common(p)
    p.add_argument("--policy", type=Path, help="saved policy (solved on the fly if omitted)")
    p.add_argument("--out", type=Path, default=Path("results"))

    p = sub.add_parser("compare", help="solve and simulate all four variants and check their ordering")
    _common(p)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--strict", action="store_true", help="exit nonzero if an ordering check fails")

    p = sub.add_parser("oracle", help="exact finite-horizon values of all variants (small models only)")
    _common(p)
    p.add_argument("--node-cap", type=int)
    p.add_argument("--check-pbvi", action="store_true", help="also report the PBVI value gap")
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.domain:
        cfg.domain = args.domain
    if args.n is not None:
        cfg.corridor = {**cfg.corridor, "n": args.n}
    if args.layout:
        cfg.domain, cfg.layout = "map", args.layout
    if args.spec:
        cfg.domain, cfg.spec = "spec", args.spec
    if args.horizon is not None or args.discount is not None:
        cfg.explicit_timing = True
    for name in ("horizon", "discount", "variant", "seed", "episodes", "n_jobs"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    if args.belief_set_size is not None:
        cfg.solver.belief_set_target_size = args.belief_set_size
    if args.epochs is not None:
        cfg.solver.backup_epochs = args.epochs
    if getattr(args, "node_cap", None) is not None:
        cfg.node_cap = args.node_cap
    cfg.solver.validate()
    return cfg


def cmd_build(cfg, args):
    model = cfg.model()
    print(f"states {model.num_states}  actions {model.num_actions}  observations {model.num_observations}  "
          f"horizon {model.horizon}  discount {model.discount}")
    if args.export_pomdp:
        write_pomdp(model, args.export_pomdp)
        print(f"wrote {args.export_pomdp}")
    return 0


def cmd_solve(cfg, args):
    model = cfg.model()
    t0 = time.perf_counter()
    policy = pbvi_solve(model, cfg.solver)
    meta = policy.metadata
    print(f"V(b0) = {policy.value(model.initial_belief, 0):.4f}  epochs {meta['epochs']}  "
          f"beliefs {meta['belief_set_size']}  {time.perf_counter() - t0:.1f}s")
    save_policy(policy, args.output)
    print(f"wrote {args.output}")
    return 0


def cmd_simulate(cfg, args):
    model = cfg.model()
    if args.policy:
        policy = load_policy(args.policy)
        if policy.num_states != model.num_states:
            raise DimensionMismatch(f"policy has {policy.num_states} states, model has {model.num_states}")
    else:
        policy = pbvi_solve(model, cfg.solver)
    batch = run_batch(model, policy, cfg.episodes, cfg.seed, n_jobs=cfg.n_jobs, label=cfg.variant)
    s = batch.stats
    print(f"{cfg.variant}: mean {s.mean_return:.2f}  st.d. {s.std_return:.2f}  s.e. {s.se_return:.3f}  "
          f"({s.n_episodes} episodes, seed {cfg.seed})")
    paths = emit_results(batch, args.out, prefix=cfg.variant)
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_compare(cfg, args):
    model = cfg.model("agr")
    report = compare_variants(model, cfg.solver, cfg.episodes, cfg.seed, n_jobs=cfg.n_jobs,
                              penalty=cfg.penalty)
    print(report.table())
    for kind, batch in report.batches.items():
        emit_results(batch, args.out, prefix=kind.value)
    out = Path(args.out) / "comparison.json"
    out.write_text(json.dumps(report.summary(), indent=2))
    print(f"wrote {out}")
    return 1 if args.strict and not report.passed else 0


def cmd_oracle(cfg, args):
    model = cfg.model("agr")
    values, checks = compare_exact(model, node_cap=cfg.node_cap, penalty=cfg.penalty)
    for kind, v in values.items():
        line = f"{kind.value:<5} exact {v:.6f}"
        if args.check_pbvi:
            variant = make_variant(model, kind, cfg.penalty)
            approx = pbvi_solve(variant, cfg.solver).value(variant.initial_belief, 0)
            line += f"  pbvi {approx:.6f}  gap {v - approx:.2e}"
        print(line)
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if all(checks.values()) else 1


COMMANDS = {"build": cmd_build, "solve": cmd_solve, "simulate": cmd_simulate, "compare": cmd_compare,
            "oracle": cmd_oracle}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (AgrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
