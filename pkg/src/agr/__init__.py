"""Active goal recognition as POMDP planning.

An observer with its own task must also work out which goal a target is
pursuing.  :func:`compile_spec` turns a factored problem description into a
:class:`TabularPOMDP`; the corridor and map domains, bound variants, a
point-based solver, an exact oracle and a simulation harness build on it.
"""
from .compiler import AgrSpec, ObservationRelation, ObserverDomain, TargetDomain, compile_spec
from .config import RunConfig, load_config
from .domains.corridor import CorridorParams, build_corridor
from .domains.gridmap import MapLayout, build_map, default_map_layout, load_layout, parse_layout
from .exact import ExactSolver, exact_solve
from .exceptions import *  # noqa: F401,F403
from .harness import compare_exact, compare_variants, emit_results, goal_belief, normalized_entropy, run_batch
from .pbvi import AlphaVectorPolicy, PointBasedValueIteration, SolverParams, load_policy, pbvi_solve, save_policy
from .pomdp import TabularPOMDP, belief_update
from .pomdp_format import read_pomdp, write_pomdp
from .specfile import load_spec
from .variants import VariantKind, make_variant, variant_family

__version__ = "0.1.0"
