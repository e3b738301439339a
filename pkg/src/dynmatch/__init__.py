"""Two-way dynamic matching networks: greedy policies, hindsight regret, drift checks."""

from .analytics import (
    RegretReport,
    TpLyapunov,
    concentration_check,
    exact_drift,
    regret_experiment,
    tp_alpha,
)
from .builtins import BUILTINS, UnknownBuiltin, builtin_instance
from .engine import (
    ArrivalStream,
    IllegalDecision,
    MatchingSystem,
    MixedParityTruncation,
    SimState,
    coupled_pair_run,
    coupled_truncated_run,
    path_subsystem_run,
    run,
    run_batch,
    step,
)
from .fluid import FluidRates, FluidState, beta, fluid_drift_check, fluid_step, lipschitz_check
from .hindsight import HindsightInstance, hindsight_curve, optimal_value
from .network import (
    InvalidNetwork,
    MatchingNetwork,
    NotAcyclic,
    RootedTree,
    distances,
    load_instance,
    root_tree,
    validate,
)
from .planner import (
    BasisInfeasible,
    BasisResolver,
    GpgViolation,
    NumericalInstability,
    SppSolution,
    resolve_with_basis,
    solve_spp,
    tree_epsilons,
)
from .policies import (
    Action,
    PolicyDecision,
    PolicyInfo,
    adversarial_decide,
    lq_decide,
    make_policy,
    pm_decide,
    static_priority_decide,
    tp_decide,
    ttp_decide,
)

__version__ = "0.1.0"
