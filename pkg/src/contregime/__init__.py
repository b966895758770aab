"""Simulation and estimation for treatment regimes on continuous-time paths.

Cohorts are generated on a fine time grid with treatment-confounder
feedback, targets are defined through interventions on a decision
schedule, and three estimation routes (value recursion, inverse
probability weighting, doubly robust) are checked against exact and
Monte-Carlo oracles.
"""

from .timegrid import (
    Partition,
    Trajectory,
    HistoryView,
    Cohort,
    make_partition,
    refine,
    fine_indices,
    history_at,
)
from .dgp import (
    CensoringHazard,
    DgpSpec,
    bin3,
    ou1,
    cens3,
    spec_from_config,
    simulate_observed,
    transition_density,
    propensity_density,
    censoring_survival,
    misspecify,
)
from .regimes import (
    PositivityError,
    RegimeScopeError,
    Rule,
    NullRegime,
    PointMass,
    StochasticPrespecified,
    Shift,
    Threshold,
    Incremental,
    always_treat,
    never_treat,
    deterministic_dynamic,
    sample_regime,
    density_ratio,
    regime_from_config,
)
from .oracle import (
    PathBudgetError,
    CounterfactualSample,
    simulate_counterfactual,
    enumerate_exact,
    enumerate_paths,
    mesh_convergence,
)
from .estimators import (
    Estimate,
    EEResidual,
    NuisanceSet,
    ValueProcess,
    ConstantH,
    CovariateH,
    PerturbedH,
    WeightProcess,
    build_H,
    gcomp_estimate,
    build_Q,
    ipw_estimate,
    dr_estimate,
    ee_residual_gcomp,
    ee_residual_ipw,
    unit_weights,
    indicator_weights,
    scale_weights,
    martingale_means,
)
from .harness import (
    ExperimentConfig,
    run_experiment,
    dr_grid,
    convergence_study,
    diagnose,
    load_config,
)

__version__ = "0.1.0"

__all__ = [
    "Partition", "Trajectory", "HistoryView", "Cohort",
    "make_partition", "refine", "fine_indices", "history_at",
    "CensoringHazard", "DgpSpec", "bin3", "ou1", "cens3",
    "spec_from_config", "simulate_observed", "transition_density",
    "propensity_density", "censoring_survival", "misspecify",
    "PositivityError", "RegimeScopeError", "Rule", "NullRegime",
    "PointMass", "StochasticPrespecified", "Shift", "Threshold",
    "Incremental", "always_treat", "never_treat", "deterministic_dynamic",
    "sample_regime", "density_ratio", "regime_from_config",
    "PathBudgetError", "CounterfactualSample", "simulate_counterfactual",
    "enumerate_exact", "enumerate_paths", "mesh_convergence",
    "Estimate", "EEResidual", "NuisanceSet", "ValueProcess",
    "ConstantH", "CovariateH", "PerturbedH", "WeightProcess",
    "build_H", "gcomp_estimate", "build_Q", "ipw_estimate", "dr_estimate",
    "ee_residual_gcomp", "ee_residual_ipw",
    "unit_weights", "indicator_weights", "scale_weights", "martingale_means",
    "ExperimentConfig", "run_experiment", "dr_grid", "convergence_study",
    "diagnose", "load_config",
    "__version__",
]
