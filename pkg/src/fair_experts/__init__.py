"""Online prediction with expert advice under group contexts.

The library simulates the full-information protocol round by round: a group
context arrives, the learner commits a distribution over experts, the
environment fixes the outcome (possibly after seeing that distribution),
and every expert's loss is revealed. Traces feed per-group error metrics,
fairness-composition gaps, and the regret family, with seeded scenarios and
an experiment harness on top.
"""

from .types import (
    SIMPLEX_ATOL,
    EXPECTED_LOSS_ATOL,
    Outcome,
    RoundRecord,
    Trace,
    TraceBuilder,
    Accumulators,
    FairExpertsError,
    ConfigError,
    ContractError,
    HorizonMismatchError,
    EmptySubpopulationError,
    InsufficientGroupsError,
    InvariantViolation,
    group_label,
    loss_of,
    losses_from_scores,
    max_pairwise_gap,
    uniform_distribution,
    validate_distribution,
)
from .experts import (
    EXPERT_KINDS,
    AuditResult,
    ExpertModel,
    audit_fair_in_isolation,
    expert_group_metric,
    make_expert,
)
from .learners import (
    LEARNER_KINDS,
    FixedShare,
    FollowPerturbedLeader,
    Learner,
    PerGroupFixedShare,
    PerGroupMW,
    SingleMW,
    default_eta,
    make_learner,
)
from .adversaries import (
    GROUP_A,
    GROUP_B,
    SCENARIO_KINDS,
    RandomIID,
    Scenario,
    T1Scenario,
    T2Scenario,
    T3Synthetic,
    T4Scenario,
    T5Scenario,
    make_scenario,
)
from .protocol import AdaptiveBlock, ObliviousBlock, run
from .metrics import (
    METRICS,
    ComparatorPath,
    MetricReport,
    aggregate_reports,
    approx_regret,
    best_shifting_comparator,
    build_report,
    composition_gap,
    group_metric,
    regret,
    shifting_approx_regret,
    subpopulation_size,
)
from .harness import (
    PRESETS,
    ExperimentConfig,
    ExperimentResult,
    get_preset,
    preset_names,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "SIMPLEX_ATOL",
    "EXPECTED_LOSS_ATOL",
    "Outcome",
    "RoundRecord",
    "Trace",
    "TraceBuilder",
    "Accumulators",
    "FairExpertsError",
    "ConfigError",
    "ContractError",
    "HorizonMismatchError",
    "EmptySubpopulationError",
    "InsufficientGroupsError",
    "InvariantViolation",
    "group_label",
    "loss_of",
    "losses_from_scores",
    "max_pairwise_gap",
    "uniform_distribution",
    "validate_distribution",
    "EXPERT_KINDS",
    "AuditResult",
    "ExpertModel",
    "audit_fair_in_isolation",
    "expert_group_metric",
    "make_expert",
    "LEARNER_KINDS",
    "FixedShare",
    "FollowPerturbedLeader",
    "Learner",
    "PerGroupFixedShare",
    "PerGroupMW",
    "SingleMW",
    "default_eta",
    "make_learner",
    "GROUP_A",
    "GROUP_B",
    "SCENARIO_KINDS",
    "RandomIID",
    "Scenario",
    "T1Scenario",
    "T2Scenario",
    "T3Synthetic",
    "T4Scenario",
    "T5Scenario",
    "make_scenario",
    "AdaptiveBlock",
    "ObliviousBlock",
    "run",
    "METRICS",
    "ComparatorPath",
    "MetricReport",
    "aggregate_reports",
    "approx_regret",
    "best_shifting_comparator",
    "build_report",
    "composition_gap",
    "group_metric",
    "regret",
    "shifting_approx_regret",
    "subpopulation_size",
    "PRESETS",
    "ExperimentConfig",
    "ExperimentResult",
    "get_preset",
    "preset_names",
    "run_experiment",
]
