"""Capacity planning for clusters of variable-rate radio units on a
shared fronthaul link.

The package answers one question: how many radio units can share a link
of fixed capacity before rate-upgrade blocking exceeds a target, given
that each unit steps through a ladder of transport rates under a
hysteresis policy. It provides exact per-unit chain solutions, a
product-form cluster model, an event-driven simulator for validation,
and a command line front end.
"""

from .aggregator import (
    AggregatorSpec,
    BlockingReport,
    StateSpace,
    blocking,
    blocking_for_planning,
    build_generator,
    detailed_balance_check,
    enumerate_states,
    max_rru,
    product_form,
    spec_from_planning,
    transition_rate,
)
from .config import (
    CpriProfile,
    PlanningConfig,
    ProfileRow,
    RateSet,
    ThresholdPolicy,
    TrafficSpec,
    config_from_dict,
    default_profile,
    default_thresholds,
    load_config,
    select_rates,
    traffic_from_load,
)
from .ctmc import (
    Partition,
    dtmc_steady_state,
    fold_back_conditional,
    steady_state,
    stochastic_complement,
    uniformize,
)
from .errors import (
    CapacityError,
    InvalidConfigError,
    InvalidParameterError,
    NumericalError,
    StructuralError,
    VrfError,
)
from .rru import (
    GlobalRruChain,
    PartitionDistribution,
    RruChainSpec,
    RruRates,
    build_global_chain,
    partition_coefficients,
    partition_distribution,
    rate_level_distribution,
    transition_rates,
)
from .sim import (
    ArrivalProcess,
    SimConfig,
    SimStats,
    rate_after_arrival,
    rate_after_departure,
    reconfig_arrival_probability,
    run,
    sample_interarrival,
)

__version__ = "1.0.0"

__all__ = [
    "AggregatorSpec",
    "ArrivalProcess",
    "BlockingReport",
    "CapacityError",
    "CpriProfile",
    "GlobalRruChain",
    "InvalidConfigError",
    "InvalidParameterError",
    "NumericalError",
    "Partition",
    "PartitionDistribution",
    "PlanningConfig",
    "ProfileRow",
    "RateSet",
    "RruChainSpec",
    "RruRates",
    "SimConfig",
    "SimStats",
    "StateSpace",
    "StructuralError",
    "ThresholdPolicy",
    "TrafficSpec",
    "VrfError",
    "blocking",
    "blocking_for_planning",
    "build_generator",
    "build_global_chain",
    "config_from_dict",
    "default_profile",
    "default_thresholds",
    "detailed_balance_check",
    "dtmc_steady_state",
    "enumerate_states",
    "fold_back_conditional",
    "load_config",
    "max_rru",
    "partition_coefficients",
    "partition_distribution",
    "product_form",
    "rate_after_arrival",
    "rate_after_departure",
    "rate_level_distribution",
    "reconfig_arrival_probability",
    "run",
    "sample_interarrival",
    "select_rates",
    "spec_from_planning",
    "steady_state",
    "stochastic_complement",
    "traffic_from_load",
    "transition_rate",
    "transition_rates",
    "uniformize",
]
