"""Efficiency versus reward trade-offs for single-server queues with controlled arrivals."""

from .chain import (
    EventuallyConstant,
    FiniteCutoff,
    General,
    Policy,
    PolicyMetrics,
    StationaryDistribution,
    build_custom_policy,
    build_static_policy,
    evaluate_policy,
    metrics,
    stationary_distribution,
)
from .errors import QueueControlError
from .experiments import (
    FitModel,
    ScalingFit,
    TradeoffPoint,
    emit_csv,
    emit_svg,
    fit_scaling,
    load_config,
    pricing_loss,
    read_csv,
    sweep,
)
from .policies import (
    LowerBoundResult,
    Regime,
    dynamic_policy,
    fully_dynamic_policy,
    lower_bound_for,
    lower_bound_oracle,
    static_near_capacity_policy,
    throughput_threshold_policy,
    two_arrival_policy,
    two_support_threshold_policy,
)
from .reward import (
    ConcaveLike,
    FluidSolution,
    RewardFunction,
    Structure,
    chord_majorization_check,
    derivative,
    dual_value,
    evaluate,
    fluid_benchmark,
    polyhedral_check,
    quadratic_majorant,
    tangent_majorization_check,
)
from .simulate import SimulationEstimate, simulate

__version__ = "0.1.0"
