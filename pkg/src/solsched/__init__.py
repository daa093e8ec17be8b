"""Robust modelling, scheduling and in-mission replanning for sol-structured
crewed operations.

The package models multi-project activity networks with uncertain durations,
dispatches schedules under sampled or enumerated scenarios, estimates each
schedule's probability of success together with expected KPIs, searches for
robust schedules by local search, tracks a live mission (frozen past,
re-plannable future), and coordinates a pool of optimization agents through
a durable shared store exposed over HTTP.
"""

__version__ = "0.1.0"

from .dispatch import (
    ASAP,
    DispatchContext,
    DispatchProtocol,
    ExecutionTrace,
    Schedule,
    deterministic_view,
    dispatch,
)
from .model import (
    Activity,
    ActivityWindow,
    DurationModel,
    KpiWeights,
    MissionCalendar,
    MissionModel,
    ProjectModel,
    Resource,
    ResourceKind,
    TemporalConstraint,
    merge_mission,
    validate_mission,
    validate_model,
)
from .multistage import DecisionTree, build_perfect_information_tree, evaluate_multistage
from .optimize import SearchConfig, SearchResult, initial_solution, neighbor, objective, optimize
from .robustness import RobustnessEstimate, compare_schedules, estimate_robustness, exact_robustness
from .scenarios import Scenario, enumerate_scenarios, sample_duration, sample_scenario

__all__ = [
    "__version__",
    "Activity", "ActivityWindow", "DurationModel", "KpiWeights",
    "MissionCalendar", "MissionModel", "ProjectModel", "Resource",
    "ResourceKind", "TemporalConstraint", "merge_mission",
    "validate_mission", "validate_model",
    "Scenario", "enumerate_scenarios", "sample_duration", "sample_scenario",
    "ASAP", "DispatchContext", "DispatchProtocol", "ExecutionTrace",
    "Schedule", "deterministic_view", "dispatch",
    "RobustnessEstimate", "compare_schedules", "estimate_robustness",
    "exact_robustness",
    "DecisionTree", "build_perfect_information_tree", "evaluate_multistage",
    "SearchConfig", "SearchResult", "initial_solution", "neighbor",
    "objective", "optimize",
]
