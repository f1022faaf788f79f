"""Terrain-aware multi-agent navigation over elevation grids.

Global least-cost routes (time-optimal A*), tabular-Q local bypass of
dynamic blockages, heterogeneous mobility profiles, and deterministic
pursuit / transport scenario runs.
"""

from .agents import (
    AgentProfile,
    SpeedResult,
    animal_speed,
    builtin_profile,
    builtin_profiles,
    human_speed,
    reduction_factor,
    traversal_time,
)
from .local_adapt import (
    CorridorEnv,
    LearningParams,
    LocalState,
    QTable,
    RewardWeights,
    StepEvent,
    evaluate_bypass,
    hierarchical_policy,
    q_update,
    reward,
    select_action,
    train_bypass,
)
from .planner import NoPathError, PathPlan, SearchStats, astar, dijkstra_oracle
from .sim import (
    Obstacle,
    PursuitRule,
    ScenarioConfig,
    SimReport,
    World,
    compare_transport,
    effort_accrual,
    run_scenario,
)
from .terrain import (
    CellIndex,
    ElevationGrid,
    GridFormatError,
    SlopeSample,
    line_of_sight,
    make_synthetic,
    neighbors,
    parse_ascii_grid,
    serialize_ascii_grid,
    slope_percent,
    two_corridor_endpoints,
    viewshed,
)

__version__ = "0.1.0"
