"""Learned local detours around dynamic blockages.

A tabular action-value function over a small discrete state (neighbor
occupancy x waypoint direction x deviation bucket) picks bypass moves
whenever the next step of an agent's committed global route is obstructed;
otherwise a cost-greedy rule keeps the agent on the route. Tables are
trained offline on randomized corridor episodes and frozen for simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from . import planner
from .agents import AgentProfile, traversal_time
from .planner import PathPlan, heuristic
from .terrain import (
    CellIndex,
    DIRECTION_NAMES,
    ElevationGrid,
    NEIGHBOR_OFFSETS,
    make_synthetic,
)

ACTIONS: tuple[tuple[int, int], ...] = NEIGHBOR_OFFSETS + ((0, 0),)
ACTION_NAMES = DIRECTION_NAMES + ("stay",)
ACTION_STAY = 8
N_ACTIONS = len(ACTIONS)

N_OCCUPANCY = 256  # 2^8 neighbor patterns
N_DIRECTIONS = 8
N_DEVIATION_BUCKETS = 4
N_STATES = N_OCCUPANCY * N_DIRECTIONS * N_DEVIATION_BUCKETS  # 8192

EVENT_KINDS = ("collision", "delay", "deviation", "rejoin", "clear", "none")


@dataclass(frozen=True)
class LocalState:
    """Discrete navigation context for the bypass policy."""

    occupancy: tuple[bool, ...]  # blocked flags for the 8 neighbor cells
    waypoint_dir: int            # compass bucket toward the tracked waypoint
    deviation_bucket: int        # 0, 1, 2 cells off-route, or 3 for >= 3

    def __post_init__(self):
        if len(self.occupancy) != 8:
            raise ValueError("occupancy must have 8 entries")
        if not 0 <= self.waypoint_dir < N_DIRECTIONS:
            raise ValueError("waypoint_dir out of range")
        if not 0 <= self.deviation_bucket < N_DEVIATION_BUCKETS:
            raise ValueError("deviation_bucket out of range")

    def encode(self) -> int:
        bits = 0
        for i, occ in enumerate(self.occupancy):
            if occ:
                bits |= 1 << i
        return bits | (self.waypoint_dir << 8) | (self.deviation_bucket << 11)

    @classmethod
    def decode(cls, code: int) -> "LocalState":
        if not 0 <= code < N_STATES:
            raise ValueError("state code out of range")
        occ = tuple(bool(code & (1 << i)) for i in range(8))
        return cls(occ, (code >> 8) & 0x7, (code >> 11) & 0x3)


@dataclass(frozen=True)
class RewardWeights:
    """Magnitudes of the shaping terms; the reward function applies signs."""

    collision: float = 10.0
    delay_per_second: float = 0.1
    deviation_per_cell: float = 0.5
    rejoin: float = 5.0
    clear: float = 2.0

    def __post_init__(self):
        for name in ("collision", "delay_per_second", "deviation_per_cell",
                     "rejoin", "clear"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def max_magnitude(self, max_delay_s: float, max_deviation: float) -> float:
        return max(
            self.collision,
            self.delay_per_second * max_delay_s,
            self.deviation_per_cell * max_deviation,
            self.rejoin,
            self.clear,
        )


@dataclass(frozen=True)
class StepEvent:
    """One classified outcome per step; ``amount`` carries dt or d_t."""

    kind: str
    amount: float = 0.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind in ("delay", "deviation") and self.amount < 0:
            raise ValueError(f"{self.kind} amount must be non-negative")


def reward(event: StepEvent, w: RewardWeights) -> float:
    """Scalar reward for a classified step event."""
    if event.kind == "collision":
        return -w.collision
    if event.kind == "delay":
        return -w.delay_per_second * event.amount
    if event.kind == "deviation":
        return -w.deviation_per_cell * event.amount
    if event.kind == "rejoin":
        return w.rejoin
    if event.kind == "clear":
        return w.clear
    return 0.0


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 2000
    episodes: int = 5000
    max_steps_per_episode: int = 80
    seed: int = 0

    def __post_init__(self):
        # alpha == 0 is allowed so a zero step size is exactly the identity
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.epsilon_decay_episodes < 0:
            raise ValueError("epsilon_decay_episodes must be non-negative")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        if self.max_steps_per_episode <= 0:
            raise ValueError("max_steps_per_episode must be positive")

    def epsilon_at(self, episode: int) -> float:
        if self.epsilon_decay_episodes == 0 or episode >= self.epsilon_decay_episodes:
            return self.epsilon_end
        frac = episode / self.epsilon_decay_episodes
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


class QTable:
    """Dense action-value table with per-entry visit counts."""

    def __init__(self, values: np.ndarray | None = None,
                 visits: np.ndarray | None = None):
        self.values = (
            np.zeros((N_STATES, N_ACTIONS)) if values is None
            else np.asarray(values, dtype=float)
        )
        self.visits = (
            np.zeros((N_STATES, N_ACTIONS), dtype=np.int64) if visits is None
            else np.asarray(visits, dtype=np.int64)
        )
        if self.values.shape != (N_STATES, N_ACTIONS):
            raise ValueError("values must have shape (N_STATES, N_ACTIONS)")
        if self.visits.shape != (N_STATES, N_ACTIONS):
            raise ValueError("visits must have shape (N_STATES, N_ACTIONS)")

    @classmethod
    def zeros(cls) -> "QTable":
        return cls()

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visits.copy())

    def row(self, s: LocalState) -> np.ndarray:
        return self.values[s.encode()]


def q_update(
    q: QTable,
    s: LocalState,
    a: int,
    r: float,
    s_next: LocalState,
    p: LearningParams,
) -> QTable:
    """One temporal-difference backup on the (s, a) entry; returns ``q``."""
    if not 0 <= a < N_ACTIONS:
        raise ValueError(f"action {a} out of range")
    si = s.encode()
    ni = s_next.encode()
    current = q.values[si, a]
    target = r + p.gamma * float(np.max(q.values[ni]))
    q.values[si, a] = current + p.alpha * (target - current)
    q.visits[si, a] += 1
    return q


def select_action(
    q: QTable,
    s: LocalState,
    epsilon: float,
    rng: np.random.Generator,
    feasible: Sequence[int] | None = None,
) -> int:
    """Epsilon-greedy action choice with lowest-index tie-breaking."""
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must be in [0, 1]")
    actions = list(range(N_ACTIONS)) if feasible is None else sorted(set(feasible))
    if not actions:
        return ACTION_STAY
    if epsilon > 0 and rng.random() < epsilon:
        return actions[int(rng.integers(len(actions)))]
    row = q.values[s.encode()]
    best = actions[0]
    for a in actions[1:]:
        if row[a] > row[best]:
            best = a
    return best


# ---------------------------------------------------------------------------
# Route tracking
# ---------------------------------------------------------------------------

def waypoint_direction(at: CellIndex, waypoint: CellIndex) -> int:
    """Compass bucket (action-index order) from a cell toward its waypoint."""
    dr = waypoint[0] - at[0]
    dc = waypoint[1] - at[1]
    if dr == 0 and dc == 0:
        return 0
    ang = math.degrees(math.atan2(-dr, dc))  # grid north is -row
    return int(round((90.0 - ang) / 45.0)) % 8


def deviation_cells(cell: CellIndex, plan: PathPlan) -> int:
    """Chebyshev distance (king moves) from a cell to the nearest waypoint."""
    best = None
    for wp in plan.waypoints:
        d = max(abs(cell[0] - wp[0]), abs(cell[1] - wp[1]))
        if best is None or d < best:
            best = d
            if best == 0:
                break
    return int(best)


def build_local_state(
    grid: ElevationGrid,
    world,
    agent_id: str | None,
    cell: CellIndex,
    plan: PathPlan,
    waypoint_index: int,
) -> LocalState:
    """Observe the discrete local state around an agent.

    ``world`` only needs a ``cell_blocked(cell, exclude_id)`` query; grid
    boundaries and nodata holes count as occupied neighbors too.
    """
    occ = []
    for dr, dc in NEIGHBOR_OFFSETS:
        nb = CellIndex(cell[0] + dr, cell[1] + dc)
        occ.append(
            not grid.traversable(nb) or world.cell_blocked(nb, exclude_id=agent_id)
        )
    wp = plan.waypoints[min(waypoint_index, len(plan.waypoints) - 1)]
    dev = min(deviation_cells(cell, plan), N_DEVIATION_BUCKETS - 1)
    return LocalState(tuple(occ), waypoint_direction(cell, wp), dev)


def detect_block(world, agent_id: str | None, plan: PathPlan,
                 waypoint_index: int) -> bool:
    """True when the next routed step is obstructed by a dynamic blocker."""
    if waypoint_index >= len(plan.waypoints):
        return False
    return bool(
        world.cell_blocked(plan.waypoints[waypoint_index], exclude_id=agent_id)
    )


def rejoin_check(
    agent_cell: CellIndex,
    plan: PathPlan,
    waypoint_index: int,
) -> tuple[bool, int]:
    """Has the agent landed back on the route at or beyond its waypoint?

    Matches only forward along the plan: standing on an already-passed
    waypoint does not count. Returns (rejoined, matched index or unchanged).
    """
    for k in range(waypoint_index, len(plan.waypoints)):
        if plan.waypoints[k] == agent_cell:
            return True, k
    return False, waypoint_index


def hierarchical_policy(
    blocked: bool,
    plan: PathPlan,
    waypoint_index: int,
    q: QTable,
    s: LocalState,
    grid: ElevationGrid,
    profile: AgentProfile,
    at: CellIndex,
) -> int:
    """Two-level action selection.

    Unblocked, on the route: take the plan edge (the true local cost
    minimum by sub-path optimality of the global search). Unblocked but
    off-route: greedy over step cost plus the remaining-time bound toward
    the tracked waypoint. Blocked: the learned table's argmax, with no
    exploration.
    """
    if blocked:
        return int(np.argmax(q.values[s.encode()]))
    n = len(plan.waypoints)
    if waypoint_index >= n:
        return ACTION_STAY
    wp = plan.waypoints[waypoint_index]
    if at == wp:
        return ACTION_STAY
    if waypoint_index >= 1 and at == plan.waypoints[waypoint_index - 1]:
        dr, dc = wp[0] - at[0], wp[1] - at[1]
        action = NEIGHBOR_OFFSETS.index((dr, dc))
        if math.isfinite(traversal_time(profile, grid, at, wp)):
            return action
    best_action = ACTION_STAY
    best_cost = math.inf
    for a in range(len(NEIGHBOR_OFFSETS)):
        dr, dc = NEIGHBOR_OFFSETS[a]
        dest = CellIndex(at[0] + dr, at[1] + dc)
        if not grid.in_bounds(dest):
            continue
        step = traversal_time(profile, grid, at, dest)
        if not math.isfinite(step):
            continue
        cost = step + heuristic(dest, wp, profile, grid.cellsize)
        if cost < best_cost:
            best_cost = cost
            best_action = a
    return best_action


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpisodeStats:
    episode: int
    ep_return: float
    success: bool
    steps: int


@dataclass
class BypassInstance:
    hybrid_time: float
    oracle_time: float
    success: bool
    collided: bool


@dataclass
class BypassEvaluation:
    episodes: int
    successes: int
    collisions: int
    instances: list[BypassInstance]

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    @property
    def collision_rate(self) -> float:
        return self.collisions / self.episodes if self.episodes else 0.0


class CorridorEnv:
    """Flat training corridor with one randomized blocking bar per episode.

    The global route runs straight down the middle row; each episode drops
    a vertical bar of 1, 3, or 5 cells across it at a random column. The
    env doubles as the world view for state building: ``cell_blocked``
    reports membership in the current bar.
    """

    def __init__(
        self,
        profile: AgentProfile,
        nrows: int = 7,
        ncols: int = 30,
        cellsize: float = 30.0,
    ):
        if nrows < 5 or ncols < 10:
            raise ValueError("corridor must be at least 5 x 10 cells")
        self.profile = profile
        self.grid = make_synthetic("flat", nrows=nrows, ncols=ncols,
                                   cellsize=cellsize, h=0.0)
        self.mid = nrows // 2
        cells = [CellIndex(self.mid, c) for c in range(ncols)]
        edge = cellsize / profile.s_flat
        self.plan = PathPlan(
            waypoints=cells,
            edge_times=[edge] * (ncols - 1),
            total_time=edge * (ncols - 1),
            total_distance=cellsize * (ncols - 1),
            profile_name=profile.name,
        )
        self.stay_time = cellsize / profile.s_flat
        self.obstacle: frozenset[CellIndex] = frozenset()
        self.obstacle_until: int | None = None  # last step the bar is present
        self.now = 0

    def begin_episode(self, cells: frozenset[CellIndex],
                      until: int | None = None) -> None:
        self.obstacle = cells
        self.obstacle_until = until
        self.now = 0

    def cell_blocked(self, cell: CellIndex, exclude_id: str | None = None) -> bool:
        if self.obstacle_until is not None and self.now > self.obstacle_until:
            return False
        return cell in self.obstacle

    def sample_obstacle(self, rng: np.random.Generator) -> frozenset[CellIndex]:
        """Vertical bar across the route, always leaving a gap on both sides."""
        height = (1, 3, 5)[int(rng.integers(3))]
        col = int(rng.integers(3, self.grid.ncols - 3))
        if height == 3:
            center = self.mid + int(rng.integers(-1, 2))
        else:
            center = self.mid
        half = height // 2
        rows = range(max(0, center - half),
                     min(self.grid.nrows - 1, center + half) + 1)
        return frozenset(CellIndex(r, col) for r in rows)

    def blocked_column(self) -> int:
        return next(iter(self.obstacle)).col


def _run_episode(
    env: CorridorEnv,
    q: QTable,
    weights: RewardWeights,
    params: LearningParams,
    rng: np.random.Generator,
    *,
    epsilon: float,
    learn: bool,
    full_route: bool,
    step_cap: int,
) -> tuple[float, bool, bool, int, float]:
    """Returns (return, success, collided, steps, elapsed seconds)."""
    grid = env.grid
    plan = env.plan
    profile = env.profile
    block_col = env.blocked_column()
    if full_route:
        cell = plan.waypoints[0]
        wi = 1
    else:
        cell = plan.waypoints[block_col - 1]
        wi = block_col
    adapting = False
    total_r = 0.0
    elapsed = 0.0
    goal = plan.waypoints[-1]

    for step in range(1, step_cap + 1):
        env.now = step
        was_blocked = detect_block(env, None, plan, wi)
        s = build_local_state(grid, env, None, cell, plan, wi)
        if was_blocked:
            adapting = True
            a = select_action(q, s, epsilon, rng)
        else:
            a = hierarchical_policy(False, plan, wi, q, s, grid, profile, cell)

        prev_wi = wi
        prev_dev = deviation_cells(cell, plan)
        if a == ACTION_STAY:
            dest = cell
            move_time = env.stay_time
        else:
            dr, dc = ACTIONS[a]
            dest = CellIndex(cell[0] + dr, cell[1] + dc)
            invalid = (
                not grid.traversable(dest)
                or not math.isfinite(traversal_time(profile, grid, cell, dest))
            )
            if invalid or env.cell_blocked(dest):
                # walked into the bar or the corridor wall
                r = reward(StepEvent("collision"), weights)
                total_r += r
                if learn:
                    q_update(q, s, a, r, s, params)
                return total_r, False, True, step, elapsed
            move_time = traversal_time(profile, grid, cell, dest)

        cell = dest
        elapsed += move_time
        rejoined, k = rejoin_check(cell, plan, wi)
        if rejoined:
            wi = k + 1
        env.now = step + 1  # the step consumed time; observe the next state
        now_blocked = detect_block(env, None, plan, wi)
        dev = deviation_cells(cell, plan)

        if rejoined and adapting:
            event = StepEvent("rejoin")
        elif was_blocked and not now_blocked and not rejoined:
            event = StepEvent("clear")
        elif dev > 0:
            event = StepEvent("deviation", dev)
        elif wi == prev_wi and dev >= prev_dev:
            event = StepEvent("delay", move_time)
        else:
            event = StepEvent("none")
        r = reward(event, weights)
        total_r += r
        if learn:
            s_next = build_local_state(grid, env, None, cell, plan, wi)
            q_update(q, s, a, r, s_next, params)

        if rejoined and adapting:
            adapting = False
            if not full_route:
                return total_r, True, False, step, elapsed
        if full_route and cell == goal:
            return total_r, True, False, step, elapsed

    return total_r, False, False, step_cap, elapsed


def train_bypass(
    env: CorridorEnv,
    weights: RewardWeights,
    params: LearningParams,
) -> tuple[QTable, list[EpisodeStats]]:
    """Episodic training against randomized bar placements.

    Episodes start just before the blockage and end on rejoin, collision,
    or the step cap; the per-episode return/success series doubles as the
    learning curve.
    """
    q = QTable.zeros()
    rng = np.random.default_rng(params.seed)
    curve: list[EpisodeStats] = []
    for ep in range(params.episodes):
        env.begin_episode(env.sample_obstacle(rng))
        total_r, success, _collided, steps, _t = _run_episode(
            env, q, weights, params, rng,
            epsilon=params.epsilon_at(ep),
            learn=True,
            full_route=False,
            step_cap=params.max_steps_per_episode,
        )
        curve.append(EpisodeStats(ep, total_r, success, steps))
    return q, curve


def evaluate_bypass(
    q: QTable,
    env: CorridorEnv,
    episodes: int = 200,
    seed: int = 10_000,
    weights: RewardWeights | None = None,
) -> BypassEvaluation:
    """Greedy full-route rollouts on fresh obstacle placements.

    Each instance also solves a reference plan by re-running the global
    search on a grid with the bar punched out, so callers can compare the
    bypass detour against full replanning.
    """
    weights = weights or RewardWeights()
    params = LearningParams(seed=seed)
    rng = np.random.default_rng(seed)
    instances: list[BypassInstance] = []
    successes = 0
    collisions = 0
    step_cap = 6 * len(env.plan.waypoints)
    for _ in range(episodes):
        env.begin_episode(env.sample_obstacle(rng))
        _r, success, collided, _steps, elapsed = _run_episode(
            env, q, weights, params, rng,
            epsilon=0.0,
            learn=False,
            full_route=True,
            step_cap=step_cap,
        )
        masked = env.grid.with_nodata(env.obstacle)
        oracle_plan, _stats = planner.astar(
            masked, env.profile, env.plan.waypoints[0], env.plan.waypoints[-1]
        )
        successes += success
        collisions += collided
        instances.append(
            BypassInstance(elapsed, oracle_plan.total_time, success, collided)
        )
    return BypassEvaluation(episodes, successes, collisions, instances)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_QTABLE_MAGIC = "terramob-qtable 1"


def save_qtable(
    q: QTable,
    f: IO[str],
    *,
    gamma: float,
    alpha: float,
    seed: int,
    episodes: int,
) -> None:
    """Versioned flat text format: header, then one line per nonzero entry."""
    f.write(_QTABLE_MAGIC + "\n")
    f.write(f"states {N_STATES}\n")
    f.write(f"actions {N_ACTIONS}\n")
    f.write(f"gamma {gamma!r}\n")
    f.write(f"alpha {alpha!r}\n")
    f.write(f"seed {seed}\n")
    f.write(f"episodes {episodes}\n")
    rows, cols = np.nonzero(q.values)
    f.write(f"entries {len(rows)}\n")
    for s, a in zip(rows.tolist(), cols.tolist()):
        f.write(f"{s} {a} {float(q.values[s, a])!r}\n")


def load_qtable(f: IO[str]) -> tuple[QTable, dict]:
    header = f.readline().rstrip("\n")
    if header != _QTABLE_MAGIC:
        raise ValueError(f"not a qtable file (header {header!r})")
    meta: dict = {}
    for key, cast in (("states", int), ("actions", int), ("gamma", float),
                      ("alpha", float), ("seed", int), ("episodes", int),
                      ("entries", int)):
        name, _, value = f.readline().rstrip("\n").partition(" ")
        if name != key:
            raise ValueError(f"expected header field {key!r}, got {name!r}")
        meta[key] = cast(value)
    if meta["states"] != N_STATES or meta["actions"] != N_ACTIONS:
        raise ValueError("state-space descriptor does not match this build")
    q = QTable.zeros()
    for _ in range(meta["entries"]):
        s_str, a_str, v_str = f.readline().split()
        q.values[int(s_str), int(a_str)] = float(v_str)
    return q, meta


def write_learning_curve(curve: list[EpisodeStats], f: IO[str]) -> None:
    f.write("episode,return,success,steps\n")
    for row in curve:
        f.write(f"{row.episode},{row.ep_return!r},{int(row.success)},{row.steps}\n")
