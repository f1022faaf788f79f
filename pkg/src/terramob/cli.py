"""Command-line front end: plan routes, train bypass tables, run scenarios,
and render transport reports.

Exit codes: 0 success, 2 no path, 3 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import local_adapt, planner, sim, terrain
from .agents import builtin_profile
from .local_adapt import (
    CorridorEnv,
    LearningParams,
    RewardWeights,
    save_qtable,
    train_bypass,
    write_learning_curve,
)
from .planner import NoPathError
from .sim import ConfigError, ScenarioConfig, SCHEMA
from .terrain import CellIndex, GridFormatError

EXIT_OK = 0
EXIT_NO_PATH = 2
EXIT_BAD_INPUT = 3

OUT_ENV_VAR = "TERRAMOB_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # bad flags are bad input, not exit 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_BAD_INPUT, f"{self.prog}: error: {message}\n")


def _load_terrain(arg: str):
    if arg.endswith(".asc"):
        return terrain.parse_ascii_grid(Path(arg).read_text())
    return terrain.grid_from_recipe(arg)


def _parse_cell(text: str) -> CellIndex:
    try:
        r, c = text.split(",")
        return CellIndex(int(r), int(c))
    except ValueError:
        raise ValueError(f"expected 'row,col', got {text!r}") from None


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV_VAR, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_plan(args) -> int:
    try:
        grid = _load_terrain(args.terrain)
        profile = builtin_profile(args.profile)
        start = _parse_cell(args.start)
        goal = _parse_cell(args.goal)
    except (GridFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        plan, stats = planner.astar(grid, profile, start, goal,
                                    objective=args.objective)
    except NoPathError as exc:
        print(f"no path: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = _out_dir(args.out)
    with open(out / "plan.csv", "w", newline="") as f:
        planner.write_plan_csv(plan, grid, f)
    print(f"total_time_s={plan.total_time!r}")
    print(f"total_distance_m={plan.total_distance!r}")
    print(f"nodes_expanded={stats.nodes_expanded}")
    print(f"plan_csv={out / 'plan.csv'}")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        params = LearningParams(
            alpha=args.alpha,
            gamma=args.gamma,
            epsilon_start=args.epsilon_start,
            epsilon_end=args.epsilon_end,
            epsilon_decay_episodes=args.epsilon_decay,
            episodes=args.episodes,
            max_steps_per_episode=args.max_steps,
            seed=args.seed,
        )
        weights = RewardWeights(
            collision=args.r_collision,
            delay_per_second=args.r_delay,
            deviation_per_cell=args.r_deviation,
            rejoin=args.r_rejoin,
            clear=args.r_clear,
        )
        env = CorridorEnv(builtin_profile(args.profile))
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    qtable, curve = train_bypass(env, weights, params)
    out = _out_dir(args.out)
    with open(out / "qtable.txt", "w", newline="") as f:
        save_qtable(qtable, f, gamma=params.gamma, alpha=params.alpha,
                    seed=params.seed, episodes=params.episodes)
    with open(out / "curve.csv", "w", newline="") as f:
        write_learning_curve(curve, f)
    successes = sum(1 for row in curve if row.success)
    print(f"episodes={len(curve)}")
    print(f"train_success_rate={successes / len(curve) if curve else 0.0:.3f}")
    print(f"qtable={out / 'qtable.txt'}")
    print(f"curve={out / 'curve.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        config = ScenarioConfig.load(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.dt is not None:
            if args.dt <= 0:
                raise ConfigError("--dt must be positive")
            config.dt = args.dt
        report, traces = sim.run_scenario(config)
        if config.transport is not None:
            mode_rows, comparisons, extra = sim.compare_transport(config)
            report.transport_rows = mode_rows
            report.comparisons = comparisons
            traces.update(extra)
    except (ConfigError, GridFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = _out_dir(args.out or config.outputs)
    (out / "traces").mkdir(exist_ok=True)
    with open(out / "report.json", "w", newline="") as f:
        f.write(report.to_json())
    with open(out / "report.txt", "w", newline="") as f:
        f.write(sim.render_comparison_table(report.comparisons))
    for agent_id, records in sorted(traces.items()):
        with open(out / "traces" / f"{agent_id}.csv", "w", newline="") as f:
            sim.write_trace_csv(records, f)
    no_path = [a["id"] for a in report.agents if a["outcome"] == "no_path"]
    for agent_id in no_path:
        print(f"agent {agent_id}: no path", file=sys.stderr)
    print(f"report={out / 'report.json'}")
    strict = args.strict or config.strict
    if strict and no_path:
        return EXIT_NO_PATH
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        obj = json.loads(Path(args.report).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    if not isinstance(obj, dict) or obj.get("schema") != SCHEMA:
        print(f"error: not a {SCHEMA} document", file=sys.stderr)
        return EXIT_BAD_INPUT
    comparisons = obj.get("comparisons", [])
    if not isinstance(comparisons, list):
        print("error: 'comparisons' must be a list", file=sys.stderr)
        return EXIT_BAD_INPUT
    sys.stdout.write(sim.render_comparison_table(comparisons))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="terramob",
                     description="terrain-aware multi-agent navigation runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[], help="compute a global route")
    p.add_argument("--terrain", required=True,
                   help=".asc file or recipe, e.g. flat:h=0,nrows=10,ncols=10")
    p.add_argument("--profile", required=True, help="built-in profile name")
    p.add_argument("--start", required=True, help="start cell as row,col")
    p.add_argument("--goal", required=True, help="goal cell as row,col")
    p.add_argument("--objective", choices=("time", "distance"), default="time",
                   help="minimize traversal time (default) or path length")
    p.add_argument("--out", help=f"output dir (default ${OUT_ENV_VAR} or ./out)")
    p.set_defaults(func=cmd_plan)

    t = sub.add_parser("train", help="train a bypass table on the corridor env")
    t.add_argument("--profile", default="fit_adults")
    t.add_argument("--episodes", type=int, default=5000)
    t.add_argument("--alpha", type=float, default=0.1)
    t.add_argument("--gamma", type=float, default=0.95)
    t.add_argument("--epsilon-start", type=float, default=1.0)
    t.add_argument("--epsilon-end", type=float, default=0.05)
    t.add_argument("--epsilon-decay", type=int, default=2000)
    t.add_argument("--max-steps", type=int, default=80)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--r-collision", type=float, default=10.0)
    t.add_argument("--r-delay", type=float, default=0.1)
    t.add_argument("--r-deviation", type=float, default=0.5)
    t.add_argument("--r-rejoin", type=float, default=5.0)
    t.add_argument("--r-clear", type=float, default=2.0)
    t.add_argument("--out", help="output dir")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="run a scenario config")
    s.add_argument("--config", required=True, help="scenario JSON file")
    s.add_argument("--seed", type=int, help="override sim.seed")
    s.add_argument("--dt", type=float, help="override sim.dt")
    s.add_argument("--strict", action="store_true",
                   help="exit 2 when any agent has no path")
    s.add_argument("--out", help="output dir override")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="render a report JSON as a text table")
    r.add_argument("report", help="report.json produced by simulate")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
