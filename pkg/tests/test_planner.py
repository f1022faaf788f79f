import io
import math

import numpy as np
import pytest

from terramob.agents import builtin_profile, builtin_profiles
from terramob.planner import (
    NoPathError,
    astar,
    dijkstra_all,
    dijkstra_oracle,
    heuristic,
    local_step_cost,
    octile_distance_m,
    validate_plan,
    write_plan_csv,
)
from terramob.terrain import CellIndex, make_synthetic, two_corridor_endpoints
from conftest import rough_grid

SQRT2 = math.sqrt(2.0)


class TestHeuristic:
    def test_zero_at_goal(self):
        p = builtin_profile("fit_adults")
        assert heuristic(CellIndex(4, 4), CellIndex(4, 4), p, 30.0) == 0.0

    def test_octile_3_4(self):
        # 3 diagonal + 1 straight cell steps at 30 m cells, fit-adult flat speed
        p = builtin_profile("fit_adults")
        dist = octile_distance_m(CellIndex(0, 0), CellIndex(3, 4), 30.0)
        assert dist == pytest.approx((3 * SQRT2 + 1) * 30.0)
        assert dist == pytest.approx(157.279, abs=1e-3)
        assert heuristic(CellIndex(0, 0), CellIndex(3, 4), p, 30.0) == pytest.approx(
            104.853, abs=1e-3
        )

    @pytest.mark.parametrize("profile_name", ["fit_adults", "mule"])
    def test_admissible_exhaustively_16x16(self, profile_name):
        p = builtin_profile(profile_name)
        grid = rough_grid(77, nrows=16, ncols=16)
        goal = CellIndex(15, 15)
        dist = dijkstra_all(grid, p, goal)  # edge weights are symmetric
        for cell, d in dist.items():
            assert heuristic(cell, goal, p, grid.cellsize) <= d + 1e-9, cell


class TestAstar:
    def test_flat_corner_to_corner_closed_form(self, flat10):
        p = builtin_profile("fit_adults")
        plan, stats = astar(flat10, p, CellIndex(0, 0), CellIndex(9, 9))
        assert plan.total_time == pytest.approx(9 * 30.0 * SQRT2 / 1.5)
        assert len(plan.waypoints) == 10  # 9 diagonal steps
        assert stats.nodes_expanded >= len(plan.waypoints)
        validate_plan(plan, flat10, p)

    def test_trivial_start_equals_goal(self, flat10):
        p = builtin_profile("elderly")
        plan, stats = astar(flat10, p, CellIndex(4, 4), CellIndex(4, 4))
        assert plan.waypoints == [CellIndex(4, 4)]
        assert plan.total_time == 0.0 and plan.total_distance == 0.0
        assert stats.nodes_expanded >= 1

    def test_cart_confined_to_gentle_corridor(self):
        grid = make_synthetic("two_corridor", nrows=13, ncols=21,
                              cellsize=30.0, gentle=10.0, steep=25.0)
        start, goal = two_corridor_endpoints(grid)
        cart_plan, _ = astar(grid, builtin_profile("ox_cart"), start, goal)
        mid = grid.nrows // 2
        interior = [w for w in cart_plan.waypoints
                    if w.row == mid and 0 < w.col < grid.ncols - 1]
        assert interior == []
        mule_plan, _ = astar(grid, builtin_profile("mule"), start, goal)
        assert all(w.row == mid for w in mule_plan.waypoints)
        assert mule_plan.total_time < cart_plan.total_time

    def test_no_path_through_moat(self, flat10):
        grid = flat10.with_nodata(
            [CellIndex(r, 5) for r in range(10)]
        )
        with pytest.raises(NoPathError):
            astar(grid, builtin_profile("fit_adults"), CellIndex(0, 0),
                  CellIndex(9, 9))

    def test_untraversable_endpoint_rejected(self, flat10):
        grid = flat10.with_nodata([CellIndex(0, 0)])
        with pytest.raises(ValueError):
            astar(grid, builtin_profile("mule"), CellIndex(0, 0), CellIndex(3, 3))

    def test_deterministic(self):
        grid = rough_grid(13)
        p = builtin_profile("families")
        first, stats1 = astar(grid, p, CellIndex(0, 0), CellIndex(31, 31))
        second, stats2 = astar(grid, p, CellIndex(0, 0), CellIndex(31, 31))
        assert first.waypoints == second.waypoints
        assert first.total_time == second.total_time
        assert stats1.nodes_expanded == stats2.nodes_expanded
        assert stats1.open_peak == stats2.open_peak

    def test_plans_satisfy_invariants_on_random_grids(self):
        p = builtin_profile("hostile")
        for seed in range(5):
            grid = rough_grid(100 + seed, nrows=24, ncols=24)
            try:
                plan, _ = astar(grid, p, CellIndex(0, 0), CellIndex(23, 23))
            except NoPathError:
                continue
            validate_plan(plan, grid, p)


class TestOptimality:
    @pytest.mark.parametrize("profile_name",
                             [p.name for p in builtin_profiles()])
    def test_matches_dijkstra_on_random_grids(self, profile_name):
        p = builtin_profile(profile_name)
        solved = 0
        for seed in range(25):
            grid = rough_grid(1000 + seed, nrows=24, ncols=24)
            start, goal = CellIndex(0, 0), CellIndex(23, 23)
            try:
                plan, _ = astar(grid, p, start, goal)
            except NoPathError:
                with pytest.raises(NoPathError):
                    dijkstra_oracle(grid, p, start, goal)
                continue
            assert plan.total_time == dijkstra_oracle(grid, p, start, goal)
            solved += 1
        assert solved >= 5  # the terrain family must be mostly solvable

    def test_flat_equals_oracle_exactly(self, flat10):
        p = builtin_profile("elderly")
        plan, _ = astar(flat10, p, CellIndex(0, 0), CellIndex(9, 9))
        assert plan.total_time == dijkstra_oracle(flat10, p, CellIndex(0, 0),
                                                  CellIndex(9, 9))

    def test_oracle_no_path(self, flat10):
        grid = flat10.with_nodata([CellIndex(r, 5) for r in range(10)])
        with pytest.raises(NoPathError):
            dijkstra_oracle(grid, builtin_profile("mule"), CellIndex(0, 0),
                            CellIndex(9, 9))


class TestDistanceObjective:
    def test_matches_distance_oracle(self):
        p = builtin_profile("fit_adults")
        for seed in range(10):
            grid = rough_grid(3000 + seed, nrows=20, ncols=20)
            start, goal = CellIndex(0, 0), CellIndex(19, 19)
            try:
                plan, _ = astar(grid, p, start, goal, objective="distance")
            except NoPathError:
                with pytest.raises(NoPathError):
                    dijkstra_oracle(grid, p, start, goal, objective="distance")
                continue
            assert plan.total_distance == dijkstra_oracle(
                grid, p, start, goal, objective="distance"
            )

    def test_never_longer_than_time_optimal_route(self):
        p = builtin_profile("mule")
        for seed in range(6):
            grid = rough_grid(4000 + seed, nrows=20, ncols=20)
            start, goal = CellIndex(0, 0), CellIndex(19, 19)
            try:
                by_time, _ = astar(grid, p, start, goal)
                by_dist, _ = astar(grid, p, start, goal, objective="distance")
            except NoPathError:
                continue
            assert by_dist.total_distance <= by_time.total_distance + 1e-9
            assert by_time.total_time <= by_dist.total_time + 1e-9

    def test_shortest_route_can_cost_more_time(self):
        # on a two-corridor grid the mule's shortest route is the steep one
        grid = make_synthetic("two_corridor", nrows=13, ncols=21,
                              cellsize=30.0, gentle=2.0, steep=28.0)
        start, goal = two_corridor_endpoints(grid)
        p = builtin_profile("mule")
        by_dist, _ = astar(grid, p, start, goal, objective="distance")
        by_time, _ = astar(grid, p, start, goal)
        mid = grid.nrows // 2
        assert all(w.row == mid for w in by_dist.waypoints)
        assert by_time.total_time <= by_dist.total_time

    def test_unknown_objective(self, flat10):
        with pytest.raises(ValueError, match="objective"):
            astar(flat10, builtin_profile("mule"), CellIndex(0, 0),
                  CellIndex(1, 1), objective="vibes")


class TestLocalStepCost:
    def test_mirrors_traversal_time(self, flat10):
        p = builtin_profile("fit_adults")
        assert local_step_cost(flat10, p, CellIndex(5, 5), 2) == pytest.approx(20.0)

    def test_steep_step_impassable(self):
        grid = make_synthetic("ramp", nrows=3, ncols=5, cellsize=30.0, slope=25.0)
        p = builtin_profile("ox_cart")
        assert math.isinf(local_step_cost(grid, p, CellIndex(1, 0), 2))

    def test_off_grid_action_is_an_error(self, flat10):
        with pytest.raises(ValueError):
            local_step_cost(flat10, builtin_profile("mule"), CellIndex(0, 0), 0)
        with pytest.raises(ValueError):
            local_step_cost(flat10, builtin_profile("mule"), CellIndex(0, 0), 99)


class TestPlanCsv:
    def test_columns_and_totals(self, flat10):
        p = builtin_profile("fit_adults")
        plan, _ = astar(flat10, p, CellIndex(0, 0), CellIndex(0, 3))
        buf = io.StringIO()
        write_plan_csv(plan, flat10, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == (
            "index,row,col,easting,northing,elevation_m,edge_time_s,cum_time_s"
        )
        assert len(lines) == 1 + len(plan.waypoints)
        last = lines[-1].split(",")
        assert float(last[-1]) == pytest.approx(plan.total_time)
