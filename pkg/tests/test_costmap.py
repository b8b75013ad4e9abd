import math

import numpy as np
import pytest

from navtune.costmap import (FREE_MAX, INSCRIBED, LETHAL, GlobalPlanner,
                             compress_collinear, inflate_costmap, plan_global)
from navtune.errors import InvalidInputError, UnreachableError

from conftest import make_world


def brute_force_distances(world):
    """Per-cell distance to the nearest occupied cell center, by full scan."""
    rows, cols = np.nonzero(world.occupancy)
    occ_pts = np.stack([cols, rows], axis=1)
    h, w = world.occupancy.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            d2 = ((occ_pts[:, 0] - x) ** 2 + (occ_pts[:, 1] - y) ** 2).min()
            out[y, x] = math.sqrt(d2) * world.resolution
    return out


def bellman_ford_cost(costmap, start_cell, goal_cell):
    """Independent shortest-path oracle over the same 8-connected graph."""
    h, w = costmap.costs.shape
    costs = costmap.costs.astype(float)
    lethal = costmap.costs >= INSCRIBED
    dist = np.full((h, w), np.inf)
    dist[start_cell[1], start_cell[0]] = 0.0
    for _ in range(h * w):
        changed = False
        for y in range(h):
            for x in range(w):
                if not np.isfinite(dist[y, x]):
                    continue
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        if dx == 0 and dy == 0:
                            continue
                        nx, ny = x + dx, y + dy
                        if not (0 <= nx < w and 0 <= ny < h) or lethal[ny, nx]:
                            continue
                        step = costmap.resolution * (math.sqrt(2) if dx and dy else 1.0)
                        nd = dist[y, x] + step * (1.0 + costs[ny, nx] / FREE_MAX)
                        if nd < dist[ny, nx] - 1e-15:
                            dist[ny, nx] = nd
                            changed = True
        if not changed:
            break
    return dist[goal_cell[1], goal_cell[0]]


def path_cost(costmap, path):
    """Cost of a waypoint polyline over the entered-cell convention."""
    res = costmap.resolution
    cells = [(int(p[0] // res), int(p[1] // res)) for p in path]
    total = 0.0
    for a, b in zip(cells, cells[1:]):
        dx, dy = abs(b[0] - a[0]), abs(b[1] - a[1])
        if dx == 0 and dy == 0:
            continue
        assert dx <= 1 and dy <= 1, "path is not 8-connected"
        step = res * (math.sqrt(2) if dx and dy else 1.0)
        total += step * (1.0 + costmap.costs[b[1], b[0]] / FREE_MAX)
    return total


class TestInflation:
    def test_zero_radius(self, room):
        cm = inflate_costmap(room, 0.0)
        assert np.array_equal(cm.costs == LETHAL, room.occupancy)
        # free cell adjacent to the wall is not lethal
        assert cm.costs[1, 1] < INSCRIBED

    def test_within_radius_is_inscribed(self, room):
        cm = inflate_costmap(room, 0.3)
        # cell center 0.1 m from a wall cell center (inside radius)
        assert cm.costs[1, 5] == INSCRIBED

    def test_disc_matches_brute_force(self):
        world = make_world(["#######",
                            "#.....#",
                            "#.....#",
                            "#..#..#",
                            "#.....#",
                            "#.....#",
                            "#######"])
        cm = inflate_costmap(world, 0.3, decay=5.0)
        dist = brute_force_distances(world)
        expect = np.floor(FREE_MAX * np.exp(-5.0 * (dist - 0.3)))
        expect = np.where(dist <= 0.3, INSCRIBED, expect)
        expect[world.occupancy] = LETHAL
        assert np.array_equal(cm.costs, expect.astype(np.uint8))

    def test_monotone_in_distance(self):
        world = make_world(["########",
                            "#......#",
                            "#..#...#",
                            "#......#",
                            "#....#.#",
                            "#......#",
                            "########"])
        cm = inflate_costmap(world, 0.25)
        dist = brute_force_distances(world)
        order = np.argsort(dist.ravel())
        sd = dist.ravel()[order]
        sc = cm.costs.ravel().astype(int)[order]
        for i in range(1, len(sd)):
            if sd[i] > sd[i - 1]:
                assert sc[i] <= sc[i - 1]

    def test_negative_radius_rejected(self, room):
        with pytest.raises(InvalidInputError):
            inflate_costmap(room, -0.1)


class TestDijkstra:
    def test_start_equals_goal(self, room):
        cm = inflate_costmap(room, 0.2)
        path = plan_global(cm, (5.0, 5.0), (5.0, 5.0))
        assert len(path) == 1
        assert tuple(path[0]) == (5.0, 5.0)

    def test_free_space_straight(self, room):
        cm = inflate_costmap(room, 0.0)
        path = plan_global(cm, (2.0, 5.0), (7.0, 5.0))
        length = np.hypot(*np.diff(path, axis=0).T).sum()
        assert length == pytest.approx(5.0, abs=2 * math.sqrt(2) * room.resolution)
        assert tuple(path[-1]) == (7.0, 5.0)

    def test_u_wall_matches_bellman_ford(self):
        rows = ["############",
                "#..........#",
                "#...####...#",
                "#......#...#",
                "#...####...#",
                "#..........#",
                "############"]
        world = make_world(rows, resolution=0.5)
        cm = inflate_costmap(world, 0.4)
        start, goal = (2.25, 1.75), (3.6, 2.6)
        planner = GlobalPlanner(cm, goal)
        got = planner.cost_from(start)
        start_cell = (int(start[0] // 0.5), int(start[1] // 0.5))
        goal_cell = (int(goal[0] // 0.5), int(goal[1] // 0.5))
        expect = bellman_ford_cost(cm, start_cell, goal_cell)
        assert got == pytest.approx(expect, abs=1e-9)
        # ... and the returned polyline actually realizes that cost
        assert path_cost(cm, planner.path_from(start)) == pytest.approx(expect, abs=1e-9)

    def test_random_grids_match_bellman_ford(self):
        rng = np.random.default_rng(7)
        for trial in range(6):
            h, w = rng.integers(6, 14, size=2)
            occ = rng.random((h, w)) < 0.25
            occ[0, :] = occ[-1, :] = True
            occ[:, 0] = occ[:, -1] = True
            free = np.argwhere(~occ)
            if len(free) < 2:
                continue
            world_rows = ["".join("#" if c else "." for c in row) for row in occ[::-1]]
            world = make_world(world_rows, resolution=0.5)
            cm = inflate_costmap(world, 0.0)
            sy, sx = free[0]
            gy, gx = free[-1]
            start = ((sx + 0.5) * 0.5, (sy + 0.5) * 0.5)
            goal = ((gx + 0.5) * 0.5, (gy + 0.5) * 0.5)
            expect = bellman_ford_cost(cm, (sx, sy), (gx, gy))
            if not np.isfinite(expect):
                with pytest.raises(UnreachableError):
                    plan_global(cm, start, goal)
                continue
            planner = GlobalPlanner(cm, goal)
            assert planner.cost_from(start) == pytest.approx(expect, abs=1e-9)

    def test_unreachable_vs_invalid(self):
        rows = ["#######",
                "#..#..#",
                "#..#..#",
                "#######"]
        world = make_world(rows, resolution=0.5)
        cm = inflate_costmap(world, 0.0)
        with pytest.raises(UnreachableError):
            plan_global(cm, (0.75, 0.75), (2.75, 0.75))
        with pytest.raises(InvalidInputError):
            plan_global(cm, (1.75, 0.75), (2.75, 0.75))  # start inside the wall

    def test_compress_collinear_preserves_ends(self):
        path = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [2.0, 2.0]])
        c = compress_collinear(path)
        assert tuple(c[0]) == (0.0, 0.0)
        assert tuple(c[-1]) == (2.0, 2.0)
        assert len(c) == 3
