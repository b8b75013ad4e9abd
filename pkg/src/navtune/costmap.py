"""Costmap inflation and grid Dijkstra global planning.

Cost convention (one byte per cell): 254 marks an obstacle, 253 marks free
space within the inflation radius of one, and everything farther decays
exponentially from 252. Cells at cost >= 253 are lethal for planning.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import InvalidInputError, UnreachableError
from .world import WorldMap

LETHAL = 254
INSCRIBED = 253
FREE_MAX = 252


@dataclass(eq=False)
class Costmap:
    costs: np.ndarray  # uint8 grid, same shape as the world occupancy
    resolution: float

    def lethal_mask(self) -> np.ndarray:
        return self.costs >= INSCRIBED

    def cost_at(self, x: float, y: float) -> int:
        cx = int(math.floor(x / self.resolution))
        cy = int(math.floor(y / self.resolution))
        h, w = self.costs.shape
        if not (0 <= cx < w and 0 <= cy < h):
            return LETHAL
        return int(self.costs[cy, cx])


def inflate_costmap(world: WorldMap, inflation_radius: float, decay: float = 5.0) -> Costmap:
    """Inflate obstacles: occupied cells cost 254, free cells within
    inflation_radius of an occupied cell cost 253, and beyond that
    floor(252 * exp(-decay * (d - inflation_radius)))."""
    if inflation_radius < 0:
        raise InvalidInputError("inflation_radius must be >= 0")
    occ = world.occupancy
    # Euclidean distance (in meters) from each cell center to the nearest
    # occupied cell center.
    dist = distance_transform_edt(~occ) * world.resolution
    beyond = np.floor(FREE_MAX * np.exp(-decay * (dist - inflation_radius)))
    costs = np.where(dist <= inflation_radius, INSCRIBED, beyond)
    costs[occ] = LETHAL
    return Costmap(costs.astype(np.uint8), world.resolution)


# 8-connected neighborhood and step lengths in cells
_NBR = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
_SQRT2 = math.sqrt(2.0)


class GlobalPlanner:
    """Single-goal Dijkstra over the inflated grid with cached results.

    Edge weight for entering a cell is step_length * (1 + cost/252), where
    step_length is resolution or sqrt(2)*resolution. The search runs rooted
    at the goal over reversed edges, so one pass answers path queries from
    any start; ties break on (cost, row-major cell index).
    """

    def __init__(self, costmap: Costmap, goal: tuple[float, float]):
        self.costmap = costmap
        self.goal = goal
        self.res = costmap.resolution
        h, w = costmap.costs.shape
        self._shape = (h, w)
        gx = int(math.floor(goal[0] / self.res))
        gy = int(math.floor(goal[1] / self.res))
        if not (0 <= gx < w and 0 <= gy < h):
            raise InvalidInputError(f"goal {goal} outside map")
        if costmap.costs[gy, gx] >= INSCRIBED:
            raise InvalidInputError(f"goal {goal} lies in a lethal cell")
        self._goal_cell = (gx, gy)
        self._dist, self._next = self._search(gx, gy)

    def _search(self, gx: int, gy: int):
        h, w = self._shape
        costs = self.costmap.costs.astype(np.float64)
        lethal = self.costmap.lethal_mask()
        dist = np.full((h, w), np.inf)
        nxt = np.full((h, w), -1, dtype=np.int64)  # row-major index of successor
        dist[gy, gx] = 0.0
        heap = [(0.0, gy * w + gx)]
        pop = heapq.heappop
        push = heapq.heappush
        while heap:
            d, idx = pop(heap)
            cy, cx = divmod(idx, w)
            if d > dist[cy, cx]:
                continue
            for dx, dy in _NBR:
                nx, ny = cx + dx, cy + dy
                if not (0 <= nx < w and 0 <= ny < h) or lethal[ny, nx]:
                    continue
                step = self.res * (_SQRT2 if dx and dy else 1.0)
                # reversed edge: moving from (nx,ny) to (cx,cy) enters (cx,cy)
                nd = d + step * (1.0 + costs[cy, cx] / FREE_MAX)
                if nd < dist[ny, nx]:
                    dist[ny, nx] = nd
                    nxt[ny, nx] = idx
                    push(heap, (nd, ny * w + nx))
        return dist, nxt

    def cost_from(self, start: tuple[float, float]) -> float:
        cx = int(math.floor(start[0] / self.res))
        cy = int(math.floor(start[1] / self.res))
        return float(self._dist[cy, cx])

    def path_from(self, start: tuple[float, float], snap_radius: float = 0.0) -> np.ndarray:
        """Waypoint polyline of cell centers from start's cell to the goal.

        When snap_radius > 0 and the start cell has no route (e.g. it turned
        lethal after a parameter switch), the nearest routed cell within that
        radius is used as the path head instead.
        """
        h, w = self._shape
        cx = int(math.floor(start[0] / self.res))
        cy = int(math.floor(start[1] / self.res))
        if not (0 <= cx < w and 0 <= cy < h):
            raise InvalidInputError(f"start {start} outside map")
        if not np.isfinite(self._dist[cy, cx]):
            if snap_radius > 0:
                snapped = self._nearest_routed(cx, cy, snap_radius)
                if snapped is None:
                    raise UnreachableError(f"no route from {start} to {self.goal}")
                cx, cy = snapped
            else:
                if self.costmap.costs[cy, cx] >= INSCRIBED:
                    raise InvalidInputError(f"start {start} lies in a lethal cell")
                raise UnreachableError(f"no route from {start} to {self.goal}")
        pts = []
        idx = cy * w + cx
        while idx != -1:
            iy, ix = divmod(idx, w)
            pts.append(((ix + 0.5) * self.res, (iy + 0.5) * self.res))
            if (ix, iy) == self._goal_cell:
                break
            idx = self._next[iy, ix]
        path = np.array(pts)
        # snap the final waypoint onto the exact goal coordinates
        path[-1] = self.goal
        return path

    def _nearest_routed(self, cx: int, cy: int, radius_m: float):
        h, w = self._shape
        r = int(math.ceil(radius_m / self.res))
        best = None
        best_key = None
        for ny in range(max(0, cy - r), min(h, cy + r + 1)):
            for nx in range(max(0, cx - r), min(w, cx + r + 1)):
                if not np.isfinite(self._dist[ny, nx]):
                    continue
                d2 = (nx - cx) ** 2 + (ny - cy) ** 2
                if d2 * self.res**2 > radius_m**2:
                    continue
                key = (d2, ny * w + nx)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (nx, ny)
        return best


def plan_global(
    costmap: Costmap, start: tuple[float, float], goal: tuple[float, float]
) -> np.ndarray:
    """One-shot minimal-cost path between two points as a waypoint polyline.

    Raises InvalidInputError when either endpoint is lethal and
    UnreachableError when no path exists.
    """
    sx = int(math.floor(start[0] / costmap.resolution))
    sy = int(math.floor(start[1] / costmap.resolution))
    h, w = costmap.costs.shape
    if not (0 <= sx < w and 0 <= sy < h):
        raise InvalidInputError(f"start {start} outside map")
    if costmap.costs[sy, sx] >= INSCRIBED:
        raise InvalidInputError(f"start {start} lies in a lethal cell")
    planner = GlobalPlanner(costmap, goal)
    if (sx, sy) == planner._goal_cell:
        return np.array([goal])
    return planner.path_from(start)


def compress_collinear(path: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Drop interior waypoints that lie on the segment between their
    neighbors; the polyline geometry is unchanged."""
    if len(path) <= 2:
        return path
    keep = [0]
    for i in range(1, len(path) - 1):
        a = path[keep[-1]]
        b = path[i]
        c = path[i + 1]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) > tol:
            keep.append(i)
    keep.append(len(path) - 1)
    return path[keep]
