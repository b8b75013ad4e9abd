"""2D occupancy-grid world, differential-drive dynamics, and ray-cast LiDAR.

Worlds, robot states, and scans are plain immutable-by-convention values:
nothing in this module mutates its inputs, so instances can be shared freely
across threads for parallel rollouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, SimulationError

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    r = math.fmod(theta + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


@dataclass(eq=False)
class WorldMap:
    """Occupancy grid plus named poses. Boundary cells must be obstacles.

    occupancy[row, col] is True for obstacles; row 0 is the y=0 edge.
    """

    width_cells: int
    height_cells: int
    resolution: float
    occupancy: np.ndarray
    poses: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.width_cells <= 0 or self.height_cells <= 0:
            raise InvalidInputError("map dimensions must be positive")
        if self.resolution <= 0:
            raise InvalidInputError("resolution must be > 0")
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != (self.height_cells, self.width_cells):
            raise InvalidInputError(
                f"occupancy shape {occ.shape} does not match "
                f"{self.height_cells}x{self.width_cells}"
            )
        self.occupancy = occ
        if not (occ[0, :].all() and occ[-1, :].all() and occ[:, 0].all() and occ[:, -1].all()):
            raise InvalidInputError("map boundary must be fully occupied (closed world)")
        for label, (x, y, _) in self.poses.items():
            cx, cy = self.cell_of(x, y)
            if not self.in_bounds(cx, cy) or occ[cy, cx]:
                raise InvalidInputError(f"pose {label!r} at ({x}, {y}) is not in a free cell")

    @property
    def width_m(self) -> float:
        return self.width_cells * self.resolution

    @property
    def height_m(self) -> float:
        return self.height_cells * self.resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Grid cell (col, row) containing the metric point (x, y)."""
        return int(math.floor(x / self.resolution)), int(math.floor(y / self.resolution))

    def in_bounds(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.width_cells and 0 <= cy < self.height_cells

    def is_occupied(self, cx: int, cy: int) -> bool:
        return bool(self.occupancy[cy, cx])

    def occupied_centers(self) -> np.ndarray:
        """(N, 2) array of metric centers of all occupied cells."""
        rows, cols = np.nonzero(self.occupancy)
        return (np.stack([cols, rows], axis=1) + 0.5) * self.resolution

    def mirrored_y(self) -> "WorldMap":
        """World reflected about the horizontal centerline (y -> height - y)."""
        poses = {
            k: (x, self.height_m - y, wrap_angle(-th)) for k, (x, y, th) in self.poses.items()
        }
        return WorldMap(
            self.width_cells,
            self.height_cells,
            self.resolution,
            self.occupancy[::-1].copy(),
            poses,
        )


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float
    v: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class Action:
    v: float
    w: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.w)):
            raise InvalidInputError(f"action must be finite, got ({self.v}, {self.w})")


STOP = Action(0.0, 0.0)


@dataclass(frozen=True)
class ScanConfig:
    """Beam geometry. Beams are evenly spaced from angle_min to angle_max
    inclusive, expressed relative to the robot heading. The short default
    range keeps scan statistics local: long beams reach into neighboring
    areas and smear the per-area signature."""

    angle_min: float = -math.pi
    angle_max: float = math.pi
    beam_count: int = 16
    range_max: float = 1.0

    def angles(self) -> np.ndarray:
        if self.beam_count == 1:
            return np.array([self.angle_min])
        return np.linspace(self.angle_min, self.angle_max, self.beam_count)


@dataclass(frozen=True)
class LaserScan:
    angle_min: float
    angle_max: float
    beam_count: int
    range_max: float
    ranges: np.ndarray

    @property
    def config(self) -> ScanConfig:
        return ScanConfig(self.angle_min, self.angle_max, self.beam_count, self.range_max)


@dataclass(frozen=True)
class SimConfig:
    """Tick/actuation parameters. control_period must be a multiple of dt.

    accel and velocity limits here are physical platform caps, distinct from
    the planner's tunable velocity parameters which act as software caps.
    """

    dt: float = 0.05
    control_period: float = 0.10
    accel_lim_v: float = 2.0
    accel_lim_w: float = 4.0
    v_phys_max: float = 2.0
    w_phys_max: float = 3.2
    footprint_radius: float = 0.2
    scan: ScanConfig = field(default_factory=ScanConfig)

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidInputError("dt must be > 0")
        ratio = self.control_period / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise InvalidInputError("control_period must be a positive integer multiple of dt")

    @property
    def ticks_per_control(self) -> int:
        return int(round(self.control_period / self.dt))


def raycast_scan(world: WorldMap, state: RobotState, cfg: ScanConfig) -> LaserScan:
    """Cast one beam per configured angle using grid DDA traversal.

    Each range is the parametric distance at which the beam enters the first
    occupied cell (cell-boundary precision), clamped to range_max. Raises
    SimulationError when the robot pose is outside the map or inside an
    obstacle cell.
    """
    cx, cy = world.cell_of(state.x, state.y)
    if not world.in_bounds(cx, cy):
        raise SimulationError(f"robot pose ({state.x:.3f}, {state.y:.3f}) outside map")
    if world.is_occupied(cx, cy):
        raise SimulationError("robot pose inside an occupied cell")

    angles = state.heading + cfg.angles()
    dx = np.cos(angles)
    dy = np.sin(angles)
    n = angles.shape[0]
    res = world.resolution

    step_x = np.where(dx > 0, 1, -1)
    step_y = np.where(dy > 0, 1, -1)
    with np.errstate(divide="ignore"):
        t_delta_x = np.where(dx != 0, res / np.abs(dx), np.inf)
        t_delta_y = np.where(dy != 0, res / np.abs(dy), np.inf)

    # distance to the first vertical / horizontal cell boundary
    fx = state.x / res - cx
    fy = state.y / res - cy
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max_x = np.where(dx > 0, (1.0 - fx) * t_delta_x, fx * t_delta_x)
        t_max_x = np.where(dx == 0, np.inf, t_max_x)
        t_max_y = np.where(dy > 0, (1.0 - fy) * t_delta_y, fy * t_delta_y)
        t_max_y = np.where(dy == 0, np.inf, t_max_y)

    cur_x = np.full(n, cx, dtype=np.int64)
    cur_y = np.full(n, cy, dtype=np.int64)
    ranges = np.full(n, cfg.range_max)
    alive = np.ones(n, dtype=bool)

    # closed world: every beam terminates within the grid diagonal
    max_steps = world.width_cells + world.height_cells + 2
    for _ in range(max_steps):
        if not alive.any():
            break
        # advance each live beam across its nearest cell boundary (X wins ties)
        go_x = alive & (t_max_x <= t_max_y)
        go_y = alive & ~go_x
        t_entry = np.where(go_x, t_max_x, t_max_y)
        cur_x = np.where(go_x, cur_x + step_x, cur_x)
        cur_y = np.where(go_y, cur_y + step_y, cur_y)
        t_max_x = np.where(go_x, t_max_x + t_delta_x, t_max_x)
        t_max_y = np.where(go_y, t_max_y + t_delta_y, t_max_y)

        over = alive & (t_entry >= cfg.range_max)
        alive &= ~over

        inside = alive & (cur_x >= 0) & (cur_x < world.width_cells) \
            & (cur_y >= 0) & (cur_y < world.height_cells)
        hit = np.zeros(n, dtype=bool)
        hit[inside] = world.occupancy[cur_y[inside], cur_x[inside]]
        ranges = np.where(hit, t_entry, ranges)
        alive &= ~hit
        alive &= inside

    return LaserScan(cfg.angle_min, cfg.angle_max, cfg.beam_count, cfg.range_max, ranges)


def step_dynamics(state: RobotState, cmd: Action, cfg: SimConfig) -> RobotState:
    """Advance one tick: ramp velocities toward cmd under accel limits, clamp
    to physical caps, then integrate the pose with an exact arc."""
    dv = max(-cfg.accel_lim_v * cfg.dt, min(cfg.accel_lim_v * cfg.dt, cmd.v - state.v))
    dw = max(-cfg.accel_lim_w * cfg.dt, min(cfg.accel_lim_w * cfg.dt, cmd.w - state.w))
    v = max(-cfg.v_phys_max, min(cfg.v_phys_max, state.v + dv))
    w = max(-cfg.w_phys_max, min(cfg.w_phys_max, state.w + dw))

    th = state.heading
    if abs(w) > 1e-6:
        th2 = th + w * cfg.dt
        x = state.x + v / w * (math.sin(th2) - math.sin(th))
        y = state.y - v / w * (math.cos(th2) - math.cos(th))
    else:
        x = state.x + v * math.cos(th) * cfg.dt
        y = state.y + v * math.sin(th) * cfg.dt
        th2 = th + w * cfg.dt
    return RobotState(x, y, wrap_angle(th2), v, w)


def check_collision(world: WorldMap, state: RobotState, footprint_radius: float) -> bool:
    """True iff any occupied cell center lies within footprint_radius of the
    robot center."""
    res = world.resolution
    r_cells = int(math.ceil(footprint_radius / res)) + 1
    cx, cy = world.cell_of(state.x, state.y)
    x0 = max(0, cx - r_cells)
    x1 = min(world.width_cells, cx + r_cells + 1)
    y0 = max(0, cy - r_cells)
    y1 = min(world.height_cells, cy + r_cells + 1)
    occ = world.occupancy[y0:y1, x0:x1]
    if not occ.any():
        return False
    rows, cols = np.nonzero(occ)
    centers_x = (cols + x0 + 0.5) * res
    centers_y = (rows + y0 + 0.5) * res
    d2 = (centers_x - state.x) ** 2 + (centers_y - state.y) ** 2
    return bool((d2 <= footprint_radius**2).any())


def mirror_state_y(state: RobotState, world: WorldMap) -> RobotState:
    return replace(
        state, y=world.height_m - state.y, heading=wrap_angle(-state.heading), w=-state.w
    )


# --- world file format ------------------------------------------------------
#
# Line 1:  "<width_cells> <height_cells> <resolution>"
# Then height_cells rows of '#' (obstacle) / '.' (free), top row = max y.
# Then zero or more lines:  "pose <label> <x> <y> <theta>".
# Floats are written with repr() so a save/load cycle is bit-exact.


def save_world(world: WorldMap, path: str) -> None:
    lines = [f"{world.width_cells} {world.height_cells} {world.resolution!r}"]
    for row in range(world.height_cells - 1, -1, -1):
        lines.append("".join("#" if c else "." for c in world.occupancy[row]))
    for label in sorted(world.poses):
        x, y, th = world.poses[label]
        lines.append(f"pose {label} {x!r} {y!r} {th!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_world(path: str) -> WorldMap:
    with open(path) as f:
        raw = [ln.rstrip("\n") for ln in f]
    if not raw:
        raise InvalidInputError(f"{path}: empty world file")
    head = raw[0].split()
    if len(head) != 3:
        raise InvalidInputError(f"{path}: bad header {raw[0]!r}")
    w, h, res = int(head[0]), int(head[1]), float(head[2])
    if len(raw) < 1 + h:
        raise InvalidInputError(f"{path}: expected {h} grid rows")
    occ = np.zeros((h, w), dtype=bool)
    for i in range(h):
        line = raw[1 + i]
        if len(line) != w:
            raise InvalidInputError(f"{path}: row {i} has length {len(line)}, expected {w}")
        occ[h - 1 - i] = np.frombuffer(line.encode(), dtype=np.uint8) == ord("#")
    poses = {}
    for line in raw[1 + h:]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] != "pose" or len(parts) != 5:
            raise InvalidInputError(f"{path}: bad pose line {line!r}")
        poses[parts[1]] = (float(parts[2]), float(parts[3]), float(parts[4]))
    return WorldMap(w, h, res, occ, poses)
