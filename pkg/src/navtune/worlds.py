"""Built-in test worlds and the scripted demonstrator.

The flagship world is a 24 m x 5 m strip traversed left to right through four
qualitatively different areas: a wide winding passage, a pillar field, a
tight wavy corridor, and open space. Region transitions are sealed by short
free-standing screen walls so a scan never reaches deep into the neighboring
area, and every wall carries random single-cell texture; together with the
demonstrator's command dither this keeps each region's scan statistics
noisy-stationary instead of smoothly trending, which is what makes the
recording segmentable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costmap import GlobalPlanner, inflate_costmap
from .demo import DemoRecord, Demonstration
from .errors import SimulationError
from .world import (Action, RobotState, SimConfig, WorldMap,
                    check_collision, raycast_scan, step_dynamics, wrap_angle)

MAZE_RES = 0.1
MAZE_W_M = 28.5
MAZE_H_M = 5.0

# region bands along x, in meters: [start, end), plus a speed for the
# scripted demonstrator. Regions are ordered so that adjacent areas have
# similar scan statistics (tight -> winding -> cluttered -> open); the
# demonstrator's speed rises monotonically along the route.
REGIONS = (
    ("curve", 0.0, 6.1, 0.5),
    ("obstacle", 6.1, 14.55, 0.8),
    ("corridor", 14.55, 17.9, 0.36),
    ("open", 17.9, 28.5, 1.0),
)

_CURVE_AMP = 0.12
_CURVE_PERIOD = 1.4
_CURVE_HALF_WIDTH = 0.65
_CURVE_CREN = 0.7
_CORRIDOR_AMP = 0.07
_CORRIDOR_PERIOD = 2.7 / 3.0
_CORRIDOR_HALF_WIDTH = 0.35
_CORRIDOR_CREN = 2.7 / 3.0
_CORRIDOR_CHANNEL_END = 17.25
# guide blocks shepherding the lane just past the corridor channel exit
_EXIT_BLOCKS = [(17.45, 1.8), (17.45, 3.1), (17.75, 1.15), (17.75, 3.75)]
_PILLARS = [  # center x, center y (sizes are randomized at build time)
    (6.7, 1.0), (6.7, 2.5), (6.7, 4.0),
    (7.55, 1.5), (7.55, 3.4),
    (8.4, 1.0), (8.4, 2.5), (8.4, 4.0),
    (9.25, 1.5), (9.25, 3.4),
    (10.1, 1.0), (10.1, 2.5), (10.1, 4.0),
    (10.95, 1.5), (10.95, 3.4),
    (11.8, 1.0), (11.8, 2.5), (11.8, 4.0),
    (12.65, 1.5), (12.65, 3.4),
    (13.5, 1.0), (13.5, 2.5), (13.5, 4.0),
]
# sparse posts flanking the open-space lane: the scan keeps flickering out
# there instead of collapsing to a constant max-range frame
_POSTS = [(18.9, 3.15), (20.3, 1.85), (21.7, 3.15), (23.1, 1.85),
          (24.5, 3.15), (25.9, 1.85)]


def curve_centerline(x: float) -> float:
    return 2.5 + _CURVE_AMP * math.sin(2.0 * math.pi * x / _CURVE_PERIOD)


def corridor_centerline(x: float) -> float:
    return 2.45 + _CORRIDOR_AMP * math.sin(
        2.0 * math.pi * (x - REGIONS[2][1]) / _CORRIDOR_PERIOD)


def region_of(x: float) -> int:
    """1-based region index for an x position."""
    for i, (_, lo, hi, _) in enumerate(REGIONS, start=1):
        if lo <= x < hi:
            return i
    return len(REGIONS)


def region_speed(x: float) -> float:
    return REGIONS[region_of(x) - 1][3]


def _crenellation(xs: np.ndarray, period_m: float, depth_m: float,
                  phase: float = 0.0) -> np.ndarray:
    """Square-wave wall relief: alternating pockets of the given depth.

    Strictly periodic on purpose: random relief fields put low-frequency
    power into the scan statistics (the scan spatially averages geometry
    over its range aperture), which reads as within-region drift. A periodic
    pattern shorter than the minimum segment length is drift-free."""
    s = np.sin(2.0 * np.pi * xs / period_m + phase)
    return np.where(s > 0, depth_m, 0.0)


def four_region_maze(texture_seed: int = 7) -> WorldMap:
    """Build the maze: a winding passage, a pillar field, a tight wavy
    corridor, and open space with sparse posts, in that order. Channel walls
    carry periodic crenellation (pockets only, never pinches below the base
    width) so scans flicker below the segmenter's minimum segment scale."""
    w = int(round(MAZE_W_M / MAZE_RES))
    h = int(round(MAZE_H_M / MAZE_RES))
    occ = np.zeros((h, w), dtype=bool)
    xs = (np.arange(w) + 0.5) * MAZE_RES
    ys = (np.arange(h) + 0.5) * MAZE_RES
    rng = np.random.default_rng(texture_seed)

    # strip walls with crenellated faces toward the interior
    bot = _crenellation(xs, 0.9, 0.5)
    top = _crenellation(xs, 0.9, 0.5, phase=math.pi)
    occ |= ys[:, None] <= bot[None, :]
    occ |= ys[:, None] >= (MAZE_H_M - top)[None, :]

    # winding passage: fill the band, carve a crenellated channel
    curve_cols = xs < REGIONS[0][2]
    curve_c = 2.5 + _CURVE_AMP * np.sin(2.0 * np.pi * xs / _CURVE_PERIOD)
    lo_w = _CURVE_HALF_WIDTH + _crenellation(xs, _CURVE_CREN, 0.35)
    hi_w = _CURVE_HALF_WIDTH + _crenellation(xs, _CURVE_CREN, 0.35, phase=math.pi)
    dy = ys[:, None] - curve_c[None, :]
    wall = (dy < -lo_w[None, :]) | (dy > hi_w[None, :])
    occ[:, curve_cols] = wall[:, curve_cols]

    # tight wavy corridor: crenellated walls, staggered so the 0.7 m base
    # width always pinches somewhere nearby
    corr_cols = (xs >= REGIONS[2][1]) & (xs < _CORRIDOR_CHANNEL_END)
    corr_c = 2.45 + _CORRIDOR_AMP * np.sin(
        2.0 * np.pi * (xs - REGIONS[2][1]) / _CORRIDOR_PERIOD)
    lo_c = _CORRIDOR_HALF_WIDTH + _crenellation(xs, _CORRIDOR_CREN, 0.5)
    hi_c = _CORRIDOR_HALF_WIDTH + _crenellation(xs, _CORRIDOR_CREN, 0.5, phase=math.pi)
    dyc = ys[:, None] - corr_c[None, :]
    cwall = (dyc < -lo_c[None, :]) | (dyc > hi_c[None, :])
    occ[:, corr_cols] = cwall[:, corr_cols]

    # pillar field, exit guide blocks, open-space posts: randomized sizes
    for px, py in _PILLARS:
        half = float(rng.uniform(0.10, 0.22))
        cdx = np.abs(xs - px) <= half + 1e-9
        cdy = np.abs(ys - py) <= half + 1e-9
        occ[np.ix_(cdy, cdx)] = True
    for px, py in list(_POSTS) + list(_EXIT_BLOCKS):
        half = float(rng.uniform(0.08, 0.14))
        cdx = np.abs(xs - px) <= half + 1e-9
        cdy = np.abs(ys - py) <= half + 1e-9
        occ[np.ix_(cdy, cdx)] = True

    # closed boundary
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True

    poses = {
        "start_full": (1.1, 2.5, 0.0),
        "goal_full": (27.8, 2.5, 0.0),
        "start_curve": (1.1, 2.5, 0.0),
        "goal_curve": (6.35, 2.5, 0.0),
        "start_obstacle": (6.35, 2.5, 0.0),
        "goal_obstacle": (14.0, 2.45, 0.0),
        "start_corridor": (14.35, 2.45, 0.0),
        "goal_corridor": (18.4, 2.45, 0.0),
        "start_open": (18.4, 2.45, 0.0),
        "goal_open": (27.8, 2.5, 0.0),
    }
    # guarantee breathing room around every start/goal pose
    for px, py, _ in poses.values():
        cx, cy = int(px / MAZE_RES), int(py / MAZE_RES)
        occ[max(1, cy - 3):min(h - 1, cy + 4), max(1, cx - 3):min(w - 1, cx + 4)] = False
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    return WorldMap(w, h, MAZE_RES, occ, poses)


def route_poses(world: WorldMap, route: str):
    try:
        start = world.poses[f"start_{route}"]
        goal = world.poses[f"goal_{route}"]
    except KeyError:
        raise SimulationError(f"world has no route named {route!r}")
    return start, (goal[0], goal[1])


def corridor_world(length_m: float = 8.0, width_m: float = 1.5,
                   resolution: float = 0.1) -> WorldMap:
    """Straight corridor along +x with start/goal poses at either end."""
    w = int(round(length_m / resolution))
    h = int(round(width_m / resolution)) + 2
    occ = np.zeros((h, w), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    mid = h * resolution / 2.0
    poses = {
        "start_full": (0.5, mid, 0.0),
        "goal_full": (length_m - 0.5, mid, 0.0),
    }
    return WorldMap(w, h, resolution, occ, poses)


def empty_room(size_m: float = 10.0, resolution: float = 0.1) -> WorldMap:
    n = int(round(size_m / resolution))
    occ = np.zeros((n, n), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    mid = size_m / 2.0
    return WorldMap(n, n, resolution, occ, {"start_full": (mid, mid, 0.0),
                                            "goal_full": (size_m - 1.0, mid, 0.0)})


BUILTIN_WORLDS = {
    "maze4": four_region_maze,
    "corridor": corridor_world,
    "room": empty_room,
}


@dataclass(frozen=True)
class OracleConfig:
    lookahead_m: float = 0.6
    steer_gain: float = 2.5
    goal_radius_m: float = 0.3
    max_duration_s: float = 150.0
    # the demonstrator plans against a lightly inflated map of its own;
    # it stands in for a human who can see the whole maze
    plan_inflation_m: float = 0.30
    # human-like command dither; without it the per-region feature streams
    # are too smooth to look piecewise-stationary to the segmenter. Steering
    # dither scales up at low speeds (tight areas get many micro-corrections).
    v_noise: float = 0.06
    w_noise: float = 0.26
    w_noise_slow_gain: float = 1.8
    # lateral wander: the demonstrator drifts off the reference line and back
    # on a ~1 s timescale, like a human eyeballing a lane. Amplitude shrinks
    # with the local channel (full in the open, nearly none in the corridor).
    wander_sigma_m: float = 0.13
    wander_tau_s: float = 1.2
    seed: int = 0

    def w_noise_at(self, speed: float) -> float:
        return self.w_noise * min(self.w_noise_slow_gain, max(1.0, 0.55 / speed))


class PursuitDemonstrator:
    """Scripted stand-in for a human driver: follows a precomputed reference
    path with pure-pursuit steering at the region-specific target speed, plus
    seeded command dither."""

    # per-region lateral wander scale (fraction of wander_sigma_m)
    _WANDER_SCALE = (0.35, 0.2, 0.1, 0.9)

    def __init__(self, world: WorldMap, start, goal, cfg: OracleConfig = OracleConfig()):
        self.cfg = cfg
        self.goal = goal
        costmap = inflate_costmap(world, cfg.plan_inflation_m)
        self.path = GlobalPlanner(costmap, goal).path_from((start[0], start[1]))
        self.rng = np.random.default_rng(cfg.seed)
        self._wander = 0.0
        self._dt = 0.05

    def action_for(self, state: RobotState, w_cap: float) -> Action:
        d = np.hypot(self.path[:, 0] - state.x, self.path[:, 1] - state.y)
        nearest = int(np.argmin(d))
        # speed-scaled lookahead: long when cruising, short in tight bends
        lookahead = min(self.cfg.lookahead_m, max(0.2, 0.45 * region_speed(state.x)))
        ti = len(self.path) - 1
        for j in range(nearest, len(self.path)):
            if d[j] >= lookahead:
                ti = j
                break
        # Ornstein-Uhlenbeck lateral wander applied perpendicular to the path
        tau = self.cfg.wander_tau_s
        self._wander += (-self._wander / tau) * self._dt + self.cfg.wander_sigma_m \
            * math.sqrt(2.0 * self._dt / tau) * self.rng.standard_normal()
        scale = self._WANDER_SCALE[region_of(state.x) - 1]
        ahead = self.path[min(ti + 2, len(self.path) - 1)]
        behind = self.path[max(ti - 2, 0)]
        seg = ahead - behind
        norm = math.hypot(seg[0], seg[1]) or 1.0
        target = self.path[ti] + self._wander * scale * np.array(
            [-seg[1] / norm, seg[0] / norm])
        alpha = wrap_angle(math.atan2(target[1] - state.y, target[0] - state.x)
                           - state.heading)
        speed = region_speed(state.x)
        w = self.cfg.steer_gain * alpha \
            + self.cfg.w_noise_at(speed) * self.rng.standard_normal()
        v = speed + self.cfg.v_noise * self.rng.standard_normal()
        return Action(max(0.0, v), max(-w_cap, min(w_cap, w)))


def scripted_demo(world: WorldMap, sim_cfg: SimConfig,
                  start=None, goal=None,
                  oracle_cfg: OracleConfig = OracleConfig()) -> Demonstration:
    """Drive the maze route with the scripted demonstrator and record every
    tick, labeling each record with its ground-truth region."""
    if start is None or goal is None:
        start_pose, goal_xy = route_poses(world, "full")
        start = start if start is not None else start_pose
        goal = goal if goal is not None else goal_xy
    oracle = PursuitDemonstrator(world, start, goal, oracle_cfg)
    state = RobotState(start[0], start[1], start[2])
    records = []
    labels = []
    max_ticks = int(oracle_cfg.max_duration_s / sim_cfg.dt)
    for tick in range(max_ticks):
        scan = raycast_scan(world, state, sim_cfg.scan)
        cmd = oracle.action_for(state, sim_cfg.w_phys_max)
        records.append(DemoRecord(tick * sim_cfg.dt, state, goal, scan, cmd))
        labels.append(region_of(state.x))
        state = step_dynamics(state, cmd, sim_cfg)
        if check_collision(world, state, sim_cfg.footprint_radius):
            demo = Demonstration(records, "maze4", 1.0 / sim_cfg.dt, sim_cfg.scan,
                                 failed=True, truth_labels=labels)
            return demo
        if math.hypot(state.x - goal[0], state.y - goal[1]) <= oracle_cfg.goal_radius_m:
            break
    else:
        raise SimulationError("scripted demonstrator did not reach the goal in time")
    return Demonstration(records, "maze4", 1.0 / sim_cfg.dt, sim_cfg.scan,
                         truth_labels=labels)


def truth_boundaries(d: Demonstration) -> list[int]:
    """0-based record indices where the ground-truth region label changes."""
    if not d.truth_labels:
        return []
    out = []
    for i in range(1, len(d.truth_labels)):
        if d.truth_labels[i] != d.truth_labels[i - 1]:
            out.append(i)
    return out
