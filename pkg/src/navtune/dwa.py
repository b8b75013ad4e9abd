"""Sampling-based local planner over velocity space (dynamic window style).

This is the tunable black box of the whole system: eight knobs control the
velocity caps, the sampling density of the candidate grid, the three score
weights, and the costmap inflation radius. Everything downstream treats the
parameter vector as opaque; only this module converts between vectors and
named parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costmap import FREE_MAX, INSCRIBED, Costmap, compress_collinear
from .errors import InvalidInputError
from .world import Action, LaserScan, RobotState, SimConfig, STOP

ROLLOUT_HORIZON_S = 1.5
LOCAL_GOAL_RADIUS_M = 1.5

PARAM_KEYS = ("v", "w", "s", "t", "o", "p", "g", "i")
INT_KEYS = ("s", "t")

# counts planner self-check failures; tests assert it stays zero
SAFETY_VIOLATIONS = 0


@dataclass(frozen=True)
class PlannerParams:
    max_vel_x: float = 0.50
    max_vel_theta: float = 1.57
    vx_samples: int = 6
    vtheta_samples: int = 20
    occdist_scale: float = 0.10
    pdist_scale: float = 0.75
    gdist_scale: float = 1.00
    inflation_radius: float = 0.30

    def to_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_KEYS, (
            self.max_vel_x, self.max_vel_theta, float(self.vx_samples),
            float(self.vtheta_samples), self.occdist_scale, self.pdist_scale,
            self.gdist_scale, self.inflation_radius,
        )))

    @classmethod
    def from_dict(cls, d: dict[str, float]) -> "PlannerParams":
        missing = [k for k in PARAM_KEYS if k not in d]
        if missing:
            raise InvalidInputError(f"missing parameter keys: {missing}")
        return cls(
            max_vel_x=float(d["v"]), max_vel_theta=float(d["w"]),
            vx_samples=int(round(d["s"])), vtheta_samples=int(round(d["t"])),
            occdist_scale=float(d["o"]), pdist_scale=float(d["p"]),
            gdist_scale=float(d["g"]), inflation_radius=float(d["i"]),
        )


DEFAULT_PARAMS = PlannerParams()


@dataclass(frozen=True)
class ParamBounds:
    """Box bounds for the eight parameters, keyed by their short names."""

    lo: dict[str, float] = field(default_factory=lambda: {
        "v": 0.1, "w": 0.3, "s": 3, "t": 3, "o": 0.0, "p": 0.05, "g": 0.05, "i": 0.05,
    })
    hi: dict[str, float] = field(default_factory=lambda: {
        "v": 1.8, "w": 3.0, "s": 20, "t": 60, "o": 1.0, "p": 2.0, "g": 2.0, "i": 0.6,
    })

    def __post_init__(self):
        for k in PARAM_KEYS:
            if k not in self.lo or k not in self.hi:
                raise InvalidInputError(f"bounds missing key {k!r}")
            if not self.lo[k] < self.hi[k]:
                raise InvalidInputError(f"bounds for {k!r} need lo < hi")

    def decode(self, u: np.ndarray) -> PlannerParams:
        """Map a unit-box vector to parameters: clip to [0,1], affine-map to
        the box, and round the integer-valued sampling counts."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        if u.shape != (len(PARAM_KEYS),):
            raise InvalidInputError(f"expected {len(PARAM_KEYS)}-vector, got {u.shape}")
        vals = {}
        for i, k in enumerate(PARAM_KEYS):
            x = self.lo[k] + u[i] * (self.hi[k] - self.lo[k])
            vals[k] = round(x) if k in INT_KEYS else x
        p = PlannerParams.from_dict(vals)
        assert self.contains(p), "decoded parameters escaped their bounds"
        return p

    def encode(self, p: PlannerParams) -> np.ndarray:
        d = p.to_dict()
        return np.array([
            (d[k] - self.lo[k]) / (self.hi[k] - self.lo[k]) for k in PARAM_KEYS
        ])

    def midpoint(self) -> PlannerParams:
        return self.decode(np.full(len(PARAM_KEYS), 0.5))

    def contains(self, p: PlannerParams) -> bool:
        d = p.to_dict()
        return all(self.lo[k] - 1e-9 <= d[k] <= self.hi[k] + 1e-9 for k in PARAM_KEYS)


DEFAULT_BOUNDS = ParamBounds()


def save_bounds(b: ParamBounds, path: str) -> None:
    with open(path, "w") as f:
        for k in PARAM_KEYS:
            f.write(f"{k}_lo {b.lo[k]!r}\n{k}_hi {b.hi[k]!r}\n")


def load_bounds(path: str) -> ParamBounds:
    vals = {}
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            key, raw = line.split()
            vals[key] = float(raw)
    lo = {k: vals[f"{k}_lo"] for k in PARAM_KEYS if f"{k}_lo" in vals}
    hi = {k: vals[f"{k}_hi"] for k in PARAM_KEYS if f"{k}_hi" in vals}
    if set(lo) != set(PARAM_KEYS) or set(hi) != set(PARAM_KEYS):
        raise InvalidInputError(f"{path}: incomplete bounds file")
    return ParamBounds(lo, hi)


@dataclass(eq=False)
class PlannerState:
    """Input frame for one planning cycle."""

    robot: RobotState
    scan: LaserScan
    goal: tuple[float, float]
    global_path: np.ndarray | None  # (N, 2) waypoints, last one == goal


@dataclass(frozen=True)
class BudgetModel:
    """Simulated compute model: evaluating an s x t candidate grid over an
    n-step rollout costs s*t*n*cost_unit_s simulated seconds. When that
    exceeds the cycle budget the planner misses the cycle and emits nothing,
    the same failure mode as sampling too densely on a slow computer."""

    cost_unit_s: float = 2e-5

    def eval_time_s(self, params: PlannerParams, n_steps: int) -> float:
        return params.vx_samples * params.vtheta_samples * n_steps * self.cost_unit_s


@dataclass(frozen=True)
class DwaResult:
    action: Action
    missed: bool  # compute budget exceeded: no command this cycle
    blocked: bool  # every candidate rollout was lethal
    score: float = math.nan
    n_candidates: int = 0


def _axis_interval(cur: float, lo_box: float, hi_box: float, accel: float,
                   period: float) -> tuple[float, float]:
    lo = max(lo_box, cur - accel * period)
    hi = min(hi_box, cur + accel * period)
    if lo > hi:
        # current velocity is outside the box (e.g. the cap was just
        # lowered): collapse to the nearest box edge
        lo = hi = hi_box if cur > hi_box else lo_box
    return lo, hi


def _axis_window(cur: float, lo_box: float, hi_box: float, accel: float, period: float,
                 n: int) -> np.ndarray:
    lo, hi = _axis_interval(cur, lo_box, hi_box, accel, period)
    if n == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, n)


def candidate_window(robot: RobotState, params: PlannerParams,
                     cfg: SimConfig) -> tuple[float, float, float, float]:
    """Continuous candidate region (v_lo, v_hi, w_lo, w_hi): the dynamic
    window intersected with the parameter velocity box."""
    v_lo, v_hi = _axis_interval(robot.v, 0.0, params.max_vel_x,
                                cfg.accel_lim_v, cfg.control_period)
    w_lo, w_hi = _axis_interval(robot.w, -params.max_vel_theta, params.max_vel_theta,
                                cfg.accel_lim_w, cfg.control_period)
    return v_lo, v_hi, w_lo, w_hi


def rollout_points(robot: RobotState, v: np.ndarray, w: np.ndarray,
                   dt: float, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Constant-velocity arc rollouts for m candidates: (m, n) x and y."""
    k = np.arange(1, n_steps + 1) * dt
    th0 = robot.heading
    th = th0 + np.outer(w, k)  # (m, n)
    straight = np.abs(w) <= 1e-6
    w_safe = np.where(straight, 1.0, w)
    r = (v / w_safe)[:, None]
    x_arc = robot.x + r * (np.sin(th) - math.sin(th0))
    y_arc = robot.y - r * (np.cos(th) - math.cos(th0))
    x_str = robot.x + np.outer(v, k) * math.cos(th0)
    y_str = robot.y + np.outer(v, k) * math.sin(th0)
    x = np.where(straight[:, None], x_str, x_arc)
    y = np.where(straight[:, None], y_str, y_arc)
    return x, y


def _point_to_polyline_dist(px: np.ndarray, py: np.ndarray, path: np.ndarray) -> np.ndarray:
    """Distance from each point to a waypoint polyline; points flat (P,)."""
    if len(path) == 1:
        return np.hypot(px - path[0, 0], py - path[0, 1])
    a = path[:-1]  # (S, 2)
    d = path[1:] - a  # (S, 2)
    len2 = (d**2).sum(axis=1)
    len2 = np.where(len2 == 0, 1.0, len2)
    # (P, S) projections clamped to the segment
    tx = (px[:, None] - a[None, :, 0]) * d[None, :, 0]
    ty = (py[:, None] - a[None, :, 1]) * d[None, :, 1]
    t = np.clip((tx + ty) / len2[None, :], 0.0, 1.0)
    cx = a[None, :, 0] + t * d[None, :, 0]
    cy = a[None, :, 1] + t * d[None, :, 1]
    d2 = (px[:, None] - cx) ** 2 + (py[:, None] - cy) ** 2
    return np.sqrt(d2.min(axis=1))


def select_local_goal(robot: RobotState, path: np.ndarray,
                      radius: float = LOCAL_GOAL_RADIUS_M) -> np.ndarray:
    """The farthest-along waypoint within `radius` of the robot, or the
    nearest waypoint when the robot is far from the path."""
    d = np.hypot(path[:, 0] - robot.x, path[:, 1] - robot.y)
    near = np.nonzero(d <= radius)[0]
    if len(near):
        return path[near[-1]]
    return path[int(np.argmin(d))]


def plan_once(x: PlannerState, params: PlannerParams, cfg: SimConfig,
              costmap: Costmap, budget_s: float = math.inf,
              budget_model: BudgetModel | None = None,
              verify_safety: bool = True) -> DwaResult:
    """One planning cycle. Returns the chosen action plus diagnostics.

    Candidates are an s x t grid over the dynamic window intersected with
    [0, max_vel_x] x [-max_vel_theta, max_vel_theta]; the exact null pair
    (0, 0) is never scored, it is only the fallback when nothing survives.
    Each candidate is rolled out for ROLLOUT_HORIZON_S at constant velocity;
    rollouts that enter a lethal cell (outside the cell the robot already
    occupies) are discarded. Survivors score
        o * max_cell_cost/252 + p * max_path_deviation + g * endpoint_to_local_goal
    and the argmin wins. Ties break toward smaller |w|, then smaller v, then
    the final heading closest to the local-goal bearing (so a blocked robot
    rotates toward the path rather than away), then smaller w.
    """
    if x.global_path is None or len(x.global_path) == 0:
        raise InvalidInputError("planner state has no global path")
    n_steps = int(round(ROLLOUT_HORIZON_S / cfg.dt))
    model = budget_model or BudgetModel()
    if model.eval_time_s(params, n_steps) > budget_s:
        return DwaResult(STOP, missed=True, blocked=False)

    v_axis = _axis_window(x.robot.v, 0.0, params.max_vel_x, cfg.accel_lim_v,
                          cfg.control_period, params.vx_samples)
    w_axis = _axis_window(x.robot.w, -params.max_vel_theta, params.max_vel_theta,
                          cfg.accel_lim_w, cfg.control_period, params.vtheta_samples)
    vv, ww = np.meshgrid(v_axis, w_axis, indexing="ij")
    v = vv.ravel()
    w = ww.ravel()
    scored = (v != 0.0) | (w != 0.0)
    v = v[scored]
    w = w[scored]
    if len(v) == 0:
        return DwaResult(STOP, missed=False, blocked=True, n_candidates=0)

    rx, ry = rollout_points(x.robot, v, w, cfg.dt, n_steps)
    res = costmap.resolution
    h_cells, w_cells = costmap.costs.shape
    cx = np.floor(rx / res).astype(np.int64)
    cy = np.floor(ry / res).astype(np.int64)
    inside = (cx >= 0) & (cx < w_cells) & (cy >= 0) & (cy < h_cells)
    cell_cost = np.full(cx.shape, 255.0)
    cell_cost[inside] = costmap.costs[cy[inside], cx[inside]]

    start_cx = int(math.floor(x.robot.x / res))
    start_cy = int(math.floor(x.robot.y / res))
    outside_start = (cx != start_cx) | (cy != start_cy)
    lethal_hit = (cell_cost >= INSCRIBED) & outside_start
    feasible = ~lethal_hit.any(axis=1)
    if not feasible.any():
        return DwaResult(STOP, missed=False, blocked=True, n_candidates=len(v))

    local_goal = select_local_goal(x.robot, x.global_path)
    scoring_path = compress_collinear(x.global_path)

    idx = np.nonzero(feasible)[0]
    occ_cost = cell_cost[idx].max(axis=1) / FREE_MAX
    pd = _point_to_polyline_dist(rx[idx].ravel(), ry[idx].ravel(), scoring_path)
    path_dev = pd.reshape(len(idx), n_steps).max(axis=1)
    goal_dist = np.hypot(rx[idx, -1] - local_goal[0], ry[idx, -1] - local_goal[1])
    score = (params.occdist_scale * occ_cost + params.pdist_scale * path_dev
             + params.gdist_scale * goal_dist)

    best = score.min()
    tied = idx[score == best]
    end_heading = x.robot.heading + w[tied] * (n_steps * cfg.dt)
    bearing = np.arctan2(local_goal[1] - ry[tied, -1], local_goal[0] - rx[tied, -1])
    head_err = np.abs(np.arctan2(np.sin(bearing - end_heading),
                                 np.cos(bearing - end_heading)))
    order = np.lexsort((w[tied], head_err, v[tied], np.abs(w[tied])))
    winner = tied[order[0]]
    action = Action(float(v[winner]), float(w[winner]))

    if verify_safety and (action.v != 0.0 or action.w != 0.0):
        _assert_rollout_safe(x.robot, action, cfg, costmap, n_steps)
    return DwaResult(action, missed=False, blocked=False,
                     score=float(best), n_candidates=len(v))


def _assert_rollout_safe(robot: RobotState, action: Action, cfg: SimConfig,
                         costmap: Costmap, n_steps: int) -> None:
    """Independent re-check of the chosen candidate's rollout: apart from the
    robot's current cell, no rollout point may sit in a lethal cell."""
    global SAFETY_VIOLATIONS
    rx, ry = rollout_points(robot, np.array([action.v]), np.array([action.w]),
                            cfg.dt, n_steps)
    res = costmap.resolution
    start = (int(math.floor(robot.x / res)), int(math.floor(robot.y / res)))
    for px, py in zip(rx[0], ry[0]):
        c = (int(math.floor(px / res)), int(math.floor(py / res)))
        if c == start:
            continue
        if costmap.cost_at(px, py) >= INSCRIBED:
            SAFETY_VIOLATIONS += 1
            raise AssertionError(
                f"unsafe action {action} selected: rollout enters lethal cell {c}"
            )


def dwa_plan(x: PlannerState, params: PlannerParams, cfg: SimConfig,
             costmap: Costmap, budget_s: float = math.inf) -> Action:
    """The planner as a plain function: state in, action out. Returns (0, 0)
    when every candidate is blocked or the compute budget is exceeded."""
    return plan_once(x, params, cfg, costmap, budget_s=budget_s).action
