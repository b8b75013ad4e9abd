"""Open-loop planner replay, action matching, and the behavior-cloning loss.

The recorded states are fed to the planner at its own control period; each
demonstrated action is then paired with the most recent planner output within
the past eps seconds, or with (0, 0) when none exists (the robot halts when
starved of commands). The loss is the H-weighted mean squared difference over
those pairs, a deterministic function of the parameter vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costmap import GlobalPlanner, inflate_costmap
from .demo import Demonstration
from .dwa import BudgetModel, PlannerParams, PlannerState, plan_once
from .errors import InvalidInputError, UnreachableError
from .world import Action, SimConfig, WorldMap

DEFAULT_EPS_S = 0.25


@dataclass(frozen=True)
class LossWeights:
    """Diagonal action-space metric; identity reproduces plain MSE."""

    h_v: float = 1.0
    h_w: float = 1.0

    def __post_init__(self):
        if self.h_v <= 0 or self.h_w <= 0:
            raise InvalidInputError("loss weights must be positive")


@dataclass(frozen=True)
class MatchedPair:
    t: float
    a_demo: Action
    a_planner: Action
    zero_filled: bool


@dataclass(eq=False)
class MatchedDataset:
    pairs: list[MatchedPair]
    eps: float

    @property
    def zero_fill_count(self) -> int:
        return sum(p.zero_filled for p in self.pairs)

    def loss(self, weights: LossWeights = LossWeights()) -> float:
        dv = np.array([p.a_demo.v - p.a_planner.v for p in self.pairs])
        dw = np.array([p.a_demo.w - p.a_planner.w for p in self.pairs])
        return float((weights.h_v * dv * dv + weights.h_w * dw * dw).mean())


def planner_outputs(world: WorldMap, segment: Demonstration, params: PlannerParams,
                    cfg: SimConfig, budget_s: float | None = None,
                    budget_model: BudgetModel | None = None) -> list[tuple[float, Action]]:
    """Query the planner on the recorded states at its control period.

    Returns (timestamp, action) pairs; missed cycles (compute budget) and
    failed planning cycles (no route under these parameters) yield no entry,
    exactly like a planner that published nothing that cycle.
    """
    if segment.scan_config != cfg.scan:
        raise InvalidInputError("scan geometry of demonstration does not match planner config")
    if budget_s is None:
        budget_s = cfg.control_period
    model = budget_model or BudgetModel()

    costmap = inflate_costmap(world, params.inflation_radius)
    planners: dict[tuple[float, float], GlobalPlanner | None] = {}
    outputs: list[tuple[float, Action]] = []
    next_invoke = segment.records[0].t
    for rec in segment.records:
        if rec.t < next_invoke - 1e-9:
            continue
        next_invoke += cfg.control_period * math.ceil(
            (rec.t - next_invoke + 1e-9) / cfg.control_period + 1e-12)
        goal = rec.goal
        if goal not in planners:
            try:
                planners[goal] = GlobalPlanner(costmap, goal)
            except InvalidInputError:
                planners[goal] = None
        planner = planners[goal]
        if planner is None:
            continue
        try:
            path = planner.path_from((rec.robot.x, rec.robot.y))
        except (UnreachableError, InvalidInputError):
            continue
        state = PlannerState(rec.robot, rec.scan, goal, path)
        result = plan_once(state, params, cfg, costmap,
                           budget_s=budget_s, budget_model=model)
        if result.missed:
            continue
        outputs.append((rec.t, result.action))
    return outputs


def match_actions(segment: Demonstration, outputs: list[tuple[float, Action]],
                  eps: float = DEFAULT_EPS_S) -> MatchedDataset:
    """Pair every record with the most recent output in [t - eps, t]."""
    pairs = []
    j = -1
    for rec in segment.records:
        while j + 1 < len(outputs) and outputs[j + 1][0] <= rec.t + 1e-12:
            j += 1
        if j >= 0 and outputs[j][0] >= rec.t - eps - 1e-12:
            pairs.append(MatchedPair(rec.t, rec.action, outputs[j][1], False))
        else:
            pairs.append(MatchedPair(rec.t, rec.action, Action(0.0, 0.0), True))
    return MatchedDataset(pairs, eps)


def replay_planner(world: WorldMap, segment: Demonstration, params: PlannerParams,
                   cfg: SimConfig, eps: float = DEFAULT_EPS_S,
                   budget_s: float | None = None,
                   budget_model: BudgetModel | None = None) -> MatchedDataset:
    if len(segment.records) == 0:
        raise InvalidInputError("empty segment")
    outputs = planner_outputs(world, segment, params, cfg, budget_s, budget_model)
    return match_actions(segment, outputs, eps)


def bc_loss(world: WorldMap, segment: Demonstration, params: PlannerParams,
            cfg: SimConfig, weights: LossWeights = LossWeights(),
            eps: float = DEFAULT_EPS_S, budget_s: float | None = None,
            budget_model: BudgetModel | None = None) -> float:
    """Mean (a_demo - a_planner)^T H (a_demo - a_planner) over matched pairs."""
    return replay_planner(world, segment, params, cfg, eps, budget_s,
                          budget_model).loss(weights)
