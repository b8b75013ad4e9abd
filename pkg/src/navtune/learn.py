"""Per-context parameter search: behavior-cloning loss under CMA-ES."""

from __future__ import annotations

from dataclasses import dataclass

from .cloning import DEFAULT_EPS_S, LossWeights, bc_loss
from .cmaes import OptConfig, OptResult, minimize
from .demo import Demonstration
from .dwa import BudgetModel, PARAM_KEYS, ParamBounds, PlannerParams
from .errors import InvalidInputError
from .world import SimConfig, WorldMap


@dataclass(eq=False)
class ParamSearchResult:
    params: PlannerParams
    loss: float
    opt: OptResult


def optimize_params(world: WorldMap, segment: Demonstration, bounds: ParamBounds,
                    sim_cfg: SimConfig, opt_cfg: OptConfig = OptConfig(),
                    weights: LossWeights = LossWeights(), eps: float = DEFAULT_EPS_S,
                    budget_s: float | None = None,
                    budget_model: BudgetModel | None = None) -> ParamSearchResult:
    """Minimize the cloning loss for one demonstration slice over the bounded
    parameter box. The optimizer starts from the box midpoint and only ever
    sees unit-box vectors; this module is the single place where vectors are
    decoded into planner parameters."""

    def objective(u):
        p = bounds.decode(u)
        return bc_loss(world, segment, p, sim_cfg, weights, eps, budget_s, budget_model)

    res = minimize(objective, len(PARAM_KEYS), opt_cfg)
    return ParamSearchResult(bounds.decode(res.best_u), res.best_loss, res)


class ParamMap:
    """Total mapping from context id (1..K) to learned parameters."""

    def __init__(self, by_context: dict[int, PlannerParams]):
        k = len(by_context)
        if sorted(by_context) != list(range(1, k + 1)):
            raise InvalidInputError(f"contexts must be exactly 1..{k}, got {sorted(by_context)}")
        self._m = dict(by_context)

    @property
    def k(self) -> int:
        return len(self._m)

    def __getitem__(self, context: int) -> PlannerParams:
        if context not in self._m:
            raise InvalidInputError(f"unknown context {context}; have 1..{self.k}")
        return self._m[context]

    def items(self):
        return sorted(self._m.items())


def build_param_map(results: list[ParamSearchResult | PlannerParams]) -> ParamMap:
    """Assemble M(k) = params_k from per-context search results (one per
    context, ordered by context id)."""
    if not results:
        raise InvalidInputError("no per-context results")
    out = {}
    for i, r in enumerate(results, start=1):
        out[i] = r.params if isinstance(r, ParamSearchResult) else r
    return ParamMap(out)
