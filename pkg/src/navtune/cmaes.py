"""Covariance matrix adaptation evolution strategy over a unit box.

Standard (mu/mu_w, lambda) CMA-ES with rank-one and rank-mu covariance
updates and cumulative step-size adaptation. The search itself is
unconstrained; candidates are clipped into [0, 1]^n only for evaluation, and
the best-ever record keeps the clipped (i.e. actually evaluated) point.

Candidate losses within a generation may be evaluated concurrently; results
are collected by candidate index and ranked by (loss, index), so the outcome
is bit-identical for any evaluator thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class OptConfig:
    population: int = 12
    max_generations: int = 150
    sigma0: float = 0.3  # initial step as a fraction of the box width
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.population < 4:
            raise InvalidInputError("population must be >= 4")
        if not 0.0 < self.sigma0 <= 0.5:
            raise InvalidInputError("sigma0 must lie in (0, 0.5]")


@dataclass(eq=False)
class OptResult:
    best_u: np.ndarray  # clipped unit-box coordinates of the best candidate
    best_loss: float
    history: list[tuple[int, float, float, float]]  # (gen, best, mean, sigma)
    evaluations: int


def history_csv(result: OptResult) -> str:
    lines = ["generation,best,mean,sigma"]
    for gen, best, mean, sigma in result.history:
        lines.append(f"{gen},{best!r},{mean!r},{sigma!r}")
    return "\n".join(lines) + "\n"


def minimize(objective, dim: int, cfg: OptConfig = OptConfig()) -> OptResult:
    """Minimize objective(u) for u in [0,1]^dim starting from the box center.

    Non-finite losses are treated as +inf and the search continues.
    """
    lam = cfg.population
    mu = lam // 2
    raw_w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    weights = raw_w / raw_w.sum()
    mu_eff = 1.0 / (weights**2).sum()

    n = dim
    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n**2))

    rng = np.random.default_rng(cfg.seed)
    mean = np.full(n, 0.5)
    sigma = cfg.sigma0  # box width is 1
    cov = np.eye(n)
    p_sigma = np.zeros(n)
    p_c = np.zeros(n)

    best_u = mean.copy()
    best_loss = math.inf
    history = []
    evals = 0

    def eval_all(cands: np.ndarray) -> np.ndarray:
        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
                losses = list(pool.map(objective, list(cands)))
        else:
            losses = [objective(c) for c in cands]
        arr = np.array([float(v) for v in losses])
        arr[~np.isfinite(arr)] = math.inf
        return arr

    for gen in range(cfg.max_generations):
        cov = (cov + cov.T) / 2.0
        eigvals, eigvecs = np.linalg.eigh(cov)
        eigvals = np.maximum(eigvals, 1e-20)
        d = np.sqrt(eigvals)
        bd = eigvecs * d  # B @ diag(d)
        inv_sqrt = (eigvecs / d) @ eigvecs.T

        z = rng.standard_normal((lam, n))
        y = z @ bd.T
        x = mean + sigma * y
        clipped = np.clip(x, 0.0, 1.0)
        losses = eval_all(clipped)
        evals += lam

        order = np.lexsort((np.arange(lam), losses))
        if losses[order[0]] < best_loss:
            best_loss = float(losses[order[0]])
            best_u = clipped[order[0]].copy()
        finite = losses[np.isfinite(losses)]
        history.append((gen, float(losses[order[0]]),
                        float(finite.mean()) if len(finite) else math.inf, float(sigma)))

        y_sel = y[order[:mu]]
        y_w = weights @ y_sel
        mean = mean + sigma * y_w

        p_sigma = (1.0 - c_sigma) * p_sigma + math.sqrt(
            c_sigma * (2.0 - c_sigma) * mu_eff) * (inv_sqrt @ y_w)
        norm_ps = float(np.linalg.norm(p_sigma))
        h_sigma = norm_ps / math.sqrt(
            1.0 - (1.0 - c_sigma) ** (2 * (gen + 1))) < (1.4 + 2.0 / (n + 1.0)) * chi_n
        p_c = (1.0 - c_c) * p_c + (math.sqrt(c_c * (2.0 - c_c) * mu_eff) * y_w
                                   if h_sigma else 0.0)

        delta_h = (1.0 - (1.0 if h_sigma else 0.0)) * c_c * (2.0 - c_c)
        rank_mu = (y_sel.T * weights) @ y_sel
        cov = ((1.0 + c_1 * delta_h - c_1 - c_mu) * cov
               + c_1 * np.outer(p_c, p_c) + c_mu * rank_mu)
        sigma *= math.exp((c_sigma / d_sigma) * (norm_ps / chi_n - 1.0))
        sigma = min(sigma, 1e3)

    return OptResult(best_u, best_loss, history, evals)
