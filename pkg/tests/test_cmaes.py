import numpy as np
import pytest

from navtune.cmaes import OptConfig, OptResult, history_csv, minimize
from navtune.dwa import DEFAULT_BOUNDS, PARAM_KEYS
from navtune.errors import InvalidInputError


def decode_sphere(target_u):
    target = DEFAULT_BOUNDS.decode(target_u)
    tvec = np.array(list(target.to_dict().values()))
    spans = np.array([DEFAULT_BOUNDS.hi[k] - DEFAULT_BOUNDS.lo[k] for k in PARAM_KEYS])

    def objective(u):
        p = DEFAULT_BOUNDS.decode(u)
        vec = np.array(list(p.to_dict().values()))
        return float((((vec - tvec) / spans) ** 2).sum())

    return objective, target


class TestMinimize:
    def test_sphere_converges_to_target(self):
        target_u = np.array([0.31, 0.62, 0.5, 0.25, 0.8, 0.4, 0.63, 0.52])
        objective, target = decode_sphere(target_u)
        res = minimize(objective, 8, OptConfig(population=12, max_generations=200, seed=3))
        got = DEFAULT_BOUNDS.decode(res.best_u).to_dict()
        want = target.to_dict()
        for k in PARAM_KEYS:
            assert abs(got[k] - want[k]) <= 1e-3, (k, got[k], want[k])

    def test_best_never_worse_than_midpoint(self):
        objective, _ = decode_sphere(np.full(8, 0.7))
        mid_loss = objective(np.full(8, 0.5))
        for seed in range(3):
            res = minimize(objective, 8, OptConfig(max_generations=5, seed=seed))
            assert res.best_loss <= mid_loss

    def test_seed_determinism(self):
        objective, _ = decode_sphere(np.full(8, 0.4))
        r1 = minimize(objective, 8, OptConfig(max_generations=30, seed=11))
        r2 = minimize(objective, 8, OptConfig(max_generations=30, seed=11))
        assert r1.best_loss == r2.best_loss
        assert np.array_equal(r1.best_u, r2.best_u)
        assert r1.history == r2.history

    def test_thread_count_bit_identical(self):
        objective, _ = decode_sphere(np.linspace(0.2, 0.8, 8))
        r1 = minimize(objective, 8, OptConfig(max_generations=40, seed=5, n_jobs=1))
        r16 = minimize(objective, 8, OptConfig(max_generations=40, seed=5, n_jobs=16))
        assert r1.best_loss == r16.best_loss
        assert np.array_equal(r1.best_u, r16.best_u)
        assert r1.history == r16.history

    def test_nonfinite_losses_survive(self):
        calls = []

        def objective(u):
            calls.append(u)
            if len(calls) % 3 == 0:
                return float("nan")
            return float((u**2).sum())

        res = minimize(objective, 4, OptConfig(max_generations=10, seed=0))
        assert np.isfinite(res.best_loss)

    def test_evaluated_candidates_stay_in_box(self):
        seen = []

        def objective(u):
            seen.append(u.copy())
            return float(((u - 0.5) ** 2).sum())

        minimize(objective, 6, OptConfig(max_generations=20, seed=2, sigma0=0.5))
        arr = np.array(seen)
        assert arr.min() >= 0.0 and arr.max() <= 1.0

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            OptConfig(population=2)
        with pytest.raises(InvalidInputError):
            OptConfig(sigma0=0.9)

    def test_history_csv_shape(self):
        objective, _ = decode_sphere(np.full(8, 0.5))
        res = minimize(objective, 8, OptConfig(max_generations=7, seed=1))
        csv = history_csv(res)
        lines = csv.strip().split("\n")
        assert lines[0] == "generation,best,mean,sigma"
        assert len(lines) == 8
