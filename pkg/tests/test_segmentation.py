import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navtune.demo import Demonstration
from navtune.errors import InvalidInputError
from navtune.segmentation import (SegmentStats, default_penalty,
                                  detect_changepoints, segment_demo,
                                  tie_tolerance)

from test_demo import make_demo, make_record


def enumerate_partitions(features, beta, min_seg_len):
    """Exhaustive MAP oracle: scores every admissible changepoint subset,
    then applies the declared tie order (near-exact score ties grouped,
    fewer changepoints first, lex-smallest taus)."""
    stats = SegmentStats(features)
    n = stats.n
    scored = []
    for k in range(0, n):
        for cuts in combinations(range(1, n), k):
            bounds = [0, *cuts, n]
            if any(b - a < min_seg_len for a, b in zip(bounds, bounds[1:])):
                continue
            # accumulate left to right, penalty applied per cut, matching the
            # dynamic program's float evaluation order exactly
            score = 0.0
            for a, b in zip(bounds, bounds[1:]):
                score = score + float(stats.loglik(a, b)) - (beta if a > 0 else 0.0)
            scored.append((score, k, cuts))
    top = max(s for s, _, _ in scored)
    tol = tie_tolerance(top)
    tied = [(k, cuts, s) for s, k, cuts in scored if s >= top - tol]
    k, cuts, score = min(tied)
    return score, list(cuts)


class TestDetect:
    def test_constant_series_single_segment(self):
        x = np.ones((40, 2)) * 3.0
        for beta in (0.0, 1.0, 10.0):
            r = detect_changepoints(x, penalty=beta, min_seg_len=2)
            assert r.k == 1 and r.changepoints == []

    def test_single_jump_found_exactly(self):
        # records 1..49 sit at mean 0, the jump arrives at record 50
        rng = np.random.default_rng(0)
        x = np.concatenate([rng.normal(0.0, 0.1, size=(49, 1)),
                            rng.normal(5.0, 0.1, size=(51, 1))])
        beta = default_penalty(100, 1)
        r = detect_changepoints(x, penalty=beta)
        # brute-force oracle over all single-changepoint positions
        stats = SegmentStats(x)
        singles = [(float(stats.loglik(0, b)) + float(stats.loglik(b, 100)) - beta, b)
                   for b in range(25, 76)]
        best_b = max(singles)[1]
        assert best_b == 49
        assert r.k == 2
        assert r.boundaries0()[1] == 49
        assert r.changepoints == [50]

    def test_dp_matches_enumeration_small(self):
        rng = np.random.default_rng(42)
        for trial in range(30):
            n = int(rng.integers(4, 13))
            d = int(rng.integers(1, 4))
            x = rng.normal(size=(n, d)) * rng.uniform(0.5, 2)
            if trial % 3 == 0:
                x[n // 2:] += 3.0
            for beta in (0.5, 3.0, 12.0):
                r = detect_changepoints(x, penalty=beta, min_seg_len=1)
                score, cuts = enumerate_partitions(x, beta, 1)
                assert r.map_score == score
                assert r.boundaries0()[1:-1] == cuts

    def test_min_seg_len_respected(self):
        x = np.concatenate([np.zeros((5, 1)), np.ones((5, 1)) * 9.0])
        r = detect_changepoints(x, penalty=0.1, min_seg_len=4)
        for a, b in zip(r.boundaries0(), r.boundaries0()[1:]):
            assert b - a >= 4

    def test_too_short_raises(self):
        with pytest.raises(InvalidInputError):
            detect_changepoints(np.zeros((19, 2)), min_seg_len=10)

    def test_non_finite_raises(self):
        x = np.zeros((30, 2))
        x[3, 1] = np.nan
        with pytest.raises(InvalidInputError):
            detect_changepoints(x, min_seg_len=2)

    @given(st.integers(0, 10_000))
    @settings(max_examples=12, deadline=None)
    def test_penalty_monotonicity(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(40, 2))
        x[20:] += rng.uniform(0, 4)
        ks = [detect_changepoints(x, penalty=b, min_seg_len=3).k
              for b in (0.1, 1.0, 5.0, 25.0, 125.0)]
        assert all(a >= b for a, b in zip(ks, ks[1:]))

    def test_dimension_permutation_invariant(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(60, 4))
        x[30:, 0] += 4.0
        r1 = detect_changepoints(x, min_seg_len=5)
        r2 = detect_changepoints(x[:, [2, 0, 3, 1]], min_seg_len=5)
        assert r1.changepoints == r2.changepoints
        assert r1.map_score == pytest.approx(r2.map_score, rel=1e-12)

    def test_duplicate_insertion_stability(self):
        rng = np.random.default_rng(9)
        x = np.concatenate([rng.normal(0, 0.2, size=(40, 2)),
                            rng.normal(6, 0.2, size=(40, 2))])
        r1 = detect_changepoints(x, min_seg_len=5)
        x2 = np.insert(x, 10, x[10], axis=0)
        r2 = detect_changepoints(x2, min_seg_len=5)
        assert r2.k == r1.k


class TestPenalty:
    def test_bic_formula(self):
        assert default_penalty(100, 4) == pytest.approx(4.5 * math.log(100))

    def test_exp_square(self):
        assert default_penalty(math.e**2, 1) == pytest.approx(3.0)

    def test_degenerate_warns(self):
        with pytest.warns(UserWarning):
            beta = default_penalty(1, 1)
        assert beta == 0.0


class TestSegmentDemo:
    def _demo(self, n):
        return make_demo([make_record(i * 0.05, v=float(i)) for i in range(n)])

    def test_k1_single_slice(self):
        d = self._demo(10)
        f = np.ones((10, 1))
        r = detect_changepoints(f, penalty=1.0, min_seg_len=2)
        slices = segment_demo(d, r)
        assert len(slices) == 1 and len(slices[0]) == 10

    def test_tau_convention(self):
        d = self._demo(10)
        x = np.zeros((10, 1))
        x[3:6] += 5.0
        x[6:] += 11.0
        r = detect_changepoints(x, penalty=0.1, min_seg_len=1)
        assert r.changepoints == [4, 7]
        slices = segment_demo(d, r)
        assert [len(s) for s in slices] == [3, 3, 4]
        assert slices[0].records[0].action.v == 0.0
        assert slices[1].records[0].action.v == 3.0
        assert slices[2].records[0].action.v == 6.0

    def test_quarter_split_arithmetic(self):
        d = self._demo(1040)
        x = np.zeros((1040, 1))
        for i, b in enumerate((260, 520, 780)):
            x[b:] += 7.0 * (i + 1)
        r = detect_changepoints(x, penalty=1.0, min_seg_len=10)
        assert r.changepoints == [261, 521, 781]
        slices = segment_demo(d, r)
        assert [len(s) for s in slices] == [260, 260, 260, 260]
        for s in slices:
            assert s.records[-1].t - s.records[0].t == pytest.approx(12.95)

    def test_mismatched_length_raises(self):
        d = self._demo(10)
        r = detect_changepoints(np.zeros((12, 1)), penalty=1.0, min_seg_len=2)
        with pytest.raises(InvalidInputError):
            segment_demo(d, r)
