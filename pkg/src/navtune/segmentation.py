"""Exact MAP changepoint segmentation by optimal partitioning.

The feature series is modeled per segment as an independent-dimension
Gaussian with closed-form MLE parameters (variance floored at VAR_FLOOR).
Dynamic programming maximizes

    sum_k loglik(segment_k) - penalty * (K - 1)

exactly in O(N^2 * D), with deterministic tie-breaking: fewer changepoints
first, then the lexicographically smallest changepoint vector. Changepoint
indices follow the 1-based convention: tau in 1..N-1 means records
tau..N start a new segment, i.e. segment k covers {i : tau_{k-1} <= i < tau_k}
with tau_0 = 0 and tau_K = N+1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .demo import Demonstration
from .errors import InvalidInputError

VAR_FLOOR = 1e-6
# shortest admissible segment: 5 s at the 20 Hz recording rate. Anything
# shorter lets the segmenter isolate sub-behavior-scale structure (a single
# steering swing, one obstacle passing through the scan, a doorway ramp).
DEFAULT_MIN_SEG_LEN = 100
LOG_2PI = math.log(2.0 * math.pi)


class SegmentStats:
    """Prefix sums enabling O(1) Gaussian log-likelihood of any [i, j) slice."""

    def __init__(self, features: np.ndarray):
        x = np.asarray(features, dtype=float)
        if x.ndim != 2:
            raise InvalidInputError("features must be a 2-d array (N, D)")
        if not np.isfinite(x).all():
            raise InvalidInputError("features contain non-finite values")
        self.n, self.d = x.shape
        self._s1 = np.zeros((self.n + 1, self.d))
        self._s2 = np.zeros((self.n + 1, self.d))
        np.cumsum(x, axis=0, out=self._s1[1:])
        np.cumsum(x * x, axis=0, out=self._s2[1:])

    def loglik(self, i, j) -> np.ndarray | float:
        """Max log-likelihood of slice [i, j); i may be a vector."""
        i = np.asarray(i)
        n = (j - i)[..., None] if i.ndim else j - i
        s1 = self._s1[j] - self._s1[i]
        s2 = self._s2[j] - self._s2[i]
        mean = s1 / n
        var = np.maximum(s2 / n - mean * mean, 0.0)
        sse = var * n
        var = np.maximum(var, VAR_FLOOR)
        ll = -0.5 * n * (LOG_2PI + np.log(var)) - sse / (2.0 * var)
        return ll.sum(axis=-1)

    def segment_params(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        n = j - i
        mean = (self._s1[j] - self._s1[i]) / n
        var = (self._s2[j] - self._s2[i]) / n - mean * mean
        return mean, np.maximum(var, VAR_FLOOR)


@dataclass(eq=False)
class SegmentationResult:
    changepoints: list[int]  # 1-based taus, sorted, each in 1..N-1
    k: int
    map_score: float
    n: int
    seg_means: list[np.ndarray]
    seg_vars: list[np.ndarray]

    def boundaries0(self) -> list[int]:
        """0-based slice endpoints [0, b_1, ..., b_{K-1}, N]."""
        return [0] + [t - 1 for t in self.changepoints] + [self.n]

    def labels(self) -> np.ndarray:
        """Per-record context id in 1..K."""
        out = np.empty(self.n, dtype=int)
        b = self.boundaries0()
        for k in range(self.k):
            out[b[k]:b[k + 1]] = k + 1
        return out


def tie_tolerance(best_score: float) -> float:
    """Scores closer than this to the best are treated as exact ties."""
    return 1e-9 * max(1.0, abs(best_score))


def default_penalty(n, d) -> float:
    """BIC-style penalty: (2D + 1)/2 * ln N, counting per-segment means,
    variances, and the changepoint location itself."""
    if n < 1 or d < 1:
        raise InvalidInputError("n and d must be >= 1")
    beta = (2.0 * d + 1.0) / 2.0 * math.log(n)
    if beta == 0.0:
        warnings.warn("degenerate penalty beta = 0 (N = 1): every split is free")
    return beta


def detect_changepoints(features: np.ndarray, penalty: float | None = None,
                        min_seg_len: int = DEFAULT_MIN_SEG_LEN) -> SegmentationResult:
    """Exact MAP partition of the feature series.

    penalty=None selects the BIC default for the series shape. Raises on
    series shorter than 2*min_seg_len or non-finite features.
    """
    stats = SegmentStats(features)
    n, d = stats.n, stats.d
    if min_seg_len < 1:
        raise InvalidInputError("min_seg_len must be >= 1")
    if n < 2 * min_seg_len:
        raise InvalidInputError(
            f"series too short: N={n} < 2*min_seg_len={2 * min_seg_len}")
    beta = default_penalty(n, d) if penalty is None else float(penalty)

    NEG = -math.inf
    score = np.full(n + 1, NEG)
    score[0] = 0.0
    # per-prefix tie-break state: changepoint count and 0-based boundary tuple
    cps = [0] * (n + 1)
    taus: list[tuple[int, ...]] = [()] * (n + 1)

    starts = np.arange(0, n)  # candidate starts of the last segment
    for j in range(min_seg_len, n + 1):
        valid = starts[(starts == 0) | (starts >= min_seg_len)]
        valid = valid[j - valid >= min_seg_len]
        if len(valid) == 0:
            continue
        base = score[valid]
        feasible = base > NEG
        if not feasible.any():
            continue
        valid = valid[feasible]
        cand = score[valid] + stats.loglik(valid, j) - np.where(valid > 0, beta, 0.0)
        best = cand.max()
        # group near-exact ties (sums of identical terms reassociate in float
        # arithmetic), then prefer fewer changepoints, then lex-smallest taus
        tol = tie_tolerance(best)
        tie_pos = np.nonzero(cand >= best - tol)[0]
        chosen_pos = None
        chosen_key = None
        for pos in tie_pos:
            i = valid[pos]
            key = (cps[i] + (1 if i > 0 else 0), taus[i] + ((i,) if i > 0 else ()))
            if chosen_key is None or key < chosen_key:
                chosen_key = key
                chosen_pos = pos
        score[j] = cand[chosen_pos]
        cps[j] = chosen_key[0]
        taus[j] = chosen_key[1]

    if score[n] == NEG:
        raise InvalidInputError("no feasible partition under min_seg_len")

    bounds0 = list(taus[n])
    seg_bounds = [0] + bounds0 + [n]
    means, variances = [], []
    for a, b in zip(seg_bounds, seg_bounds[1:]):
        m, v = stats.segment_params(a, b)
        means.append(m)
        variances.append(v)
    return SegmentationResult(
        changepoints=[b + 1 for b in bounds0],
        k=len(bounds0) + 1,
        map_score=float(score[n]),
        n=n,
        seg_means=means,
        seg_vars=variances,
    )


def segment_demo(d: Demonstration, r: SegmentationResult) -> list[Demonstration]:
    """Split the demonstration into K contiguous slices along the detected
    changepoints; slice k is context k+1's training data."""
    if r.n != len(d):
        raise InvalidInputError(
            f"segmentation over {r.n} records does not match demo of {len(d)}")
    b = r.boundaries0()
    return [d.slice(b[k], b[k + 1]) for k in range(r.k)]
