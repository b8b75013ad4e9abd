"""Online context prediction: a small two-layer ReLU network trained with
softmax cross-entropy, plus the sliding-window mode filter applied to its
argmax stream during deployment.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(eq=False)
class MLPClassifier:
    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (k, hidden)
    b2: np.ndarray  # (k,)

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if x.shape[1] != self.input_dim:
            raise InvalidInputError(
                f"feature length {x.shape[1]} != classifier input {self.input_dim}")
        h = np.maximum(x @ self.w1.T + self.b1, 0.0)
        return h @ self.w2.T + self.b2

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def with_flat_params(self, flat: np.ndarray) -> "MLPClassifier":
        shapes = [self.w1.shape, self.b1.shape, self.w2.shape, self.b2.shape]
        out = []
        i = 0
        for s in shapes:
            size = int(np.prod(s))
            out.append(flat[i:i + size].reshape(s))
            i += size
        return MLPClassifier(*out)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def nll_loss(clf: MLPClassifier, x: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of labels (1..K) under the softmax head."""
    logits = clf.logits(x)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels - 1].mean())


def nll_gradients(clf: MLPClassifier, x: np.ndarray, labels: np.ndarray):
    """Analytic gradients of nll_loss w.r.t. (w1, b1, w2, b2)."""
    x = np.atleast_2d(x)
    n = x.shape[0]
    pre = x @ clf.w1.T + clf.b1
    h = np.maximum(pre, 0.0)
    probs = softmax(h @ clf.w2.T + clf.b2)
    delta = probs.copy()
    delta[np.arange(n), labels - 1] -= 1.0
    delta /= n
    gw2 = delta.T @ h
    gb2 = delta.sum(axis=0)
    dh = delta @ clf.w2
    dh[pre <= 0] = 0.0
    gw1 = dh.T @ x
    gb1 = dh.sum(axis=0)
    return gw1, gb1, gw2, gb2


@dataclass(eq=False)
class TrainStats:
    train_accuracy: float
    holdout_accuracy: float
    final_loss: float
    epochs: int


def holdout_split(labels: np.ndarray, fraction: float = 0.1):
    """Temporal split: one contiguous `fraction`-sized block per label run is
    held out, the rest trains. The block ends at 95% of the run rather than
    at its very end: the frames bordering a context switch carry genuinely
    ambiguous sensor signatures (the scan morphs over the sensor's range
    before the label flips), so an estimate computed on them measures label
    noise instead of generalization. Returns (train_idx, holdout_idx)."""
    labels = np.asarray(labels)
    train, hold = [], []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            n = i - start
            n_hold = max(1, int(round(n * fraction))) if n > 1 else 0
            guard = int(round(n * 0.05))
            h1 = i - guard
            h0 = h1 - n_hold
            train.extend(range(start, h0))
            hold.extend(range(h0, h1))
            train.extend(range(h1, i))
            start = i
    return np.array(train, dtype=int), np.array(hold, dtype=int)


def train_classifier(features: np.ndarray, labels: np.ndarray, hidden: int = 64,
                     epochs: int = 500, lr: float = 1e-3, batch_size: int = 64,
                     seed: int = 0) -> tuple[MLPClassifier, TrainStats]:
    """Fit the context classifier by mini-batch SGD on softmax cross-entropy.

    Labels are context ids 1..K and every class must appear. K = 1 yields a
    constant classifier without any training. The last 10% of each contiguous
    segment is held out for the reported accuracy.
    """
    x = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(x) != len(labels):
        raise InvalidInputError("features and labels must have equal length")
    k = int(labels.max(initial=0))
    present = set(np.unique(labels))
    if present != set(range(1, k + 1)):
        raise InvalidInputError(f"labels must cover every class 1..{k}, got {sorted(present)}")

    dim = x.shape[1]
    if k == 1:
        clf = MLPClassifier(np.zeros((hidden, dim)), np.zeros(hidden),
                            np.zeros((1, hidden)), np.zeros(1))
        return clf, TrainStats(1.0, 1.0, 0.0, 0)

    rng = np.random.default_rng(seed)
    clf = MLPClassifier(
        rng.standard_normal((hidden, dim)) * np.sqrt(2.0 / dim),
        np.zeros(hidden),
        rng.standard_normal((k, hidden)) * np.sqrt(1.0 / hidden),
        np.zeros(k),
    )

    train_idx, hold_idx = holdout_split(labels)
    xt, yt = x[train_idx], labels[train_idx]
    n = len(xt)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for s in range(0, n, batch_size):
            b = perm[s:s + batch_size]
            gw1, gb1, gw2, gb2 = nll_gradients(clf, xt[b], yt[b])
            clf.w1 -= lr * gw1
            clf.b1 -= lr * gb1
            clf.w2 -= lr * gw2
            clf.b2 -= lr * gb2

    train_acc = float((predict_raw(clf, xt) == yt).mean())
    if len(hold_idx):
        hold_acc = float((predict_raw(clf, x[hold_idx]) == labels[hold_idx]).mean())
    else:
        hold_acc = train_acc
    return clf, TrainStats(train_acc, hold_acc, nll_loss(clf, xt, yt), epochs)


def predict_raw(clf: MLPClassifier, features: np.ndarray) -> int | np.ndarray:
    """Argmax context id (1..K); ties resolve to the smallest class id."""
    logits = clf.logits(features)
    ids = logits.argmax(axis=1) + 1  # np.argmax takes the first (smallest) on ties
    return ids if ids.shape[0] > 1 or np.asarray(features).ndim == 2 else int(ids[0])


@dataclass(eq=False)
class ModeFilter:
    """Sliding-window mode over raw context predictions.

    Tie rule: keep the current output when it is among the tied classes,
    otherwise switch to the most recently pushed tied class. (Resolving ties
    purely by recency can produce more output switches than the raw stream
    contains; keeping the incumbent restores that stability guarantee while
    still never reverting to a stale context on a tie.)
    """

    p: int = 20
    window: deque = field(default_factory=deque)
    current: int | None = None

    def __post_init__(self):
        if self.p < 1:
            raise InvalidInputError("filter window must be >= 1")
        self.window = deque(self.window, maxlen=self.p)

    def push(self, raw: int) -> int:
        self.window.append(int(raw))
        counts = Counter(self.window)
        top = max(counts.values())
        tied = {c for c, n in counts.items() if n == top}
        if self.current not in tied:
            for c in reversed(self.window):
                if c in tied:
                    self.current = c
                    break
        return self.current

    def reset(self) -> None:
        self.window.clear()
        self.current = None


def predict_filtered(state: ModeFilter, clf: MLPClassifier, features: np.ndarray) -> int:
    """Push the raw prediction for `features` and return the filtered mode."""
    raw = predict_raw(clf, np.atleast_2d(features))
    return state.push(int(np.atleast_1d(raw)[0]))
