"""The deployable artifact: per-context parameters, the trained context
classifier, the mode-filter window, and provenance, in one self-describing
text file. Floats are written with repr() so a save/load cycle reproduces
predictions bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import MLPClassifier
from .demo import CLASSIFIER_BEAMS, GOAL_DIST_SCALE_M
from .dwa import PARAM_KEYS, PlannerParams
from .errors import SchemaError
from .learn import ParamMap
from .segmentation import SegmentationResult
from .world import ScanConfig

_MAGIC = "bundle"
_VERSION = 1


@dataclass(eq=False)
class ContextBundle:
    param_map: ParamMap
    classifier: MLPClassifier
    p_window: int
    scan_config: ScanConfig
    segmentation: SegmentationResult | None = None
    provenance: dict[str, str] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.param_map.k

    def __post_init__(self):
        if self.classifier.n_classes != self.k:
            raise SchemaError(
                f"classifier has {self.classifier.n_classes} outputs for {self.k} contexts")


def make_fixed_bundle(params: PlannerParams, scan_config: ScanConfig,
                      p_window: int = 1, note: str = "fixed") -> ContextBundle:
    """Single-context bundle that always applies one parameter set (used for
    the default and no-context baselines)."""
    from .demo import classifier_feature_dim

    dim = classifier_feature_dim()
    clf = MLPClassifier(np.zeros((1, dim)), np.zeros(1), np.zeros((1, 1)), np.zeros(1))
    return ContextBundle(ParamMap({1: params}), clf, p_window, scan_config,
                         provenance={"kind": note})


def _fmt_row(row: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in row)


def save_bundle(b: ContextBundle, path: str) -> None:
    lines = [f"{_MAGIC} {_VERSION}"]
    lines.append(f"k {b.k}")
    lines.append(f"p {b.p_window}")
    sc = b.scan_config
    lines.append(f"scan {sc.angle_min!r} {sc.angle_max!r} {sc.beam_count} {sc.range_max!r}")
    lines.append(f"features {CLASSIFIER_BEAMS} {GOAL_DIST_SCALE_M!r}")
    for key in sorted(b.provenance):
        lines.append(f"provenance {key} {b.provenance[key]}")
    if b.segmentation is not None:
        s = b.segmentation
        taus = " ".join(str(t) for t in s.changepoints)
        lines.append(f"segmentation {s.k} {s.n} {s.map_score!r}{' ' + taus if taus else ''}")
    for ctx, params in b.param_map.items():
        lines.append(f"params {ctx}")
        d = params.to_dict()
        for key in PARAM_KEYS:
            lines.append(f"  {key} {d[key]!r}")
    clf = b.classifier
    hidden, dim = clf.w1.shape
    lines.append(f"classifier {dim} {hidden} {clf.n_classes}")
    for row in clf.w1:
        lines.append("  w1 " + _fmt_row(row))
    lines.append("  b1 " + _fmt_row(clf.b1))
    for row in clf.w2:
        lines.append("  w2 " + _fmt_row(row))
    lines.append("  b2 " + _fmt_row(clf.b2))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_bundle(path: str) -> ContextBundle:
    with open(path) as f:
        raw = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not raw or not raw[0].startswith(_MAGIC + " "):
        raise SchemaError(f"{path}: not a bundle file")
    if int(raw[0].split()[1]) != _VERSION:
        raise SchemaError(f"{path}: unsupported bundle version")

    k = p = None
    scan = None
    provenance: dict[str, str] = {}
    segmentation = None
    params: dict[int, PlannerParams] = {}
    clf = None
    i = 1
    while i < len(raw):
        parts = raw[i].split()
        tag = parts[0]
        if tag == "k":
            k = int(parts[1])
        elif tag == "p":
            p = int(parts[1])
        elif tag == "scan":
            scan = ScanConfig(float(parts[1]), float(parts[2]), int(parts[3]), float(parts[4]))
        elif tag == "features":
            if int(parts[1]) != CLASSIFIER_BEAMS or float(parts[2]) != GOAL_DIST_SCALE_M:
                raise SchemaError(f"{path}: incompatible classifier feature config")
        elif tag == "provenance":
            provenance[parts[1]] = " ".join(parts[2:])
        elif tag == "segmentation":
            sk, sn = int(parts[1]), int(parts[2])
            score = float(parts[3])
            taus = [int(t) for t in parts[4:]]
            segmentation = SegmentationResult(taus, sk, score, sn, [], [])
        elif tag == "params":
            ctx = int(parts[1])
            vals = {}
            for _ in range(len(PARAM_KEYS)):
                i += 1
                key, val = raw[i].split()
                vals[key] = float(val)
            params[ctx] = PlannerParams.from_dict(vals)
        elif tag == "classifier":
            dim, hidden, n_out = int(parts[1]), int(parts[2]), int(parts[3])
            w1 = np.empty((hidden, dim))
            w2 = np.empty((n_out, hidden))
            for r in range(hidden):
                i += 1
                toks = raw[i].split()
                if toks[0] != "w1":
                    raise SchemaError(f"{path}: expected w1 row, got {raw[i]!r}")
                w1[r] = [float(v) for v in toks[1:]]
            i += 1
            b1 = np.array([float(v) for v in raw[i].split()[1:]])
            for r in range(n_out):
                i += 1
                toks = raw[i].split()
                if toks[0] != "w2":
                    raise SchemaError(f"{path}: expected w2 row, got {raw[i]!r}")
                w2[r] = [float(v) for v in toks[1:]]
            i += 1
            b2 = np.array([float(v) for v in raw[i].split()[1:]])
            clf = MLPClassifier(w1, b1, w2, b2)
        else:
            raise SchemaError(f"{path}: unknown section {tag!r}")
        i += 1

    if k is None or p is None or scan is None or clf is None or not params:
        raise SchemaError(f"{path}: incomplete bundle")
    bundle = ContextBundle(ParamMap(params), clf, p, scan, segmentation, provenance)
    if bundle.k != k:
        raise SchemaError(f"{path}: declared k={k} but found {bundle.k} parameter blocks")
    return bundle
