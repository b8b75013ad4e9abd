"""Demonstration capture format and feature extraction.

A demonstration is the time series recorded while a human (or the scripted
demonstrator) drives the simulated robot: per tick, the planner-visible state
and the commanded action. Two feature views are derived from it: a 4-d
series (scan mean, scan std, v, w) for changepoint detection, and a 34-d
state-only vector for the online context classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SchemaError
from .world import Action, LaserScan, RobotState, ScanConfig

CLASSIFIER_BEAMS = 32
GOAL_DIST_SCALE_M = 10.0


@dataclass(frozen=True)
class DemoRecord:
    t: float
    robot: RobotState
    goal: tuple[float, float]
    scan: LaserScan
    action: Action


@dataclass(eq=False)
class Demonstration:
    records: list[DemoRecord]
    world_name: str = ""
    rate_hz: float = 20.0
    scan_config: ScanConfig = field(default_factory=ScanConfig)
    failed: bool = False
    # optional ground-truth region label per record (scripted demos only)
    truth_labels: list[int] | None = None

    def __post_init__(self):
        if len(self.records) < 2:
            raise InvalidInputError("empty demonstration (need at least 2 records)")
        ts = [r.t for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError("record timestamps must be strictly increasing")
        beams = {r.scan.beam_count for r in self.records}
        if len(beams) != 1:
            raise InvalidInputError("scan beam count must be constant within a demonstration")

    def __len__(self) -> int:
        return len(self.records)

    def slice(self, start: int, stop: int) -> "Demonstration":
        """Contiguous sub-demonstration over [start, stop) record indices."""
        return Demonstration(
            self.records[start:stop], self.world_name, self.rate_hz,
            self.scan_config, self.failed,
            self.truth_labels[start:stop] if self.truth_labels else None,
        )


def extract_segmentation_features(d: Demonstration) -> np.ndarray:
    """(N, 4) standardized features per record: scan mean, scan population
    std, commanded v, commanded w. Each column is shifted/scaled to zero mean
    and unit variance over the demonstration; constant columns become zeros.
    """
    raw = np.array([
        (float(r.scan.ranges.mean()), float(r.scan.ranges.std()), r.action.v, r.action.w)
        for r in d.records
    ])
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    out = np.zeros_like(raw)
    nz = std > 0
    out[:, nz] = (raw[:, nz] - mean[nz]) / std[nz]
    return out


def classifier_feature_dim() -> int:
    return CLASSIFIER_BEAMS + 2


def extract_classifier_features(robot: RobotState, scan: LaserScan,
                                goal: tuple[float, float]) -> np.ndarray:
    """State-only features for online context prediction: 32 evenly-strided
    normalized ranges, goal distance / 10 m, and goal bearing / pi."""
    n = scan.beam_count
    idx = (np.arange(CLASSIFIER_BEAMS) * n) // CLASSIFIER_BEAMS
    beams = np.minimum(scan.ranges[idx], scan.range_max) / scan.range_max
    dx = goal[0] - robot.x
    dy = goal[1] - robot.y
    dist = np.hypot(dx, dy) / GOAL_DIST_SCALE_M
    bearing = np.arctan2(dy, dx) - robot.heading
    bearing = np.arctan2(np.sin(bearing), np.cos(bearing)) / np.pi
    return np.concatenate([beams, [dist, bearing]])


def classifier_features_for(d: Demonstration) -> np.ndarray:
    return np.array([
        extract_classifier_features(r.robot, r.scan, r.goal) for r in d.records
    ])


# --- demonstration file format -----------------------------------------------
#
# Header:  "demo 1 <world_name> <rate_hz> <angle_min> <angle_max> <beam_count>
#           <range_max> <failed:0|1> <has_labels:0|1>"
# Then one line per record:
#   t x y heading v w goal_x goal_y cmd_v cmd_w [label] r0 r1 ... r(B-1)
# All floats use repr() so the round-trip is bit-exact.

_MAGIC = "demo"
_VERSION = 1


def save_demo(d: Demonstration, path: str) -> None:
    sc = d.scan_config
    has_labels = 1 if d.truth_labels is not None else 0
    lines = [
        f"{_MAGIC} {_VERSION} {d.world_name or '-'} {d.rate_hz!r} "
        f"{sc.angle_min!r} {sc.angle_max!r} {sc.beam_count} {sc.range_max!r} "
        f"{1 if d.failed else 0} {has_labels}"
    ]
    for i, r in enumerate(d.records):
        parts = [repr(r.t), repr(r.robot.x), repr(r.robot.y), repr(r.robot.heading),
                 repr(r.robot.v), repr(r.robot.w), repr(r.goal[0]), repr(r.goal[1]),
                 repr(r.action.v), repr(r.action.w)]
        if has_labels:
            parts.append(str(d.truth_labels[i]))
        parts.extend(repr(float(x)) for x in r.scan.ranges)
        lines.append(" ".join(parts))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_demo(path: str) -> Demonstration:
    with open(path) as f:
        raw = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not raw or not raw[0].startswith(_MAGIC + " "):
        raise SchemaError(f"{path}: not a demonstration file")
    head = raw[0].split()
    if int(head[1]) != _VERSION:
        raise SchemaError(f"{path}: unsupported demo version {head[1]}")
    world_name = "" if head[2] == "-" else head[2]
    rate_hz = float(head[3])
    sc = ScanConfig(float(head[4]), float(head[5]), int(head[6]), float(head[7]))
    failed = head[8] == "1"
    has_labels = head[9] == "1"
    n_fixed = 10 + (1 if has_labels else 0)
    records = []
    labels: list[int] | None = [] if has_labels else None
    for line in raw[1:]:
        parts = line.split()
        if len(parts) != n_fixed + sc.beam_count:
            raise SchemaError(f"{path}: record has {len(parts)} fields, "
                              f"expected {n_fixed + sc.beam_count}")
        t = float(parts[0])
        robot = RobotState(float(parts[1]), float(parts[2]), float(parts[3]),
                           float(parts[4]), float(parts[5]))
        goal = (float(parts[6]), float(parts[7]))
        action = Action(float(parts[8]), float(parts[9]))
        if has_labels:
            labels.append(int(parts[10]))
        ranges = np.array([float(x) for x in parts[n_fixed:]])
        scan = LaserScan(sc.angle_min, sc.angle_max, sc.beam_count, sc.range_max, ranges)
        records.append(DemoRecord(t, robot, goal, scan, action))
    return Demonstration(records, world_name, rate_hz, sc, failed, labels)
