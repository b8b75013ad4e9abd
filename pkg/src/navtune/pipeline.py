"""End-to-end orchestration: train a bundle from a demonstration, deploy it
in closed loop with online context switching, and run trial-based
evaluations with penalized traversal times.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bundle import ContextBundle, save_bundle
from .classifier import ModeFilter, TrainStats, predict_raw, train_classifier
from .cloning import DEFAULT_EPS_S, LossWeights, bc_loss
from .cmaes import OptConfig, history_csv
from .costmap import GlobalPlanner, inflate_costmap
from .demo import Demonstration, classifier_features_for, extract_classifier_features, \
    extract_segmentation_features
from .dwa import BudgetModel, DEFAULT_BOUNDS, ParamBounds, PlannerParams, PlannerState, \
    plan_once
from .errors import InvalidInputError, StageError, UnreachableError
from .learn import ParamMap, ParamSearchResult, build_param_map, optimize_params
from .segmentation import DEFAULT_MIN_SEG_LEN, SegmentationResult, detect_changepoints, \
    segment_demo
from .world import Action, RobotState, SimConfig, STOP, WorldMap, check_collision, \
    raycast_scan, step_dynamics

GOAL_RADIUS_M = 0.3
STUCK_WINDOW_S = 10.0
STUCK_DISPLACEMENT_M = 0.05
DEFAULT_PENALTY_S = 60.0


@dataclass(frozen=True)
class TrainSettings:
    bounds: ParamBounds = field(default_factory=ParamBounds)
    sim: SimConfig = field(default_factory=SimConfig)
    eps_s: float = DEFAULT_EPS_S
    weights: LossWeights = field(default_factory=LossWeights)
    penalty_beta: float | None = None  # None -> BIC default
    min_seg_len: int = DEFAULT_MIN_SEG_LEN
    p_window: int = 20
    population: int = 12
    generations: int = 150
    sigma0: float = 0.3
    hidden: int = 64
    epochs: int = 500
    lr: float = 1e-3
    batch_size: int = 64
    master_seed: int = 0
    n_jobs: int = 1  # candidate evaluator threads inside each context search
    context_processes: int = 1  # concurrent per-context optimizations
    budget_model: BudgetModel = field(default_factory=BudgetModel)


@dataclass(eq=False)
class TrainReport:
    segmentation: SegmentationResult
    context_results: list[ParamSearchResult]
    classifier_stats: TrainStats
    seeds: dict[str, int]
    stage_seconds: dict[str, float]
    bundle: ContextBundle


def fan_out_seeds(master_seed: int, k: int) -> dict[str, int]:
    """One master seed deterministically yields per-stage seeds."""
    rng = np.random.default_rng(master_seed)
    seeds = {"classifier": int(rng.integers(2**31))}
    for ctx in range(1, k + 1):
        seeds[f"context_{ctx}"] = int(rng.integers(2**31))
    seeds["trials"] = int(rng.integers(2**31))
    return seeds


def _optimize_one(args) -> ParamSearchResult:
    world, segment, settings, seed = args
    opt_cfg = OptConfig(settings.population, settings.generations, settings.sigma0,
                        seed=seed, n_jobs=settings.n_jobs)
    return optimize_params(world, segment, settings.bounds, settings.sim, opt_cfg,
                           settings.weights, settings.eps_s,
                           budget_model=settings.budget_model)


def train(world: WorldMap, demo: Demonstration,
          settings: TrainSettings = TrainSettings()) -> TrainReport:
    """Algorithmic order: segment the demonstration, train the context
    classifier on the induced labels, then search parameters per context
    (concurrently when context_processes > 1), and assemble the bundle."""
    if demo.failed:
        raise StageError("input", "demonstration is marked failed (ended in collision)")
    if demo.scan_config != settings.sim.scan:
        raise StageError("input", "demonstration scan geometry does not match settings")
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    try:
        feats = extract_segmentation_features(demo)
        seg = detect_changepoints(feats, settings.penalty_beta, settings.min_seg_len)
        slices = segment_demo(demo, seg)
    except InvalidInputError as e:
        raise StageError("segmentation", str(e)) from e
    timings["segmentation"] = time.perf_counter() - t0

    seeds = fan_out_seeds(settings.master_seed, seg.k)

    t0 = time.perf_counter()
    try:
        clf_feats = classifier_features_for(demo)
        clf, clf_stats = train_classifier(
            clf_feats, seg.labels(), settings.hidden, settings.epochs,
            settings.lr, settings.batch_size, seeds["classifier"])
    except InvalidInputError as e:
        raise StageError("classifier", str(e)) from e
    timings["classifier"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    jobs = [(world, slices[k], settings, seeds[f"context_{k + 1}"])
            for k in range(seg.k)]
    try:
        if settings.context_processes > 1 and seg.k > 1:
            with ProcessPoolExecutor(max_workers=settings.context_processes) as pool:
                results = list(pool.map(_optimize_one, jobs))
        else:
            results = [_optimize_one(j) for j in jobs]
    except InvalidInputError as e:
        raise StageError("optimize", str(e)) from e
    timings["optimize"] = time.perf_counter() - t0

    param_map = build_param_map(results)
    provenance = {
        "master_seed": str(settings.master_seed),
        "demo_sha256": demo_digest(demo),
        "world": demo.world_name or "-",
        **{f"seed_{k}": str(v) for k, v in seeds.items()},
    }
    bundle = ContextBundle(param_map, clf, settings.p_window, settings.sim.scan,
                           seg, provenance)
    return TrainReport(seg, results, clf_stats, seeds, timings, bundle)


def demo_digest(demo: Demonstration) -> str:
    h = hashlib.sha256()
    for r in demo.records:
        h.update(np.array([r.t, r.robot.x, r.robot.y, r.robot.heading,
                           r.action.v, r.action.w]).tobytes())
        h.update(r.scan.ranges.tobytes())
    return h.hexdigest()[:16]


@dataclass(eq=False)
class TrialResult:
    outcome: str  # success | collision | timeout | stuck
    traversal_time_s: float  # penalty value when the trial failed
    raw_elapsed_s: float
    context_switches: list[tuple[int, int, int]]  # (tick, old, new)
    trajectory: np.ndarray  # (ticks, 5): x, y, heading, v, w
    missed_cycles: int = 0

    @property
    def success(self) -> bool:
        return self.outcome == "success"


@dataclass(eq=False)
class DeploySnapshot:
    tick: int
    state: RobotState
    scan: object
    context: int
    params: PlannerParams | None
    action: Action
    outcome: str | None  # None while running
    missed: bool = False


def deploy_session(world: WorldMap, bundle: ContextBundle, start, goal,
                   sim_cfg: SimConfig, timeout_s: float = 60.0,
                   budget_model: BudgetModel | None = None):
    """Closed-loop deployment as a tick generator (shared by deploy() and the
    live monitor): sense -> classify -> filter -> switch parameters -> plan,
    then integrate dynamics every tick until a terminal outcome."""
    if bundle.scan_config != sim_cfg.scan:
        raise InvalidInputError("bundle scan geometry does not match simulator config")
    model = budget_model or BudgetModel()
    state = RobotState(start[0], start[1], start[2])
    mode = ModeFilter(bundle.p_window)
    tpc = sim_cfg.ticks_per_control
    max_ticks = int(round(timeout_s / sim_cfg.dt))
    stuck_ticks = int(round(STUCK_WINDOW_S / sim_cfg.dt))
    planners: dict[int, tuple] = {}
    held = STOP
    context = None
    scan = None
    history_xy: list[tuple[float, float]] = []
    outcome = None

    for tick in range(max_ticks + 1):
        if math.hypot(state.x - goal[0], state.y - goal[1]) <= GOAL_RADIUS_M:
            outcome = "success"
        elif check_collision(world, state, sim_cfg.footprint_radius):
            outcome = "collision"
        elif tick >= stuck_ticks:
            px, py = history_xy[tick - stuck_ticks]
            if math.hypot(state.x - px, state.y - py) < STUCK_DISPLACEMENT_M:
                outcome = "stuck"
        if outcome is None and tick == max_ticks:
            outcome = "timeout"

        missed = False
        if tick % tpc == 0 and outcome is None:
            scan = raycast_scan(world, state, sim_cfg.scan)
            feats = extract_classifier_features(state, scan, goal)
            raw = int(np.atleast_1d(predict_raw(bundle.classifier, feats))[0])
            context = mode.push(raw)
            if context not in planners:
                cm = inflate_costmap(world, bundle.param_map[context].inflation_radius)
                try:
                    planners[context] = (cm, GlobalPlanner(cm, goal))
                except InvalidInputError:
                    planners[context] = (cm, None)
            cm, gp = planners[context]
            held = STOP
            path = None
            if gp is not None:
                try:
                    path = gp.path_from((state.x, state.y), snap_radius=0.5)
                except (UnreachableError, InvalidInputError):
                    path = None
            if path is not None:
                ps = PlannerState(state, scan, goal, path)
                res = plan_once(ps, bundle.param_map[context], sim_cfg, cm,
                                budget_s=sim_cfg.control_period, budget_model=model)
                held = res.action
                missed = res.missed
            elif tick == 0:
                outcome = "stuck"  # no route from the very first cycle

        params = bundle.param_map[context] if context is not None else None
        history_xy.append((state.x, state.y))
        yield DeploySnapshot(tick, state, scan, context if context else 0,
                             params, held, outcome, missed)
        if outcome is not None:
            return
        state = step_dynamics(state, held, sim_cfg)


def deploy(world: WorldMap, bundle: ContextBundle, start, goal,
           sim_cfg: SimConfig, timeout_s: float = 60.0,
           penalty_s: float = DEFAULT_PENALTY_S,
           budget_model: BudgetModel | None = None) -> TrialResult:
    """Run one trial to termination and summarize it."""
    switches = []
    traj = []
    prev_ctx = None
    missed = 0
    outcome = "timeout"
    elapsed = timeout_s
    for snap in deploy_session(world, bundle, start, goal, sim_cfg, timeout_s,
                               budget_model):
        s = snap.state
        traj.append((s.x, s.y, s.heading, s.v, s.w))
        missed += snap.missed
        if snap.context and snap.context != prev_ctx:
            if prev_ctx is not None:
                switches.append((snap.tick, prev_ctx, snap.context))
            prev_ctx = snap.context
        if snap.outcome is not None:
            outcome = snap.outcome
            elapsed = snap.tick * sim_cfg.dt
    time_s = elapsed if outcome == "success" else penalty_s
    return TrialResult(outcome, time_s, elapsed, switches, np.array(traj), missed)


@dataclass(eq=False)
class EvalCell:
    bundle_name: str
    route: str
    times: list[float]
    outcomes: list[str]
    mean_time: float
    std_time: float
    failures: int
    bc_losses: dict[int, float] = field(default_factory=dict)  # per demo segment


@dataclass(eq=False)
class EvalTable:
    cells: list[EvalCell]
    trials: int
    penalty_s: float

    def to_csv(self) -> str:
        lines = ["bundle,route,trials,failures,mean_time_s,std_time_s,times,outcomes"]
        for c in self.cells:
            times = ";".join(repr(t) for t in c.times)
            outs = ";".join(c.outcomes)
            lines.append(f"{c.bundle_name},{c.route},{len(c.times)},{c.failures},"
                         f"{c.mean_time!r},{c.std_time!r},{times},{outs}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        rows = [["bundle", "route", "succ", "mean t (s)", "std", "bc loss / segment"]]
        for c in self.cells:
            losses = " ".join(f"{k}:{v:.4f}" for k, v in sorted(c.bc_losses.items()))
            rows.append([c.bundle_name, c.route, f"{len(c.times) - c.failures}/{len(c.times)}",
                         f"{c.mean_time:.2f}", f"{c.std_time:.2f}", losses or "-"])
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths))
                         for r in rows) + "\n"


def _jittered_start(start, rng: np.random.Generator, jitter_xy: float = 0.05,
                    jitter_th: float = 0.087):
    return (start[0] + rng.uniform(-jitter_xy, jitter_xy),
            start[1] + rng.uniform(-jitter_xy, jitter_xy),
            start[2] + rng.uniform(-jitter_th, jitter_th))


def evaluate(world: WorldMap, bundles: dict[str, ContextBundle],
             routes: dict[str, tuple], trials: int = 10,
             penalty_s: float = DEFAULT_PENALTY_S, timeout_s: float = 60.0,
             sim_cfg: SimConfig = SimConfig(), seed: int = 0,
             reference_demo: Demonstration | None = None,
             reference_seg: SegmentationResult | None = None,
             settings: TrainSettings | None = None) -> EvalTable:
    """Per (bundle, route): `trials` deployments from jittered starts, mean of
    penalized traversal times, plus per-demo-segment cloning losses when a
    reference demonstration is supplied."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    cells = []
    seg_slices = None
    if reference_demo is not None and reference_seg is not None:
        seg_slices = segment_demo(reference_demo, reference_seg)
    for bname, bundle in bundles.items():
        losses: dict[int, float] = {}
        if seg_slices is not None:
            st = settings or TrainSettings(sim=sim_cfg)
            for k, sl in enumerate(seg_slices, start=1):
                theta = bundle.param_map[k] if bundle.k == len(seg_slices) \
                    else bundle.param_map[1]
                losses[k] = bc_loss(world, sl, theta, st.sim, st.weights, st.eps_s,
                                    budget_model=st.budget_model)
        for rname, (start, goal) in routes.items():
            times, outcomes = [], []
            for i in range(trials):
                key = (zlib.crc32(bname.encode()), zlib.crc32(rname.encode()), i)
                rng = np.random.default_rng(
                    np.random.SeedSequence(entropy=seed, spawn_key=key))
                s = _jittered_start(start, rng)
                r = deploy(world, bundle, s, goal, sim_cfg, timeout_s, penalty_s)
                times.append(r.traversal_time_s)
                outcomes.append(r.outcome)
            arr = np.array(times)
            cells.append(EvalCell(bname, rname, times, outcomes,
                                  float(arr.mean()), float(arr.std()),
                                  sum(o != "success" for o in outcomes), losses))
    return EvalTable(cells, trials, penalty_s)


def write_run_dir(out_dir: str, manifest: dict, files: dict[str, str]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        with open(os.path.join(out_dir, name), "w") as f:
            f.write(content)
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def save_train_outputs(out_dir: str, report: TrainReport, settings: TrainSettings) -> str:
    """Write bundle, per-context optimizer histories, and the manifest;
    returns the bundle path."""
    os.makedirs(out_dir, exist_ok=True)
    bundle_path = os.path.join(out_dir, "bundle.txt")
    save_bundle(report.bundle, bundle_path)
    files = {}
    for k, res in enumerate(report.context_results, start=1):
        files[f"history_context_{k}.csv"] = history_csv(res.opt)
    lines = [f"contexts: {report.segmentation.k}",
             f"changepoints: {report.segmentation.changepoints}",
             f"map_score: {report.segmentation.map_score!r}",
             f"classifier train acc: {report.classifier_stats.train_accuracy:.4f}",
             f"classifier holdout acc: {report.classifier_stats.holdout_accuracy:.4f}"]
    for k, res in enumerate(report.context_results, start=1):
        lines.append(f"context {k}: loss {res.loss!r} params {res.params.to_dict()}")
    files["report.txt"] = "\n".join(lines) + "\n"
    manifest = {
        "kind": "train",
        "seeds": report.seeds,
        "stage_seconds": report.stage_seconds,
        "master_seed": settings.master_seed,
        "bundle": "bundle.txt",
    }
    write_run_dir(out_dir, manifest, files)
    return bundle_path
