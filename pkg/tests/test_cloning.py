import math

import numpy as np
import pytest

from navtune.bundle import make_fixed_bundle
from navtune.cloning import (LossWeights, bc_loss, match_actions, planner_outputs,
                             replay_planner)
from navtune.demo import Demonstration, DemoRecord
from navtune.dwa import BudgetModel, DEFAULT_PARAMS, PlannerParams
from navtune.errors import InvalidInputError
from navtune.pipeline import deploy_session
from navtune.world import Action, RobotState, ScanConfig, SimConfig, raycast_scan
from navtune.worlds import corridor_world, route_poses


def record_stream(world, cfg, n, action=Action(0.3, 0.0), x0=0.6):
    """Hand-built open-loop record sequence: stationary states, fixed cmd."""
    goal = (world.width_m - 0.6, world.height_m / 2.0)
    recs = []
    for i in range(n):
        state = RobotState(x0, world.height_m / 2.0, 0.0)
        scan = raycast_scan(world, state, cfg.scan)
        recs.append(DemoRecord(i * cfg.dt, state, goal, scan, action))
    return Demonstration(recs, "corridor", 1.0 / cfg.dt, cfg.scan)


def pseudo_demo(world, cfg, params, timeout=30.0):
    """Demonstration generated by the planner itself (states + held actions)."""
    start, goal = route_poses(world, "full")
    bundle = make_fixed_bundle(params, cfg.scan)
    recs = []
    for snap in deploy_session(world, bundle, start, goal, cfg, timeout):
        scan = snap.scan if snap.scan is not None else raycast_scan(world, snap.state, cfg.scan)
        recs.append(DemoRecord(snap.tick * cfg.dt, snap.state, goal, scan, snap.action))
    return Demonstration(recs, "corridor", 1.0 / cfg.dt, cfg.scan)


class TestMatching:
    def test_aligned_clocks_no_zero_fill(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig(dt=0.05, control_period=0.05)
        demo = record_stream(world, cfg, 20)
        md = replay_planner(world, demo, DEFAULT_PARAMS, cfg, budget_s=math.inf)
        assert md.zero_fill_count == 0
        outs = planner_outputs(world, demo, DEFAULT_PARAMS, cfg, budget_s=math.inf)
        assert len(outs) == 20  # one output per record, same tick

    def test_4hz_planner_20hz_recording(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig(dt=0.05, control_period=0.25)
        demo = record_stream(world, cfg, 40)
        outs = planner_outputs(world, demo, DEFAULT_PARAMS, cfg, budget_s=math.inf)
        assert len(outs) == 8  # ticks 0, 5, 10, ...
        md = replay_planner(world, demo, DEFAULT_PARAMS, cfg, eps=0.25, budget_s=math.inf)
        assert md.zero_fill_count == 0
        # each output serves at most 5 consecutive records
        out_times = [t for t, _ in outs]
        spans = {}
        for p in md.pairs:
            t_match = max(t for t in out_times if t <= p.t + 1e-12)
            spans[t_match] = spans.get(t_match, 0) + 1
        assert max(spans.values()) <= 5

    def test_all_missed_all_zero_filled(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig()
        demo = record_stream(world, cfg, 30, action=Action(1.0, 0.0))
        # zero budget: every cycle exceeds it
        md = replay_planner(world, demo, DEFAULT_PARAMS, cfg, budget_s=0.0)
        assert md.zero_fill_count == len(demo)
        assert md.loss() == pytest.approx(1.0)

    def test_match_is_most_recent_within_eps(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig()
        demo = record_stream(world, cfg, 10)
        outs = [(0.0, Action(0.1, 0.0)), (0.2, Action(0.2, 0.0))]
        md = match_actions(demo, outs, eps=0.25)
        # records at t < 0.2 match the first output, later ones the second,
        # and records beyond 0.2 + eps fall back to zero
        assert md.pairs[0].a_planner.v == 0.1
        assert md.pairs[5].a_planner.v == 0.2  # t = 0.25
        assert md.pairs[9].a_planner.v == 0.2  # t = 0.45 == 0.2 + eps
        assert not md.pairs[9].zero_filled

    def test_scan_mismatch_raises(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig()
        demo = record_stream(world, cfg, 10)
        other = SimConfig(scan=ScanConfig(beam_count=45))
        with pytest.raises(InvalidInputError):
            replay_planner(world, demo, DEFAULT_PARAMS, other)


class TestLoss:
    def test_oracle_params_zero_loss(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig()
        demo = pseudo_demo(world, cfg, DEFAULT_PARAMS)
        loss = bc_loss(world, demo, DEFAULT_PARAMS, cfg)
        assert loss == 0.0

    def test_h_weight_identity(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig()
        demo = record_stream(world, cfg, 30, action=Action(0.8, 0.4))
        md = replay_planner(world, demo, DEFAULT_PARAMS, cfg)
        dv = np.array([p.a_demo.v - p.a_planner.v for p in md.pairs])
        dw = np.array([p.a_demo.w - p.a_planner.w for p in md.pairs])
        for hv, hw in ((1.0, 1.0), (2.0, 0.5), (0.1, 3.0)):
            expect = hv * float((dv**2).mean()) + hw * float((dw**2).mean())
            got = md.loss(LossWeights(hv, hw))
            assert got == pytest.approx(expect, abs=1e-12)

    def test_h_scaling_preserves_argmin(self):
        world = corridor_world(6.0, 1.5)
        cfg = SimConfig()
        demo = record_stream(world, cfg, 20, action=Action(0.5, 0.1))
        grid = [PlannerParams(max_vel_x=v, max_vel_theta=w)
                for v in (0.3, 0.5, 0.9) for w in (0.8, 1.57, 2.4)]
        base = [bc_loss(world, demo, p, cfg) for p in grid]
        scaled = [bc_loss(world, demo, p, cfg, LossWeights(3.0, 3.0)) for p in grid]
        for b, s in zip(base, scaled):
            assert s == pytest.approx(3.0 * b, rel=1e-12)
        assert int(np.argmin(base)) == int(np.argmin(scaled))

    def test_weights_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            LossWeights(0.0, 1.0)
