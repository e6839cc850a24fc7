import csv
import statistics

import numpy as np
import pytest

from nrflow.base import CRASH, DEADLINE_MISS, TRUNCATED, ControlOutput, Controller
from nrflow.baselines import NMPCConfig, NMPCController
from nrflow.defaults import defaults, make_controller
from nrflow.exceptions import EmptyWindow, EpisodeDiverged
from nrflow.models import LinearPlant, Quadrotor
from nrflow.sim import (
    EpisodeConfig, EpisodeLog, deadline_miss_fraction, rk4_zoh, rmse, run_episode, summarize,
    timing_stats,
)
from nrflow.trajectories import ACTIVE, HOVER_LEAD, TrajectorySpec

SHORT = TrajectorySpec("CircleA", hover_lead=1.0, return_hold=1.0, total_time=4.0)


class Constant(Controller):
    name = "constant"

    def __init__(self, u, flags=()):
        self.u = np.asarray(u, dtype=float)
        self.flags = flags

    def compute(self, t, x, traj):
        return ControlOutput(self.u.copy(), None, self.flags)


def synthetic_log(y, r, phase, compute_ns=None, budget=0.010):
    n = len(y)
    y = np.asarray(y, dtype=float)
    return EpisodeLog(
        t=np.arange(n, dtype=float), x=y.copy(), u=np.zeros((n, 4)), r=np.asarray(r, float),
        y=y, y_pred=np.full((n, 4), np.nan),
        compute_ns=np.zeros(n, np.int64) if compute_ns is None else np.asarray(compute_ns),
        flags=[()] * n, phase=list(phase), config={"episode": {"deadline_budget": budget}},
    )


class TestEpisode:
    def test_zero_dynamics_hold_state(self):
        plant = LinearPlant.zero()
        log = run_episode(plant, Constant(np.ones(4)), SHORT, EpisodeConfig())
        np.testing.assert_array_equal(log.x, np.tile(log.x[0], (len(log), 1)))
        assert len(log) == 401 and not log.crashed

    def test_quad_nr_circle_does_not_crash(self):
        q = Quadrotor()
        block = defaults("quad")
        ctrl = make_controller("quad", "NR", q, block["NR"], 0.01)
        log = run_episode(q, ctrl, SHORT, EpisodeConfig.for_platform("quad"))
        assert not log.crashed
        assert rmse(log, clip=True) < 0.3

    def test_inflated_solver_misses_deadlines(self):
        q = Quadrotor()
        block = defaults("quad")["NMPC"]
        cfg = NMPCConfig(**{**block, "max_iters": 200, "cost_tol": 0.0})
        spec = TrajectorySpec("CircleA", hover_lead=0.0, return_hold=0.0, total_time=0.2)
        log = run_episode(q, NMPCController(q, cfg), spec, EpisodeConfig(throttle=50.0))
        assert deadline_miss_fraction(log) > 0.5

    def test_cap_mode_counts_truncation_only(self):
        spec = TrajectorySpec("CircleA", hover_lead=0.0, return_hold=0.0, total_time=0.1)
        plant = LinearPlant.zero()
        slow = EpisodeConfig(deadline_budget=1e-12, deadline_mode="cap")
        log = run_episode(plant, Constant(np.zeros(4)), spec, slow)
        assert deadline_miss_fraction(log) == 0.0
        log = run_episode(plant, Constant(np.zeros(4), (TRUNCATED,)), spec, slow)
        assert deadline_miss_fraction(log) == 1.0
        timed = EpisodeConfig(deadline_budget=1e-12)
        assert deadline_miss_fraction(run_episode(plant, Constant(np.zeros(4)), spec, timed)) == 1

    def test_crash_accounting(self):
        plant = LinearPlant.integrator()
        cfg = EpisodeConfig(safety_bound=5.0)
        log = run_episode(plant, Constant(np.full(4, 10.0)), SHORT, cfg)
        assert log.crashed and CRASH in log.flags[-1]
        assert len(log) < 401
        s = summarize(log)
        assert s["rmse_clipped"] is None and s["rmse"] is None
        with pytest.raises(EpisodeDiverged) as info:
            run_episode(plant, Constant(np.full(4, 10.0)), SHORT, cfg, strict=True)
        assert info.value.log.crashed

    def test_deterministic(self):
        q = Quadrotor()
        block = defaults("quad")
        cfg = EpisodeConfig(noise=(1e-3,) * q.dim_x, seed=7)
        views = []
        for _ in range(2):
            ctrl = make_controller("quad", "NR", q, block["NR"], 0.01)
            views.append(run_episode(q, ctrl, SHORT, cfg).deterministic_view())
        assert views[0] == views[1]

    def test_csv_header(self, tmp_path):
        log = run_episode(LinearPlant.zero(), Constant(np.zeros(4)), SHORT, EpisodeConfig())
        path = tmp_path / "log.csv"
        log.to_csv(path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:2] == ["t", "x0"] and rows[0][-2:] == ["compute_ns", "flags"]
        assert "ytilde3" in rows[0] and "u3" in rows[0] and "r0" in rows[0]
        assert len(rows) == len(log) + 1

    @pytest.mark.parametrize("kwargs", [{"control_rate": 0}, {"sim_substeps": 0},
                                        {"throttle": 0.5}, {"deadline_mode": "soft"}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            EpisodeConfig(**kwargs)


class TestIntegrator:
    def test_zoh_double_integrator_exact(self):
        plant = LinearPlant.double_integrator(4)
        x = rk4_zoh(plant, np.zeros(8), np.full(4, 2.0), 0.5, 3)
        np.testing.assert_allclose(x, [0.25] * 4 + [1.0] * 4, atol=1e-15)

    def test_fourth_order_convergence(self):
        plant = LinearPlant(np.array([[0.0, 1.0], [-4.0, 0.0]]), np.array([[0.0], [1.0]]),
                            np.eye(1, 2))
        u = np.array([1.0])
        x0 = np.array([1.0, 0.0])
        # x'' = -4x + 1: x = 1/4 + (3/4) cos 2t
        exact = np.array([0.25 + 0.75 * np.cos(2.0), -1.5 * np.sin(2.0)])
        errs = [np.linalg.norm(rk4_zoh(plant, x0, u, 1.0, n) - exact) for n in (10, 20, 40)]
        ratios = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(ratios > 3.8)


class TestMetrics:
    def test_rmse_zero(self):
        y = [[1.0, 2.0, 3.0, 0.0]] * 3
        assert rmse(synthetic_log(y, y, [ACTIVE] * 3)) == 0.0

    def test_rmse_constant_offset(self):
        r = np.zeros((4, 4))
        y = r + [0.1, 0.0, 0.0, 5.0]
        assert rmse(synthetic_log(y, r, [ACTIVE] * 4)) == pytest.approx(0.1, abs=1e-15)

    def test_rmse_clipped_window(self):
        r = np.zeros((4, 4))
        y = np.zeros((4, 4))
        y[0, :3] = 10.0
        y[1:, 0] = [0.5, 0.0, 0.0]
        log = synthetic_log(y, r, [HOVER_LEAD, ACTIVE, ACTIVE, ACTIVE])
        assert rmse(log, clip=True) == pytest.approx(np.sqrt(0.25 / 3), abs=1e-15)
        zero = synthetic_log(y[1:], r[1:], [ACTIVE] * 3)
        assert rmse(zero, clip=False) == rmse(log, clip=True)

    def test_empty_window(self):
        log = synthetic_log(np.zeros((2, 4)), np.zeros((2, 4)), [HOVER_LEAD] * 2)
        with pytest.raises(EmptyWindow):
            rmse(log, clip=True)
        with pytest.raises(EmptyWindow):
            rmse(synthetic_log(np.zeros((0, 4)), np.zeros((0, 4)), []))

    def test_timing_constant(self):
        log = synthetic_log(np.zeros((5, 4)), np.zeros((5, 4)), [ACTIVE] * 5,
                            compute_ns=[1_000_000] * 5)
        assert timing_stats(log) == (1.0, 0.0, 1.0, 0.0)

    def test_timing_half_missed(self):
        ns = [5_000_000, 15_000_000] * 3
        log = synthetic_log(np.zeros((6, 4)), np.zeros((6, 4)), [ACTIVE] * 6, compute_ns=ns)
        mean, _, mx, miss = timing_stats(log, budget=0.010)
        assert (mean, mx, miss) == (10.0, 15.0, 0.5)

    def test_timing_against_statistics(self, rng):
        ns = np.round(rng.lognormal(np.log(2e6), 0.5, size=500)).astype(np.int64)
        log = synthetic_log(np.zeros((500, 4)), np.zeros((500, 4)), [ACTIVE] * 500,
                            compute_ns=ns)
        mean, std, mx, miss = timing_stats(log, budget=0.003)
        ms = [v / 1e6 for v in ns.tolist()]
        assert mean == pytest.approx(statistics.fmean(ms), abs=1e-9)
        assert std == pytest.approx(statistics.stdev(ms), abs=1e-9)
        assert mx == pytest.approx(max(ms), abs=1e-12)
        assert miss == sum(v > 3.0 for v in ms) / 500

    def test_miss_fraction_counts_flags(self):
        log = synthetic_log(np.zeros((4, 4)), np.zeros((4, 4)), [ACTIVE] * 4)
        log.flags = [(DEADLINE_MISS,), (), (TRUNCATED, DEADLINE_MISS), ()]
        assert deadline_miss_fraction(log) == 0.5
