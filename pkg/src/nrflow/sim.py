"""Closed-loop episode execution, deadline accounting and tracking metrics."""
import csv
import gc
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .base import CRASH, DEADLINE_MISS, TRUNCATED
from .exceptions import (
    EmptyWindow, EpisodeDiverged, NotLinearizable, NRFlowError, SingularAttitude, SingularJacobian,
)
from .trajectories import ACTIVE, Trajectory


DEADLINE_MODES = ("time", "cap")


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode settings.

    ``throttle`` multiplies measured compute times to emulate a slower
    target.  With ``deadline_mode = "time"`` a tick misses its deadline when
    the (throttled) compute time exceeds ``deadline_budget`` or the solver
    was truncated by its iteration cap; with ``"cap"`` the budget is taken
    to be enforced by the controller's iteration cap alone, so only
    truncated solves count as misses.
    """

    control_rate: float = 100.0
    sim_substeps: int = 10
    deadline_budget: float = 0.010
    noise: tuple = None
    seed: int = 0
    safety_bound: float = 100.0
    throttle: float = 1.0
    deadline_mode: str = "time"

    def __post_init__(self):
        if not self.control_rate > 0:
            raise ValueError("control_rate must be positive")
        if int(self.sim_substeps) != self.sim_substeps or self.sim_substeps < 1:
            raise ValueError("sim_substeps must be an integer >= 1")
        if not self.deadline_budget > 0:
            raise ValueError("deadline_budget must be positive")
        if not self.throttle >= 1:
            raise ValueError("throttle must be >= 1")
        if self.deadline_mode not in DEADLINE_MODES:
            raise ValueError(f"deadline_mode must be one of {DEADLINE_MODES}")
        if self.noise is not None:
            object.__setattr__(self, "noise", tuple(float(s) for s in self.noise))

    @property
    def dt(self):
        return 1.0 / self.control_rate

    @classmethod
    def for_platform(cls, platform, **overrides):
        base = {
            "quad": dict(control_rate=100.0, deadline_budget=0.010),
            "blimp": dict(control_rate=40.0, deadline_budget=0.025),
        }.get(platform, {})
        base.update(overrides)
        return cls(**base)

    def as_dict(self):
        d = asdict(self)
        d["noise"] = list(self.noise) if self.noise is not None else None
        return d


@dataclass
class EpisodeLog:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    r: np.ndarray
    y: np.ndarray
    y_pred: np.ndarray
    compute_ns: np.ndarray
    flags: list
    phase: list
    info: list = field(default_factory=list)
    plant: str = ""
    controller: str = ""
    trajectory: str = ""
    config: dict = field(default_factory=dict)
    crashed: bool = False
    crash_reason: str = ""

    def __len__(self):
        return len(self.t)

    @property
    def compute_time(self):
        """Per-tick controller time in seconds."""
        return self.compute_ns * 1e-9

    def header(self):
        n = self.x.shape[1]
        return (["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(4)]
                + [f"r{i}" for i in range(4)] + [f"ytilde{i}" for i in range(4)]
                + ["compute_ns", "flags"])

    def rows(self):
        for k in range(len(self)):
            yield ([repr(float(self.t[k]))]
                   + [repr(float(v)) for v in self.x[k]]
                   + [repr(float(v)) for v in self.u[k]]
                   + [repr(float(v)) for v in self.r[k]]
                   + [repr(float(v)) for v in self.y_pred[k]]
                   + [str(int(self.compute_ns[k])), "|".join(self.flags[k])])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            w.writerows(self.rows())

    def deterministic_view(self):
        """Everything except timing-derived fields, for reproducibility checks."""
        flags = [tuple(f for f in fl if f != DEADLINE_MISS) for fl in self.flags]
        return (self.t.tobytes(), self.x.tobytes(), self.u.tobytes(), self.r.tobytes(),
                self.y_pred.tobytes(), tuple(flags), tuple(self.phase), self.crashed)


@njit(cache=True)
def _rk4_kernel(kernel, x, u, params, h, n):
    X = x.reshape((-1, 1)).copy()
    U = u.reshape((-1, 1)).copy()
    for _ in range(n):
        k1, ok1 = kernel(X, U, params)
        k2, ok2 = kernel(X + 0.5 * h * k1, U, params)
        k3, ok3 = kernel(X + 0.5 * h * k2, U, params)
        k4, ok4 = kernel(X + h * k3, U, params)
        if not (ok1 and ok2 and ok3 and ok4):
            return X[:, 0], False
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return X[:, 0], True


def rk4_zoh(plant, x, u, dt, n):
    """Advance the plant ``dt`` seconds with input ``u`` held, ``n`` RK4 steps."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = dt / n
    if plant.kernel is not None:
        x_new, ok = _rk4_kernel(plant.kernel, x, u, plant.kernel_params, h, n)
        if not ok:
            raise SingularAttitude(f"{plant.name}: state reached the Euler singularity")
        return x_new
    f = plant.f
    for _ in range(n):
        k1 = f(x, u)
        k2 = f(x + 0.5 * h * k1, u)
        k3 = f(x + 0.5 * h * k2, u)
        k4 = f(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def run_episode(plant, controller, spec, cfg, x0=None, strict=False, warmup=True):
    """Simulate one closed-loop episode and return its :class:`EpisodeLog`.

    The plant starts at rest on the initial reference unless ``x0`` is given.
    Divergence (non-finite state, ``|x| > safety_bound``, Euler singularity
    or a controller failure) ends the episode with the crash flag set on
    the last tick; with ``strict=True`` it raises :class:`EpisodeDiverged`
    carrying the partial log instead.

    ``warmup`` runs one untimed controller call before the loop so that
    JIT compilation is not charged to the first tick.  Garbage collection
    is paused while the loop runs.
    """
    traj = Trajectory(spec)
    rng = np.random.default_rng(cfg.seed)
    x = plant.rest_state(traj.sample(0.0).r) if x0 is None else np.asarray(x0, dtype=float)
    n_ticks = int(round(spec.total_time * cfg.control_rate))
    noise = None if cfg.noise is None else np.asarray(cfg.noise, dtype=float)

    if warmup:
        try:
            controller.reset(x)
            controller.compute(0.0, x, traj)
        except (NRFlowError, ArithmeticError):
            pass
    ts, xs, us, rs, ys, yps, cts, flags, phases, infos = [], [], [], [], [], [], [], [], [], []
    crashed, reason = False, ""
    controller.reset(x)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        crashed, reason = _loop(plant, controller, traj, cfg, x, n_ticks, noise, rng,
                                ts, xs, us, rs, ys, yps, cts, flags, phases, infos)
    finally:
        if gc_was_enabled:
            gc.enable()
    if crashed:
        flags[-1].append(CRASH)

    log = EpisodeLog(
        t=np.asarray(ts), x=np.asarray(xs), u=np.asarray(us), r=np.asarray(rs),
        y=np.asarray(ys), y_pred=np.asarray(yps), compute_ns=np.asarray(cts, dtype=np.int64),
        flags=[tuple(f) for f in flags], phase=phases, info=infos,
        plant=plant.name, controller=controller.name, trajectory=spec.kind,
        config={"episode": cfg.as_dict(), "trajectory": spec.as_dict(),
                "controller": controller.describe()},
        crashed=crashed, crash_reason=reason,
    )
    if crashed and strict:
        raise EpisodeDiverged(reason, log)
    return log


def _loop(plant, controller, traj, cfg, x, n_ticks, noise, rng,
          ts, xs, us, rs, ys, yps, cts, flags, phases, infos):
    spec = traj.spec
    dt = cfg.dt
    budget_ns = cfg.deadline_budget * 1e9
    crashed, reason = False, ""
    clock = time.perf_counter_ns
    for k in range(n_ticks + 1):
        t = min(k * dt, spec.total_time)
        x_meas = x if noise is None else x + noise * rng.standard_normal(x.shape[0])
        ref = traj.sample(t)
        tick_flags = []
        start = clock()
        try:
            out = controller.compute(t, x_meas, traj)
        except (SingularAttitude, SingularJacobian, NotLinearizable, FloatingPointError) as exc:
            elapsed = clock() - start
            crashed, reason = True, f"controller: {exc}"
            out = None
        else:
            elapsed = clock() - start
        elapsed = int(elapsed * cfg.throttle)
        u = out.u if out is not None else np.full(plant.dim_u, np.nan)
        if out is not None:
            tick_flags.extend(out.flags)
            late = cfg.deadline_mode == "time" and elapsed > budget_ns
            if late or TRUNCATED in out.flags:
                tick_flags.append(DEADLINE_MISS)
        ts.append(t)
        xs.append(x.copy())
        us.append(np.asarray(u, dtype=float).copy())
        rs.append(ref.r)
        ys.append(plant.h(x))
        yps.append(np.full(4, np.nan) if out is None or out.y_pred is None else out.y_pred)
        cts.append(elapsed)
        phases.append(ref.phase)
        flags.append(tick_flags)
        infos.append({} if out is None else out.info)
        if crashed:
            break
        if k == n_ticks:
            break
        try:
            x = rk4_zoh(plant, x, u, dt, cfg.sim_substeps)
        except SingularAttitude as exc:
            crashed, reason = True, str(exc)
            break
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > cfg.safety_bound:
            crashed, reason = True, "state left the safety bound"
            break
    return crashed, reason


# --------------------------------------------------------------------------
# metrics


def _window(log, clip):
    if len(log) == 0:
        raise EmptyWindow("log is empty")
    if not clip:
        return np.ones(len(log), dtype=bool)
    mask = np.array([p == ACTIVE for p in log.phase])
    if not mask.any():
        raise EmptyWindow("clipping removed every tick")
    return mask


def rmse(log, clip=False):
    """RMS of the Euclidean position error in meters."""
    m = _window(log, clip)
    err = log.y[m, :3] - log.r[m, :3]
    return float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))


def yaw_rmse(log, clip=False):
    """RMS of the wrapped yaw error in radians."""
    from .models import wrap_angle

    m = _window(log, clip)
    e = wrap_angle(log.y[m, 3] - log.r[m, 3])
    return float(np.sqrt(np.mean(np.square(e))))


def timing_stats(log, budget=None):
    """``(mean_ms, std_ms, max_ms, miss_fraction)`` of controller time.

    ``std`` is the sample standard deviation (zero for a single tick);
    a miss is a tick whose compute time exceeds ``budget`` seconds
    (default: the episode's deadline budget).
    """
    if len(log) == 0:
        raise EmptyWindow("log is empty")
    if budget is None:
        budget = log.config.get("episode", {}).get("deadline_budget", np.inf)
    ms = log.compute_ns.astype(float) * 1e-6
    std = float(np.std(ms, ddof=1)) if ms.size > 1 else 0.0
    miss = float(np.mean(ms > budget * 1e3))
    return float(np.mean(ms)), std, float(np.max(ms)), miss


def deadline_miss_fraction(log):
    """Fraction of ticks flagged as deadline misses."""
    if len(log) == 0:
        raise EmptyWindow("log is empty")
    return float(np.mean([DEADLINE_MISS in f for f in log.flags]))


def summarize(log):
    """Metrics block for the JSON summary."""
    mean, std, mx, miss = timing_stats(log)
    out = {
        "plant": log.plant,
        "controller": log.controller,
        "trajectory": log.trajectory,
        "ticks": len(log),
        "crashed": log.crashed,
        "crash_reason": log.crash_reason,
        "compute_ms_mean": mean,
        "compute_ms_std": std,
        "compute_ms_max": mx,
        "compute_ms_total": float(log.compute_ns.sum() * 1e-6),
        "time_miss_fraction": miss,
        "deadline_miss_fraction": deadline_miss_fraction(log),
    }
    for key, clip in (("rmse_clipped", True), ("rmse", False)):
        try:
            out[key] = rmse(log, clip)
            out["yaw_" + key] = yaw_rmse(log, clip)
        except EmptyWindow:
            out[key] = out["yaw_" + key] = None
    if log.crashed:
        # a crashed flight has no meaningful tracking score
        out["rmse_clipped"] = out["rmse"] = None
    return out


def write_summary(path, summaries):
    with open(path, "w") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
