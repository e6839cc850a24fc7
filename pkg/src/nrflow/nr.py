"""Newton-Raphson flow tracking controller with I-CBF input saturation.

The controller's state is its own input ``u``.  Each tick it evaluates the
flow rate

    u_dot = alpha * J^-1 (r(t + T) - y_pred(x, u)),

where ``y_pred`` is the frozen-input output predictor and ``J`` its input
Jacobian, passes the rate through a per-channel barrier filter that keeps
``u`` inside ``[u_min, u_max]``, and integrates it with one explicit Euler
step over the control period.
"""
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .base import SINGULAR_JACOBIAN, ControlOutput, Controller
from .exceptions import SingularJacobian
from .predictor import PredictorConfig, predict_with_jacobian

DAMPING_FLOOR = 1e-6


@dataclass(frozen=True)
class NRConfig:
    alpha: float = 1.0
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    u_min: tuple = (-np.inf,) * 4
    u_max: tuple = (np.inf,) * 4
    gamma: float = 10.0
    lam: float = 0.0
    sigma_min: float = 1e-6

    def __post_init__(self):
        lo = np.asarray(self.u_min, dtype=float)
        hi = np.asarray(self.u_max, dtype=float)
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        if isinstance(self.predictor, dict):
            object.__setattr__(self, "predictor", PredictorConfig(**self.predictor))
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError("u_min must be componentwise below u_max")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.lam < 0 or not self.sigma_min > 0:
            raise ValueError("lam must be >= 0 and sigma_min > 0")

    def as_dict(self):
        d = asdict(self)
        d["u_min"] = self.u_min.tolist()
        d["u_max"] = self.u_max.tolist()
        return d


@dataclass(frozen=True)
class NRState:
    u: np.ndarray
    y_pred: np.ndarray = None
    flags: tuple = ()


def damped_solve(J, residual, lam=0.0, sigma_min=1e-6):
    """Solve ``J v = residual``, switching to a damped least-squares solve.

    Damping ``(J^T J + lam I)^-1 J^T`` is used when ``lam > 0`` or when the
    smallest singular value of ``J`` is below ``sigma_min`` (then with
    ``lam`` at least ``DAMPING_FLOOR``).  Returns ``(v, damped)``.
    """
    s = np.linalg.svd(J, compute_uv=False)
    damped = lam > 0 or s[-1] < sigma_min
    try:
        if not damped:
            v = np.linalg.solve(J, residual)
        else:
            mu = max(lam, DAMPING_FLOOR) if s[-1] < sigma_min else lam
            v = np.linalg.solve(J.T @ J + mu * np.eye(J.shape[1]), J.T @ residual)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("output Jacobian is numerically singular") from exc
    if not np.all(np.isfinite(v)):
        raise SingularJacobian("damped Newton step overflowed")
    return v, damped


def _rate(plant, x, u, r_future, cfg):
    y_pred, J = predict_with_jacobian(plant, x, u, cfg.predictor)
    residual = plant.output_error(y_pred, r_future)
    v, damped = damped_solve(J, residual, cfg.lam, cfg.sigma_min)
    return cfg.alpha * v, y_pred, damped


def nr_rate(plant, x, s, r_future, cfg):
    """NR flow rate ``alpha * J^-1 (r_future - y_pred)`` at ``(x, s.u)``."""
    u = s.u if isinstance(s, NRState) else s
    return _rate(plant, x, np.asarray(u, dtype=float), r_future, cfg)[0]


def nr_rate_memoryless(g, dg, r, u, alpha=1.0):
    """NR flow for a memoryless plant ``y = g(u)``."""
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    D = np.atleast_2d(np.asarray(dg(u), dtype=float))
    e = np.atleast_1d(r - np.asarray(g(u), dtype=float))
    try:
        if np.linalg.matrix_rank(D) < D.shape[0]:
            raise np.linalg.LinAlgError
        v = np.linalg.solve(D, e)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("dg/du is singular") from exc
    v = alpha * v
    return v.reshape(u.shape) if u.ndim else float(v[0])


def icbf_filter(s, udot_raw, cfg):
    """Minimal-intervention barrier filter on the input rate.

    Per channel the barriers ``b+ = u_max - u`` and ``b- = u - u_min`` must
    satisfy ``u_dot <= gamma b+`` and ``u_dot >= -gamma b-``; the closest
    admissible rate to ``udot_raw`` is a clamp.  Outside the box the bounds
    force motion back inside.  Broadcasts over leading axes.
    """
    u = s.u if isinstance(s, NRState) else np.asarray(s, dtype=float)
    upper = cfg.gamma * (cfg.u_max - u)
    lower = -cfg.gamma * (u - cfg.u_min)
    return np.minimum(np.maximum(udot_raw, lower), upper)


def overshoot_bound(cfg, dt_ctrl, one_step=False):
    """Per-channel worst-case excursion past the box under Euler input steps.

    With ``c = gamma * dt_ctrl - 1``, a single step from inside the box can
    overshoot by at most ``c * width``.  Once outside, the next step may
    land on the far side by ``c * (width + excess)``, so over an arbitrary
    rate stream the excursion is bounded by ``c * width / (1 - c)``
    (infinite for ``c >= 1``).  Both are zero whenever
    ``gamma * dt_ctrl <= 1``.  ``one_step`` selects the single-step value.
    """
    width = cfg.u_max - cfg.u_min
    c = max(0.0, cfg.gamma * dt_ctrl - 1.0)
    if one_step or c == 0.0:
        return c * width
    if c >= 1.0:
        return np.full_like(width, np.inf)
    return c * width / (1.0 - c)


def step(plant, x, s, r_future, dt_ctrl, cfg):
    """One control period: ``u+ = u + dt * icbf_filter(nr_rate(...))``.

    Returns ``(u_cmd, new_state)``.  If the Jacobian is singular even
    after damping, the previous input is held and the state is flagged.
    """
    if not dt_ctrl > 0:
        raise ValueError("dt_ctrl must be positive")
    u = np.asarray(s.u, dtype=float)
    try:
        udot, y_pred, damped = _rate(plant, x, u, r_future, cfg)
    except SingularJacobian:
        return u.copy(), NRState(u.copy(), None, (SINGULAR_JACOBIAN,))
    u_new = u + dt_ctrl * icbf_filter(u, udot, cfg)
    return u_new, NRState(u_new, y_pred, ("damped",) if damped else ())


class NRController(Controller):
    """Closed-loop wrapper around :func:`step` for the simulation harness."""

    name = "NR"

    def __init__(self, plant, cfg, dt_ctrl, u0=None):
        self.plant = plant
        self.cfg = cfg
        self.dt_ctrl = dt_ctrl
        self.u0 = plant.u_eq if u0 is None else np.asarray(u0, dtype=float)
        self.state = NRState(self.u0.copy())

    def reset(self, x0=None):
        self.state = NRState(self.u0.copy())

    def compute(self, t, x, traj):
        r_future = traj.lookahead(t, self.cfg.predictor.T)
        u, self.state = step(self.plant, x, self.state, r_future, self.dt_ctrl, self.cfg)
        return ControlOutput(u, self.state.y_pred, self.state.flags)

    def with_config(self, **changes):
        return NRController(self.plant, replace(self.cfg, **changes), self.dt_ctrl, self.u0)

    def describe(self):
        return {"name": self.name, **self.cfg.as_dict()}
