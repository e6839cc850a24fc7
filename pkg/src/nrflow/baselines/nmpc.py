"""Direct single-shooting nonlinear MPC with a projected Gauss-Newton solver.

The horizon program is

    min_U  sum_j e_{j+1}^T Q e_{j+1} + (u_j - u_ref)^T R (u_j - u_ref)
    s.t.   x_{j+1} = x_j + dt f(x_j, u_j),   u_j in [u_min, u_max],

with ``e = h(x) - r`` (yaw wrapped).  ``u_ref`` defaults to zero, the form
of the original program; the quadrotor sets it to hover thrust so that the
effort term does not fight gravity.

Each iteration linearizes the rollout (forward sensitivities from dual
Jacobians of ``f``), solves the Gauss-Newton system on the free variables
(bounds whose gradient points outward are held), then backtracks along the
projected step until the cost decreases.  The cost is therefore
non-increasing over accepted iterates and the plan is always inside the box.
"""
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..base import NO_DESCENT, TRUNCATED, ControlOutput, Controller
from ..exceptions import SingularAttitude
from ..models import wrap_angle


def _as_matrix(v, n):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.ndim == 1:
        return np.diag(np.broadcast_to(a, (n,)))
    return a


@dataclass(frozen=True)
class NMPCConfig:
    N: int = 20
    dt: float = 0.05
    Q: object = 1.0
    R: object = 1.0
    u_min: tuple = (-np.inf,) * 4
    u_max: tuple = (np.inf,) * 4
    u_ref: tuple = (0.0,) * 4
    max_iters: int = 10
    cost_tol: float = 1e-4
    warm_start: bool = True
    iteration_cap: int = None
    line_search_steps: int = 12
    regularization: float = 1e-9

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be an integer >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        Q = _as_matrix(self.Q, 4)
        R = _as_matrix(self.R, 4)
        if not (np.allclose(Q, Q.T) and np.allclose(R, R.T)):
            raise ValueError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        for name in ("u_min", "u_max", "u_ref"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not np.all(self.u_min < self.u_max):
            raise ValueError("u_min must be componentwise below u_max")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.iteration_cap is not None and self.iteration_cap < 1:
            raise ValueError("iteration_cap must be >= 1")

    @property
    def horizon(self):
        return self.N * self.dt

    def as_dict(self):
        return {
            "N": self.N, "dt": self.dt, "Q": self.Q.tolist(), "R": self.R.tolist(),
            "u_min": self.u_min.tolist(), "u_max": self.u_max.tolist(),
            "u_ref": self.u_ref.tolist(), "max_iters": self.max_iters,
            "cost_tol": self.cost_tol, "warm_start": self.warm_start,
            "iteration_cap": self.iteration_cap,
        }


@dataclass
class NMPCResult:
    u0: np.ndarray
    plan: np.ndarray
    iters: int
    cost: float
    converged: bool = False
    flags: tuple = ()
    costs: list = field(default_factory=list)


# --------------------------------------------------------------------------
# rollouts


@njit(cache=True)
def _rollout_kernel(kernel, x0, U, params, dt):
    N = U.shape[0]
    xs = np.empty((N + 1, x0.shape[0]))
    xs[0] = x0
    X = x0.reshape((-1, 1)).copy()
    for j in range(N):
        dX, ok = kernel(X, U[j].reshape((-1, 1)).copy(), params)
        if not ok:
            return xs, False
        X = X + dt * dX
        xs[j + 1] = X[:, 0]
    return xs, True


@njit(cache=True)
def _jacobian_kernel(kernel, xs, U, params, dt):
    """Discrete Jacobians ``A_j = I + dt df/dx``, ``B_j = dt df/du``."""
    N, m = U.shape
    n = xs.shape[1]
    A = np.empty((N, n, n))
    B = np.empty((N, n, m))
    k = n + m
    for j in range(N):
        X = np.zeros((n, 1 + k))
        Uj = np.zeros((m, 1 + k))
        X[:, 0] = xs[j]
        Uj[:, 0] = U[j]
        for i in range(n):
            X[i, 1 + i] = 1.0
        for i in range(m):
            Uj[i, 1 + n + i] = 1.0
        dX, ok = kernel(X, Uj, params)
        if not ok:
            return A, B, False
        A[j] = dt * dX[:, 1:1 + n]
        for i in range(n):
            A[j, i, i] += 1.0
        B[j] = dt * dX[:, 1 + n:]
    return A, B, True


@njit(cache=True)
def _sensitivity_kernel(A, B, C):
    """``G[j] = d y_{j+1} / d U`` (flattened inputs) for the Euler rollout."""
    N, n, m = B.shape
    p = C.shape[0]
    G = np.zeros((N, p, N * m))
    S = np.zeros((n, N * m))
    for j in range(N):
        S = A[j] @ S
        S[:, j * m:(j + 1) * m] += B[j]
        G[j] = C @ S
    return G


def _rollout(plant, x0, U, dt):
    if plant.kernel is not None:
        xs, ok = _rollout_kernel(plant.kernel, x0, U, plant.kernel_params, dt)
        if not ok:
            raise SingularAttitude(f"{plant.name}: NMPC rollout hit the Euler singularity")
        return xs
    xs = np.empty((U.shape[0] + 1, x0.shape[0]))
    xs[0] = x0
    for j in range(U.shape[0]):
        xs[j + 1] = xs[j] + dt * plant.f(xs[j], U[j])
    return xs


def _linearize(plant, xs, U, dt):
    if plant.kernel is not None:
        A, B, ok = _jacobian_kernel(plant.kernel, xs, U, plant.kernel_params, dt)
        if not ok:
            raise SingularAttitude(f"{plant.name}: NMPC linearization hit the Euler singularity")
    else:
        from .._dual import seed

        N, m = U.shape
        n = xs.shape[1]
        A = np.empty((N, n, n))
        B = np.empty((N, n, m))
        for j in range(N):
            X, Uj = seed(xs[j], U[j], wrt="xu")
            dX = plant.f_dual(X, Uj)
            A[j] = np.eye(n) + dt * dX[:, 1:1 + n]
            B[j] = dt * dX[:, 1 + n:]
    return _sensitivity_kernel(A, B, np.ascontiguousarray(plant.output_matrix))


def _sqrt_psd(Q):
    w, V = np.linalg.eigh(Q)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


class _Problem:
    def __init__(self, plant, x0, ref, cfg):
        self.plant = plant
        self.x0 = np.asarray(x0, dtype=float)
        self.ref = np.asarray(ref, dtype=float)
        self.cfg = cfg
        self.Lq = _sqrt_psd(cfg.Q)
        self.Lr = np.linalg.cholesky(cfg.R).T
        if self.ref.shape != (cfg.N, plant.dim_y):
            raise ValueError(f"ref_window must have shape ({cfg.N}, {plant.dim_y})")

    def errors(self, xs):
        e = xs[1:] @ self.plant.output_matrix.T - self.ref
        for i in self.plant.angle_outputs:
            e[:, i] = wrap_angle(e[:, i])
        return e

    def residual(self, xs, U):
        e = self.errors(xs)
        return np.concatenate([(e @ self.Lq.T).ravel(), ((U - self.cfg.u_ref) @ self.Lr.T).ravel()])

    def evaluate(self, U):
        xs = _rollout(self.plant, self.x0, U, self.cfg.dt)
        res = self.residual(xs, U)
        return xs, res, float(res @ res)

    def jacobian(self, xs, U):
        cfg = self.cfg
        N, m = U.shape
        G = _linearize(self.plant, xs, U, cfg.dt)
        p = G.shape[1]
        Jq = np.einsum("ab,jbk->jak", self.Lq, G).reshape(N * p, N * m)
        Jr = np.kron(np.eye(N), self.Lr)
        return np.vstack([Jq, Jr])


def nmpc_solve(plant, x0, ref_window, cfg, warm=None):
    """Solve the horizon program from ``x0``; returns an :class:`NMPCResult`."""
    N, m = cfg.N, plant.dim_u
    lo = np.broadcast_to(cfg.u_min, (N, m))
    hi = np.broadcast_to(cfg.u_max, (N, m))
    if warm is None:
        U = np.tile(np.clip(cfg.u_ref, cfg.u_min, cfg.u_max), (N, 1))
    else:
        U = np.clip(np.asarray(warm, dtype=float).reshape(N, m), lo, hi)
    prob = _Problem(plant, x0, ref_window, cfg)
    xs, res, cost = prob.evaluate(U)
    costs = [cost]
    limit = cfg.max_iters if cfg.iteration_cap is None else min(cfg.max_iters, cfg.iteration_cap)
    flags = []
    converged = False
    iters = 0
    lo_f, hi_f = lo.ravel(), hi.ravel()
    while iters < limit:
        J = prob.jacobian(xs, U)
        g = J.T @ res
        H = J.T @ J
        u = U.ravel()
        free = ~(((u <= lo_f) & (g > 0)) | ((u >= hi_f) & (g < 0)))
        step = np.zeros_like(u)
        if free.any():
            Hf = H[np.ix_(free, free)]
            Hf[np.diag_indices_from(Hf)] += cfg.regularization
            step[free] = -np.linalg.solve(Hf, g[free])
        predicted = -(g @ step)
        if predicted <= 1e-14 * max(cost, 1.0):
            converged = True
            break
        t = 1.0
        accepted = False
        for _ in range(cfg.line_search_steps):
            U_try = np.clip(u + t * step, lo_f, hi_f).reshape(N, m)
            xs_try, res_try, cost_try = prob.evaluate(U_try)
            if cost_try < cost:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if iters == 0:
                flags.append(NO_DESCENT)
            break
        rel = (cost - cost_try) / max(cost, 1e-300)
        U, xs, res, cost = U_try, xs_try, res_try, cost_try
        costs.append(cost)
        iters += 1
        if rel < cfg.cost_tol:
            converged = True
            break
    if (not converged and cfg.iteration_cap is not None and iters >= cfg.iteration_cap
            and cfg.iteration_cap < cfg.max_iters and NO_DESCENT not in flags):
        flags.append(TRUNCATED)
    u0 = U[0].copy()
    if NO_DESCENT in flags and warm is not None:
        u0 = np.clip(np.asarray(warm, dtype=float).reshape(N, m)[0], cfg.u_min, cfg.u_max)
    return NMPCResult(u0, U, iters, cost, converged, tuple(flags), costs)


def size_iteration_cap(seconds_per_iteration, budget, throttle=1.0, overhead=0.0):
    """Largest iteration count whose emulated time fits in ``budget``."""
    usable = budget / throttle - overhead
    return max(1, int(usable // seconds_per_iteration))


def iteration_time_from_log(log):
    """Fit ``tick time = overhead + iters * seconds_per_iteration`` to a log.

    Uses the per-tick compute times and iteration counts of an NMPC
    episode (least squares); returns ``(seconds_per_iteration, overhead)``.
    """
    iters = np.array([info.get("iters", 0) for info in log.info], dtype=float)
    secs = log.compute_ns.astype(float) * 1e-9
    if np.ptp(iters) == 0:
        raise ValueError("iteration counts do not vary; cannot separate the overhead")
    slope, intercept = np.polyfit(iters, secs, 1)
    return float(max(slope, 1e-9)), float(max(intercept, 0.0))


def shift_plan(plan):
    """Receding-horizon warm start: drop the first input, repeat the last."""
    return np.vstack([plan[1:], plan[-1:]])


class NMPCController(Controller):
    name = "NMPC"

    def __init__(self, plant, cfg):
        self.plant = plant
        self.cfg = cfg
        self.plan = None
        self.last = None

    def reset(self, x0=None):
        self.plan = None
        self.last = None

    def compute(self, t, x, traj):
        cfg = self.cfg
        ref = traj.window(t, cfg.dt, cfg.N)
        warm = self.plan if cfg.warm_start else None
        res = nmpc_solve(self.plant, x, ref, cfg, warm)
        self.plan = shift_plan(res.plan)
        self.last = res
        y_next = self.plant.h(np.asarray(x) + cfg.dt * self.plant.f(x, res.u0))
        return ControlOutput(res.u0, y_next, res.flags, {"iters": res.iters, "cost": res.cost})

    def describe(self):
        return {"name": self.name, **self.cfg.as_dict()}
