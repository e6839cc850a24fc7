"""Frozen-input output predictor and its input Jacobian.

The state is propagated from the current state with the current input held
constant, using ``n_steps`` forward-Euler steps over the horizon ``T``.  In
dual mode the tangents of the input directions ride along with the Euler
recursion, giving the exact Jacobian of the discretized map in the same pass.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._dual import seed
from .exceptions import NonFiniteJacobian, SingularAttitude

DUAL = "dual"
FD = "fd"


@dataclass(frozen=True)
class PredictorConfig:
    T: float = 0.5
    n_steps: int = 8
    jacobian_mode: str = DUAL
    fd_step: float = 1e-6

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("prediction horizon T must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be an integer >= 1")
        if self.jacobian_mode not in (DUAL, FD):
            raise ValueError(f"jacobian_mode must be {DUAL!r} or {FD!r}")
        if self.jacobian_mode == FD and not self.fd_step > 0:
            raise ValueError("fd_step must be positive")


@njit(cache=True)
def _euler_kernel(kernel, X, U, params, h, n):
    for _ in range(n):
        dX, ok = kernel(X, U, params)
        if not ok:
            return X, False
        X = X + h * dX
    return X, True


def _propagate(plant, X, U, cfg):
    h = cfg.T / cfg.n_steps
    if plant.kernel is not None:
        X, ok = _euler_kernel(plant.kernel, X, U, plant.kernel_params, h, cfg.n_steps)
        if not ok:
            raise SingularAttitude(f"{plant.name}: prediction reached the Euler singularity")
        return X
    for _ in range(cfg.n_steps):
        X = X + h * plant.f_dual(X, U)
    return X


def predict_state(plant, x, u, cfg):
    """State after ``T`` seconds under the frozen input ``u``."""
    X, U = seed(x, u, wrt=None)
    return _propagate(plant, X, U, cfg)[:, 0]


def predict_output(plant, x, u, cfg):
    """Predicted output ``h(xi(t + T))``."""
    return plant.h(predict_state(plant, x, u, cfg))


def predict_with_jacobian(plant, x, u, cfg):
    """Return ``(y_pred, J)`` with ``J[i, j] = d y_pred_i / d u_j``."""
    if cfg.jacobian_mode == DUAL:
        X, U = seed(x, u, wrt="u")
        Y = plant.h_dual(_propagate(plant, X, U, cfg))
        y, J = Y[:, 0].copy(), Y[:, 1:].copy()
    else:
        u = np.asarray(u, dtype=float)
        y = predict_output(plant, x, u, cfg)
        J = np.empty((y.shape[0], u.shape[0]))
        for j in range(u.shape[0]):
            step = cfg.fd_step * max(1.0, abs(u[j]))
            up, um = u.copy(), u.copy()
            up[j] += step
            um[j] -= step
            J[:, j] = (predict_output(plant, x, up, cfg)
                       - predict_output(plant, x, um, cfg)) / (2.0 * step)
    if not np.all(np.isfinite(J)):
        raise NonFiniteJacobian("output Jacobian has non-finite entries")
    return y, J


def output_jacobian(plant, x, u, cfg):
    """Jacobian of the predicted output with respect to the current input."""
    return predict_with_jacobian(plant, x, u, cfg)[1]
