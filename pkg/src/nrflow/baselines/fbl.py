"""Input-output feedback linearization for the blimp.

Outputs ``sigma = (p_x, p_y, p_z, psi)`` have relative degree two, so

    sigma_ddot = a(x) + B(x) u.

``a`` and ``B`` are recovered by probing ``sigma_ddot`` at ``u = 0`` and at
the unit inputs, which is exact because the model is affine in ``u``.
The high-order CBFs that the original controller adds to limit roll and
pitch are not part of this baseline.
"""
from dataclasses import dataclass

import numpy as np

from ..base import NOT_LINEARIZABLE, ControlOutput, Controller
from ..exceptions import NotLinearizable
from ..models import Blimp, BlimpParams, rotation_matrix, wrap_angle


@dataclass(frozen=True)
class FBLConfig:
    k1: tuple = (1.0, 1.0, 1.0, 1.0)
    k2: tuple = (2.0, 2.0, 2.0, 2.0)
    u_min: tuple = (-np.inf,) * 4
    u_max: tuple = (np.inf,) * 4
    cond_max: float = 1e8

    def __post_init__(self):
        for name in ("k1", "k2", "u_min", "u_max"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (4,)).copy()
            object.__setattr__(self, name, v)
        if np.any(self.k1 < 0) or np.any(self.k2 < 0):
            raise ValueError("FBL gains must be nonnegative")
        if not np.all(self.u_min < self.u_max):
            raise ValueError("u_min must be componentwise below u_max")

    def as_dict(self):
        return {k: getattr(self, k).tolist() for k in ("k1", "k2", "u_min", "u_max")} | {
            "cond_max": self.cond_max}


def _as_blimp(p):
    if isinstance(p, Blimp):
        return p
    return Blimp(p if isinstance(p, BlimpParams) else None)


def sigma_dot(x):
    """First derivative of the outputs from the kinematic block."""
    x = np.asarray(x, dtype=float)
    phi, theta, psi = x[9:12]
    R = rotation_matrix(phi, theta, psi)
    q, r = x[4], x[5]
    return np.concatenate([R @ x[0:3],
                           [(np.sin(phi) * q + np.cos(phi) * r) / np.cos(theta)]])


def sigma_ddot(plant, x, u):
    """Second derivative of the outputs along the dynamics."""
    x = np.asarray(x, dtype=float)
    v, om = x[0:3], x[3:6]
    phi, theta, psi = x[9:12]
    nu_dot = plant.f(x, u)[0:6]
    R = rotation_matrix(phi, theta, psi)
    sp, cp = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    p_, q, r = om
    # d/dt (R v) = R (om x v + v_dot)
    p_ddot = R @ (np.cross(om, v) + nu_dot[0:3])
    phi_dot = p_ + (sp * q + cp * r) * st / ct
    theta_dot = cp * q - sp * r
    psi_ddot = ((sp * nu_dot[4] + cp * nu_dot[5]) / ct
                + (cp * q - sp * r) * phi_dot / ct
                + (sp * q + cp * r) * st * theta_dot / ct ** 2)
    return np.concatenate([p_ddot, [psi_ddot]])


def fbl_decompose(x, p, cond_max=1e8):
    """Return ``(a, B)`` with ``sigma_ddot(x, u) = a + B u``."""
    plant = _as_blimp(p)
    a = sigma_ddot(plant, x, np.zeros(4))
    B = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1.0
        B[:, j] = sigma_ddot(plant, x, e) - a
    c = np.linalg.cond(B)
    if not c < cond_max:
        raise NotLinearizable(f"cond(B) = {c:.3g} exceeds {cond_max:.3g}")
    return a, B


def fbl_law(sigma, sdot, a, B, ref, cfg):
    """``u = B^-1 (q - a)`` with ``q = -k1 e - k2 e_dot + r_ddot``."""
    e = np.asarray(sigma, dtype=float) - ref.r
    e[3] = wrap_angle(e[3])
    edot = np.asarray(sdot, dtype=float) - ref.r_dot
    q = -cfg.k1 * e - cfg.k2 * edot + ref.r_ddot
    return np.linalg.solve(B, q - a)


def fbl_control(x, ref, p, cfg):
    """Feedback-linearizing tracking input (before actuator limits)."""
    plant = _as_blimp(p)
    a, B = fbl_decompose(x, plant, cfg.cond_max)
    return fbl_law(plant.h(x), sigma_dot(x), a, B, ref, cfg)


class FBLController(Controller):
    name = "FBL"

    def __init__(self, plant, cfg):
        if not isinstance(plant, Blimp):
            raise ValueError("the FBL baseline is defined for the blimp only")
        self.plant = plant
        self.cfg = cfg

    def compute(self, t, x, traj):
        ref = traj.sample(t)
        try:
            u = fbl_control(x, ref, self.plant, self.cfg)
        except NotLinearizable:
            return ControlOutput(np.zeros(4), None, (NOT_LINEARIZABLE,))
        return ControlOutput(np.clip(u, self.cfg.u_min, self.cfg.u_max))

    def describe(self):
        return {"name": self.name, **self.cfg.as_dict()}
