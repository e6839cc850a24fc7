"""Plant models: quadrotor, miniature blimp and small analytic test plants.

All plants share one interface (:class:`PlantModel`).  Dynamics are written
once, on dual arrays (see :mod:`nrflow._dual`), so that the same definition
serves simulation (no tangents), input Jacobians for the NR predictor and
full state/input Jacobians for NMPC.

State layouts
-------------
quadrotor (9)
    ``(p_x, p_y, p_z, V_x, V_y, V_z, phi, theta, psi)``, NED world frame.
blimp (12)
    ``(v_b[3], omega_b[3], p_n[3], Theta[3])``: body velocities, NED
    position and ZYX Euler angles.
"""
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._dual import dcos, dcross, ddiv, dmul, dsin
from .exceptions import NonPDMass, SingularAttitude

DEFAULT_EPS = 1e-3


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if w.ndim else float(w)


def _check_pitch(theta, eps):
    if not abs(theta) < np.pi / 2 - eps:
        raise SingularAttitude(
            f"|theta| = {abs(theta):.6f} rad is within {eps:g} of pi/2"
        )


def euler_rates(phi, theta, omega_b, eps=DEFAULT_EPS):
    """ZYX Euler angle rates ``T(phi, theta) @ omega_b``."""
    _check_pitch(theta, eps)
    sp, cp = np.sin(phi), np.cos(phi)
    ct, tt = np.cos(theta), np.tan(theta)
    T = np.array([
        [1.0, sp * tt, cp * tt],
        [0.0, cp, -sp],
        [0.0, sp / ct, cp / ct],
    ])
    return T @ np.asarray(omega_b, dtype=float)


def rotation_matrix(phi, theta, psi):
    """Body-to-world rotation for ZYX Euler angles."""
    sp, cp = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    ss, cs = np.sin(psi), np.cos(psi)
    return np.array([
        [cs * ct, cs * st * sp - ss * cp, cs * st * cp + ss * sp],
        [ss * ct, ss * st * sp + cs * cp, ss * st * cp - cs * sp],
        [-st, ct * sp, ct * cp],
    ])


def memoryless_eval(g, u):
    """Evaluate a memoryless plant ``y = g(u)``."""
    return g(u)


@dataclass(frozen=True)
class Memoryless:
    """A memoryless plant ``y = g(u)`` together with its derivative."""

    g: object
    dg: object

    @classmethod
    def identity(cls, m=1):
        if m == 1:
            return cls(lambda u: u, lambda u: 1.0)
        return cls(lambda u: np.asarray(u, dtype=float), lambda u: np.eye(m))

    @classmethod
    def cubic(cls):
        return cls(lambda u: u ** 3, lambda u: 3.0 * u ** 2)

    @classmethod
    def square(cls):
        return cls(lambda u: u ** 2, lambda u: 2.0 * u)

    @classmethod
    def affine(cls, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        return cls(lambda u: A @ np.asarray(u, dtype=float) + b, lambda u: A)

    def __call__(self, u):
        return memoryless_eval(self.g, u)


# --------------------------------------------------------------------------
# compiled dynamics kernels: kernel(X, U, params) -> (dX, ok)


@njit(cache=True)
def _quad_kernel(X, U, p):
    m, g, eps = p[0], p[1], p[2]
    dX = np.zeros_like(X)
    if not abs(X[7, 0]) < np.pi / 2 - eps:
        return dX, False
    sphi, cphi = dsin(X[6]), dcos(X[6])
    sth, cth = dsin(X[7]), dcos(X[7])
    spsi, cpsi = dsin(X[8]), dcos(X[8])
    a = U[0] / m
    dX[0:3] = X[3:6]
    dX[3] = -dmul(a, dmul(sphi, spsi) + dmul(dmul(cphi, cpsi), sth))
    dX[4] = -dmul(a, dmul(dmul(cphi, spsi), sth) - dmul(cpsi, sphi))
    dX[5] = -dmul(a, dmul(cphi, cth))
    dX[5, 0] += g
    tth = ddiv(sth, cth)
    pr, qr, rr = U[1], U[2], U[3]
    dX[6] = pr + dmul(dmul(sphi, tth), qr) + dmul(dmul(cphi, tth), rr)
    dX[7] = dmul(cphi, qr) - dmul(sphi, rr)
    dX[8] = ddiv(dmul(sphi, qr) + dmul(cphi, rr), cth)
    return dX, True


@njit(cache=True)
def _blimp_kernel(X, U, p):
    # p = [M (36), Minv (36), D diag (6), r_gz, f_zg, thruster_offset, eps]
    M = p[0:36].copy().reshape((6, 6))
    Minv = p[36:72].copy().reshape((6, 6))
    D = p[72:78]
    rz, w, d, eps = p[78], p[79], p[80], p[81]
    dX = np.zeros_like(X)
    if not abs(X[10, 0]) < np.pi / 2 - eps:
        return dX, False
    nu = X[0:6]
    mom = M @ nu
    v, om = nu[0:3], nu[3:6]
    # Coriolis/centripetal: C(nu) nu = [om x p1; v x p1 + om x p2], skew in nu
    cor = np.zeros_like(nu)
    cor[0:3] = dcross(om, mom[0:3])
    cor[3:6] = dcross(v, mom[0:3]) + dcross(om, mom[3:6])
    sphi, cphi = dsin(X[9]), dcos(X[9])
    sth, cth = dsin(X[10]), dcos(X[10])
    spsi, cpsi = dsin(X[11]), dcos(X[11])
    rhs = -cor
    for i in range(6):
        rhs[i] -= D[i] * nu[i]
    # restoring torque r_g x f_g^b with f_g^b = R^T (0, 0, f_zg)
    rhs[3] -= (rz * w) * dmul(sphi, cth)
    rhs[4] -= (rz * w) * sth
    # undermounted thrusters at (0, 0, d): torque (-d f_y, d f_x, 0)
    rhs[0] += U[0]
    rhs[1] += U[1]
    rhs[2] += U[2]
    rhs[3] -= d * U[1]
    rhs[4] += d * U[0]
    rhs[5] += U[3]
    dX[0:6] = Minv @ rhs
    # position kinematics p_dot = R(Theta) v
    cc = dmul(cpsi, cth)
    sc = dmul(spsi, cth)
    r01 = dmul(dmul(cpsi, sth), sphi) - dmul(spsi, cphi)
    r02 = dmul(dmul(cpsi, sth), cphi) + dmul(spsi, sphi)
    r11 = dmul(dmul(spsi, sth), sphi) + dmul(cpsi, cphi)
    r12 = dmul(dmul(spsi, sth), cphi) - dmul(cpsi, sphi)
    dX[6] = dmul(cc, v[0]) + dmul(r01, v[1]) + dmul(r02, v[2])
    dX[7] = dmul(sc, v[0]) + dmul(r11, v[1]) + dmul(r12, v[2])
    dX[8] = -dmul(sth, v[0]) + dmul(dmul(cth, sphi), v[1]) + dmul(dmul(cth, cphi), v[2])
    tth = ddiv(sth, cth)
    pr, qr, rr = om[0], om[1], om[2]
    dX[9] = pr + dmul(dmul(sphi, tth), qr) + dmul(dmul(cphi, tth), rr)
    dX[10] = dmul(cphi, qr) - dmul(sphi, rr)
    dX[11] = ddiv(dmul(sphi, qr) + dmul(cphi, rr), cth)
    return dX, True


# --------------------------------------------------------------------------
# parameter blocks


@dataclass(frozen=True)
class QuadrotorParams:
    m: float = 2.1
    g: float = 9.81

    def __post_init__(self):
        if not (self.m > 0 and self.g > 0):
            raise ValueError("quadrotor mass and gravity must be positive")


def _blimp_default_mass():
    return BlimpParams.physical_mass_matrix()


@dataclass(frozen=True)
class BlimpParams:
    """Blimp parameter block.

    The defaults describe a hypothetical 0.2 kg radially symmetric blimp;
    they are chosen to satisfy the sanity conditions checked in the tests
    (rest equilibrium, damped pendulum roll/pitch modes), not measured.

    ``M`` is expressed about the center of buoyancy and includes added
    mass and the CG-offset coupling ``m * S(r_g)``.
    """

    M: np.ndarray = field(default_factory=_blimp_default_mass)
    D: np.ndarray = field(
        default_factory=lambda: np.diag([0.06, 0.06, 0.06, 0.002, 0.002, 0.003])
    )
    r_gz: float = 0.05
    f_zg: float = 0.2 * 9.81
    thruster_offset: float = 0.08

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        D = np.asarray(self.D, dtype=float)
        if D.ndim == 1:
            D = np.diag(D)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "D", D)
        if M.shape != (6, 6) or D.shape != (6, 6):
            raise ValueError("blimp M and D must be 6x6")
        if not np.allclose(M, M.T, rtol=0, atol=1e-12):
            raise NonPDMass("blimp mass matrix is not symmetric")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise NonPDMass("blimp mass matrix is not positive definite") from exc
        if np.any(D != np.diag(np.diag(D))) or np.any(np.diag(D) < 0):
            raise ValueError("blimp damping must be diagonal and nonnegative")
        if not self.r_gz > 0:
            raise ValueError("r_gz must be positive (CG below CB)")

    @staticmethod
    def physical_mass_matrix(mass=0.2, added_mass=(0.1, 0.1, 0.1),
                             inertia=(0.012, 0.012, 0.010), r_gz=0.05):
        Mt = np.diag(mass + np.asarray(added_mass, dtype=float))
        S = np.array([[0.0, -r_gz, 0.0], [r_gz, 0.0, 0.0], [0.0, 0.0, 0.0]])
        M = np.zeros((6, 6))
        M[:3, :3] = Mt
        M[:3, 3:] = -mass * S
        M[3:, :3] = mass * S
        M[3:, 3:] = np.diag(inertia)
        return M

    def as_dict(self):
        return {
            "M": self.M.tolist(),
            "D": np.diag(self.D).tolist(),
            "r_gz": self.r_gz,
            "f_zg": self.f_zg,
            "thruster_offset": self.thruster_offset,
        }


# --------------------------------------------------------------------------
# plant interface


class PlantModel:
    """Common plant interface.

    Subclasses set ``dim_x``, ``dim_u``, ``output_matrix`` and implement
    :meth:`f_dual`.  Plants with a compiled ``kernel`` take the fast path
    in the predictor, simulator and NMPC.
    """

    name = "plant"
    dim_x = 0
    dim_u = 4
    angle_outputs = ()
    kernel = None
    kernel_params = None

    @property
    def dim_y(self):
        return self.output_matrix.shape[0]

    @property
    def u_eq(self):
        """Input that holds the plant at rest (hover)."""
        return np.zeros(self.dim_u)

    def rest_state(self, y=None, yaw=0.0):
        """State at rest with output ``y``."""
        raise NotImplementedError

    def f_dual(self, X, U):
        if self.kernel is None:
            raise NotImplementedError
        dX, ok = self.kernel(X, U, self.kernel_params)
        if not ok:
            raise SingularAttitude(f"{self.name}: pitch at Euler singularity")
        return dX

    def f(self, x, u):
        X = np.asarray(x, dtype=float).reshape(-1, 1)
        U = np.asarray(u, dtype=float).reshape(-1, 1)
        return self.f_dual(X, U)[:, 0]

    def h(self, x):
        return self.output_matrix @ np.asarray(x, dtype=float)

    def h_dual(self, X):
        return self.output_matrix @ X

    def output_error(self, y, r):
        """``r - y`` with angle channels wrapped."""
        e = np.asarray(r, dtype=float) - np.asarray(y, dtype=float)
        for i in self.angle_outputs:
            e[..., i] = wrap_angle(e[..., i])
        return e


def _selection(n, idx):
    W = np.zeros((len(idx), n))
    W[np.arange(len(idx)), idx] = 1.0
    return W


class Quadrotor(PlantModel):
    """Nine-state quadrotor, inputs (thrust, body rates p, q, r)."""

    name = "quad"
    dim_x = 9
    angle_outputs = (3,)
    output_index = np.array([0, 1, 2, 8])
    attitude_index = (6, 7, 8)
    kernel = staticmethod(_quad_kernel)

    def __init__(self, params=None, eps=DEFAULT_EPS):
        self.params = params if params is not None else QuadrotorParams()
        self.eps = eps
        self.kernel_params = np.array([self.params.m, self.params.g, eps])
        self.output_matrix = _selection(9, self.output_index)

    @property
    def u_eq(self):
        return np.array([self.params.m * self.params.g, 0.0, 0.0, 0.0])

    def rest_state(self, y=None, yaw=None):
        x = np.zeros(9)
        if y is not None:
            x[0:3] = y[0:3]
            x[8] = y[3]
        if yaw is not None:
            x[8] = yaw
        return x

    def h(self, x):
        return np.asarray(x, dtype=float)[self.output_index]

    def h_dual(self, X):
        return X[self.output_index]


class Blimp(PlantModel):
    """Twelve-state blimp, inputs (f_x, f_y, f_z, tau_z) in the body frame."""

    name = "blimp"
    dim_x = 12
    angle_outputs = (3,)
    output_index = np.array([6, 7, 8, 11])
    attitude_index = (9, 10, 11)
    kernel = staticmethod(_blimp_kernel)

    def __init__(self, params=None, eps=DEFAULT_EPS):
        self.params = params if params is not None else BlimpParams()
        self.eps = eps
        p = self.params
        self.Minv = np.linalg.inv(p.M)
        self.kernel_params = np.concatenate([
            p.M.ravel(), self.Minv.ravel(), np.diag(p.D),
            [p.r_gz, p.f_zg, p.thruster_offset, eps],
        ])
        self.output_matrix = _selection(12, self.output_index)
        d = p.thruster_offset
        self.K = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, -d, 0.0, 0.0],
            [d, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])

    def rest_state(self, y=None, yaw=None):
        x = np.zeros(12)
        if y is not None:
            x[6:9] = y[0:3]
            x[11] = y[3]
        if yaw is not None:
            x[11] = yaw
        return x

    def h(self, x):
        return np.asarray(x, dtype=float)[self.output_index]

    def h_dual(self, X):
        return X[self.output_index]

    def gravity_torque(self, phi, theta):
        """Restoring torque ``r_g x f_g^b`` about the center of buoyancy."""
        p = self.params
        return p.r_gz * p.f_zg * np.array(
            [-np.sin(phi) * np.cos(theta), -np.sin(theta), 0.0]
        )

    def kinetic_energy(self, x):
        nu = np.asarray(x, dtype=float)[0:6]
        return 0.5 * nu @ self.params.M @ nu

    def potential_energy(self, x):
        """Gravity potential of the CG relative to level attitude."""
        x = np.asarray(x, dtype=float)
        p = self.params
        return p.r_gz * p.f_zg * (1.0 - np.cos(x[9]) * np.cos(x[10]))


class LinearPlant(PlantModel):
    """Linear test plant ``x' = A x + B u``, ``y = C x``."""

    name = "linear"

    def __init__(self, A, B, C, name=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.output_matrix = np.atleast_2d(np.asarray(C, dtype=float))
        self.dim_x = self.A.shape[0]
        self.dim_u = self.B.shape[1]
        if name:
            self.name = name

    def f_dual(self, X, U):
        return self.A @ X + self.B @ U

    def rest_state(self, y=None, yaw=None):
        x = np.zeros(self.dim_x)
        if y is not None:
            x = np.linalg.lstsq(self.output_matrix, np.asarray(y, float), rcond=None)[0]
        return x

    @classmethod
    def integrator(cls, m=4):
        """Chain ``x' = u``, ``y = x``."""
        return cls(np.zeros((m, m)), np.eye(m), np.eye(m), name="integrator")

    @classmethod
    def zero(cls, n=4, m=4):
        """Zero dynamics ``x' = 0``."""
        return cls(np.zeros((n, n)), np.zeros((n, m)), np.eye(m, n), name="zero")

    @classmethod
    def double_integrator(cls, m=4):
        """``p'' = u`` per axis; state ``(p, v)``, output ``p``."""
        A = np.zeros((2 * m, 2 * m))
        A[:m, m:] = np.eye(m)
        B = np.zeros((2 * m, m))
        B[m:] = np.eye(m)
        C = np.hstack([np.eye(m), np.zeros((m, m))])
        return cls(A, B, C, name="double_integrator")


def quad_f(x, u, p=None, eps=DEFAULT_EPS):
    """Quadrotor state derivative."""
    x = np.asarray(x, dtype=float)
    _check_pitch(x[7], eps)
    return Quadrotor(p, eps).f(x, u)


def blimp_f(x, u, p=None, eps=DEFAULT_EPS):
    """Blimp state derivative."""
    x = np.asarray(x, dtype=float)
    _check_pitch(x[10], eps)
    return Blimp(p, eps).f(x, u)


def make_plant(platform, params=None):
    """Build a plant from a platform name and an optional parameter dict."""
    params = dict(params or {})
    if platform == "quad":
        return Quadrotor(QuadrotorParams(**params))
    if platform == "blimp":
        return Blimp(BlimpParams(**params))
    raise ValueError(f"unknown platform {platform!r}")
