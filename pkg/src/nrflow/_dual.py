"""Forward-mode dual-number arithmetic compiled with numba.

A dual scalar is a 1-D array ``[value, d_1, ..., d_k]`` carrying ``k``
directional derivatives; a dual vector is a 2-D array whose rows are dual
scalars.  Addition, subtraction and scaling by plain floats are exactly the
numpy operations on these arrays, so linear maps (``A @ X``) act on dual
vectors unchanged.  Only products and transcendental functions need the
helpers below.

With ``k = 0`` the same code evaluates plain values, which is how the plants
share one definition between simulation and differentiation.
"""
import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE)
def dmul(a, b):
    out = np.empty_like(a)
    out[0] = a[0] * b[0]
    out[1:] = a[0] * b[1:] + b[0] * a[1:]
    return out


@njit(cache=_CACHE)
def ddiv(a, b):
    out = np.empty_like(a)
    q = a[0] / b[0]
    out[0] = q
    out[1:] = (a[1:] - q * b[1:]) / b[0]
    return out


@njit(cache=_CACHE)
def dsin(a):
    out = np.empty_like(a)
    out[0] = np.sin(a[0])
    out[1:] = np.cos(a[0]) * a[1:]
    return out


@njit(cache=_CACHE)
def dcos(a):
    out = np.empty_like(a)
    out[0] = np.cos(a[0])
    out[1:] = -np.sin(a[0]) * a[1:]
    return out


@njit(cache=_CACHE)
def dcross(a, b):
    """Cross product of two dual 3-vectors (rows are components)."""
    out = np.empty_like(a)
    out[0] = dmul(a[1], b[2]) - dmul(a[2], b[1])
    out[1] = dmul(a[2], b[0]) - dmul(a[0], b[2])
    out[2] = dmul(a[0], b[1]) - dmul(a[1], b[0])
    return out


def seed(x, u, wrt="u"):
    """Build dual state/input arrays seeded for differentiation.

    ``wrt="u"`` seeds the input directions only (tangent count ``len(u)``);
    ``wrt="xu"`` seeds state then input directions (``len(x) + len(u)``);
    ``wrt=None`` gives plain values (no tangents).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n, m = x.shape[0], u.shape[0]
    if wrt is None:
        k = 0
    elif wrt == "u":
        k = m
    elif wrt == "xu":
        k = n + m
    else:
        raise ValueError(f"unknown seeding {wrt!r}")
    X = np.zeros((n, 1 + k))
    U = np.zeros((m, 1 + k))
    X[:, 0] = x
    U[:, 0] = u
    if wrt == "u":
        U[:, 1:] = np.eye(m)
    elif wrt == "xu":
        X[:, 1:1 + n] = np.eye(n)
        U[:, 1 + n:] = np.eye(m)
    return X, U
