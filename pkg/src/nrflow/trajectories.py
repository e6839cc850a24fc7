"""Reference trajectory suite with analytic first and second derivatives.

Every trajectory has three phases:

``hover-lead``  ``0 <= t < hover_lead``: hold the center, yaw 0.
``active``      the parametrized path, starting at ``t = hover_lead``.
``return``      the last ``return_hold`` seconds: hold the center again.

Switching phases makes the reference jump; those jumps are the transients
excluded by clipped RMSE.

Outputs are ``(x, y, z, yaw)`` in NED.  With ``s = 2 pi tau / period``
(``tau`` = time since the active start), the geometry is

============  ==================================================
CircleA       horizontal circle ``(R cos s, R sin s, 0)``
CircleB       vertical circle ``(R cos s, 0, R sin s)``
CircleC       CircleA with yaw rotating at ``2 pi / period``
LemniscateA   horizontal figure eight ``(R sin s, R sin s cos s, 0)``
LemniscateB   vertical short figure eight ``(R sin s, 0, R sin s cos s)``
LemniscateC   vertical tall figure eight ``(R sin s cos s, 0, R sin s)``
HelixA        CircleA with altitude ``-A sin(s / 2)``
HelixB        HelixA with rotating yaw
Sawtooth      closed loop: four ramp-and-drop teeth out along x, straight back
Triangle      closed equilateral triangle inscribed in the radius-R circle
============  ==================================================

Polyline paths are flown at constant speed, one loop per period;
``r_ddot`` is zero on every segment and corners take the left-hand value.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import OutOfWindow
from .models import wrap_angle

KINDS = (
    "CircleA", "CircleB", "CircleC",
    "LemniscateA", "LemniscateB", "LemniscateC",
    "HelixA", "HelixB", "Sawtooth", "Triangle",
)
BLIMP_KINDS = KINDS[:8]
YAWING = ("CircleC", "HelixB")

FIXED = "fixed"
TANGENT = "tangent-yawing"

HOVER_LEAD, ACTIVE, RETURN = "hover-lead", "active", "return"


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "CircleA"
    radius: float = 0.8
    period: float = 10.0
    center: tuple = (0.0, 0.0, -1.0)
    z_amplitude: float = 0.4
    yaw_mode: str = None
    hover_lead: float = 5.0
    total_time: float = None
    return_hold: float = 5.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("center must have three entries")
        if self.yaw_mode is None:
            object.__setattr__(self, "yaw_mode", TANGENT if self.kind in YAWING else FIXED)
        if self.yaw_mode not in (FIXED, TANGENT):
            raise ValueError(f"yaw_mode must be {FIXED!r} or {TANGENT!r}")
        if self.total_time is None:
            object.__setattr__(
                self, "total_time", self.hover_lead + 2 * self.period + self.return_hold
            )
        if not (self.radius > 0 and self.period > 0 and self.total_time > 0):
            raise ValueError("radius, period and total_time must be positive")
        if self.hover_lead < 0 or self.return_hold < 0:
            raise ValueError("hover_lead and return_hold must be nonnegative")
        if self.hover_lead + self.return_hold > self.total_time:
            raise ValueError("hover_lead + return_hold exceeds total_time")

    @property
    def active_window(self):
        return self.hover_lead, self.total_time - self.return_hold

    def as_dict(self):
        d = asdict(self)
        d["center"] = list(self.center)
        return d


@dataclass(frozen=True)
class ReferenceSample:
    r: np.ndarray
    r_dot: np.ndarray
    r_ddot: np.ndarray
    phase: str = ACTIVE


def _sinusoid(kind, R, A, s, w):
    """Position, velocity, acceleration offsets of the smooth paths."""
    c, sn = np.cos(s), np.sin(s)
    if kind in ("CircleA", "CircleC", "HelixA", "HelixB"):
        p = [R * c, R * sn, 0.0]
        v = [-R * w * sn, R * w * c, 0.0]
        a = [-R * w * w * c, -R * w * w * sn, 0.0]
        if kind.startswith("Helix"):
            h = 0.5 * s
            p[2] = -A * np.sin(h)
            v[2] = -0.5 * A * w * np.cos(h)
            a[2] = 0.25 * A * w * w * np.sin(h)
        return p, v, a
    if kind == "CircleB":
        return ([R * c, 0.0, R * sn], [-R * w * sn, 0.0, R * w * c],
                [-R * w * w * c, 0.0, -R * w * w * sn])
    # figure eight: (sin s, sin s cos s) = (sin s, sin 2s / 2)
    s2, c2 = np.sin(2 * s), np.cos(2 * s)
    lx = (R * sn, R * w * c, -R * w * w * sn)
    ly = (0.5 * R * s2, R * w * c2, -2.0 * R * w * w * s2)
    zero = (0.0, 0.0, 0.0)
    axes = {
        "LemniscateA": (lx, ly, zero),
        "LemniscateB": (lx, zero, ly),
        "LemniscateC": (ly, zero, lx),
    }[kind]
    return ([ax[0] for ax in axes], [ax[1] for ax in axes], [ax[2] for ax in axes])


def _polyline_vertices(kind, R):
    if kind == "Triangle":
        ang = np.deg2rad([0.0, 120.0, 240.0, 360.0])
        return np.stack([R * np.cos(ang), R * np.sin(ang), np.zeros(4)], axis=1)
    teeth, rise = 4, 0.8
    w = 2.0 * R / teeth
    pts = [(R, 0.0)]
    for k in range(teeth):
        x0 = R - k * w
        pts.append((x0 - rise * w, 0.5 * R))
        pts.append((x0 - w, 0.0))
    pts.append((R, 0.0))
    pts = np.asarray(pts)
    return np.column_stack([pts, np.zeros(len(pts))])


class Trajectory:
    """Sampler for one :class:`TrajectorySpec`."""

    def __init__(self, spec):
        self.spec = spec
        self.omega = 2.0 * np.pi / spec.period
        self.center = np.asarray(spec.center, dtype=float)
        if spec.kind in ("Sawtooth", "Triangle"):
            verts = _polyline_vertices(spec.kind, spec.radius)
            seg = np.diff(verts, axis=0)
            lengths = np.linalg.norm(seg, axis=1)
            self._verts = verts
            self._seg_dir = seg / lengths[:, None]
            self._cum = np.concatenate([[0.0], np.cumsum(lengths)])
            self._speed = self._cum[-1] / spec.period
        self._hold = np.concatenate([self.center, [0.0]])

    def _active(self, tau):
        spec = self.spec
        w = self.omega
        s = w * tau
        if spec.kind in ("Sawtooth", "Triangle"):
            arc = np.mod(tau, spec.period) * self._speed
            i = int(np.searchsorted(self._cum, arc, side="left")) - 1
            # left-hand segment at corners (arc == cum[i+1]); arc == 0 uses the closing segment
            if arc == 0.0 and tau > 0:
                i = len(self._seg_dir) - 1
                arc = self._cum[-1]
            i = min(max(i, 0), len(self._seg_dir) - 1)
            d = self._seg_dir[i]
            p = self._verts[i] + (arc - self._cum[i]) * d
            v = self._speed * d
            a = np.zeros(3)
        else:
            p, v, a = (np.asarray(q, dtype=float)
                       for q in _sinusoid(spec.kind, spec.radius, spec.z_amplitude, s, w))
        r = np.empty(4)
        rd = np.empty(4)
        rdd = np.empty(4)
        r[:3] = self.center + p
        rd[:3] = v
        rdd[:3] = a
        if spec.yaw_mode == TANGENT:
            r[3] = wrap_angle(s)
            rd[3] = w
        else:
            r[3] = 0.0
            rd[3] = 0.0
        rdd[3] = 0.0
        return r, rd, rdd

    def phase(self, t):
        start, end = self.spec.active_window
        if t < start:
            return HOVER_LEAD
        if t < end or (t == end and self.spec.return_hold == 0):
            return ACTIVE
        return RETURN

    def sample(self, t):
        if not 0.0 <= t <= self.spec.total_time:
            raise OutOfWindow(f"t = {t} outside [0, {self.spec.total_time}]")
        ph = self.phase(t)
        if ph != ACTIVE:
            z = np.zeros(4)
            return ReferenceSample(self._hold.copy(), z, z.copy(), ph)
        r, rd, rdd = self._active(t - self.spec.hover_lead)
        return ReferenceSample(r, rd, rdd, ph)

    def lookahead(self, t, T):
        """Target ``r(t + T)``, clamped to the end of the trajectory."""
        return self.sample(min(t + T, self.spec.total_time)).r

    def window(self, t, dt, n):
        """References at ``t + dt, ..., t + n dt`` (clamped), shape ``(n, 4)``."""
        return np.array([self.lookahead(t, (j + 1) * dt) for j in range(n)])


def sample(spec, t):
    return Trajectory(spec).sample(t)


def lookahead(spec, t, T):
    return Trajectory(spec).lookahead(t, T)
