"""Exact rotated-box geometry.

Boxes carry angles in degrees. The exact IoU clips one box's outline against
the other's edges (both are convex, so half-plane clipping is exact) and
measures areas with the shoelace formula. :func:`rasterized_iou` is a
pixel-counting cross-check that shares no code with the clipping path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _smath as sm

CLIP_EPS = 1e-9
AREA_FLOOR = 1e-12


class InvalidBoxError(ValueError):
    pass


class Convention(str, enum.Enum):
    """Angle conventions: OpenCV keeps theta in [-90, 0), long-edge in [-90, 90) with w >= h."""

    OPENCV = "opencv"
    LONG_EDGE = "le"


def _check_extents(**extents) -> None:
    for name, v in extents.items():
        fv = sm.value(v)
        if not math.isfinite(fv) or fv <= 0.0:
            raise InvalidBoxError(f"{name} must be finite and positive, got {fv!r}")


def _check_finite(**fields) -> None:
    for name, v in fields.items():
        if not math.isfinite(sm.value(v)):
            raise InvalidBoxError(f"{name} must be finite, got {sm.value(v)!r}")


@dataclass(frozen=True)
class RotatedBox2D:
    """Rotated rectangle ``(x, y, w, h, theta)``, theta in degrees.

    ``convention=None`` leaves the angle unconstrained; setting a convention
    validates theta (and w >= h for long-edge) on construction.
    """

    x: float
    y: float
    w: float
    h: float
    theta: float
    convention: Convention | None = None

    def __post_init__(self):
        _check_finite(x=self.x, y=self.y, theta=self.theta)
        _check_extents(w=self.w, h=self.h)
        if self.convention is not None:
            object.__setattr__(self, "convention", Convention(self.convention))
            t = sm.value(self.theta)
            if self.convention is Convention.OPENCV and not -90.0 <= t < 0.0:
                raise InvalidBoxError(f"OpenCV convention needs theta in [-90, 0), got {t}")
            if self.convention is Convention.LONG_EDGE:
                if not -90.0 <= t < 90.0:
                    raise InvalidBoxError(f"long-edge convention needs theta in [-90, 90), got {t}")
                if sm.value(self.w) < sm.value(self.h):
                    raise InvalidBoxError("long-edge convention needs w >= h")

    @classmethod
    def from_seq(cls, seq, convention=None) -> "RotatedBox2D":
        x, y, w, h, t = (float(v) for v in seq)
        return cls(x, y, w, h, t, convention)

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.w, self.h, self.theta)

    @property
    def area(self):
        return self.w * self.h


@dataclass(frozen=True)
class RotatedBox3D:
    """Yaw-rotated cuboid ``(x, y, z, w, h, l, theta)``.

    ``w`` and ``h`` span the ground plane, ``l`` is the vertical extent, and
    theta (degrees) rotates about the z axis.
    """

    x: float
    y: float
    z: float
    w: float
    h: float
    l: float  # noqa: E741
    theta: float

    def __post_init__(self):
        _check_finite(x=self.x, y=self.y, z=self.z, theta=self.theta)
        _check_extents(w=self.w, h=self.h, l=self.l)

    @classmethod
    def from_seq(cls, seq) -> "RotatedBox3D":
        return cls(*(float(v) for v in seq))

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.z, self.w, self.h, self.l, self.theta)

    def bev(self) -> RotatedBox2D:
        return RotatedBox2D(self.x, self.y, self.w, self.h, self.theta)

    @property
    def volume(self):
        return self.w * self.h * self.l


def _signed_area(v: np.ndarray) -> float:
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class ConvexPolygon:
    """Convex polygon with vertices stored counter-clockwise, shape ``(k, 2)``."""

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        if _signed_area(v) < 0.0:
            v = v[::-1]
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3

    def is_convex(self, tol: float = CLIP_EPS) -> bool:
        v = self.vertices
        k = len(v)
        if k < 3:
            return True
        for i in range(k):
            a, b, c = v[i], v[(i + 1) % k], v[(i + 2) % k]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross < -tol * max(1.0, np.abs(v).max() ** 2):
                return False
        return True


def box2d_vertices(box: RotatedBox2D) -> ConvexPolygon:
    """Four corners of ``box`` in counter-clockwise order."""
    t = math.radians(float(box.theta))
    c, s = math.cos(t), math.sin(t)
    hw, hh = 0.5 * float(box.w), 0.5 * float(box.h)
    local = np.array([[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]])
    rot = np.array([[c, -s], [s, c]])
    return ConvexPolygon(local @ rot.T + np.array([float(box.x), float(box.y)]))


def polygon_area(poly: ConvexPolygon) -> float:
    """Shoelace area; 0 for fewer than three vertices."""
    return abs(_signed_area(poly.vertices))


def _dedupe(points: list, tol: float) -> list:
    out = []
    for p in points:
        if not out or abs(p[0] - out[-1][0]) > tol or abs(p[1] - out[-1][1]) > tol:
            out.append(p)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= tol and abs(out[0][1] - out[-1][1]) <= tol:
        out.pop()
    return out


def convex_clip(subject: ConvexPolygon, clip: ConvexPolygon) -> ConvexPolygon:
    """Intersection of two convex polygons (Sutherland-Hodgman).

    A point counts as inside a clip edge when its signed distance to the
    edge line is >= -CLIP_EPS, so shared and collinear edges do not produce
    spurious slivers. Points inside that band but outside the line are
    projected onto it, keeping the area exact.
    """
    if subject.is_empty or clip.is_empty:
        return ConvexPolygon()
    out = [tuple(p) for p in subject.vertices]
    cv = clip.vertices
    k = len(cv)
    for i in range(k):
        if not out:
            break
        ax, ay = cv[i]
        bx, by = cv[(i + 1) % k]
        ex, ey = bx - ax, by - ay
        norm = math.hypot(ex, ey)
        if norm == 0.0:
            continue

        nx, ny = -ey / norm, ex / norm

        def dist(p):
            return nx * (p[0] - ax) + ny * (p[1] - ay)

        inp = out
        out = []
        prev = inp[-1]
        dprev = dist(prev)
        for cur in inp:
            dcur = dist(cur)
            cur_in = dcur >= -CLIP_EPS
            prev_in = dprev >= -CLIP_EPS
            # crossings are only taken when the segment strictly straddles the
            # line, so the denominator in _cross_point exceeds CLIP_EPS
            if cur_in:
                if not prev_in and dcur > 0.0:
                    out.append(_cross_point(prev, cur, dprev, dcur))
                out.append(cur if dcur >= 0.0 else (cur[0] - dcur * nx, cur[1] - dcur * ny))
            elif prev_in and dprev > 0.0:
                out.append(_cross_point(prev, cur, dprev, dcur))
            prev, dprev = cur, dcur
        out = _dedupe(out, CLIP_EPS)
    if len(out) < 3:
        return ConvexPolygon()
    return ConvexPolygon(np.array(out))


def _cross_point(p, q, dp, dq):
    t = dp / (dp - dq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def intersection_area_2d(b1: RotatedBox2D, b2: RotatedBox2D) -> float:
    a = polygon_area(convex_clip(box2d_vertices(b1), box2d_vertices(b2)))
    return 0.0 if a < AREA_FLOOR else a


def skew_iou_2d(b1: RotatedBox2D, b2: RotatedBox2D) -> float:
    inter = intersection_area_2d(b1, b2)
    union = float(b1.w) * float(b1.h) + float(b2.w) * float(b2.h) - inter
    return min(1.0, max(0.0, inter / union))


def skew_iou_3d(b1: RotatedBox3D, b2: RotatedBox3D) -> float:
    """Volume IoU of two yaw-only boxes: BEV overlap area times vertical overlap."""
    bev = intersection_area_2d(b1.bev(), b2.bev())
    lo = max(b1.z - 0.5 * b1.l, b2.z - 0.5 * b2.l)
    hi = min(b1.z + 0.5 * b1.l, b2.z + 0.5 * b2.l)
    inter = bev * max(0.0, hi - lo)
    union = float(b1.volume) + float(b2.volume) - inter
    return min(1.0, max(0.0, inter / union))


def _row_spans(box: RotatedBox2D, ys: np.ndarray, xlo: float, xhi: float):
    """x-interval covered by ``box`` on each horizontal line in ``ys``."""
    t = math.radians(box.theta)
    c, s = math.cos(t), math.sin(t)
    lo = np.full(ys.shape, xlo)
    hi = np.full(ys.shape, xhi)
    dy = ys - box.y
    # local u = (x-cx)*c + dy*s in [-w/2, w/2]; local v = -(x-cx)*s + dy*c in [-h/2, h/2]
    for a, b0, half in ((c, dy * s, 0.5 * box.w), (-s, dy * c, 0.5 * box.h)):
        if abs(a) < 1e-15:
            inside = np.abs(b0) <= half
            hi = np.where(inside, hi, -np.inf)
            continue
        r1 = box.x + (-half - b0) / a
        r2 = box.x + (half - b0) / a
        lo = np.maximum(lo, np.minimum(r1, r2))
        hi = np.minimum(hi, np.maximum(r1, r2))
    return lo, hi


def _count_centers(lo, hi, x0: float, step: float, n: int):
    # pixel centers sit at x0 + (i + 0.5) * step, i = 0..n-1
    first = np.ceil((lo - x0) / step - 0.5)
    last = np.floor((hi - x0) / step - 0.5)
    first = np.clip(first, 0, n)
    last = np.clip(last, -1, n - 1)
    return np.maximum(0.0, last - first + 1)


def rasterized_iou(b1: RotatedBox2D, b2: RotatedBox2D, grid_n: int = 1000) -> float:
    """IoU estimated by counting pixel centers on a ``grid_n`` x ``grid_n`` raster.

    The raster covers the joint axis-aligned bounding box of both boxes.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be >= 100")
    pts = np.vstack([box2d_vertices(b1).vertices, box2d_vertices(b2).vertices])
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    sx = (x1 - x0) / grid_n
    sy = (y1 - y0) / grid_n
    ys = y0 + (np.arange(grid_n) + 0.5) * sy
    lo1, hi1 = _row_spans(b1, ys, x0, x1)
    lo2, hi2 = _row_spans(b2, ys, x0, x1)
    n1 = _count_centers(lo1, hi1, x0, sx, grid_n).sum()
    n2 = _count_centers(lo2, hi2, x0, sx, grid_n).sum()
    both = _count_centers(np.maximum(lo1, lo2), np.minimum(hi1, hi2), x0, sx, grid_n).sum()
    union = n1 + n2 - both
    return float(both / union) if union > 0 else 0.0


def _wrap180(theta: float) -> float:
    """Map an angle in degrees into [-90, 90)."""
    t = math.fmod(theta + 90.0, 180.0)
    if t < 0.0:
        t += 180.0
    t -= 90.0
    return -90.0 if t >= 90.0 else t


def canonicalize(box: RotatedBox2D, target: Convention | str) -> RotatedBox2D:
    """Re-express ``box`` in ``target`` convention without changing its point set."""
    target = Convention(target)
    w, h, t = float(box.w), float(box.h), float(box.theta)
    if target is Convention.LONG_EDGE:
        if w < h:
            w, h, t = h, w, t + 90.0
        t = _wrap180(t)
    else:
        t = _wrap180(t)
        if t >= 0.0:
            w, h, t = h, w, t - 90.0
    return replace(box, w=w, h=h, theta=t, convention=target)
