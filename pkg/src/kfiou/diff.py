"""Forward-mode dual numbers and gradient checks for the regression losses.

The Gaussian and loss code in this package is written against plain scalar
arithmetic plus :mod:`kfiou._smath`, so passing :class:`Dual` box parameters
through it yields exact first derivatives alongside the value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import RotatedBox2D, RotatedBox3D

DEFAULT_STEP = 1e-5


class Dual:
    """Scalar with a tangent vector: ``value + sum(d_i * eps_i)``."""

    __slots__ = ("value", "d")

    def __init__(self, value: float, d):
        self.value = float(value)
        self.d = np.asarray(d, dtype=float)

    @classmethod
    def variable(cls, value: float, index: int, size: int) -> "Dual":
        d = np.zeros(size)
        d[index] = 1.0
        return cls(value, d)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.d + other.d)
        return Dual(self.value + other, self.d)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.d - other.d)
        return Dual(self.value - other, self.d)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.d)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value * other.value, self.value * other.d + other.value * self.d)
        return Dual(self.value * other, self.d * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.value == 0.0:
                raise ZeroDivisionError("dual division by zero")
            q = self.value / other.value
            return Dual(q, (self.d - q * other.d) / other.value)
        return Dual(self.value / other, self.d / other)

    def __rtruediv__(self, other):
        if self.value == 0.0:
            raise ZeroDivisionError("dual division by zero")
        q = other / self.value
        return Dual(q, -q / self.value * self.d)

    def __neg__(self):
        return Dual(-self.value, -self.d)

    def __pos__(self):
        return self

    def __abs__(self):
        # derivative of |x| at 0 taken as 0
        return Dual(abs(self.value), math.copysign(1.0, self.value) * self.d if self.value else 0.0 * self.d)

    def __pow__(self, p):
        if isinstance(p, Dual):
            return (p * self.log()).exp()
        if p == 0:
            return Dual(1.0, np.zeros_like(self.d))
        return Dual(self.value**p, p * self.value ** (p - 1) * self.d)

    def exp(self):
        e = math.exp(self.value)
        return Dual(e, e * self.d)

    def log(self):
        return Dual(math.log(self.value), self.d / self.value)

    def log1p(self):
        return Dual(math.log1p(self.value), self.d / (1.0 + self.value))

    def sqrt(self):
        s = math.sqrt(self.value)
        if s == 0.0:
            raise ZeroDivisionError("derivative of sqrt at 0")
        return Dual(s, self.d / (2.0 * s))

    def sin(self):
        return Dual(math.sin(self.value), math.cos(self.value) * self.d)

    def cos(self):
        return Dual(math.cos(self.value), -math.sin(self.value) * self.d)

    # comparisons act on the value so branching code (smooth L1, guards) works
    def __lt__(self, other):
        return self.value < float(other)

    def __le__(self, other):
        return self.value <= float(other)

    def __gt__(self, other):
        return self.value > float(other)

    def __ge__(self, other):
        return self.value >= float(other)

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"Dual({self.value!r}, {self.d.tolist()!r})"


@dataclass
class GradReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_err: float
    step: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_err) and self.max_rel_err < self.tol)


def rel_err(a: np.ndarray, n: np.ndarray) -> float:
    """max_i |a_i - n_i| / max(1, |a_i|, |n_i|)."""
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / denom))


def finite_difference_grad(
    f: Callable[[np.ndarray], float], point: Sequence[float], h: float = DEFAULT_STEP
) -> np.ndarray:
    """Central-difference gradient of ``f`` at ``point``.

    Components whose two evaluations are not finite come back as NaN.
    """
    x0 = np.asarray(point, dtype=float)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = f(xp), f(xm)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            grad[i] = np.nan
            continue
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def _params(box) -> list:
    if isinstance(box, RotatedBox3D):
        return [box.x, box.y, box.z, box.w, box.h, box.l, box.theta]
    return [box.x, box.y, box.w, box.h, box.theta]


def _rebuild(box, params):
    if isinstance(box, RotatedBox3D):
        return RotatedBox3D(*params)
    return RotatedBox2D(*params, convention=None)


def _check_nondegenerate(box) -> None:
    extents = [box.w, box.h] + ([box.l] if isinstance(box, RotatedBox3D) else [])
    if min(float(e) for e in extents) <= 1e-3:
        raise ValueError(f"degenerate box, extents must exceed 1e-3: {box}")


def _loss_fn(pred, gt, cfg, anchor):
    from .losses import LossConfig, regression_loss

    cfg = cfg or LossConfig()
    anchor = gt if anchor is None else anchor

    def f(params):
        return regression_loss(_rebuild(pred, list(params)), gt, anchor, cfg)

    return f


def grad_kf_loss(pred, gt, cfg=None, anchor=None) -> np.ndarray:
    """Exact gradient of the regression loss w.r.t. the predicted box parameters.

    Parameter order is (x, y, w, h, theta) for 2-D and (x, y, z, w, h, l, theta)
    for 3-D; theta is in degrees. ``anchor`` defaults to ``gt``.
    """
    _check_nondegenerate(pred)
    p = _params(pred)
    k = len(p)
    duals = [Dual.variable(v, i, k) for i, v in enumerate(p)]
    out = _loss_fn(pred, gt, cfg, anchor)(duals)
    if not isinstance(out, Dual):
        return np.zeros(k)
    if not np.all(np.isfinite(out.d)):
        raise FloatingPointError("non-finite gradient")
    return out.d.copy()


def grad_check(pred, gt, cfg=None, h: float = DEFAULT_STEP, tol: float = 1e-4, anchor=None) -> GradReport:
    analytic = grad_kf_loss(pred, gt, cfg, anchor)
    f = _loss_fn(pred, gt, cfg, anchor)
    numeric = finite_difference_grad(lambda v: float(f(v)), _params(pred), h)
    return GradReport(analytic, numeric, rel_err(analytic, numeric), h, tol)
