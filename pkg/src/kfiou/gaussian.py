"""Gaussian modeling of rotated boxes and the Gaussian product.

A box with center c, extents (w, h[, l]) and yaw theta maps to N(mu, Sigma)
with mu = c and Sigma = R diag(w^2/4, h^2/4[, l^2/4]) R^T.

All matrix work is closed-form 2x2/3x3 arithmetic on nested lists so the same
functions run on floats and on :class:`kfiou.diff.Dual` scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _smath as sm
from .geometry import Convention, RotatedBox2D, RotatedBox3D, canonicalize

ISOTROPIC_GAP = 1e-9


class NotSPDError(ValueError):
    pass


def _is_dual(x) -> bool:
    return hasattr(x, "d") and hasattr(x, "value")


def _as_array(rows):
    flat = rows if not isinstance(rows[0], list) else [x for r in rows for x in r]
    dtype = object if any(_is_dual(x) for x in flat) else float
    return np.array(rows, dtype=dtype)


def _check_spd(m) -> None:
    """Sylvester's criterion on the real parts."""
    n = len(m)
    vals = [[sm.value(m[i][j]) for j in range(n)] for i in range(n)]
    if not all(math.isfinite(v) for r in vals for v in r):
        raise NotSPDError("covariance has non-finite entries")
    minors = [vals[0][0], vals[0][0] * vals[1][1] - vals[0][1] * vals[1][0]]
    if n == 3:
        minors.append(sm.det(vals))
    if min(minors) <= 0.0:
        raise NotSPDError(f"covariance is not positive definite (leading minors {minors})")


@dataclass(frozen=True)
class Gaussian:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = self.mu if isinstance(self.mu, np.ndarray) else _as_array(list(self.mu))
        sig = self.sigma if isinstance(self.sigma, np.ndarray) else _as_array([list(r) for r in self.sigma])
        n = mu.shape[0]
        if n not in (2, 3) or sig.shape != (n, n):
            raise ValueError(f"need n in {{2, 3}} with matching shapes, got mu {mu.shape}, sigma {sig.shape}")
        s = sig.tolist()
        scale = max(1.0, max(abs(sm.value(v)) for r in s for v in r))
        asym = max(abs(sm.value(s[i][j]) - sm.value(s[j][i])) for i in range(n) for j in range(n))
        if asym > 1e-9 * scale:
            raise ValueError(f"sigma is not symmetric (max asymmetry {asym:g})")
        _check_spd(s)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", _as_array(sm.symmetrize(s)))

    @property
    def n(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class GaussianProduct:
    """Result of multiplying two densities: ``alpha * N(mu, Sigma)``."""

    gaussian: Gaussian
    alpha: float
    kalman_gain: np.ndarray


def _rlrt(theta_deg, diag: list):
    """R(theta) diag(...) R(theta)^T, written out for yaw rotations."""
    t = sm.radians(theta_deg)
    c, s = sm.cos(t), sm.sin(t)
    a, b = diag[0], diag[1]
    xx = a * c * c + b * s * s
    yy = a * s * s + b * c * c
    xy = (a - b) * c * s
    if len(diag) == 2:
        return [[xx, xy], [xy, yy]]
    return [[xx, xy, 0.0], [xy, yy, 0.0], [0.0, 0.0, diag[2]]]


def box2d_to_gaussian(box: RotatedBox2D) -> Gaussian:
    sigma = _rlrt(box.theta, [box.w * box.w * 0.25, box.h * box.h * 0.25])
    return Gaussian(_as_array([box.x, box.y]), _as_array(sigma))


def box3d_to_gaussian(box: RotatedBox3D) -> Gaussian:
    sigma = _rlrt(box.theta, [box.w * box.w * 0.25, box.h * box.h * 0.25, box.l * box.l * 0.25])
    return Gaussian(_as_array([box.x, box.y, box.z]), _as_array(sigma))


def box_to_gaussian(box) -> Gaussian:
    if isinstance(box, RotatedBox3D):
        return box3d_to_gaussian(box)
    return box2d_to_gaussian(box)


def _eig2(a: float, b: float, c: float):
    """Eigenvalues (major, minor) and major-axis angle in degrees of [[a, b], [b, c]]."""
    mean = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    theta = 0.5 * math.degrees(math.atan2(2.0 * b, a - c)) if rad >= ISOTROPIC_GAP * max(1.0, abs(mean)) else 0.0
    return mean + rad, mean - rad, theta


def gaussian_to_box(g: Gaussian, convention: Convention | str = Convention.LONG_EDGE):
    """Invert the box-to-Gaussian map.

    Extents are twice the square roots of the eigenvalues and theta follows the
    major axis, so the result has w >= h. Near-isotropic covariances get
    theta = 0. 3-D covariances must be yaw-only (no xz/yz coupling).
    """
    s = [[sm.value(v) for v in r] for r in g.sigma.tolist()]
    _check_spd(s)
    mu = [sm.value(v) for v in g.mu.tolist()]
    if g.n == 3:
        coupling = max(abs(s[0][2]), abs(s[1][2]))
        if coupling > 1e-9 * max(1.0, s[2][2]):
            raise NotSPDError("3-D covariance couples z with the ground plane; not a yaw-only box")
    major, minor, theta = _eig2(s[0][0], s[0][1], s[1][1])
    if minor <= 0.0:
        raise NotSPDError("covariance is not positive definite")
    theta = -90.0 if theta >= 90.0 else theta
    w, h = 2.0 * math.sqrt(major), 2.0 * math.sqrt(minor)
    if g.n == 3:
        return RotatedBox3D(mu[0], mu[1], mu[2], w, h, 2.0 * math.sqrt(s[2][2]), theta)
    return canonicalize(RotatedBox2D(mu[0], mu[1], w, h, theta), convention)


def gaussian_volume(sigma):
    """Box volume implied by a covariance: 2^n * sqrt(det(sigma))."""
    m = sigma.tolist() if isinstance(sigma, np.ndarray) else [list(r) for r in sigma]
    _check_spd(m)
    return (2.0 ** len(m)) * sm.sqrt(sm.det(m))


def _product_cov(s1, s2):
    gain = sm.matmul(s1, sm.inv(sm.add(s1, s2)))
    # information form: no cancellation for thin boxes, exact in argument order
    cov = sm.symmetrize(sm.inv(sm.add(sm.inv(s1), sm.inv(s2))))
    return gain, cov


def gaussian_product(g1: Gaussian, g2: Gaussian) -> GaussianProduct:
    """Product of two Gaussian densities.

    N(mu1, S1) N(mu2, S2) = alpha N(mu, S) with K = S1 (S1 + S2)^-1,
    mu = mu1 + K (mu2 - mu1), S = S1 - K S1 and alpha the density of
    N(0, S1 + S2) evaluated at mu2 - mu1.
    """
    if g1.n != g2.n:
        raise ValueError(f"dimension mismatch: {g1.n} vs {g2.n}")
    s1, s2 = g1.sigma.tolist(), g2.sigma.tolist()
    _check_spd(s1)
    _check_spd(s2)
    gain, cov = _product_cov(s1, s2)
    m1, m2 = g1.mu.tolist(), g2.mu.tolist()
    diff = [b - a for a, b in zip(m1, m2)]
    kd = sm.matvec(gain, diff)
    mu = [a + k for a, k in zip(m1, kd)]
    ssum = sm.add(s1, s2)
    maha = sm.dot(diff, sm.matvec(sm.inv(ssum), diff))
    n = g1.n
    alpha = (2.0 * math.pi) ** (-0.5 * n) / sm.sqrt(sm.det(ssum)) * sm.exp(-0.5 * maha)
    return GaussianProduct(Gaussian(_as_array(mu), _as_array(cov)), alpha, _as_array(gain))


def product_covariance(sigma1, sigma2):
    """Product covariance (S1^-1 + S2^-1)^-1 = S1 - S1 (S1 + S2)^-1 S1, without means or alpha."""
    s1 = sigma1.tolist() if isinstance(sigma1, np.ndarray) else sigma1
    s2 = sigma2.tolist() if isinstance(sigma2, np.ndarray) else sigma2
    return _product_cov(s1, s2)[1]
