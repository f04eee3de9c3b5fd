"""KFIoU and the regression losses built around it.

KFIoU compares the box volume implied by the fused covariance of two
Gaussians against the volumes of the inputs, exactly like an IoU. Since the
fused covariance ignores the means, it is paired with a center-point loss.
Baselines (Smooth L1, GWD, KLD) live here too so everything is comparable.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from dataclasses import dataclass
from pathlib import Path

from . import _smath as sm
from .gaussian import Gaussian, _check_spd, box_to_gaussian, gaussian_volume, product_covariance
from .geometry import InvalidBoxError, RotatedBox2D, RotatedBox3D


class KFForm(str, enum.Enum):
    EXP = "exp"  # e^(1 - KFIoU) - 1
    LINEAR = "linear"  # 1 - KFIoU
    NEGLOG = "neglog"  # -ln(KFIoU + eps)
    EXP_RESCALED = "exp_rescaled"  # e^(1 - s*KFIoU) - 1
    NEGLOG_RESCALED = "neglog_rescaled"  # -ln(s*KFIoU + eps)


class CenterForm(str, enum.Enum):
    SMOOTH_L1 = "smooth_l1"
    KLD = "kld"


class AngleMode(str, enum.Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"


def _log1p(x):
    return sm.log1p(x)


def _sqrt(x):
    # infinite slope at 0: report a zero tangent there so duals stay finite
    return sm.sqrt(x) if sm.value(x) > 0.0 else x * 0.0


DISTANCE_FNS = {"sqrt": _sqrt, "log1p": _log1p}


@dataclass(frozen=True)
class LossConfig:
    kf_form: KFForm = KFForm.EXP
    epsilon: float = 1e-6
    center_form: CenterForm = CenterForm.SMOOTH_L1
    rescale: bool = False
    lambda1: float = 0.01
    smooth_l1_sigma: float = 3.0
    angle_mode: AngleMode = AngleMode.DIRECT
    gwd_tau: float = 1.0
    gwd_f: str = "sqrt"
    kld_tau: float = 1.0
    kld_f: str = "log1p"

    def __post_init__(self):
        object.__setattr__(self, "kf_form", KFForm(self.kf_form))
        object.__setattr__(self, "center_form", CenterForm(self.center_form))
        object.__setattr__(self, "angle_mode", AngleMode(self.angle_mode))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.lambda1 > 0:
            raise ValueError("lambda1 must be > 0")
        if not self.smooth_l1_sigma > 0:
            raise ValueError("smooth_l1_sigma must be > 0")
        for name in ("gwd_tau", "kld_tau"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("gwd_f", "kld_f"):
            if getattr(self, name) not in DISTANCE_FNS:
                raise ValueError(f"{name} must be one of {sorted(DISTANCE_FNS)}")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in d.items():
            if key not in known:
                raise KeyError(f"unknown loss config key: {key}")
            default = known[key].default
            if isinstance(raw, str):
                if isinstance(default, bool):
                    raw = raw.strip().lower() in ("1", "true", "yes", "on")
                elif isinstance(default, float):
                    raw = float(raw)
            kwargs[key] = raw
        return cls(**kwargs)

    def to_file(self, path) -> None:
        cp = configparser.ConfigParser()
        cp["loss"] = {k: str(v) for k, v in self.to_dict().items()}
        with open(path, "w", newline="\n") as fh:
            cp.write(fh)

    @classmethod
    def from_file(cls, path) -> "LossConfig":
        cp = configparser.ConfigParser()
        if not cp.read(Path(path)):
            raise FileNotFoundError(path)
        return cls.from_dict(dict(cp["loss"]) if cp.has_section("loss") else {})


def kfiou_upper_bound(n: int) -> float:
    """Largest attainable KFIoU in n dimensions, 1 / (2^(n/2 + 1) - 1)."""
    return 1.0 / (2.0 ** (0.5 * n + 1.0) - 1.0)


def _sigma(g):
    if isinstance(g, Gaussian):
        return g.sigma.tolist()
    return g.tolist() if hasattr(g, "tolist") else g


def kfiou(g1, g2):
    """Overlap ratio of the fused covariance volume against the two input volumes.

    Accepts :class:`Gaussian` objects or raw covariance matrices; means are
    irrelevant.
    """
    s1, s2 = _sigma(g1), _sigma(g2)
    if len(s1) != len(s2):
        raise ValueError(f"dimension mismatch: {len(s1)} vs {len(s2)}")
    v1 = gaussian_volume(s1)
    v2 = gaussian_volume(s2)
    v = gaussian_volume(product_covariance(s1, s2))
    return v / (v1 + v2 - v)


def kfiou_rescaled(g1, g2):
    return kfiou(g1, g2) / kfiou_upper_bound(len(_sigma(g1)))


def kf_loss_from_kfiou(k, n: int, form: KFForm | str = KFForm.EXP, epsilon: float = 1e-6, rescale: bool = False):
    form = KFForm(form)
    if rescale or form in (KFForm.EXP_RESCALED, KFForm.NEGLOG_RESCALED):
        k = k / kfiou_upper_bound(n)
    if form in (KFForm.EXP, KFForm.EXP_RESCALED):
        return sm.exp(1.0 - k) - 1.0
    if form is KFForm.LINEAR:
        return 1.0 - k
    return -sm.log(k + epsilon)


def kf_loss(b1, b2, cfg: LossConfig | None = None):
    cfg = cfg or LossConfig()
    g1, g2 = box_to_gaussian(b1), box_to_gaussian(b2)
    return kf_loss_from_kfiou(kfiou(g1, g2), g1.n, cfg.kf_form, cfg.epsilon, cfg.rescale)


# ---------------------------------------------------------------- encoding


@dataclass(frozen=True)
class EncodedBox:
    """Anchor-relative regression targets.

    ``t_theta`` is set in direct mode, ``t_sin``/``t_cos`` in indirect mode.
    ``tz``/``tl`` are only present for 3-D boxes.
    """

    tx: float
    ty: float
    tw: float
    th: float
    mode: AngleMode = AngleMode.DIRECT
    t_theta: float | None = None
    t_sin: float | None = None
    t_cos: float | None = None
    tz: float | None = None
    tl: float | None = None

    @property
    def center(self) -> list:
        return [self.tx, self.ty] + ([self.tz] if self.tz is not None else [])

    def offsets(self) -> list:
        out = self.center + [self.tw, self.th] + ([self.tl] if self.tl is not None else [])
        if self.mode is AngleMode.DIRECT:
            out.append(self.t_theta)
        else:
            out.extend([self.t_sin, self.t_cos])
        return out


def normalize_angle_pair(s, c):
    norm = sm.sqrt(s * s + c * c)
    if sm.value(norm) == 0.0:
        raise ValueError("cannot normalize a zero (sin, cos) pair")
    return s / norm, c / norm


def encode_box(box, anchor, mode: AngleMode | str = AngleMode.DIRECT) -> EncodedBox:
    mode = AngleMode(mode)
    is3d = isinstance(box, RotatedBox3D)
    if is3d != isinstance(anchor, RotatedBox3D):
        raise TypeError("box and anchor must both be 2-D or both be 3-D")
    tx = (box.x - anchor.x) / anchor.w
    ty = (box.y - anchor.y) / anchor.h
    tw = sm.log(box.w / anchor.w)
    th = sm.log(box.h / anchor.h)
    extra = {}
    if is3d:
        extra = {"tz": (box.z - anchor.z) / anchor.l, "tl": sm.log(box.l / anchor.l)}
    if mode is AngleMode.DIRECT:
        extra["t_theta"] = sm.radians(box.theta - anchor.theta)
    else:
        t = sm.radians(box.theta)
        extra["t_sin"], extra["t_cos"] = sm.sin(t), sm.cos(t)
    return EncodedBox(tx, ty, tw, th, mode, **extra)


def decode_box(enc: EncodedBox, anchor):
    x = anchor.x + enc.tx * anchor.w
    y = anchor.y + enc.ty * anchor.h
    w = anchor.w * math.exp(enc.tw)
    h = anchor.h * math.exp(enc.th)
    if enc.mode is AngleMode.DIRECT:
        theta = anchor.theta + math.degrees(enc.t_theta)
    else:
        s, c = normalize_angle_pair(enc.t_sin, enc.t_cos)
        theta = math.degrees(math.atan2(s, c))
    if isinstance(anchor, RotatedBox3D):
        z = anchor.z + enc.tz * anchor.l
        return RotatedBox3D(x, y, z, w, h, anchor.l * math.exp(enc.tl), theta)
    return RotatedBox2D(x, y, w, h, theta)


# ------------------------------------------------------------ center terms


def smooth_l1(d, sigma: float = 3.0):
    """Faster R-CNN smooth L1: quadratic below |d| = 1/sigma^2, linear above."""
    beta = 1.0 / (sigma * sigma)
    ad = abs(d)
    if ad < beta:
        return 0.5 * ad * ad / beta
    return ad - 0.5 * beta


def center_loss_smooth_l1(pred: EncodedBox, gt: EncodedBox, sigma: float = 3.0):
    return sm.sum_(smooth_l1(p - g, sigma) for p, g in zip(pred.center, gt.center))


def center_loss_kld_term(mu1, mu2, sigma1):
    """ln((mu2 - mu1)^T sigma1^-1 (mu2 - mu1) + 1); sigma1 is the target's covariance."""
    s = _sigma(sigma1)
    _check_spd(s)
    m1 = mu1.tolist() if hasattr(mu1, "tolist") else list(mu1)
    m2 = mu2.tolist() if hasattr(mu2, "tolist") else list(mu2)
    d = [b - a for a, b in zip(m1, m2)]
    return sm.log(sm.dot(d, sm.matvec(sm.inv(s), d)) + 1.0)


def smooth_l1_box_loss(pred_enc: EncodedBox, gt_enc: EncodedBox, sigma: float = 3.0):
    return sm.sum_(smooth_l1(p - g, sigma) for p, g in zip(pred_enc.offsets(), gt_enc.offsets()))


def center_loss(pred, gt, anchor=None, cfg: LossConfig | None = None):
    cfg = cfg or LossConfig()
    anchor = gt if anchor is None else anchor
    if cfg.center_form is CenterForm.SMOOTH_L1:
        return center_loss_smooth_l1(
            encode_box(pred, anchor, cfg.angle_mode), encode_box(gt, anchor, cfg.angle_mode), cfg.smooth_l1_sigma
        )
    gp, gg = box_to_gaussian(pred), box_to_gaussian(gt)
    return center_loss_kld_term(gg.mu, gp.mu, gg.sigma)


def regression_loss(pred, gt, anchor=None, cfg: LossConfig | None = None):
    """L_c + L_kf for one predicted box against its target.

    ``anchor`` only matters for the smooth-L1 center form and defaults to ``gt``.
    """
    cfg = cfg or LossConfig()
    if isinstance(pred, RotatedBox3D) != isinstance(gt, RotatedBox3D):
        raise InvalidBoxError("pred and gt must have the same dimensionality")
    return center_loss(pred, gt, anchor, cfg) + kf_loss(pred, gt, cfg)


def total_regression_loss(preds, gts, anchors=None, cfg: LossConfig | None = None):
    """lambda1 times the summed regression loss over positive samples."""
    cfg = cfg or LossConfig()
    anchors = gts if anchors is None else anchors
    return cfg.lambda1 * sm.sum_(regression_loss(p, g, a, cfg) for p, g, a in zip(preds, gts, anchors))


# ---------------------------------------------------------------- baselines


def _mu(g):
    return g.mu.tolist()


def _is_yaw_block(s) -> bool:
    return len(s) == 2 or (sm.value(s[0][2]) == 0.0 and sm.value(s[1][2]) == 0.0)


def _trace_sqrt_product(s1, s2):
    """tr((S1^1/2 S2 S1^1/2)^1/2), i.e. the sum of sqrt-eigenvalues of S1 S2."""
    if _is_yaw_block(s1) and _is_yaw_block(s2):
        a = [r[:2] for r in s1[:2]]
        b = [r[:2] for r in s2[:2]]
        p = sm.matmul(a, b)
        # 2x2: tr(sqrt M) = sqrt(tr M + 2 sqrt(det M))
        out = sm.sqrt(sm.trace(p) + 2.0 * sm.sqrt(sm.det(p)))
        if len(s1) == 3:
            out = out + sm.sqrt(s1[2][2] * s2[2][2])
        return out
    import numpy as np

    eig = np.linalg.eigvals(np.array(s1, dtype=float) @ np.array(s2, dtype=float))
    return float(np.sum(np.sqrt(np.clip(eig.real, 0.0, None))))


def gwd_distance(g1: Gaussian, g2: Gaussian):
    """Squared 2-Wasserstein distance between two Gaussians."""
    if g1.n != g2.n:
        raise ValueError("dimension mismatch")
    s1, s2 = g1.sigma.tolist(), g2.sigma.tolist()
    _check_spd(s1)
    _check_spd(s2)
    d = [a - b for a, b in zip(_mu(g1), _mu(g2))]
    out = sm.dot(d, d) + sm.trace(s1) + sm.trace(s2) - 2.0 * _trace_sqrt_product(s1, s2)
    return out if sm.value(out) > 0.0 else out * 0.0


def kld_distance(pred: Gaussian, target: Gaussian):
    """KL(pred || target) between two Gaussians."""
    if pred.n != target.n:
        raise ValueError("dimension mismatch")
    sp, st = pred.sigma.tolist(), target.sigma.tolist()
    _check_spd(sp)
    _check_spd(st)
    inv_t = sm.inv(st)
    d = [a - b for a, b in zip(_mu(pred), _mu(target))]
    out = 0.5 * (
        sm.trace(sm.matmul(inv_t, sp)) + sm.dot(d, sm.matvec(inv_t, d)) - pred.n + sm.log(sm.det(st) / sm.det(sp))
    )
    return out if sm.value(out) > 0.0 else out * 0.0


def _wrap_distance(dist, tau: float, f: str):
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return 1.0 - 1.0 / (tau + DISTANCE_FNS[f](dist))


def gwd_loss(g1: Gaussian, g2: Gaussian, tau: float = 1.0, f: str = "sqrt"):
    return _wrap_distance(gwd_distance(g1, g2), tau, f)


def kld_loss(pred: Gaussian, target: Gaussian, tau: float = 1.0, f: str = "log1p"):
    return _wrap_distance(kld_distance(pred, target), tau, f)


def kfiou_batch(sigma1, sigma2):
    """Vectorized KFIoU over stacked covariances of shape ``(N, n, n)``."""
    import numpy as np

    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if s1.shape != s2.shape or s1.ndim != 3:
        raise ValueError(f"expected matching (N, n, n) stacks, got {s1.shape} and {s2.shape}")
    n = s1.shape[-1]
    # K S1 = S1 (S1 + S2)^-1 S1; solve on the right via the transpose
    ks1 = np.swapaxes(np.linalg.solve(np.swapaxes(s1 + s2, -1, -2), np.swapaxes(s1, -1, -2)), -1, -2) @ s1
    fused = s1 - ks1
    fused = 0.5 * (fused + np.swapaxes(fused, -1, -2))
    vol = (2.0**n) * np.sqrt(np.linalg.det(fused))
    v1 = (2.0**n) * np.sqrt(np.linalg.det(s1))
    v2 = (2.0**n) * np.sqrt(np.linalg.det(s2))
    return vol / (v1 + v2 - vol)
