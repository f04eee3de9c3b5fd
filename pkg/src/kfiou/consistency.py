"""Trend-consistency simulation between approximate losses and exact SkewIoU.

Every method is mapped onto a similarity in [0, 1] that is compared against
the exact SkewIoU of the same box pair:

* ``plain``      exact SkewIoU (self-comparison baseline)
* ``kfiou``      KFIoU stretched to [0, 1] by its upper bound
* ``kfiou_sl1``  exp(-(L_c + L_kf)) with a smooth-L1 center term
* ``kfiou_kld``  exp(-(L_c + L_kf)) with the KLD first-term center loss
* ``gwd``/``kld`` 1 / (tau + f(D))
* ``smooth_l1``  exp(-L) of the five-parameter smooth L1 loss

For the two KFIoU+center methods L_kf = -ln(rescaled KFIoU), so with the
center term at zero they reduce to ``kfiou``.

Pairs are drawn with a per-index generator (seeded from ``(seed, index)``),
so any subset of samples can be computed in any order or in parallel and
still yield identical reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .gaussian import box2d_to_gaussian
from .geometry import RotatedBox2D, skew_iou_2d
from .losses import (
    AngleMode,
    LossConfig,
    center_loss_kld_term,
    center_loss_smooth_l1,
    encode_box,
    gwd_distance,
    kfiou,
    kfiou_rescaled,
    kld_distance,
    DISTANCE_FNS,
    smooth_l1_box_loss,
    kf_loss_from_kfiou,
)

METHODS = ("plain", "kfiou", "kfiou_sl1", "kfiou_kld", "gwd", "kld", "smooth_l1")
# ordering reported for the EVar column, lowest first
TABLE_ORDER = ("kfiou_kld", "kfiou_sl1", "kld", "gwd", "smooth_l1")
THREADS_ENV = "KFIOU_THREADS"
PRED_SHAPES = ("same", "independent", "identical")


@dataclass(frozen=True)
class PairProtocol:
    """How random (prediction, target) box pairs are drawn.

    The target's long side is uniform in ``extent_range``, its short side
    follows from an aspect ratio uniform in ``aspect_range`` and its angle is
    uniform in ``angle_range``. The prediction keeps the target's extents
    (``pred_shape="same"``) or draws its own (``"independent"``), in both cases
    with a fresh angle; ``"identical"`` copies the target's extents and angle.
    The prediction's center is displaced uniformly within a disk of radius
    ``max_center_dev``. ``scale`` multiplies all extents; with
    ``scale_deviation`` it also multiplies the displacement.
    """

    seed: int = 0
    n_samples: int = 1000
    max_center_dev: float = 5.0
    extent_range: tuple = (4.0, 50.0)
    aspect_range: tuple = (1.0, 8.0)
    angle_range: tuple = (-90.0, 90.0)
    scale: float = 1.0
    scale_deviation: bool = False
    pred_shape: str = "same"

    def __post_init__(self):
        for name in ("extent_range", "aspect_range", "angle_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo <= hi:
                raise ValueError(f"{name} is empty: {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_center_dev < 0:
            raise ValueError("max_center_dev must be >= 0")
        if self.pred_shape not in PRED_SHAPES:
            raise ValueError(f"pred_shape must be one of {PRED_SHAPES}")
        if self.extent_range[0] <= 0 or self.aspect_range[0] < 1 or self.scale <= 0:
            raise ValueError("extents and scale must be positive, aspect >= 1")


@dataclass
class SimReport:
    method: str
    emean: float
    evar: float
    evar_literal: float
    samples: list = field(default_factory=list)
    protocol: dict = field(default_factory=dict)
    literal_evar: bool = False

    @property
    def reported_evar(self) -> float:
        return self.evar_literal if self.literal_evar else self.evar

    def to_json(self) -> str:
        d = asdict(self)
        d["samples"] = [list(p) for p in self.samples]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimReport":
        d = json.loads(text)
        d["samples"] = [tuple(p) for p in d["samples"]]
        proto = d.get("protocol", {})
        for key in ("extent_range", "aspect_range", "angle_range"):
            if key in proto:
                proto[key] = list(proto[key])
        return cls(**d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "skewiou_plain", "skewiou_app"])
        for i, (p, a) in enumerate(self.samples):
            w.writerow([i, repr(p), repr(a)])
        return buf.getvalue()


def _box(rng, protocol: PairProtocol, center) -> RotatedBox2D:
    long_side = rng.uniform(*protocol.extent_range)
    aspect = rng.uniform(*protocol.aspect_range)
    theta = rng.uniform(*protocol.angle_range)
    s = protocol.scale
    return RotatedBox2D(center[0], center[1], long_side * s, long_side / aspect * s, theta)


def sample_pair(protocol: PairProtocol, index: int) -> tuple[RotatedBox2D, RotatedBox2D]:
    """(prediction, target) pair number ``index``; depends only on (seed, index)."""
    rng = np.random.default_rng([protocol.seed, index])
    target = _box(rng, protocol, (0.0, 0.0))
    r = protocol.max_center_dev * math.sqrt(rng.uniform())
    phi = rng.uniform(0.0, 2.0 * math.pi)
    if protocol.scale_deviation:
        r *= protocol.scale
    center = (r * math.cos(phi), r * math.sin(phi))
    if protocol.pred_shape == "identical":
        pred = replace(target, x=center[0], y=center[1])
    elif protocol.pred_shape == "same":
        theta = rng.uniform(*protocol.angle_range)
        pred = RotatedBox2D(center[0], center[1], target.w, target.h, theta)
    else:
        pred = _box(rng, protocol, center)
    return pred, target


def method_similarity(pred: RotatedBox2D, target: RotatedBox2D, method: str, cfg: LossConfig | None = None) -> float:
    """Similarity in [0, 1] a method assigns to a pair; 1 means identical."""
    cfg = cfg or LossConfig()
    if method == "plain":
        return skew_iou_2d(pred, target)
    gp, gt = box2d_to_gaussian(pred), box2d_to_gaussian(target)
    if method == "kfiou":
        return kfiou_rescaled(gp, gt)
    if method in ("kfiou_sl1", "kfiou_kld"):
        if method == "kfiou_sl1":
            lc = center_loss_smooth_l1(encode_box(pred, target), encode_box(target, target), cfg.smooth_l1_sigma)
        else:
            lc = center_loss_kld_term(gt.mu, gp.mu, gt.sigma)
        # exp(-(L_c - ln(k))) == k * exp(-L_c); written as such to avoid log(0)
        return kfiou_rescaled(gp, gt) * math.exp(-lc)
    if method == "gwd":
        return 1.0 / (cfg.gwd_tau + DISTANCE_FNS[cfg.gwd_f](gwd_distance(gp, gt)))
    if method == "kld":
        return 1.0 / (cfg.kld_tau + DISTANCE_FNS[cfg.kld_f](kld_distance(gp, gt)))
    if method == "smooth_l1":
        mode = AngleMode.DIRECT
        loss = smooth_l1_box_loss(encode_box(pred, target, mode), encode_box(target, target, mode), cfg.smooth_l1_sigma)
        return math.exp(-loss)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, threads)


def _evaluate(protocol, methods, cfg, indices):
    out = []
    for i in indices:
        pred, target = sample_pair(protocol, i)
        plain = skew_iou_2d(pred, target)
        out.append([(plain, float(method_similarity(pred, target, m, cfg))) for m in methods])
    return out


def collect_samples(protocol: PairProtocol, methods, cfg: LossConfig | None = None, threads: int | None = None):
    """Per-method lists of (plain, approx) pairs, in sample-index order."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    n = protocol.n_samples
    threads = _threads(threads)
    if threads == 1:
        rows = _evaluate(protocol, methods, cfg, range(n))
    else:
        chunks = [range(k, n, threads) for k in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda ix: _evaluate(protocol, methods, cfg, ix), chunks))
        rows = [None] * n
        for ix, part in zip(chunks, parts):
            for i, r in zip(ix, part):
                rows[i] = r
    return {m: [r[j] for r in rows] for j, m in enumerate(methods)}


def error_stats(samples) -> tuple[float, float, float]:
    """(EMean, EVar, literal EVar) for (plain, approx) pairs.

    EVar is the variance of err = plain - approx about EMean. The literal
    variant measures the spread of the approximate values about EMean.
    """
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    err = arr[:, 0] - arr[:, 1]
    emean = math.fsum(err) / len(err)
    evar = math.fsum((err - emean) ** 2) / len(err)
    evar_lit = math.fsum((arr[:, 1] - emean) ** 2) / len(err)
    return float(emean), float(evar), float(evar_lit)


def evaluate_methods(
    protocol: PairProtocol,
    methods=TABLE_ORDER,
    cfg: LossConfig | None = None,
    literal_evar: bool = False,
    threads: int | None = None,
) -> dict:
    """One :class:`SimReport` per method, all on the same sampled pairs."""
    per_method = collect_samples(protocol, methods, cfg, threads)
    out = {}
    for m, samples in per_method.items():
        emean, evar, evar_lit = error_stats(samples)
        out[m] = SimReport(m, emean, evar, evar_lit, samples, asdict(protocol), literal_evar)
    return out


def emean_evar(
    protocol: PairProtocol,
    method: str,
    cfg: LossConfig | None = None,
    literal_evar: bool = False,
    threads: int | None = None,
) -> SimReport:
    return evaluate_methods(protocol, [method], cfg, literal_evar, threads)[method]


def evar_order_holds(reports: dict, order=TABLE_ORDER) -> bool:
    vals = [reports[m].reported_evar for m in order]
    return all(a < b for a, b in zip(vals, vals[1:]))


# ------------------------------------------------------------------ sweeps


@dataclass
class SweepTable:
    """Plot-ready table: one x column plus one column per method."""

    x_name: str
    x: list
    columns: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        w.writerow([self.x_name] + names)
        for i, xv in enumerate(self.x):
            w.writerow([repr(float(xv))] + [repr(float(self.columns[m][i])) for m in names])
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)


SWEEP_METHODS = ("plain", "kfiou", "gwd", "kld", "smooth_l1")


def _frange(start: float, stop: float, step: float) -> list:
    if step <= 0:
        raise ValueError("step must be > 0")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise ValueError("empty range")
    return [start + i * step for i in range(n)]


def method_loss(pred, target, method: str, cfg: LossConfig | None = None) -> float:
    """Loss value each method reports for a pair (as plotted in loss-vs-x curves)."""
    cfg = cfg or LossConfig()
    if method == "plain":
        return 1.0 - skew_iou_2d(pred, target)
    gp, gt = box2d_to_gaussian(pred), box2d_to_gaussian(target)
    if method == "kfiou":
        return float(kf_loss_from_kfiou(kfiou(gp, gt), 2, cfg.kf_form, cfg.epsilon, cfg.rescale))
    if method == "smooth_l1":
        return float(smooth_l1_box_loss(encode_box(pred, target), encode_box(target, target), cfg.smooth_l1_sigma))
    return 1.0 - method_similarity(pred, target, method, cfg)


def angle_sweep(
    aspect: float = 4.0,
    center_dev: float = 0.0,
    theta_range: tuple = (0.0, 90.0),
    step: float = 1.0,
    methods=SWEEP_METHODS,
    cfg: LossConfig | None = None,
    long_side: float = 40.0,
) -> SweepTable:
    """Loss of each method as the prediction rotates away from the target."""
    thetas = _frange(theta_range[0], theta_range[1], step)
    target = RotatedBox2D(0.0, 0.0, long_side, long_side / aspect, 0.0)
    cols = {m: [] for m in methods}
    for t in thetas:
        pred = RotatedBox2D(center_dev, 0.0, long_side, long_side / aspect, t)
        for m in methods:
            cols[m].append(method_loss(pred, target, m, cfg))
    return SweepTable("delta_theta", thetas, cols)


def aspect_sweep(
    delta_theta: float = 10.0,
    aspect_range: tuple = (1.0, 8.0),
    step: float = 0.5,
    methods=SWEEP_METHODS,
    cfg: LossConfig | None = None,
    area: float = 1.0,
) -> SweepTable:
    """Loss of each method at fixed angle offset while the aspect ratio grows (constant area)."""
    aspects = _frange(aspect_range[0], aspect_range[1], step)
    cols = {m: [] for m in methods}
    for a in aspects:
        w = math.sqrt(area * a)
        h = area / w
        target = RotatedBox2D(0.0, 0.0, w, h, 0.0)
        pred = RotatedBox2D(0.0, 0.0, w, h, delta_theta)
        for m in methods:
            cols[m].append(method_loss(pred, target, m, cfg))
    return SweepTable("aspect", aspects, cols)


def deviation_sweep(
    template: PairProtocol,
    devs,
    methods=TABLE_ORDER,
    cfg: LossConfig | None = None,
    literal_evar: bool = False,
    threads: int | None = None,
) -> SweepTable:
    """EVar of each method as the allowed center deviation grows."""
    cols = {m: [] for m in methods}
    for dev in devs:
        reports = evaluate_methods(replace(template, max_center_dev=float(dev)), methods, cfg, literal_evar, threads)
        for m in methods:
            cols[m].append(reports[m].reported_evar)
    return SweepTable("center_dev", [float(d) for d in devs], cols)


def scale_sweep(
    template: PairProtocol,
    scales,
    methods=TABLE_ORDER,
    cfg: LossConfig | None = None,
    literal_evar: bool = False,
    threads: int | None = None,
) -> SweepTable:
    """EVar of each method as object extents are scaled (deviation scaled too iff template says so)."""
    cols = {m: [] for m in methods}
    for s in scales:
        reports = evaluate_methods(replace(template, scale=float(s)), methods, cfg, literal_evar, threads)
        for m in methods:
            cols[m].append(reports[m].reported_evar)
    return SweepTable("scale", [float(s) for s in scales], cols)
