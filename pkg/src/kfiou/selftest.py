"""Property and reproduction suites behind ``kfiou selftest``.

Each suite returns a :class:`SuiteResult`; nothing here raises on a failed
check. The pytest acceptance module asserts on the same results.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import consistency as cs
from .diff import grad_check, grad_kf_loss
from .gaussian import box2d_to_gaussian
from .geometry import RotatedBox2D, RotatedBox3D, rasterized_iou, skew_iou_2d
from .losses import (
    AngleMode,
    CenterForm,
    KFForm,
    LossConfig,
    decode_box,
    encode_box,
    gwd_distance,
    kfiou,
    kfiou_batch,
    kfiou_upper_bound,
    normalize_angle_pair,
    regression_loss,
)

OCTAGON_IOU = 8 * (math.sqrt(2) - 1) / (8 - 8 * (math.sqrt(2) - 1))


@dataclass
class SuiteResult:
    name: str
    criterion: int
    passed: bool
    cases: int
    failures: int = 0
    seconds: float = 0.0
    detail: str = ""
    worst_case: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.criterion:>2} {self.name:<22} cases={self.cases:<7} failures={self.failures:<5} {self.seconds:6.2f}s  {self.detail}"

    def to_dict(self) -> dict:
        return asdict(self)


def random_box2d(rng, extent=(2.0, 50.0), center=10.0) -> RotatedBox2D:
    return RotatedBox2D(
        rng.uniform(-center, center),
        rng.uniform(-center, center),
        rng.uniform(*extent),
        rng.uniform(*extent),
        rng.uniform(-180.0, 180.0),
    )


def random_box3d(rng, extent=(2.0, 50.0), center=10.0) -> RotatedBox3D:
    return RotatedBox3D(
        rng.uniform(-center, center),
        rng.uniform(-center, center),
        rng.uniform(-center, center),
        rng.uniform(*extent),
        rng.uniform(*extent),
        rng.uniform(*extent),
        rng.uniform(-180.0, 180.0),
    )


def _yaw_cov_stack(rng, n_pairs: int, dims: int, extent=(1.0, 100.0)) -> np.ndarray:
    ext = rng.uniform(*extent, size=(n_pairs, dims))
    t = np.radians(rng.uniform(-180.0, 180.0, size=n_pairs))
    c, s = np.cos(t), np.sin(t)
    rot = np.zeros((n_pairs, dims, dims))
    rot[:, 0, 0], rot[:, 0, 1], rot[:, 1, 0], rot[:, 1, 1] = c, -s, s, c
    if dims == 3:
        rot[:, 2, 2] = 1.0
    lam = np.zeros((n_pairs, dims, dims))
    idx = np.arange(dims)
    lam[:, idx, idx] = ext**2 / 4.0
    return rot @ lam @ np.swapaxes(rot, -1, -2)


def suite_bound(n_pairs: int = 100_000, seed: int = 1) -> SuiteResult:
    """Criterion 1: KFIoU never exceeds 1/(2^(n/2+1)-1); identical inputs attain it."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures, worst = 0, {}
    max_excess = -np.inf
    cases = 0
    for dims in (2, 3):
        bound = kfiou_upper_bound(dims)
        s1 = _yaw_cov_stack(rng, n_pairs, dims)
        s2 = _yaw_cov_stack(rng, n_pairs, dims)
        k = kfiou_batch(s1, s2)
        excess = k - bound
        bad = excess > 1e-9
        failures += int(bad.sum())
        cases += n_pairs
        i = int(np.argmax(excess))
        if excess[i] > max_excess:
            max_excess = float(excess[i])
            worst = {"dims": dims, "kfiou": float(k[i]), "bound": bound}
        # the batch path must agree with the scalar closed form
        for j in range(0, n_pairs, max(1, n_pairs // 500)):
            cases += 1
            if abs(kfiou(s1[j], s2[j]) - k[j]) > 1e-12:
                failures += 1
        # equality at identical inputs
        for j in range(200):
            cases += 1
            if abs(kfiou(s1[j], s1[j]) - bound) > 1e-9:
                failures += 1
    return SuiteResult(
        "appendix-a-bound", 1, failures == 0, cases, failures, time.perf_counter() - t0,
        f"max(KFIoU - bound) = {max_excess:.3e}", worst if failures else {},
    )


def suite_closed_form() -> SuiteResult:
    """Criterion 2: closed-form spot values."""
    t0 = time.perf_counter()
    checks = []
    sq = RotatedBox2D(0, 0, 2, 2, 0)
    g = box2d_to_gaussian(sq)
    checks.append(("kfiou identical", kfiou(g, g), 1 / 3, 1e-12))
    checks.append(("kfiou diag(4,1)/diag(1,4)", kfiou([[4.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 4.0]]), 0.25, 1e-12))
    checks.append(("skewiou 4x2 cross", skew_iou_2d(RotatedBox2D(0, 0, 4, 2, 0), RotatedBox2D(0, 0, 4, 2, 90)), 1 / 3, 1e-9))
    rot = RotatedBox2D(0, 0, 2, 2, 45)
    checks.append(("skewiou 45deg squares", skew_iou_2d(sq, rot), OCTAGON_IOU, 1e-9))
    checks.append(("raster 45deg squares", rasterized_iou(sq, rot, 2000), OCTAGON_IOU, 5e-3))
    failed = [c for c in checks if not abs(c[1] - c[2]) <= c[3]]
    detail = "; ".join(f"{n}: {v:.12g}" for n, v, _, _ in checks[-2:])
    worst = {n: {"got": v, "want": w, "tol": t} for n, v, w, t in failed}
    return SuiteResult("closed-form", 2, not failed, len(checks), len(failed), time.perf_counter() - t0, detail, worst)


def suite_oracle(n_pairs: int = 1000, grid: int = 1000, seed: int = 3) -> SuiteResult:
    """Criterion 3: exact SkewIoU vs pixel counting."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_err, worst, failures = 0.0, {}, 0
    for _ in range(n_pairs):
        b1 = random_box2d(rng, (2.0, 50.0), 10.0)
        b2 = random_box2d(rng, (2.0, 50.0), 10.0)
        err = abs(skew_iou_2d(b1, b2) - rasterized_iou(b1, b2, grid))
        if err > 5e-3:
            failures += 1
        if err > worst_err:
            worst_err, worst = err, {"b1": b1.as_tuple(), "b2": b2.as_tuple(), "err": err}
    return SuiteResult(
        "oracle-agreement", 3, failures == 0, n_pairs, failures, time.perf_counter() - t0,
        f"max |exact - raster| = {worst_err:.2e}", worst if failures else {},
    )


def suite_evar_order(seeds=range(10), n_samples: int = 1000, threads: int | None = None) -> SuiteResult:
    """Criterion 4: EVar ordering KFIoU(KLD-c) < KFIoU(SL1-c) < KLD < GWD < SmoothL1."""
    t0 = time.perf_counter()
    held, rows = 0, []
    for seed in seeds:
        reports = cs.evaluate_methods(cs.PairProtocol(seed=seed, n_samples=n_samples), cs.TABLE_ORDER, threads=threads)
        ok = cs.evar_order_holds(reports)
        held += ok
        rows.append({m: round(r.evar, 6) for m, r in reports.items()})
    n = len(rows)
    need = math.ceil(0.9 * n)
    mean = {m: float(np.mean([r[m] for r in rows])) for m in cs.TABLE_ORDER}
    detail = f"held {held}/{n} seeds (need {need}); mean EVar " + ", ".join(f"{m}={v:.4f}" for m, v in mean.items())
    return SuiteResult("evar-ordering", 4, held >= need, n, n - held, time.perf_counter() - t0, detail, {"per_seed": rows} if held < need else {})


def suite_angle_aspect() -> SuiteResult:
    """Criterion 5: angle sweep monotone; aspect sweep SmoothL1 flat, Gaussian/exact columns vary."""
    t0 = time.perf_counter()
    bad = {}
    ang = cs.angle_sweep(aspect=4.0, theta_range=(0.0, 90.0), step=1.0)
    for m in ang.columns:
        if np.any(np.diff(ang.column(m)) < 0):
            bad[f"angle:{m}"] = "not nondecreasing"
    asp = cs.aspect_sweep(delta_theta=30.0, aspect_range=(1.0, 8.0), step=0.5)
    sl1 = asp.column("smooth_l1")
    if np.ptp(sl1) > 1e-9:
        bad["aspect:smooth_l1"] = f"spread {np.ptp(sl1):.3e}"
    spreads = {}
    for m in ("kfiou", "plain"):
        c = asp.column(m)
        spreads[m] = float(np.ptp(c) / np.max(np.abs(c)))
        if spreads[m] <= 0.10:
            bad[f"aspect:{m}"] = f"relative spread {spreads[m]:.3f}"
    detail = f"aspect-sweep relative spread kfiou={spreads['kfiou']:.2f} plain={spreads['plain']:.2f}"
    return SuiteResult("angle-aspect-trends", 5, not bad, len(ang.columns) + 3, len(bad), time.perf_counter() - t0, detail, bad)


def suite_deviation_scale(n_samples: int = 1000, seed: int = 0, threads: int | None = None) -> SuiteResult:
    """Criterion 6: deviation sweep KFIoU <= GWD; joint scaling leaves KFIoU per-pair similarity unchanged."""
    t0 = time.perf_counter()
    bad = {}
    base = cs.PairProtocol(seed=seed, n_samples=n_samples)
    dev = cs.deviation_sweep(base, range(10), methods=("kfiou_sl1", "gwd"), threads=threads)
    k, g = dev.column("kfiou_sl1"), dev.column("gwd")
    for d, a, b in zip(dev.x, k, g):
        if a > b:
            bad[f"dev={d:g}"] = {"kfiou": a, "gwd": b}
    joint = cs.PairProtocol(seed=seed, n_samples=n_samples, scale_deviation=True)
    ref = cs.collect_samples(joint, ["kfiou_sl1"], threads=threads)["kfiou_sl1"]
    drift = 0.0
    for s in (2.0, 4.0, 10.0):
        got = cs.collect_samples(cs.PairProtocol(**{**joint.__dict__, "scale": s}), ["kfiou_sl1"], threads=threads)["kfiou_sl1"]
        drift = max(drift, max(abs(a[1] - b[1]) for a, b in zip(ref, got)))
    if drift > 1e-9:
        bad["scale-drift"] = drift
    ratios = []
    for i in range(min(200, n_samples)):
        p1, t1 = cs.sample_pair(joint, i)
        p10, t10 = cs.sample_pair(cs.PairProtocol(**{**joint.__dict__, "scale": 10.0}), i)
        d1 = gwd_distance(box2d_to_gaussian(p1), box2d_to_gaussian(t1))
        d10 = gwd_distance(box2d_to_gaussian(p10), box2d_to_gaussian(t10))
        ratios.append(d10 / d1)
    if min(ratios) <= 2.0:
        bad["gwd-scale"] = min(ratios)
    detail = f"max KFIoU/GWD EVar ratio {float(np.max(k / g)):.2f}; KFIoU scale drift {drift:.1e}; GWD D ratio(10x) >= {min(ratios):.1f}"
    return SuiteResult("deviation-scale-trends", 6, not bad, len(dev.x) + 3 + len(ratios), len(bad), time.perf_counter() - t0, detail, bad)


LOSS_FORMS = tuple(KFForm)


def suite_grad(n_pairs: int = 1000, seed: int = 7, tol: float = 1e-4) -> SuiteResult:
    """Criterion 7: dual-number gradients vs central differences, and boundary continuity."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_pairs):
        if i % 5 == 4:
            pairs.append((random_box3d(rng, (2.0, 50.0), 10.0), random_box3d(rng, (2.0, 50.0), 10.0)))
        else:
            pairs.append((random_box2d(rng), random_box2d(rng)))
    failures, worst_err, worst, cases = 0, 0.0, {}, 0
    for form in LOSS_FORMS:
        for i, (pred, gt) in enumerate(pairs):
            cfg = LossConfig(kf_form=form, center_form=CenterForm.SMOOTH_L1 if i % 2 else CenterForm.KLD)
            rep = grad_check(pred, gt, cfg, tol=tol)
            cases += 1
            if not rep.passed:
                failures += 1
            if rep.max_rel_err > worst_err:
                worst_err = rep.max_rel_err
                worst = {"form": form.value, "pred": pred.as_tuple(), "gt": gt.as_tuple(), "rel_err": rep.max_rel_err}
    # boundary continuity: swapped parameterizations give the same loss
    bc_err = 0.0
    for pred, gt in pairs[:200]:
        if isinstance(pred, RotatedBox3D):
            swapped = RotatedBox3D(pred.x, pred.y, pred.z, pred.h, pred.w, pred.l, pred.theta + 90.0)
        else:
            swapped = RotatedBox2D(pred.x, pred.y, pred.h, pred.w, pred.theta - 90.0)
        for form in LOSS_FORMS:
            cfg = LossConfig(kf_form=form)
            cases += 1
            e = abs(regression_loss(pred, gt, gt, cfg) - regression_loss(swapped, gt, gt, cfg))
            bc_err = max(bc_err, e)
            if e > 1e-9:
                failures += 1
    detail = f"max grad rel err {worst_err:.1e}; max boundary loss gap {bc_err:.1e}"
    return SuiteResult("grad-check", 7, failures == 0, cases, failures, time.perf_counter() - t0, detail, worst if failures else {})


def suite_non_overlap(n_pairs: int = 100, seed: int = 11) -> SuiteResult:
    """Criterion 8: disjoint pairs keep a finite loss and a center gradient aimed at the target."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures, worst = 0, {}
    min_inner = np.inf
    for i in range(n_pairs):
        gt = random_box2d(rng, (2.0, 50.0), 0.0)
        pred0 = random_box2d(rng, (2.0, 50.0), 0.0)
        reach = 0.5 * (math.hypot(gt.w, gt.h) + math.hypot(pred0.w, pred0.h))
        phi = rng.uniform(0, 2 * math.pi)
        r = reach * rng.uniform(1.01, 3.0)
        pred = RotatedBox2D(r * math.cos(phi), r * math.sin(phi), pred0.w, pred0.h, pred0.theta)
        cfg = LossConfig(center_form=CenterForm.SMOOTH_L1 if i % 2 else CenterForm.KLD)
        loss = regression_loss(pred, gt, gt, cfg)
        grad = grad_kf_loss(pred, gt, cfg)
        inner = float(-(grad[0] * (gt.x - pred.x) + grad[1] * (gt.y - pred.y)))
        min_inner = min(min_inner, inner)
        ok = skew_iou_2d(pred, gt) == 0.0 and math.isfinite(loss) and inner > 0.0
        if not ok:
            failures += 1
            worst = worst or {"pred": pred.as_tuple(), "gt": gt.as_tuple(), "loss": loss, "inner": inner}
    return SuiteResult(
        "non-overlap", 8, failures == 0, n_pairs, failures, time.perf_counter() - t0,
        f"min <-grad_xy, mu_gt - mu_pred> = {min_inner:.2e}", worst,
    )


def _angle_gap(a: float, b: float) -> float:
    d = math.fmod(a - b, 360.0)
    return min(abs(d), 360.0 - abs(d))


def suite_encoding(n_boxes: int = 10_000, seed: int = 13) -> SuiteResult:
    """Criterion 9: decode(encode(b)) == b in both angle modes; normalized pairs on the unit circle."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures, worst_err, worst = 0, 0.0, {}
    for i in range(n_boxes):
        box = random_box2d(rng, (1.0, 100.0), 100.0)
        box = RotatedBox2D(box.x, box.y, box.w, box.h, rng.uniform(-90.0, 90.0))
        anchor = random_box2d(rng, (1.0, 100.0), 100.0)
        for mode in AngleMode:
            back = decode_box(encode_box(box, anchor, mode), anchor)
            err = max(
                abs(back.x - box.x), abs(back.y - box.y), abs(back.w - box.w), abs(back.h - box.h),
                _angle_gap(back.theta, box.theta),
            )
            if err > worst_err:
                worst_err, worst = err, {"box": box.as_tuple(), "anchor": anchor.as_tuple(), "mode": mode.value}
            failures += err > 1e-9
        s, c = rng.normal(size=2) * rng.uniform(0.01, 100.0)
        s2, c2 = normalize_angle_pair(s, c)
        failures += abs(s2 * s2 + c2 * c2 - 1.0) > 1e-9
    return SuiteResult(
        "encoding-roundtrip", 9, failures == 0, 3 * n_boxes, int(failures), time.perf_counter() - t0,
        f"max round-trip error {worst_err:.1e}", worst if failures else {},
    )


def suite_determinism() -> SuiteResult:
    """Criterion 10: the evar command writes byte-identical CSV across runs and thread counts."""
    from .cli import render_evar

    t0 = time.perf_counter()
    proto = cs.PairProtocol(seed=123, n_samples=300)
    outs = [render_evar(proto, cs.TABLE_ORDER, LossConfig(), fmt="csv", threads=t) for t in (1, 1, 3, 4)]
    same = all(o == outs[0] for o in outs)
    return SuiteResult("determinism", 10, same, len(outs), 0 if same else 1, time.perf_counter() - t0, f"{len(outs[0])} bytes, threads 1/1/3/4")


SUITES = {
    "appendix-a-bound": suite_bound,
    "closed-form": suite_closed_form,
    "oracle-agreement": suite_oracle,
    "evar-ordering": suite_evar_order,
    "angle-aspect-trends": suite_angle_aspect,
    "deviation-scale-trends": suite_deviation_scale,
    "grad-check": suite_grad,
    "non-overlap": suite_non_overlap,
    "encoding-roundtrip": suite_encoding,
    "determinism": suite_determinism,
}


def run_all(names=None) -> list[SuiteResult]:
    return [SUITES[n]() for n in (names or SUITES)]

