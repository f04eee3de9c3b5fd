import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfiou.gaussian import Gaussian, box2d_to_gaussian, box3d_to_gaussian
from kfiou.geometry import RotatedBox2D, RotatedBox3D
from kfiou.losses import (
    AngleMode,
    CenterForm,
    EncodedBox,
    KFForm,
    LossConfig,
    center_loss_kld_term,
    center_loss_smooth_l1,
    decode_box,
    encode_box,
    gwd_distance,
    gwd_loss,
    kf_loss,
    kfiou,
    kfiou_batch,
    kfiou_rescaled,
    kfiou_upper_bound,
    kld_distance,
    kld_loss,
    normalize_angle_pair,
    regression_loss,
    smooth_l1_box_loss,
    total_regression_loss,
)


def g2(*box):
    return box2d_to_gaussian(RotatedBox2D(*box))


def enc(tx, ty=0.0):
    return EncodedBox(tx, ty, 0.0, 0.0, AngleMode.DIRECT, t_theta=0.0)


# ------------------------------------------------------------------ KFIoU


def test_upper_bounds():
    assert kfiou_upper_bound(2) == pytest.approx(1 / 3)
    assert kfiou_upper_bound(3) == pytest.approx(1 / (math.sqrt(32) - 1))


def test_kfiou_examples():
    g = g2(0, 0, 4, 2, 0)
    assert kfiou(g, g) == pytest.approx(1 / 3, abs=1e-12)
    g3 = box3d_to_gaussian(RotatedBox3D(0, 0, 0, 4, 2, 6, 20))
    assert kfiou(g3, g3) == pytest.approx(1 / (math.sqrt(32) - 1), abs=1e-12)
    assert kfiou(np.diag([4.0, 1.0]), np.diag([1.0, 4.0])) == pytest.approx(0.25, abs=1e-12)


def test_kfiou_rescaled_examples():
    g = g2(0, 0, 4, 2, 0)
    assert kfiou_rescaled(g, g) == pytest.approx(1.0)
    assert kfiou_rescaled(g, g2(0, 0, 4, 2, 90)) == pytest.approx(0.75)
    g3 = box3d_to_gaussian(RotatedBox3D(0, 0, 0, 4, 2, 6, 20))
    assert kfiou_rescaled(g3, g3) == pytest.approx(1.0)


def test_kfiou_batch_matches_scalar():
    rng = np.random.default_rng(0)
    s1 = np.array([np.asarray(g2(0, 0, *rng.uniform(1, 50, 2), rng.uniform(-90, 90)).sigma) for _ in range(50)])
    s2 = np.array([np.asarray(g2(0, 0, *rng.uniform(1, 50, 2), rng.uniform(-90, 90)).sigma) for _ in range(50)])
    assert kfiou_batch(s1, s2) == pytest.approx([kfiou(a, b) for a, b in zip(s1, s2)], abs=1e-12)


@pytest.mark.parametrize(
    "form, want",
    [(KFForm.EXP, math.exp(2 / 3) - 1), (KFForm.EXP_RESCALED, 0.0), (KFForm.LINEAR, 2 / 3)],
)
def test_kf_loss_identical_boxes(form, want):
    b = RotatedBox2D(3, 4, 5, 2, 10)
    assert kf_loss(b, b, LossConfig(kf_form=form)) == pytest.approx(want, abs=1e-12)


def test_kf_loss_neglog_forms():
    b = RotatedBox2D(3, 4, 5, 2, 10)
    assert kf_loss(b, b, LossConfig(kf_form=KFForm.NEGLOG)) == pytest.approx(-math.log(1 / 3 + 1e-6))
    assert kf_loss(b, b, LossConfig(kf_form=KFForm.NEGLOG_RESCALED)) == pytest.approx(-math.log(1 + 1e-6))


def test_rescale_flag_composes_with_form():
    a, b = RotatedBox2D(0, 0, 4, 2, 0), RotatedBox2D(0, 0, 4, 2, 90)
    assert kf_loss(a, b, LossConfig(kf_form=KFForm.LINEAR, rescale=True)) == pytest.approx(0.25)
    assert kf_loss(a, b, LossConfig(kf_form=KFForm.EXP, rescale=True)) == pytest.approx(
        kf_loss(a, b, LossConfig(kf_form=KFForm.EXP_RESCALED))
    )


# ---------------------------------------------------------------- centers


def test_smooth_l1_center_examples():
    assert center_loss_smooth_l1(enc(0.3, -0.2), enc(0.3, -0.2)) == 0.0
    assert center_loss_smooth_l1(enc(0.5), enc(0.0)) == pytest.approx(0.5 - 0.5 / 9)
    assert center_loss_smooth_l1(enc(0.01), enc(0.0)) == pytest.approx(4.5e-4)


def test_kld_center_examples():
    assert center_loss_kld_term([1, 2], [1, 2], np.eye(2)) == 0.0
    assert center_loss_kld_term([0, 0], [1, 0], np.eye(2)) == pytest.approx(math.log(2))
    assert center_loss_kld_term([0, 0], [1, 0], np.diag([4.0, 1.0])) == pytest.approx(math.log(1.25))


def test_regression_loss_examples():
    gt = RotatedBox2D(10, -4, 6, 3, 25)
    cfg = LossConfig(kf_form=KFForm.EXP_RESCALED, center_form=CenterForm.SMOOTH_L1)
    assert regression_loss(gt, gt, gt, cfg) == pytest.approx(0.0, abs=1e-12)
    pred = RotatedBox2D(0, 0, 4, 2, 0)
    assert regression_loss(pred, RotatedBox2D(0, 0, 4, 2, 90), None, LossConfig()) == pytest.approx(1.1170, abs=1e-4)


def test_regression_loss_disjoint():
    pred, gt = RotatedBox2D(100, 0, 4, 2, 0), RotatedBox2D(0, 0, 4, 2, 30)
    for form in CenterForm:
        cfg = LossConfig(center_form=form)
        total = regression_loss(pred, gt, gt, cfg)
        assert math.isfinite(total)
        assert total - kf_loss(pred, gt, cfg) > 0


def test_total_regression_loss_applies_lambda():
    preds = [RotatedBox2D(0, 0, 4, 2, 0), RotatedBox2D(1, 0, 4, 2, 10)]
    gts = [RotatedBox2D(0, 0, 4, 2, 90), RotatedBox2D(0, 0, 4, 2, 0)]
    cfg = LossConfig(lambda1=0.5)
    want = 0.5 * sum(regression_loss(p, g, g, cfg) for p, g in zip(preds, gts))
    assert total_regression_loss(preds, gts, cfg=cfg) == pytest.approx(want)


# --------------------------------------------------------------- encoding


def test_encode_identity():
    a = RotatedBox2D(3, 4, 5, 2, 10)
    assert encode_box(a, a).offsets() == pytest.approx([0, 0, 0, 0, 0])


def test_encode_width_doubling():
    a = RotatedBox2D(3, 4, 5, 2, 10)
    assert encode_box(RotatedBox2D(3, 4, 10, 2, 10), a).tw == pytest.approx(math.log(2))


def test_encode_indirect():
    a = RotatedBox2D(0, 0, 5, 2, 0)
    e = encode_box(RotatedBox2D(0, 0, 5, 2, 30), a, AngleMode.INDIRECT)
    assert (e.t_sin, e.t_cos) == pytest.approx((0.5, math.sqrt(3) / 2))


def test_encode_3d_roundtrip():
    a = RotatedBox3D(1, 2, 3, 4, 2, 6, 10)
    b = RotatedBox3D(2, 1, 0, 5, 3, 2, -40)
    assert decode_box(encode_box(b, a), a).as_tuple() == pytest.approx(b.as_tuple())


@pytest.mark.parametrize("pair, want", [((3, 4), (0.6, 0.8)), ((0.6, 0.8), (0.6, 0.8)), ((-1, 0), (-1, 0))])
def test_normalize_angle_pair(pair, want):
    assert normalize_angle_pair(*pair) == pytest.approx(want)


def test_normalize_zero_raises():
    with pytest.raises(ValueError):
        normalize_angle_pair(0.0, 0.0)


def test_decode_indirect_normalizes():
    a = RotatedBox2D(0, 0, 5, 2, 0)
    e = EncodedBox(0, 0, 0, 0, AngleMode.INDIRECT, t_sin=3.0, t_cos=3.0)
    assert decode_box(e, a).theta == pytest.approx(45.0)


# ------------------------------------------------------------- baselines


def test_baselines_identical():
    g = g2(1, 2, 6, 3, 20)
    assert gwd_distance(g, g) == pytest.approx(0.0, abs=1e-9)
    assert gwd_loss(g, g) == pytest.approx(0.0, abs=1e-9)
    assert kld_loss(g, g) == pytest.approx(0.0, abs=1e-12)
    assert gwd_loss(g, g, tau=2.0) == pytest.approx(0.5, abs=1e-9)


def test_gwd_example():
    a, b = Gaussian([0, 0], np.eye(2)), Gaussian([3, 0], np.eye(2))
    assert gwd_distance(a, b) == pytest.approx(9.0)
    assert gwd_loss(a, b) == pytest.approx(0.75)


def test_kld_example():
    d = kld_distance(Gaussian([0, 0], np.eye(2)), Gaussian([0, 0], np.diag([4.0, 1.0])))
    assert d == pytest.approx(0.5 * (0.25 + 1 - 2 + math.log(4)), abs=1e-12)
    assert d == pytest.approx(0.3182, abs=1e-4)


def test_gwd_matches_matrix_sqrt():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = g2(*rng.uniform(-5, 5, 2), *rng.uniform(1, 20, 2), rng.uniform(-90, 90))
        b = g2(*rng.uniform(-5, 5, 2), *rng.uniform(1, 20, 2), rng.uniform(-90, 90))
        s1, s2 = np.asarray(a.sigma, float), np.asarray(b.sigma, float)
        w, v = np.linalg.eigh(s1)
        r1 = v @ np.diag(np.sqrt(w)) @ v.T
        m = r1 @ s2 @ r1
        wm = np.linalg.eigvalsh(m)
        want = np.sum((np.asarray(a.mu, float) - np.asarray(b.mu, float)) ** 2) + np.trace(s1 + s2) - 2 * np.sum(np.sqrt(wm))
        assert gwd_distance(a, b) == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_smooth_l1_box_loss_examples():
    a = RotatedBox2D(0, 0, 6, 2, 0)
    e = encode_box(a, a)
    assert smooth_l1_box_loss(e, e) == 0.0
    big = smooth_l1_box_loss(encode_box(RotatedBox2D(0, 0, 60, 20, 20), RotatedBox2D(0, 0, 60, 20, 0)), encode_box(RotatedBox2D(0, 0, 60, 20, 0), RotatedBox2D(0, 0, 60, 20, 0)))
    small = smooth_l1_box_loss(encode_box(RotatedBox2D(0, 0, 3, 2, 20), a), encode_box(RotatedBox2D(0, 0, 3, 2, 0), a))
    assert big == pytest.approx(small)


# --------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(epsilon=0)
    with pytest.raises(ValueError):
        LossConfig(gwd_tau=0.5)
    with pytest.raises(ValueError):
        LossConfig(kld_f="cube")


def test_config_file_roundtrip(tmp_path):
    cfg = LossConfig(kf_form=KFForm.NEGLOG, center_form=CenterForm.KLD, rescale=True, gwd_tau=2.0)
    path = tmp_path / "loss.ini"
    cfg.to_file(path)
    assert LossConfig.from_file(path) == cfg
    assert LossConfig.from_dict(cfg.to_dict()) == cfg


# ------------------------------------------------------------- properties

extent = st.floats(1, 100)
angle = st.floats(-180, 180)
coord = st.floats(-100, 100)
box2 = st.builds(RotatedBox2D, coord, coord, extent, extent, angle)
forms = st.sampled_from(list(KFForm))


@settings(max_examples=200, deadline=None)
@given(box2, box2)
def test_kfiou_bounded_and_symmetric(a, b):
    ga, gb = box2d_to_gaussian(a), box2d_to_gaussian(b)
    k = kfiou(ga, gb)
    assert 0 < k <= 1 / 3 + 1e-9
    assert k == pytest.approx(kfiou(gb, ga), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(box2, box2, coord, coord)
def test_kfiou_distance_independent(a, b, dx, dy):
    moved = RotatedBox2D(a.x + dx, a.y + dy, a.w, a.h, a.theta)
    assert kfiou(box2d_to_gaussian(moved), box2d_to_gaussian(b)) == pytest.approx(
        kfiou(box2d_to_gaussian(a), box2d_to_gaussian(b)), abs=1e-9
    )


@settings(max_examples=200, deadline=None)
@given(box2, box2, st.floats(0.1, 10))
def test_scale_behaviour(a, b, s):
    def sc(x):
        return box2d_to_gaussian(RotatedBox2D(x.x * s, x.y * s, x.w * s, x.h * s, x.theta))

    ga, gb, sa, sb = box2d_to_gaussian(a), box2d_to_gaussian(b), sc(a), sc(b)
    assert kfiou(sa, sb) == pytest.approx(kfiou(ga, gb), abs=1e-9)
    assert kfiou_rescaled(sa, sb) == pytest.approx(kfiou_rescaled(ga, gb), abs=1e-9)
    assert kld_distance(sa, sb) == pytest.approx(kld_distance(ga, gb), rel=1e-9, abs=1e-9)
    assert gwd_distance(sa, sb) == pytest.approx(s * s * gwd_distance(ga, gb), rel=1e-7, abs=1e-7)


@settings(max_examples=200, deadline=None)
@given(box2, box2, forms, st.booleans())
def test_kf_loss_boundary_continuity(a, b, form, swap_pred):
    cfg = LossConfig(kf_form=form)
    if swap_pred:
        a2, b2 = RotatedBox2D(a.x, a.y, a.h, a.w, a.theta + 90), b
    else:
        a2, b2 = a, RotatedBox2D(b.x, b.y, b.h, b.w, b.theta + 90)
    assert kf_loss(a2, b2, cfg) == pytest.approx(kf_loss(a, b, cfg), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(5, 60), forms)
def test_kf_loss_monotone_in_angle(long_side, form):
    gt = RotatedBox2D(0, 0, long_side, long_side / 4, 0)
    cfg = LossConfig(kf_form=form)
    vals = [kf_loss(RotatedBox2D(0, 0, long_side, long_side / 4, t), gt, cfg) for t in range(91)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@settings(max_examples=200, deadline=None)
@given(box2, box2, st.sampled_from(list(AngleMode)))
def test_encode_decode_roundtrip(b, anchor, mode):
    back = decode_box(encode_box(b, anchor, mode), anchor)
    assert (back.x, back.y, back.w, back.h) == pytest.approx((b.x, b.y, b.w, b.h), abs=1e-9)
    d = math.fmod(back.theta - b.theta, 360.0)
    assert min(abs(d), 360 - abs(d)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_normalized_pair_on_unit_circle(s, c):
    if math.hypot(s, c) < 1e-6:
        return
    s2, c2 = normalize_angle_pair(s, c)
    assert s2 * s2 + c2 * c2 == pytest.approx(1.0, abs=1e-9)
