"""Exact gradients through the Gaussian path, checked against finite differences.

Run: python demos/04_gradients.py
"""

import numpy as np

from kfiou import RotatedBox2D, grad_check, grad_kf_loss, regression_loss
from kfiou.losses import CenterForm, LossConfig

gt = RotatedBox2D(0, 0, 30, 10, 20)
pred = RotatedBox2D(3, -2, 26, 12, 50)
cfg = LossConfig()

rep = grad_check(pred, gt, cfg)
print("d loss / d (x, y, w, h, theta)")
print("  dual  ", np.array2string(rep.analytic, precision=6))
print("  fd    ", np.array2string(rep.numeric, precision=6))
print(f"  max relative error {rep.max_rel_err:.1e}")

# The same box written as (h, w, theta + 90) is the same point set, so the
# loss and the angle derivative do not jump at the parameterization boundary.
swapped = RotatedBox2D(pred.x, pred.y, pred.h, pred.w, pred.theta + 90)
print("\nboundary swap")
print(f"  loss        {regression_loss(pred, gt, gt, cfg):.12f} vs {regression_loss(swapped, gt, gt, cfg):.12f}")
print(f"  dL/dtheta   {grad_kf_loss(pred, gt, cfg)[4]:.12f} vs {grad_kf_loss(swapped, gt, cfg)[4]:.12f}")

# Far-apart boxes: KFIoU is flat in the center, but the center term still
# pulls the prediction toward the target. The descent step need not point
# straight at it (offsets are normalized per axis), only have a positive
# component along that direction.
far = RotatedBox2D(200, 150, 26, 12, 50)
to_target = np.array([gt.x - far.x, gt.y - far.y], dtype=float)
to_target /= np.linalg.norm(to_target)
print("\ndisjoint pair, cosine between descent step and direction to target")
for center in CenterForm:
    step = -grad_kf_loss(far, gt, LossConfig(center_form=center))[:2]
    print(f"  {center.value:<10} {step @ to_target / np.linalg.norm(step):.3f}")
