"""Exact SkewIoU next to its Gaussian approximation.

Run: python demos/01_skewiou_vs_kfiou.py
"""

import numpy as np

from kfiou import RotatedBox2D, box2d_to_gaussian, kfiou, kfiou_rescaled, rasterized_iou, skew_iou_2d

# Two 4x2 boxes crossing at a right angle. The overlap is a 2x2 square,
# the union is 12, so the exact IoU is 1/3.
a = RotatedBox2D(0, 0, 4, 2, 0)
b = RotatedBox2D(0, 0, 4, 2, 90)
ga, gb = box2d_to_gaussian(a), box2d_to_gaussian(b)
print("cross pair")
print(f"  exact SkewIoU    {skew_iou_2d(a, b):.6f}")
print(f"  pixel count      {rasterized_iou(a, b, 1000):.6f}")
print(f"  KFIoU            {kfiou(ga, gb):.6f}   (never above 1/3 in 2-D)")
print(f"  3 * KFIoU        {kfiou_rescaled(ga, gb):.6f}")

# KFIoU only looks at the covariances. Sliding one box away leaves it
# unchanged, while the exact IoU drops to zero; the regression loss pairs
# KFIoU with a center term for exactly this reason.
print("\nsliding the second box to the right")
print("  dx    exact     3*KFIoU")
for dx in np.arange(0.0, 5.0, 1.0):
    moved = RotatedBox2D(dx, 0, 4, 2, 90)
    print(f"  {dx:3.0f}  {skew_iou_2d(a, moved):.4f}    {kfiou_rescaled(ga, box2d_to_gaussian(moved)):.4f}")

# Rotating a long box away from a copy of itself: both measures fall
# together, which is the trend-level agreement the loss relies on.
print("\nrotating a 40x10 box against itself")
print("  dtheta  exact     3*KFIoU")
target = RotatedBox2D(0, 0, 40, 10, 0)
gt = box2d_to_gaussian(target)
for t in range(0, 91, 15):
    pred = RotatedBox2D(0, 0, 40, 10, t)
    print(f"  {t:5d}   {skew_iou_2d(pred, target):.4f}    {kfiou_rescaled(box2d_to_gaussian(pred), gt):.4f}")
