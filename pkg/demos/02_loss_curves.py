"""How the KFIoU loss forms and the baselines react to angle and aspect.

Run: python demos/02_loss_curves.py
"""

import numpy as np

from kfiou.consistency import angle_sweep, aspect_sweep
from kfiou.losses import KFForm, LossConfig

# Angle sweep at aspect 4: every column should rise as the boxes rotate apart.
table = angle_sweep(aspect=4.0, theta_range=(0, 90), step=15)
names = list(table.columns)
print("angle sweep, aspect 4 (loss values)")
print("  dtheta " + " ".join(f"{n:>10}" for n in names))
for i, t in enumerate(table.x):
    print(f"  {t:6.0f} " + " ".join(f"{table.columns[n][i]:10.4f}" for n in names))

# Aspect sweep at a fixed 30 degree offset. Smooth L1 regresses the angle
# directly, so it cannot tell a near-square box from a long thin one.
table = aspect_sweep(delta_theta=30.0, aspect_range=(1, 8), step=1)
print("\naspect sweep, 30 degree offset")
print("  aspect " + " ".join(f"{n:>10}" for n in names))
for i, r in enumerate(table.x):
    print(f"  {r:6.1f} " + " ".join(f"{table.columns[n][i]:10.4f}" for n in names))
print(f"  smooth_l1 spread: {np.ptp(table.column('smooth_l1')):.2e}")

# The five KFIoU loss forms side by side on the same rotation sweep.
print("\nKFIoU loss forms on the aspect-4 rotation sweep")
forms = list(KFForm)
print("  dtheta " + " ".join(f"{f.value:>16}" for f in forms))
cols = {f: angle_sweep(4.0, 0.0, (0, 90), 30, ("kfiou",), LossConfig(kf_form=f)).column("kfiou") for f in forms}
for i, t in enumerate(range(0, 91, 30)):
    print(f"  {t:6d} " + " ".join(f"{cols[f][i]:16.4f}" for f in forms))
