"""Why a soft Dice loss can disagree with the Dice score after thresholding.

Two equal-area disks overlap by half. Painting the prediction with a uniform
confidence p leaves the thresholded Dice at 0.5 for any p >= 0.5, while the
soft Dice keeps moving with p.
"""
import numpy as np

from lesion_ensemble import dsc, soft_dice, threshold

size, radius = 200, 40.0
yy, xx = np.mgrid[:size, :size]
c = size / 2 - 0.5
gt = ((xx - c) ** 2 + (yy - c) ** 2) <= radius ** 2
right = gt & (xx > c)
pred = (gt & ~right) | np.roll(right, -size // 2 + 1, axis=0)
gt, pred = gt[:, :, None].astype(float), pred[:, :, None].astype(float)

print(f"gt voxels {int(gt.sum())}, prediction voxels {int(pred.sum())}, shared {int((gt * pred).sum())}")
for p in (0.5, 0.6, 0.8, 1.0):
    s = pred * p
    print(f"p={p:.1f}  soft Dice {soft_dice(s, gt):.6f}  (p/(1+p) = {p / (1 + p):.6f})"
          f"  Dice after 0.5 threshold {dsc(threshold(s), gt):.3f}")
