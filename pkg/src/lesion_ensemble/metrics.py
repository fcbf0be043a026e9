"""Segmentation evaluation: Dice, HD95, AVD, lesion detection and lesion F1.

Conventions (recorded in every report header):

* boundary voxels are foreground voxels with a background 6-neighbour or
  lying on the volume border;
* HD95 is the larger of the two directed 95th percentiles of
  boundary-to-boundary distances between voxel centres, in millimetres,
  with linear interpolation between order statistics;
* a lesion counts as hit when it shares at least one voxel with the other
  mask's components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .components import DEFAULT_CONNECTIVITY, label_components
from .dice import dsc
from .errors import EmptyMask, EmptyReference
from .volume import as_array, check_same_shape

HD95_CONVENTION = (
    "HD95 = max of directed P95 (linear interpolation) over 6-neighbour "
    "boundary voxel centres, spacing-scaled Euclidean, mm"
)


def boundary(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(3, 1),
                                    border_value=0)
    return mask & ~eroded


def _directed(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    # exact Euclidean distance from every voxel to the nearest dst voxel centre
    dist = ndimage.distance_transform_edt(~dst, sampling=spacing)
    return dist[src]


def hd95(S, R, spacing=(1.0, 1.0, 1.0)) -> float:
    s = as_array(S) != 0
    r = as_array(R) != 0
    check_same_shape(s, r)
    if not s.any() or not r.any():
        raise EmptyMask("HD95 needs two non-empty masks")
    bs, br = boundary(s), boundary(r)
    # every boundary voxel lies inside the joint bounding box, so distances
    # computed on the crop are exact
    sl = ndimage.find_objects((s | r).astype(np.int8))[0]
    bs, br = bs[sl], br[sl]
    spacing = tuple(float(x) for x in spacing)
    d_sr = _directed(bs, br, spacing)
    d_rs = _directed(br, bs, spacing)
    return float(max(np.percentile(d_sr, 95), np.percentile(d_rs, 95)))


def avd(S, R) -> float:
    """Absolute volume difference as a percentage of the reference volume."""
    s = int(np.count_nonzero(as_array(S)))
    r = int(np.count_nonzero(as_array(R)))
    if r == 0:
        raise EmptyReference("AVD needs a non-empty reference")
    return 100.0 * abs(s - r) / r


def _hit_counts(S, R, connectivity):
    """(gt lesions, gt lesions hit, predicted lesions, predicted lesions hit)."""
    s = as_array(S) != 0
    r = as_array(R) != 0
    check_same_shape(s, r)
    ls = label_components(s, connectivity)
    lr = label_components(r, connectivity)
    gt_hit = np.unique(lr.labels[s & r])
    pred_hit = np.unique(ls.labels[s & r])
    return lr.n_components, int(np.count_nonzero(gt_hit)), ls.n_components, int(np.count_nonzero(pred_hit))


def lesion_detection(S, R, connectivity: int = DEFAULT_CONNECTIVITY) -> float:
    n_gt, gt_hit, _, _ = _hit_counts(S, R, connectivity)
    if n_gt == 0:
        raise EmptyReference("lesion detection needs at least one reference lesion")
    return 100.0 * gt_hit / n_gt


def lesion_f1(S, R, connectivity: int = DEFAULT_CONNECTIVITY) -> float:
    n_gt, gt_hit, n_pred, pred_hit = _hit_counts(S, R, connectivity)
    if n_gt == 0:
        raise EmptyReference("lesion F1 needs at least one reference lesion")
    if n_pred == 0:
        return 0.0
    recall = gt_hit / n_gt
    precision = pred_hit / n_pred
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    dice: float
    hd95_mm: float
    avd_pct: float
    detection_pct: float
    f1: float
    flags: list = field(default_factory=list)

    def as_tuple(self) -> tuple:
        return (self.dice, self.hd95_mm, self.avd_pct, self.detection_pct, self.f1)

    def to_dict(self) -> dict:
        return {
            "dice": self.dice,
            "hd95_mm": self.hd95_mm,
            "avd_pct": self.avd_pct,
            "detection_pct": self.detection_pct,
            "f1": self.f1,
            "flags": list(self.flags),
        }


def evaluate(S, R, spacing=(1.0, 1.0, 1.0), connectivity: int = DEFAULT_CONNECTIVITY) -> MetricsReport:
    """All five metrics for one prediction/reference pair.

    Degenerate cases never raise. A metric that is undefined is set to NaN
    and named in ``flags``; NaN entries are skipped when aggregating.
    """
    s = as_array(S) != 0
    r = as_array(R) != 0
    check_same_shape(s, r)
    flags = []
    dice = dsc(s, r)
    if not s.any() and not r.any():
        flags.append("BothEmpty")

    try:
        hd = hd95(s, r, spacing)
    except EmptyMask:
        hd = math.nan
        flags.append("EmptyMask")

    if r.any():
        vol = avd(s, r)
        det = lesion_detection(s, r, connectivity)
        f1 = lesion_f1(s, r, connectivity)
        if not s.any():
            flags.append("NoPredictedLesions")
    else:
        vol = det = f1 = math.nan
        flags.append("EmptyReference")
    return MetricsReport(dice, hd, vol, det, f1, flags)
