"""Connected-component labeling and the small/large lesion routing rules."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volume import as_array, check_same_shape, like

SIZE_THRESHOLD = 1000
DEFAULT_CONNECTIVITY = 26
SMALL = "Small"
LARGE = "Large"

_RANK = {6: 1, 18: 2, 26: 3}


def structure(connectivity: int = DEFAULT_CONNECTIVITY) -> np.ndarray:
    if connectivity not in _RANK:
        raise ValueError(f"connectivity must be one of 6, 18, 26; got {connectivity}")
    return ndimage.generate_binary_structure(3, _RANK[connectivity])


def category_for(voxel_count: int, size_threshold: int = SIZE_THRESHOLD) -> str:
    """Large only when strictly more voxels than the threshold."""
    return LARGE if voxel_count > size_threshold else SMALL


@dataclass(frozen=True)
class ComponentRecord:
    id: int
    voxel_count: int
    bbox: tuple  # ((xmin, ymin, zmin), (xmax, ymax, zmax)), inclusive
    category: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "count": self.voxel_count,
            "bbox": [list(self.bbox[0]), list(self.bbox[1])],
            "category": self.category,
        }


@dataclass
class ComponentLabeling:
    labels: np.ndarray
    table: list = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.table)

    def counts(self) -> np.ndarray:
        """Voxel count per id, index 0 holding the background count."""
        return np.bincount(self.labels.ravel(), minlength=self.n_components + 1)

    def write_table(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.table:
                fh.write(json.dumps(rec.to_dict()) + "\n")


def label_components(m, connectivity: int = DEFAULT_CONNECTIVITY,
                     size_threshold: int = SIZE_THRESHOLD) -> ComponentLabeling:
    """Label foreground components of a binary mask.

    Ids are dense 1..C and follow the x-fastest raster order of each
    component's first voxel, independent of the labeling backend's scan order.
    """
    mask = as_array(m) != 0
    raw, n = ndimage.label(mask, structure=structure(connectivity))
    if n == 0:
        return ComponentLabeling(np.zeros(mask.shape, dtype=np.int64), [])

    flat = raw.ravel(order="F")
    ids, first = np.unique(flat, return_index=True)
    keep = ids > 0
    order = ids[keep][np.argsort(first[keep], kind="stable")]
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[order] = np.arange(1, n + 1)
    labels = remap[raw]

    counts = np.bincount(labels.ravel(), minlength=n + 1)
    table = []
    for new_id, sl in enumerate(ndimage.find_objects(labels), start=1):
        lo = tuple(int(s.start) for s in sl)
        hi = tuple(int(s.stop) - 1 for s in sl)
        count = int(counts[new_id])
        table.append(ComponentRecord(new_id, count, (lo, hi), category_for(count, size_threshold)))
    return ComponentLabeling(labels, table)


def _route(p: np.ndarray, labels: np.ndarray, large_ids: np.ndarray):
    is_large = np.zeros(labels.max() + 1, dtype=bool)
    is_large[large_ids] = True
    fg = labels > 0
    large_mask = fg & is_large[labels]
    small_mask = fg & ~large_mask
    return np.where(small_mask, p, 0.0), np.where(large_mask, p, 0.0)


def split_pred(p, size_threshold: int = SIZE_THRESHOLD,
               connectivity: int = DEFAULT_CONNECTIVITY):
    """Route each thresholded component of ``p`` by its own voxel count.

    Returns ``(small, large)`` maps that carry ``p``'s values on their
    components and 0 elsewhere.
    """
    arr = as_array(p)
    lab = label_components(arr >= 0.5, connectivity, size_threshold)
    large_ids = np.array([r.id for r in lab.table if r.category == LARGE], dtype=np.int64)
    small, large = _route(arr, lab.labels, large_ids)
    return like(p, small), like(p, large)


def match_to_reference(pred_labels: np.ndarray, n_pred: int,
                       ref_labels: np.ndarray, n_ref: int) -> np.ndarray:
    """For each predicted id, the reference id it overlaps most (0 if none).

    Ties go to the smaller reference id.
    """
    both = (pred_labels > 0) & (ref_labels > 0)
    keys = pred_labels[both].astype(np.int64) * (n_ref + 1) + ref_labels[both]
    overlap = np.bincount(keys, minlength=(n_pred + 1) * (n_ref + 1)).reshape(n_pred + 1, n_ref + 1)
    best = np.argmax(overlap, axis=1)  # first maximum, i.e. the smaller id
    best[overlap.max(axis=1) == 0] = 0
    return best


def split_train(p, gt, size_threshold: int = SIZE_THRESHOLD,
                connectivity: int = DEFAULT_CONNECTIVITY):
    """Route predicted components by the size of the ground-truth lesion they hit.

    A predicted component takes the category of the gt component it overlaps
    most; components touching no lesion fall back to their own size.
    """
    arr = as_array(p)
    ref = as_array(gt)
    check_same_shape(arr, ref)
    pred_lab = label_components(arr >= 0.5, connectivity, size_threshold)
    gt_lab = label_components(ref, connectivity, size_threshold)
    match = match_to_reference(pred_lab.labels, pred_lab.n_components,
                               gt_lab.labels, gt_lab.n_components)
    gt_large = np.zeros(gt_lab.n_components + 1, dtype=bool)
    for rec in gt_lab.table:
        gt_large[rec.id] = rec.category == LARGE

    large_ids = []
    for rec in pred_lab.table:
        g = match[rec.id]
        if g > 0:
            if gt_large[g]:
                large_ids.append(rec.id)
        elif rec.category == LARGE:
            large_ids.append(rec.id)
    small, large = _route(arr, pred_lab.labels, np.array(large_ids, dtype=np.int64))
    return like(p, small), like(p, large)


def split_mask(gt, size_threshold: int = SIZE_THRESHOLD,
               connectivity: int = DEFAULT_CONNECTIVITY):
    """Small and large lesion masks of a binary reference."""
    arr = (as_array(gt) != 0).astype(np.float64)
    small, large = split_pred(arr, size_threshold, connectivity)
    return like(gt, small), like(gt, large)
