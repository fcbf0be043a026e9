"""Multi-scale sliding-window patch extraction, balancing and stitching."""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import IncompleteCoverage, PatchTooLarge
from .volume import Volume3, as_array, read_v3d, write_v3d

# the three sampling scales, smallest first
DEFAULT_SCALES = ((6, 10, 6), (12, 20, 12), (24, 40, 24))
SCALE_TAGS = ("fine", "mid", "coarse")


@dataclass(frozen=True)
class SamplingSpec:
    patch_size: tuple
    stride: tuple = None

    def __post_init__(self):
        patch = tuple(int(p) for p in self.patch_size)
        stride = tuple(max(1, p // 2) for p in patch) if self.stride is None else tuple(int(s) for s in self.stride)
        if len(patch) != 3 or len(stride) != 3:
            raise ValueError("patch_size and stride need three entries")
        if any(p < 1 for p in patch) or any(s < 1 for s in stride):
            raise ValueError(f"patch sizes and strides must be positive: {patch}, {stride}")
        if any(s > p for s, p in zip(stride, patch)):
            raise ValueError(f"stride {stride} exceeds patch size {patch}")
        object.__setattr__(self, "patch_size", patch)
        object.__setattr__(self, "stride", stride)

    @property
    def tag(self) -> str:
        return "x".join(str(p) for p in self.patch_size)


DEFAULT_SPECS = tuple(SamplingSpec(s) for s in DEFAULT_SCALES)


@dataclass(frozen=True, eq=False)
class Patch:
    origin: tuple
    data: np.ndarray

    @property
    def size(self) -> tuple:
        return tuple(self.data.shape)

    def window(self) -> tuple:
        return tuple(slice(o, o + n) for o, n in zip(self.origin, self.data.shape))


def window_origins(length: int, patch: int, stride: int) -> list:
    """Offsets of sliding windows along one axis, with a final window flush to the end.

    >>> window_origins(25, 12, 6)
    [0, 6, 12, 13]
    """
    if patch > length:
        raise PatchTooLarge(f"patch {patch} exceeds axis length {length}")
    if not 1 <= stride <= patch:
        raise ValueError(f"need 1 <= stride <= patch, got stride={stride}, patch={patch}")
    last = length - patch
    offsets = list(range(0, last + 1, stride))
    if offsets[-1] != last:
        offsets.append(last)
    return offsets


def patch_origins(dims, spec: SamplingSpec) -> list:
    axes = [window_origins(n, p, s) for n, p, s in zip(dims, spec.patch_size, spec.stride)]
    return list(itertools.product(*axes))


def extract_patches(v, spec: SamplingSpec) -> list:
    arr = as_array(v)
    out = []
    for origin in patch_origins(arr.shape, spec):
        sl = tuple(slice(o, o + p) for o, p in zip(origin, spec.patch_size))
        out.append(Patch(origin, arr[sl].copy()))
    return out


def lesion_patch_flags(patches, gt) -> np.ndarray:
    """True for patches whose window holds at least one ground-truth voxel."""
    ref = as_array(gt) != 0
    return np.array([bool(ref[p.window()].any()) for p in patches], dtype=bool)


def balance_patches(patches, gt, seed: int) -> list:
    """Indices of every lesion patch plus an equal-sized random draw of empty ones.

    Empty patches are sampled without replacement; if there are fewer empty
    patches than lesion patches all of them are kept. The result is sorted.
    """
    flags = lesion_patch_flags(patches, gt)
    lesion = np.flatnonzero(flags)
    empty = np.flatnonzero(~flags)
    rng = np.random.default_rng(seed)
    k = min(len(lesion), len(empty))
    picked = rng.choice(empty, size=k, replace=False) if k else np.array([], dtype=np.int64)
    return sorted(int(i) for i in np.concatenate([lesion, picked]))


def stitch(preds, dims, spacing=(1.0, 1.0, 1.0)) -> Volume3:
    """Average overlapping patch predictions back onto the full grid.

    Patches are folded in list order with a running mean, which reproduces
    identical overlapping values bit for bit.
    """
    dims = tuple(int(n) for n in dims)
    mean = np.zeros(dims, dtype=np.float64)
    count = np.zeros(dims, dtype=np.int64)
    for patch in preds:
        if any(o < 0 or o + n > d for o, n, d in zip(patch.origin, patch.data.shape, dims)):
            raise PatchTooLarge(f"patch at {patch.origin} of size {patch.data.shape} leaves grid {dims}")
        sl = patch.window()
        count[sl] += 1
        mean[sl] += (np.asarray(patch.data, dtype=np.float64) - mean[sl]) / count[sl]
    holes = int(np.count_nonzero(count == 0))
    if holes:
        raise IncompleteCoverage(f"{holes} voxels are not covered by any patch")
    return Volume3(mean, spacing)


MANIFEST = "manifest.jsonl"


def write_patch_set(directory, patches, spec: SamplingSpec, parent: Volume3,
                    scale_tag: str = None, extra: list = None) -> None:
    """Write patches as V3D files plus a JSON-lines manifest, one record per patch."""
    os.makedirs(directory, exist_ok=True)
    tag = scale_tag or spec.tag
    with open(os.path.join(directory, MANIFEST), "w") as fh:
        for n, patch in enumerate(patches):
            name = f"patch_{n:05d}.v3d"
            write_v3d(Volume3(patch.data, parent.spacing), os.path.join(directory, name))
            rec = {
                "file": name,
                "origin": list(patch.origin),
                "scale": tag,
                "parent_dims": list(parent.dims),
                "spacing": list(parent.spacing),
            }
            if extra is not None:
                rec.update(extra[n])
            fh.write(json.dumps(rec) + "\n")


def read_patch_set(directory):
    """Load ``(patches, records)`` from a patch directory."""
    patches, records = [], []
    with open(os.path.join(directory, MANIFEST)) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            vol = read_v3d(os.path.join(directory, rec["file"]))
            patches.append(Patch(tuple(rec["origin"]), np.array(vol.data)))
            records.append(rec)
    return patches, records
