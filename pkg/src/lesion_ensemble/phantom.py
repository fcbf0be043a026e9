"""Synthetic lesion phantoms, scale-biased opinion oracles and Monte Carlo splits.

Oracles stand in for the three stage-1 networks. Each one corrupts the
ground truth the way a network at that patch scale tends to err: the fine
scale adds false-positive blobs, the coarse scale blurs and drops small
lesions, the middle scale sits in between.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Protocol

import numpy as np
from scipy import ndimage

from .components import SIZE_THRESHOLD, label_components
from .errors import InvalidSplit, PlacementFailed
from .patching import DEFAULT_SPECS, SCALE_TAGS, Patch, SamplingSpec, extract_patches, stitch
from .volume import Volume3, as_array, like, read_v3d, write_v3d


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit seed for a (master seed, key...) pair."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (48, 64, 48)
    spacing: tuple = (1.0, 1.0, 1.0)
    n_small: tuple = (6, 12)  # inclusive range
    n_large: tuple = (1, 3)
    small_radius: tuple = (1.2, 4.0)  # voxels; lesions must stay <= size_threshold
    large_radius: tuple = (6.5, 9.0)  # voxels; lesions must exceed size_threshold
    noise: float = 0.3
    size_threshold: int = SIZE_THRESHOLD
    max_tries: int = 500
    seed: int = 0

    def __post_init__(self):
        for name in ("n_small", "n_large", "small_radius", "large_radius"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a non-empty non-negative range, got {(lo, hi)}")
        reach = 2 * math.ceil(self.large_radius[1]) + 3 if self.n_large[1] > 0 else 1
        if self.n_large[1] > 0 and min(self.dims) < reach:
            raise ValueError(f"dims {self.dims} cannot contain a lesion of radius {self.large_radius[1]}")


def _ellipsoid(dims, center, radii):
    """Voxel mask of an axis-aligned ellipsoid and the slice it lives in."""
    lo = [max(0, int(math.floor(c - r))) for c, r in zip(center, radii)]
    hi = [min(n, int(math.ceil(c + r)) + 1) for n, c, r in zip(dims, center, radii)]
    grids = np.ogrid[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    q = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii))
    sl = tuple(slice(a, b) for a, b in zip(lo, hi))
    return sl, q <= 1.0


def generate_phantom(spec: PhantomSpec):
    """Return ``(image, gt)`` for one synthetic subject.

    Lesions are ellipsoids placed by rejection sampling so that no two touch
    (not even diagonally) and every lesion falls on the intended side of the
    size threshold.
    """
    rng = np.random.default_rng(spec.seed)
    dims = tuple(int(n) for n in spec.dims)
    gt = np.zeros(dims, dtype=bool)
    n_large = int(rng.integers(spec.n_large[0], spec.n_large[1] + 1))
    n_small = int(rng.integers(spec.n_small[0], spec.n_small[1] + 1))
    cube = np.ones((3, 3, 3), dtype=bool)

    for want_large, count in ((True, n_large), (False, n_small)):
        rlo, rhi = spec.large_radius if want_large else spec.small_radius
        for _ in range(count):
            for _attempt in range(spec.max_tries):
                radii = rng.uniform(rlo, rhi, size=3)
                if np.any(2 * radii + 1 > np.array(dims)):
                    continue
                center = [rng.uniform(r, n - 1 - r) for r, n in zip(radii, dims)]
                sl, blob = _ellipsoid(dims, center, radii)
                n_vox = int(blob.sum())
                if n_vox == 0 or (n_vox > spec.size_threshold) != want_large:
                    continue
                if np.any(ndimage.binary_dilation(gt[sl], cube) & blob):
                    continue
                # dilation inside the slice misses neighbours just outside it
                grown = np.zeros(dims, dtype=bool)
                grown[sl] = blob
                if np.any(ndimage.binary_dilation(grown, cube) & gt):
                    continue
                gt[sl] |= blob
                break
            else:
                raise PlacementFailed(f"could not place a {'large' if want_large else 'small'} lesion "
                                      f"after {spec.max_tries} tries")

    image = gt.astype(np.float64) + spec.noise * rng.random(dims)
    return Volume3(image, spec.spacing), Volume3(gt.astype(np.float64), spec.spacing)


@dataclass(frozen=True)
class OracleSpec:
    scale: str = "mid"
    blur_radius: int = 0
    fp_rate: float = 0.0  # per-voxel probability of seeding a false-positive blob
    small_dropout: float = 0.0
    jitter: float = 0.0
    fp_confidence: tuple = (0.55, 0.75)  # probability range painted on false-positive blobs
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.fp_confidence
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"fp_confidence must be a sub-range of [0, 1], got {self.fp_confidence}")
        for name in ("fp_rate", "small_dropout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.blur_radius < 0 or self.jitter < 0:
            raise ValueError("blur_radius and jitter must be non-negative")


# artifact defaults: tuned so that each oracle shows its scale's typical error
DEFAULT_ORACLES = {
    "fine": OracleSpec("fine", blur_radius=0, fp_rate=4e-4, small_dropout=0.0, jitter=0.35),
    "mid": OracleSpec("mid", blur_radius=1, fp_rate=5e-5, small_dropout=0.2, jitter=0.25),
    "coarse": OracleSpec("coarse", blur_radius=2, fp_rate=0.0, small_dropout=0.6, jitter=0.15),
}


def box_blur(a: np.ndarray, radius: int) -> np.ndarray:
    """Separable mean filter of width 2*radius+1 with edge replication."""
    out = np.asarray(a, dtype=np.float64)
    for axis in range(out.ndim):
        out = ndimage.uniform_filter1d(out, size=2 * radius + 1, axis=axis, mode="nearest")
    return out


def simulate_opinion(gt, o: OracleSpec, size_threshold: int = SIZE_THRESHOLD):
    """A seeded, corrupted copy of ``gt`` in probability space."""
    rng = np.random.default_rng(o.seed)
    ref = as_array(gt) != 0
    x = ref.astype(np.float64)

    if o.small_dropout > 0:
        lab = label_components(ref, size_threshold=size_threshold)
        draws = rng.random(lab.n_components)
        drop = [r.id for r, u in zip(lab.table, draws) if r.voxel_count <= size_threshold and u < o.small_dropout]
        x[np.isin(lab.labels, drop)] = 0.0

    if o.jitter > 0:
        cube = np.ones((3, 3, 3), dtype=bool)
        band = ndimage.binary_dilation(ref, cube) & ~ndimage.binary_erosion(ref, cube)
        noise = rng.uniform(-o.jitter, o.jitter, size=x.shape)
        x = np.where(band, x + noise, x)

    if o.blur_radius > 0:
        x = box_blur(np.clip(x, 0.0, 1.0), o.blur_radius)

    if o.fp_rate > 0:
        seeds = rng.random(x.shape) < o.fp_rate
        blobs = ndimage.binary_dilation(seeds, ndimage.generate_binary_structure(3, 2))
        values = rng.uniform(*o.fp_confidence, size=x.shape)
        x = np.where(blobs, np.maximum(x, values), x)

    return like(gt, np.clip(x, 0.0, 1.0))


class OpinionProvider(Protocol):
    """Anything that scores image patches, e.g. a trained stage-1 network."""

    def predict_patch(self, patch: Patch) -> np.ndarray:
        ...


class OracleProvider:
    """Serves windows of a precomputed full-volume oracle opinion."""

    def __init__(self, opinion):
        self.opinion = as_array(opinion)

    def predict_patch(self, patch: Patch) -> np.ndarray:
        return self.opinion[patch.window()]


def provide_opinion(provider: OpinionProvider, image: Volume3, spec: SamplingSpec) -> Volume3:
    """Run a provider over sliding-window patches and average the results."""
    patches = extract_patches(image, spec)
    preds = [Patch(p.origin, np.asarray(provider.predict_patch(p), dtype=np.float64)) for p in patches]
    return stitch(preds, image.dims, image.spacing)


@dataclass
class Subject:
    id: int
    image: Volume3
    gt: Volume3
    opinions: dict  # scale tag -> Volume3
    phantom_spec: PhantomSpec = None
    oracle_specs: dict = field(default_factory=dict)

    def opinion_list(self) -> list:
        return [self.opinions[t] for t in SCALE_TAGS]


def make_subject(subject_id: int, master_seed: int, phantom: PhantomSpec = PhantomSpec(),
                 oracles: dict = None, via_patches: bool = True) -> Subject:
    """Generate one subject; all randomness derives from (master_seed, subject_id)."""
    oracles = DEFAULT_ORACLES if oracles is None else oracles
    pspec = replace(phantom, seed=derive_seed(master_seed, subject_id, 0))
    image, gt = generate_phantom(pspec)
    opinions, specs = {}, {}
    for k, (tag, sampling) in enumerate(zip(SCALE_TAGS, DEFAULT_SPECS), start=1):
        ospec = replace(oracles[tag], seed=derive_seed(master_seed, subject_id, k))
        op = simulate_opinion(gt, ospec, pspec.size_threshold)
        if via_patches:
            op = provide_opinion(OracleProvider(op), image, sampling)
        opinions[tag] = op
        specs[tag] = ospec
    return Subject(subject_id, image, gt, opinions, pspec, specs)


def generate_suite(n_subjects: int, master_seed: int, phantom: PhantomSpec = PhantomSpec(),
                   oracles: dict = None, via_patches: bool = True) -> list:
    return [make_subject(i, master_seed, phantom, oracles, via_patches) for i in range(n_subjects)]


def write_suite(directory, subjects) -> None:
    """Write subjects as ``subject_NNN/{image,gt,opinion_<scale>}.v3d`` plus a manifest."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.jsonl"), "w") as fh:
        for s in subjects:
            name = f"subject_{s.id:03d}"
            sub = os.path.join(directory, name)
            os.makedirs(sub, exist_ok=True)
            write_v3d(s.image, os.path.join(sub, "image.v3d"))
            write_v3d(s.gt, os.path.join(sub, "gt.v3d"))
            for tag in SCALE_TAGS:
                write_v3d(s.opinions[tag], os.path.join(sub, f"opinion_{tag}.v3d"))
            rec = {
                "subject": s.id,
                "dir": name,
                "phantom": asdict(s.phantom_spec) if s.phantom_spec else None,
                "oracles": {t: asdict(o) for t, o in s.oracle_specs.items()},
            }
            fh.write(json.dumps(rec) + "\n")


def read_suite(directory) -> list:
    subjects = []
    with open(os.path.join(directory, "manifest.jsonl")) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            sub = os.path.join(directory, rec["dir"])
            opinions = {t: read_v3d(os.path.join(sub, f"opinion_{t}.v3d")) for t in SCALE_TAGS}
            subjects.append(Subject(rec["subject"], read_v3d(os.path.join(sub, "image.v3d")),
                                    read_v3d(os.path.join(sub, "gt.v3d")), opinions))
    return subjects


def mc_split(n_subjects: int, train_fraction: float, repeats: int, seed: int) -> list:
    """Monte Carlo cross-validation: ``repeats`` independent random train/test partitions."""
    if n_subjects < 2 or not 0.0 < train_fraction < 1.0 or repeats < 1:
        raise InvalidSplit(f"cannot split {n_subjects} subjects at fraction {train_fraction} x{repeats}")
    n_train = int(math.floor(n_subjects * train_fraction + 0.5))
    if not 1 <= n_train <= n_subjects - 1:
        raise InvalidSplit(f"{n_train} training subjects out of {n_subjects} leaves an empty side")
    rng = np.random.default_rng(seed)
    splits = []
    for _ in range(repeats):
        perm = rng.permutation(n_subjects)
        splits.append((sorted(int(i) for i in perm[:n_train]), sorted(int(i) for i in perm[n_train:])))
    return splits
