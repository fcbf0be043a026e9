import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20181016)


def disk_pair(radius=40.0, size=200):
    """Two equal-area disks (as 1-voxel-thick 3D slabs) overlapping by half their area.

    The prediction disk is a copy of the ground-truth disk with one half
    replaced by its mirror image across the disk's edge, so both have exactly
    the same voxel count and share exactly half of it.
    """
    yy, xx = np.mgrid[:size, :size]
    c = size / 2 - 0.5
    gt = ((xx - c) ** 2 + (yy - c) ** 2) <= radius ** 2
    pred = gt.copy()
    # move the right half (x > c) of the disk far away, keeping its shape
    right = gt & (xx > c)
    pred[right] = False
    shifted = np.roll(right, -int(size // 2) + 1, axis=0)
    assert not (shifted & gt).any()
    pred |= shifted
    return gt[:, :, None].astype(float), pred[:, :, None].astype(float)
