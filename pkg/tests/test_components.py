import numpy as np
import pytest

from oracles import flood_fill

from lesion_ensemble.components import (
    LARGE,
    SMALL,
    label_components,
    split_mask,
    split_pred,
    split_train,
)


def blob(shape, lo, hi):
    m = np.zeros(shape)
    m[tuple(slice(a, b) for a, b in zip(lo, hi))] = 1
    return m


class TestLabel:
    def test_empty(self):
        assert label_components(np.zeros((4, 4, 4))).n_components == 0

    def test_corner_touch_is_one(self):
        m = np.zeros((3, 3, 3))
        m[0, 0, 0] = m[1, 1, 1] = 1
        assert label_components(m).n_components == 1
        assert label_components(m, connectivity=6).n_components == 2
        assert label_components(m, connectivity=18).n_components == 2

    def test_gap_separates(self):
        m = np.zeros((5, 1, 1))
        m[0] = m[3] = 1
        assert label_components(m).n_components == 2

    @pytest.mark.parametrize("connectivity", [6, 18, 26])
    def test_matches_flood_fill_exactly(self, rng, connectivity):
        # ids follow x-fastest raster order in both, so labels match exactly
        for _ in range(20):
            shape = tuple(rng.integers(1, 9, size=3))
            m = rng.random(shape) < 0.35
            ref, n = flood_fill(m, connectivity)
            lab = label_components(m, connectivity)
            assert lab.n_components == n
            np.testing.assert_array_equal(lab.labels, ref)

    def test_table(self):
        m = blob((10, 10, 10), (1, 2, 3), (3, 5, 4))
        m[8, 8, 8] = 1
        lab = label_components(m, size_threshold=5)
        assert [r.voxel_count for r in lab.table] == [6, 1]
        assert lab.table[0].bbox == ((1, 2, 3), (2, 4, 3))
        assert [r.category for r in lab.table] == [LARGE, SMALL]
        assert lab.counts()[1:].sum() == m.sum()

    def test_table_export(self, tmp_path):
        m = blob((4, 4, 4), (0, 0, 0), (2, 2, 2))
        label_components(m).write_table(tmp_path / "t.jsonl")
        line = (tmp_path / "t.jsonl").read_text().strip()
        assert line == '{"id": 1, "count": 8, "bbox": [[0, 0, 0], [1, 1, 1]], "category": "Small"}'


class TestSplit:
    def test_large_component(self):
        p = blob((20, 20, 10), (0, 0, 0), (12, 10, 10)) * 0.9  # 1200 voxels
        small, large = split_pred(p)
        assert not small.any()
        np.testing.assert_array_equal(large, p)

    def test_threshold_is_strict(self):
        p = blob((20, 20, 10), (0, 0, 0), (10, 10, 10))  # exactly 1000
        small, large = split_pred(p)
        assert small.sum() == 1000 and not large.any()
        p[15, 0, 0] = 1
        p[10, 0, 0] = 1  # now touching: 1001 voxels
        small, large = split_pred(p)
        assert large.sum() == 1001 and small.sum() == 1

    def test_empty(self):
        small, large = split_pred(np.zeros((4, 4, 4)))
        assert not small.any() and not large.any()

    def test_partition(self, rng):
        for _ in range(20):
            p = rng.random((12, 12, 12)) * (rng.random((12, 12, 12)) < 0.6)
            small, large = split_pred(p, size_threshold=20)
            fg = p >= 0.5
            assert not ((small > 0) & (large > 0)).any()
            np.testing.assert_array_equal((small > 0) | (large > 0), fg)
            np.testing.assert_array_equal(np.where(fg, p, 0), small + large)

    def test_train_inherits_gt_category(self):
        gt = blob((30, 30, 30), (0, 0, 0), (20, 25, 10))  # 5000 voxels
        p = blob((30, 30, 30), (5, 5, 5), (10, 10, 7)) * 0.8  # 50 voxels inside
        small, large = split_train(p, gt)
        assert not small.any()
        np.testing.assert_array_equal(large, p)

    def test_train_zero_overlap_uses_own_size(self):
        gt = blob((30, 30, 30), (0, 0, 0), (20, 25, 10))
        p = blob((30, 30, 30), (5, 5, 20), (10, 10, 22)) * 0.8
        small, large = split_train(p, gt)
        np.testing.assert_array_equal(small, p)
        assert not large.any()

    def test_train_identical(self):
        gt = blob((30, 30, 30), (0, 0, 0), (20, 10, 10))  # 2000 voxels
        small, large = split_train(gt, gt)
        np.testing.assert_array_equal(large, gt)
        assert not small.any()

    def test_train_tie_goes_to_smaller_gt_id(self):
        gt = np.zeros((20, 40, 3))
        gt[0:20, 0:10, :] = 1   # id 1: 600 voxels, small
        gt[0:20, 12:40, :] = 1  # id 2: 1680 voxels, large
        p = np.zeros_like(gt)
        p[0, 8:14, 0] = 0.9     # two voxels in each lesion, bridging the gap
        small, large = split_train(p, gt)
        assert small.sum() > 0 and not large.any()

    def test_split_mask(self):
        gt = blob((30, 30, 30), (0, 0, 0), (20, 10, 10))
        gt[25, 25, 25] = 1
        small, large = split_mask(gt)
        assert small.sum() == 1 and large.sum() == 2000
