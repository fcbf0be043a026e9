from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesion_ensemble.components import label_components
from lesion_ensemble.errors import InvalidSplit, PlacementFailed
from lesion_ensemble.patching import DEFAULT_SPECS
from lesion_ensemble.phantom import (
    DEFAULT_ORACLES,
    OracleProvider,
    OracleSpec,
    PhantomSpec,
    derive_seed,
    generate_phantom,
    generate_suite,
    make_subject,
    mc_split,
    provide_opinion,
    read_suite,
    simulate_opinion,
    write_suite,
)
from lesion_ensemble.volume import Volume3, threshold

SMALL_SPEC = PhantomSpec(dims=(32, 40, 32), n_small=(3, 5), n_large=(1, 1))


class TestGeneratePhantom:
    def test_deterministic(self):
        a = generate_phantom(SMALL_SPEC)
        b = generate_phantom(SMALL_SPEC)
        assert a[0] == b[0] and a[1] == b[1]

    def test_seed_changes_output(self):
        a = generate_phantom(SMALL_SPEC)
        b = generate_phantom(replace(SMALL_SPEC, seed=1))
        assert not a[1] == b[1]

    def test_no_lesions(self):
        image, gt = generate_phantom(replace(SMALL_SPEC, n_small=(0, 0), n_large=(0, 0)))
        assert not gt.data.any()
        assert image.data.max() < SMALL_SPEC.noise
        assert image.data.min() >= 0.0

    def test_one_large_lesion(self):
        _, gt = generate_phantom(replace(SMALL_SPEC, n_small=(0, 0), n_large=(1, 1)))
        lab = label_components(gt)
        assert lab.n_components == 1
        assert lab.table[0].voxel_count > 1000

    @pytest.mark.parametrize("seed", range(5))
    def test_component_sizes_respect_ranges(self, seed):
        spec = replace(SMALL_SPEC, seed=seed)
        _, gt = generate_phantom(spec)
        lab = label_components(gt)
        counts = sorted(r.voxel_count for r in lab.table)
        n_large = sum(c > 1000 for c in counts)
        assert n_large == 1
        assert spec.n_small[0] <= len(counts) - n_large <= spec.n_small[1]

    def test_image_is_gt_plus_noise(self):
        image, gt = generate_phantom(SMALL_SPEC)
        noise = image.data - gt.data
        assert noise.min() >= 0.0 and noise.max() < SMALL_SPEC.noise

    def test_placement_failure(self):
        spec = PhantomSpec(dims=(21, 21, 21), n_small=(0, 0), n_large=(3, 3),
                           large_radius=(8.0, 8.0), max_tries=20)
        with pytest.raises(PlacementFailed):
            generate_phantom(spec)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            PhantomSpec(n_small=(3, 1))
        with pytest.raises(ValueError):
            PhantomSpec(dims=(10, 10, 10))


class TestSimulateOpinion:
    @pytest.fixture
    def gt(self):
        return generate_phantom(SMALL_SPEC)[1]

    def test_identity(self, gt):
        op = simulate_opinion(gt, OracleSpec("mid", seed=3))
        assert op == gt

    def test_coarse_drops_every_small_lesion(self):
        _, gt = generate_phantom(replace(SMALL_SPEC, n_large=(0, 0)))
        assert gt.data.any()
        op = simulate_opinion(gt, OracleSpec("coarse", small_dropout=1.0, seed=5))
        assert not op.data.any()

    def test_dropout_keeps_large(self, gt):
        op = simulate_opinion(gt, OracleSpec("coarse", small_dropout=1.0, seed=5))
        lab = label_components(op)
        assert [r.voxel_count > 1000 for r in lab.table] == [True]

    # recorded per seed; about 16 blobs are seeded in a 32x40x32 volume at rate 4e-4
    @pytest.mark.parametrize("seed,expected", [(0, 15), (1, 12), (2, 17), (3, 16), (4, 14)])
    def test_fine_false_positives_on_empty_gt(self, seed, expected):
        empty = Volume3(np.zeros((32, 40, 32)))
        op = simulate_opinion(empty, replace(DEFAULT_ORACLES["fine"], seed=seed))
        assert label_components(threshold(op)).n_components == expected

    @pytest.mark.parametrize("tag", ["fine", "mid", "coarse"])
    def test_probability_range_and_determinism(self, gt, tag):
        o = replace(DEFAULT_ORACLES[tag], seed=11)
        a = simulate_opinion(gt, o)
        assert a == simulate_opinion(gt, o)
        assert a.data.min() >= 0.0 and a.data.max() <= 1.0

    def test_bad_oracle(self):
        with pytest.raises(ValueError):
            OracleSpec(fp_rate=1.5)
        with pytest.raises(ValueError):
            OracleSpec(blur_radius=-1)


def test_provider_roundtrip():
    image, gt = generate_phantom(SMALL_SPEC)
    op = simulate_opinion(gt, replace(DEFAULT_ORACLES["mid"], seed=2))
    for spec in DEFAULT_SPECS:
        assert provide_opinion(OracleProvider(op), image, spec) == op


def test_derive_seed():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert len({derive_seed(7, i, k) for i in range(20) for k in range(4)}) == 80
    assert 0 <= derive_seed(2 ** 40, 3) < 2 ** 63


def test_subject_independent_of_suite_size():
    spec = replace(SMALL_SPEC, n_small=(1, 2))
    suite = generate_suite(3, 5, spec, via_patches=False)
    alone = make_subject(2, 5, spec, via_patches=False)
    assert suite[2].gt == alone.gt
    assert suite[2].opinions["fine"] == alone.opinions["fine"]


def test_suite_io(tmp_path):
    spec = replace(SMALL_SPEC, n_small=(1, 2))
    suite = generate_suite(2, 9, spec, via_patches=False)
    write_suite(tmp_path, suite)
    back = read_suite(tmp_path)
    assert [s.id for s in back] == [0, 1]
    for a, b in zip(suite, back):
        assert a.image == b.image and a.gt == b.gt
        for tag in a.opinions:
            assert a.opinions[tag] == b.opinions[tag]
    manifest = (tmp_path / "manifest.jsonl").read_text().splitlines()
    assert len(manifest) == 2 and '"seed"' in manifest[0]


class TestMcSplit:
    def test_sixty_subjects(self):
        splits = mc_split(60, 0.9, 5, seed=1)
        assert len(splits) == 5
        for train, test in splits:
            assert (len(train), len(test)) == (54, 6)

    def test_ten(self):
        [(train, test)] = mc_split(10, 0.9, 1, seed=1)
        assert (len(train), len(test)) == (9, 1)

    def test_deterministic(self):
        assert mc_split(20, 0.7, 3, 4) == mc_split(20, 0.7, 3, 4)

    def test_repeats_differ(self):
        splits = mc_split(60, 0.9, 5, seed=1)
        assert len({tuple(t) for _, t in splits}) > 1

    @given(st.integers(2, 80), st.floats(0.05, 0.95), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_partition(self, n, frac, repeats, seed):
        n_train = int(np.floor(n * frac + 0.5))
        if not 1 <= n_train <= n - 1:
            with pytest.raises(InvalidSplit):
                mc_split(n, frac, repeats, seed)
            return
        for train, test in mc_split(n, frac, repeats, seed):
            assert len(train) == n_train
            assert sorted(train + test) == list(range(n))

    @pytest.mark.parametrize("args", [(1, 0.5, 1), (10, 0.0, 1), (10, 1.0, 1), (10, 0.9, 0), (2, 0.1, 1)])
    def test_invalid(self, args):
        with pytest.raises(InvalidSplit):
            mc_split(*args, seed=0)
