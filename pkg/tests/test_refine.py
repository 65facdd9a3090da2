import numpy as np
import pytest

from chivessel import (
    BinaryMask3,
    RefineConfig,
    Volume3,
    cc_mean_anisotropy,
    component_table,
    remove_low_anisotropy,
)


def vol(arr):
    return Volume3(np.asarray(arr, dtype=np.float64))


def mask(arr):
    return BinaryMask3(np.asarray(arr).astype(np.uint8))


def two_component_scene():
    m = np.zeros((10, 10, 10))
    m[1:3, 1:3, 1:3] = 1  # 8 voxels
    m[6:9, 6:9, 6:9] = 1  # 27 voxels
    ani = np.zeros((10, 10, 10))
    ani[1:3, 1:3, 1:3] = 0.5
    ani[6:9, 6:9, 6:9] = 0.001
    return mask(m), vol(ani)


class TestCcMeanAnisotropy:
    def test_single_constant_component(self):
        m = np.zeros((5, 5, 5))
        m[1:4, 2, 2] = 1
        ani = np.full((5, 5, 5), 0.25)
        means = cc_mean_anisotropy(mask(m), vol(ani))
        assert means.tolist() == [0.25]

    def test_two_value_component(self):
        m = np.zeros((3, 3, 3))
        m[0, 0, 0] = m[1, 0, 0] = 1
        ani = np.zeros((3, 3, 3))
        ani[1, 0, 0] = 2.0
        means = cc_mean_anisotropy(mask(m), vol(ani))
        assert means.tolist() == [1.0]

    def test_against_naive_accumulation(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = rng.random((8, 8, 8)) < 0.2
            ani = rng.random((8, 8, 8))
            means = cc_mean_anisotropy(mask(m), vol(ani))
            from chivessel import connected_components

            labels, sizes, _ = connected_components(mask(m))
            for lab in range(1, len(sizes) + 1):
                sel = labels == lab
                want = ani[sel].sum() / sel.sum()
                assert means[lab - 1] == pytest.approx(want, rel=1e-12)

    def test_empty_mask(self):
        means = cc_mean_anisotropy(mask(np.zeros((3, 3, 3))), vol(np.ones((3, 3, 3))))
        assert means.size == 0


class TestRemoveLowAnisotropy:
    def test_low_component_removed(self):
        m, ani = two_component_scene()
        out = remove_low_anisotropy(m, ani, RefineConfig(aniso_thresh=1.2e-3))
        assert out.count() == 8
        assert np.all(out.data[1:3, 1:3, 1:3] == 1)

    def test_just_below_threshold_removed(self):
        m = np.zeros((4, 4, 4))
        m[1, 1, 1] = 1
        thr = 1.2e-3
        ani = np.full((4, 4, 4), thr - 1e-9)
        out = remove_low_anisotropy(mask(m), vol(ani), RefineConfig(aniso_thresh=thr))
        assert out.count() == 0

    def test_exactly_at_threshold_kept(self):
        m = np.zeros((4, 4, 4))
        m[1, 1, 1] = 1
        thr = 1.2e-3
        ani = np.full((4, 4, 4), thr)
        out = remove_low_anisotropy(mask(m), vol(ani), RefineConfig(aniso_thresh=thr))
        assert out.count() == 1

    def test_zero_threshold_is_identity(self):
        rng = np.random.default_rng(1)
        m = mask(rng.random((6, 6, 6)) < 0.3)
        ani = vol(rng.random((6, 6, 6)))
        out = remove_low_anisotropy(m, ani, RefineConfig(aniso_thresh=0.0))
        assert np.array_equal(out.data, m.data)

    def test_output_is_union_of_whole_components(self):
        rng = np.random.default_rng(2)
        m = mask(rng.random((8, 8, 8)) < 0.25)
        ani = vol(rng.random((8, 8, 8)) * 0.01)
        out = remove_low_anisotropy(m, ani, RefineConfig(aniso_thresh=5e-3))
        from chivessel import connected_components

        labels, sizes, _ = connected_components(m)
        ob = out.bool()
        for lab in range(1, len(sizes) + 1):
            sel = labels == lab
            kept = ob[sel]
            assert kept.all() or not kept.any()  # no component is split
        assert np.all(out.data <= m.data)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(3)
        m = mask(rng.random((8, 8, 8)) < 0.25)
        ani = vol(rng.random((8, 8, 8)) * 0.01)
        prev = None
        for thr in (0.0, 2e-3, 5e-3, 8e-3):
            out = remove_low_anisotropy(m, ani, RefineConfig(aniso_thresh=thr))
            if prev is not None:
                assert np.all(out.data <= prev)
            prev = out.data

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        m = mask(rng.random((8, 8, 8)) < 0.25)
        ani = vol(rng.random((8, 8, 8)) * 0.01)
        cfg = RefineConfig(aniso_thresh=4e-3)
        once = remove_low_anisotropy(m, ani, cfg)
        twice = remove_low_anisotropy(once, ani, cfg)
        assert np.array_equal(once.data, twice.data)

    def test_empty_result_allowed(self):
        m, ani = two_component_scene()
        out = remove_low_anisotropy(m, ani, RefineConfig(aniso_thresh=10.0))
        assert out.count() == 0


def test_component_table_sorted_by_size():
    m, ani = two_component_scene()
    rows = component_table(m, ani)
    assert [r[0] for r in rows] == [27, 8]
    assert rows[1][1] == pytest.approx(0.5)


def test_refine_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(aniso_thresh=-1.0)
    with pytest.raises(ValueError):
        RefineConfig(connectivity=5)
