import numpy as np
import pytest

from chivessel import (
    BinaryMask3,
    SeedConfig,
    combine_seeds,
    generate_scene,
    large_vessel_seeds,
    small_vessel_seeds,
)
from chivessel.errors import GeometryError
from chivessel.volume import Volume3, connected_components


def solo_tube_spec(n=64, radius=3.0, noise=0.0):
    c = (n - 1) / 2.0
    return {
        "shape": [n, n, n],
        "noise_sigma_frac": noise,
        "brain_margin_vox": 4.0,
        "tubes": [{"path": [[c, c, 6.0], [c, c, n - 7.0]], "radius": radius, "intensity": 1.0}],
        "blobs": [],
    }


def solo_sphere_spec(n=64, radius=8.0):
    c = (n - 1) / 2.0
    return {
        "shape": [n, n, n],
        "noise_sigma_frac": 0.0,
        "brain_margin_vox": 4.0,
        "tubes": [],
        "blobs": [{"center": [c, c, c], "radius": radius, "intensity": 1.0}],
    }


class TestLargeVesselSeeds:
    def test_zero_volume_gives_no_seeds(self):
        n = 32
        zero = Volume3(np.zeros((n, n, n), np.float32))
        brain = BinaryMask3(np.ones((n, n, n), np.uint8))
        for domain in ("brain", "volume", "support"):
            seeds = large_vessel_seeds(zero, brain, SeedConfig(stats_domain=domain))
            assert seeds.count() == 0

    def test_solo_tube_single_component_along_axis(self):
        # frozen phantom-oracle bars: one connected seed component hugging
        # the tube over its whole length
        scene = generate_scene(solo_tube_spec(), rng_seed=0)
        seeds = large_vessel_seeds(scene.r2star_like, scene.brain, SeedConfig())
        labels, sizes, _ = connected_components(seeds)
        assert len(sizes) == 1
        ii, jj, kk = np.nonzero(seeds.data)
        c = 31.5
        radial = np.sqrt((ii - c) ** 2 + (jj - c) ** 2)
        assert radial.max() <= 6.0  # seeds stay near the tube
        z_extent = len(np.unique(kk[(kk >= 6) & (kk <= 57)]))
        assert z_extent >= 0.9 * 52

    def test_solo_sphere_interior_fully_suppressed(self):
        # frozen bars: the high-passed sphere seeds nothing inside itself
        # (default stats), and nothing at all under support stats
        scene = generate_scene(solo_sphere_spec(), rng_seed=0)
        sphere_volume = scene.gt_blobs.count()
        seeds = large_vessel_seeds(scene.r2star_like, scene.brain, SeedConfig())
        inside = int((seeds.bool() & scene.gt_blobs.bool()).sum())
        assert inside <= 0.01 * sphere_volume
        seeds_support = large_vessel_seeds(
            scene.r2star_like, scene.brain, SeedConfig(stats_domain="support")
        )
        assert seeds_support.count() <= 0.01 * sphere_volume

    def test_seeds_inside_brain(self):
        scene = generate_scene(solo_tube_spec(noise=0.02), rng_seed=1)
        seeds = large_vessel_seeds(scene.r2star_like, scene.brain, SeedConfig())
        assert not (seeds.bool() & ~scene.brain.bool()).any()

    def test_monotone_in_k_large(self):
        scene = generate_scene(solo_tube_spec(noise=0.02), rng_seed=2)
        lo = large_vessel_seeds(scene.r2star_like, scene.brain, SeedConfig(k_large=2.0))
        hi = large_vessel_seeds(scene.r2star_like, scene.brain, SeedConfig(k_large=3.0))
        assert np.all(hi.data <= lo.data)

    def test_deterministic(self):
        scene = generate_scene(solo_tube_spec(noise=0.02), rng_seed=3)
        a = large_vessel_seeds(scene.r2star_like, scene.brain, SeedConfig())
        b = large_vessel_seeds(scene.r2star_like, scene.brain, SeedConfig())
        assert np.array_equal(a.data, b.data)


class TestSmallVesselSeeds:
    def empty_large(self, n=64):
        return BinaryMask3(np.zeros((n, n, n), np.uint8))

    def test_zero_product_gives_no_seeds(self):
        n = 32
        zero = Volume3(np.zeros((n, n, n), np.float32))
        rng = np.random.default_rng(0)
        other = Volume3(rng.standard_normal((n, n, n)).astype(np.float32))
        brain = BinaryMask3(np.ones((n, n, n), np.uint8))
        seeds = small_vessel_seeds(other, zero, self.empty_large(n), brain, SeedConfig())
        assert seeds.count() == 0

    def test_thin_tube_coverage(self):
        # frozen phantom-oracle bar: back-projected seeds land inside the
        # radius-1 tube along >= 30% of its length
        scene = generate_scene(solo_tube_spec(radius=1.0, noise=0.02), rng_seed=0)
        seeds = small_vessel_seeds(
            scene.chi_para_like, scene.chi_dia_like, self.empty_large(), scene.brain, SeedConfig()
        )
        hit = seeds.bool() & scene.gt_vessels.bool()
        z_hit = len(np.unique(np.nonzero(hit)[2]))
        assert z_hit >= 0.30 * 52

    def test_large_coverage_suppresses_small(self):
        # a tube already fully projected as large seeds contributes ~nothing
        scene = generate_scene(solo_tube_spec(radius=1.0, noise=0.02), rng_seed=0)
        tube_dilated = scene.gt_vessels.bool().copy()
        from scipy import ndimage

        tube_dilated = ndimage.binary_dilation(tube_dilated, iterations=3)
        large_all = BinaryMask3(tube_dilated.astype(np.uint8))
        seeds = small_vessel_seeds(
            scene.chi_para_like, scene.chi_dia_like, large_all, scene.brain, SeedConfig()
        )
        on_tube = int((seeds.bool() & scene.gt_vessels.bool()).sum())
        assert on_tube == 0

    def test_seeds_inside_brain(self):
        scene = generate_scene(solo_tube_spec(radius=1.0, noise=0.02), rng_seed=1)
        seeds = small_vessel_seeds(
            scene.chi_para_like, scene.chi_dia_like, self.empty_large(), scene.brain, SeedConfig()
        )
        assert not (seeds.bool() & ~scene.brain.bool()).any()

    def test_monotone_in_k_small(self):
        scene = generate_scene(solo_tube_spec(radius=1.0, noise=0.02), rng_seed=2)
        lo = small_vessel_seeds(
            scene.chi_para_like, scene.chi_dia_like, self.empty_large(), scene.brain,
            SeedConfig(k_small=1.0),
        )
        hi = small_vessel_seeds(
            scene.chi_para_like, scene.chi_dia_like, self.empty_large(), scene.brain,
            SeedConfig(k_small=1.5),
        )
        assert np.all(hi.data <= lo.data)


class TestCombineSeeds:
    def masks(self):
        a = np.zeros((4, 4, 4), np.uint8)
        b = np.zeros((4, 4, 4), np.uint8)
        a[0, 0, 0] = a[1, 1, 1] = 1
        b[1, 1, 1] = b[2, 2, 2] = 1
        return BinaryMask3(a), BinaryMask3(b)

    def test_both_empty(self):
        z = BinaryMask3(np.zeros((3, 3, 3), np.uint8))
        assert combine_seeds(z, z).count() == 0

    def test_identity_with_empty(self):
        a, _ = self.masks()
        z = BinaryMask3(np.zeros((4, 4, 4), np.uint8))
        assert np.array_equal(combine_seeds(a, z).data, a.data)

    def test_union_stays_binary(self):
        a, b = self.masks()
        u = combine_seeds(a, b)
        assert u.count() == 3
        assert set(np.unique(u.data)) <= {0, 1}

    def test_geometry_mismatch(self):
        a, _ = self.masks()
        c = BinaryMask3(np.zeros((5, 5, 5), np.uint8))
        with pytest.raises(GeometryError):
            combine_seeds(a, c)


def test_seed_config_validation():
    with pytest.raises(ValueError):
        SeedConfig(k_large=1.0, k_small=1.0)
    with pytest.raises(ValueError):
        SeedConfig(slab_mm=0.0)
    with pytest.raises(ValueError):
        SeedConfig(stats_domain="bogus")
