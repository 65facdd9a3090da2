"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The phantom end-to-end
bars are frozen in tests/data/acceptance_calibration.json; the two
performance tests exercise the CLI in a subprocess at the full clinical
matrix sizes and take several minutes each.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from chivessel import (
    BinaryMask3,
    GrowConfig,
    InverseHammingSpec,
    MfatConfig,
    RefineConfig,
    SeedConfig,
    Volume3,
    combine_seeds,
    dice,
    dice_restricted,
    eig_sym3,
    fat_vesselness,
    generate_scene,
    highpass_inverse_hamming,
    hessian_at_scale,
    large_vessel_seeds,
    masked_mean_susceptibility,
    mfat,
    region_grow,
    remove_low_anisotropy,
    rmse_psnr,
    small_vessel_seeds,
    vessel_proportion,
)
from chivessel.nifti import save_mask, save_volume
from chivessel.phantom import default_scene_spec
from chivessel.vesselness import _eig_fields, _scale_response

from test_grow import lfp_oracle, random_instance
from test_filters import direct_dft_highpass

DATA_DIR = Path(__file__).parent / "data"
CALIBRATION = json.loads((DATA_DIR / "acceptance_calibration.json").read_text())

ACCEPT_SEED_CFG = SeedConfig(stats_domain="support")
ACCEPT_GROW_CFG = GrowConfig()
ACCEPT_REFINE = RefineConfig(aniso_thresh=5.0e-3)


def report(criterion: int, detail: str):
    print(f"ACCEPTANCE {criterion}: PASS — {detail}")


def test_criterion_1_region_grow_fixed_point():
    """region_grow equals a brute-force least-fixed-point oracle on >= 200
    random 12^3 instances, exact mask equality, under 60 s."""
    rng = np.random.default_rng(20240001)
    t0 = time.time()
    checked = 0
    while checked < 200:
        chi, seeds, ves, brain = random_instance(rng, shape=(12, 12, 12))
        if seeds.count() == 0:
            continue
        cfg = GrowConfig(connectivity=26 if checked % 2 == 0 else 6)
        got = region_grow(chi, seeds, ves, brain, cfg)
        want = lfp_oracle(chi, seeds, ves, brain, cfg)
        assert np.array_equal(got.bool(), want), f"instance {checked} diverged"
        checked += 1
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report(1, f"{checked} random instances exactly match the fixed-point oracle in {elapsed:.1f}s")


def test_criterion_2_fft_against_direct_dft():
    """highpass matches a direct DFT oracle on 16^3 to 1e-5 relative;
    constant input is suppressed below 1e-6 of its magnitude."""
    rng = np.random.default_rng(20240002)
    worst = 0.0
    for trial in range(5):
        arr = rng.standard_normal((16, 16, 16))
        spec = InverseHammingSpec(tuple(rng.integers(3, 20, size=3)))
        got = highpass_inverse_hamming(Volume3(arr), spec).data
        want = direct_dft_highpass(arr, spec)
        err = np.max(np.abs(got - want)) / np.max(np.abs(want))
        worst = max(worst, err)
        assert err < 1e-5
    const = highpass_inverse_hamming(Volume3(np.full((16, 16, 16), 7.0))).data
    const_leak = np.max(np.abs(const)) / 7.0
    assert const_leak < 1e-6
    report(2, f"max rel err vs direct DFT {worst:.2e}; constant leak {const_leak:.2e}")


def test_criterion_3_eigensystem_accuracy():
    """10^4 random symmetric 3x3: reconstruction < 1e-6 ||H||, eigenvalues
    match characteristic-polynomial roots within 1e-8."""
    rng = np.random.default_rng(20240003)
    worst_recon = 0.0
    worst_root = 0.0
    for _ in range(10_000):
        a = rng.standard_normal((3, 3))
        h = (a + a.T) / 2
        es = eig_sym3(h)
        lams = np.array([es.lambda1, es.lambda2, es.lambda3])
        # reconstruct with a full eigenbasis recovered from H and v1
        w, q = np.linalg.eigh(h)
        order = np.argsort(np.abs(w), kind="stable")
        recon = (q[:, order] * lams) @ q[:, order].T
        norm = np.linalg.norm(h)
        worst_recon = max(worst_recon, np.linalg.norm(recon - h) / norm)
        tr = np.trace(h)
        m2 = (
            h[0, 0] * h[1, 1] - h[0, 1] ** 2
            + h[0, 0] * h[2, 2] - h[0, 2] ** 2
            + h[1, 1] * h[2, 2] - h[1, 2] ** 2
        )
        roots = np.sort(np.roots([1.0, -tr, m2, -np.linalg.det(h)]).real)
        worst_root = max(worst_root, np.max(np.abs(np.sort(lams) - roots)))
        # v1 is a genuine eigenvector of the smallest-|.| eigenvalue
        assert np.linalg.norm(h @ es.v1 - es.lambda1 * es.v1) < 1e-6 * norm
    assert worst_recon < 1e-6
    assert worst_root < 1e-8
    report(3, f"10^4 matrices: recon err {worst_recon:.2e}, root err {worst_root:.2e}")


def test_criterion_4_hessian_blob_accuracy():
    """Analytic Gaussian blob: numeric second derivatives at the center
    within 2% of the closed form for sigma >= 1."""
    n = 41
    c = (n - 1) // 2
    s = 4.0
    x = np.arange(n) - c
    g = np.exp(-(x**2) / (2 * s * s))
    blob = Volume3(g[:, None, None] * g[None, :, None] * g[None, None, :])
    worst = 0.0
    for sigma in (1.0, 1.5, 2.0):
        s_eff2 = s * s + sigma * sigma
        want = sigma**2 * (-((s * s / s_eff2) ** 1.5) / s_eff2)
        hxx, hyy, hzz, _, _, _ = hessian_at_scale(blob, sigma)
        for h in (hxx, hyy, hzz):
            rel = abs(h[c, c, c] - want) / abs(want)
            worst = max(worst, rel)
            assert h[c, c, c] < 0
            assert rel < 0.02
    report(4, f"center second derivatives within {100*worst:.2f}% of closed form")


def _mfat_invariant_check(vol: Volume3, cfg: MfatConfig):
    rs = []
    for sigma in cfg.sigmas:
        h6 = hessian_at_scale(vol, sigma)
        lam1, lam2, lam3, _ = _eig_fields(*h6)
        # pre-clamp upper overshoot: 1 - v_fat can only exceed 1 if v_fat < 0,
        # which sqrt() forbids; assert it on the raw score
        min_l3 = float(lam3.min())
        from chivessel.vesselness import regularize_eigen

        lrho = regularize_eigen(lam3, min_l3, cfg.tau_rho)
        lnu = regularize_eigen(lam3, min_l3, cfg.tau_nu)
        vfat = fat_vesselness(lam1, lam2, lam3, lrho, lnu)
        assert float(np.min(vfat)) >= 0.0  # so pre-clamp R <= 1 exactly
        assert float(np.max(1.0 - vfat)) <= 1.0 + 1e-9
        r = _scale_response(lam1, lam2, lam3, cfg)
        assert float(r.min()) >= 0.0
        assert float(r.max()) <= 1.0
        rs.append(r)
    v = rs[0].copy()
    for r in rs[1:]:
        v += np.float32(cfg.delta) * np.tanh(r - np.float32(cfg.delta))
        np.maximum(v, r, out=v)
        assert np.all(v >= r)
        assert np.all(v >= 0.0)
    res = mfat(vol, cfg)
    assert np.array_equal(res.v_mfat.data, v)
    bound = 1.0 + (len(cfg.sigmas) - 1) * cfg.delta * math.tanh(1.0 - cfg.delta)
    assert float(res.v_mfat.data.max()) <= bound + 1e-6
    return float(res.v_mfat.data.max()), bound


def test_criterion_5_mfat_invariants():
    """On 50 random and 5 phantom volumes: v_MFAT >= R >= 0 after every
    scale, R <= 1 with pre-clamp overshoot < 1e-9, and the final bound."""
    cfg = MfatConfig()
    rng = np.random.default_rng(20240005)
    peak = 0.0
    for _ in range(50):
        arr = rng.standard_normal((16, 16, 16)).astype(np.float32)
        vmax, bound = _mfat_invariant_check(Volume3(arr), cfg)
        peak = max(peak, vmax)
    spec = default_scene_spec((64, 64, 64))
    spec["tubes"] = spec["tubes"][:2]  # radii 3 and 2 fit a 64^3 grid
    spec["blobs"] = [{"center": [24.0, 44.0, 44.0], "radius": 6.0, "intensity": 1.25}]
    phantom_vols = []
    for seed in (0, 1):
        scene = generate_scene(spec, rng_seed=seed)
        phantom_vols += [scene.r2star_like, scene.chi_para_like, scene.chi_dia_like]
    for v in phantom_vols[:5]:
        vmax, bound = _mfat_invariant_check(v, cfg)
        peak = max(peak, vmax)
    report(5, f"55 volumes hold all per-scale invariants; max v_MFAT {peak:.3f} <= bound {bound:.3f}")


@pytest.fixture(scope="module")
def acceptance_scene():
    spec = default_scene_spec((128, 128, 128))
    scene = generate_scene(spec, rng_seed=int(CALIBRATION["rng_seed"]))
    large = large_vessel_seeds(scene.r2star_like, scene.brain, ACCEPT_SEED_CFG)
    small = small_vessel_seeds(
        scene.chi_para_like, scene.chi_dia_like, large, scene.brain, ACCEPT_SEED_CFG
    )
    seeds = combine_seeds(large, small)
    ves = mfat(scene.chi_para_like, ACCEPT_SEED_CFG.mfat)
    grown = region_grow(scene.chi_para_like, seeds, ves, scene.brain, ACCEPT_GROW_CFG)
    final = remove_low_anisotropy(grown, ves.ani, ACCEPT_REFINE)
    return scene, grown, final


def test_criterion_6_phantom_end_to_end(acceptance_scene):
    """Stock 128^3 scene: chi_para-path mask reaches DSC >= 0.80 against
    the tube ground truth and <= 2% of blob voxels survive; frozen
    regression bars from the calibration record also hold."""
    scene, grown, final = acceptance_scene
    dsc = dice(final, scene.gt_vessels)
    blob_total = scene.gt_blobs.count()
    blob_surviving = int((final.bool() & scene.gt_blobs.bool()).sum())
    survival_pct = 100.0 * blob_surviving / blob_total
    assert dsc >= 0.80, f"DSC {dsc:.4f} below the 0.80 bar"
    assert survival_pct <= 2.0, f"blob survival {survival_pct:.2f}% above the 2% bar"
    assert dsc >= CALIBRATION["regression_bars"]["dsc_min"]
    assert survival_pct <= CALIBRATION["regression_bars"]["blob_survival_pct_max"]
    report(6, f"DSC {dsc:.4f} (bar 0.80, frozen {CALIBRATION['achieved']['dsc_para']}); "
              f"blob survival {survival_pct:.2f}% (bar 2%)")


def test_criterion_7_step3_ablation(acceptance_scene):
    """Skipping the anisotropy pruning leaves >= 10x more blob voxels in
    the mask than the full pipeline."""
    scene, grown, final = acceptance_scene
    blob_no_step3 = int((grown.bool() & scene.gt_blobs.bool()).sum())
    blob_full = int((final.bool() & scene.gt_blobs.bool()).sum())
    assert blob_no_step3 > 0, "ablation is vacuous: no blob voxels entered the grown mask"
    assert blob_no_step3 >= 10 * blob_full
    report(7, f"blob voxels without step 3: {blob_no_step3}; with: {blob_full} "
              f"(>= 10x reduction)")


def test_criterion_8_metric_oracles():
    """dice / rmse / psnr / proportion match naive oracles to 1e-10
    relative on 100 random instances; dice symmetry and identity hold."""
    rng = np.random.default_rng(20240008)
    for _ in range(100):
        shape = (6, 6, 6)
        a = BinaryMask3((rng.random(shape) < 0.4).astype(np.uint8))
        b = BinaryMask3((rng.random(shape) < 0.4).astype(np.uint8))
        na, nb = int(a.data.sum()), int(b.data.sum())
        inter = int((a.data & b.data).sum())
        want = 1.0 if na + nb == 0 else 2.0 * inter / (na + nb)
        got = dice(a, b)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-15)
        assert dice(a, b) == dice(b, a)
        assert dice(a, a) == 1.0

        pred = Volume3(rng.standard_normal(shape))
        ref = Volume3(rng.standard_normal(shape))
        region_arr = rng.random(shape) < 0.6
        if region_arr.any():
            region = BinaryMask3(region_arr.astype(np.uint8))
            rmse, psnr = rmse_psnr(pred, ref, region)
            diffs = pred.data[region_arr] - ref.data[region_arr]
            want_rmse = math.sqrt(float(np.mean(diffs**2)))
            peak = float(np.max(np.abs(ref.data[region_arr])))
            assert rmse == pytest.approx(want_rmse, rel=1e-10)
            assert psnr == pytest.approx(20 * math.log10(peak / want_rmse), rel=1e-10)

        roi_arr = rng.random(shape) < 0.5
        if roi_arr.any():
            roi = BinaryMask3(roi_arr.astype(np.uint8))
            got_pct = vessel_proportion(roi, a)
            want_pct = 100.0 * int((roi_arr & a.bool()).sum()) / int(roi_arr.sum())
            assert got_pct == pytest.approx(want_pct, rel=1e-10, abs=1e-15)
            eff = roi_arr & ~a.bool()
            if eff.any():
                chi = Volume3(rng.standard_normal(shape))
                got_mean = masked_mean_susceptibility(chi, roi, a, True)
                assert got_mean == pytest.approx(float(chi.data[eff].mean()), rel=1e-10)

        spec = [(int(ax), int(rng.integers(6))) for ax in rng.integers(0, 3, 3)]
        region2 = np.zeros(shape, bool)
        for ax, idx in spec:
            sl = [slice(None)] * 3
            sl[ax] = idx
            region2[tuple(sl)] = True
        ra, rb = a.bool() & region2, b.bool() & region2
        denom = int(ra.sum()) + int(rb.sum())
        want_r = 1.0 if denom == 0 else 2.0 * int((ra & rb).sum()) / denom
        assert dice_restricted(a, b, spec) == pytest.approx(want_r, rel=1e-10, abs=1e-15)
    report(8, "100 random instances match naive metric oracles at 1e-10")


def _run_perf_case(tmp_path, shape, time_limit_s, mem_limit_gb, tag):
    scene = generate_scene(default_scene_spec(shape), rng_seed=3)
    data = tmp_path / tag
    data.mkdir()
    save_volume(scene.r2star_like, data / "r2star.nii")
    save_volume(scene.chi_para_like, data / "chi_para.nii")
    save_volume(scene.chi_dia_like, data / "chi_dia.nii")
    save_mask(scene.brain, data / "brain_mask.nii")
    del scene
    cfg = {
        "r2star": str(data / "r2star.nii"),
        "chi_para": str(data / "chi_para.nii"),
        "chi_dia": str(data / "chi_dia.nii"),
        "brain_mask": str(data / "brain_mask.nii"),
        "seed_stats_domain": "support",
        "aniso_thresh_para": 5.0e-3,
        "aniso_thresh_dia": 5.0e-3,
    }
    (data / "config.yaml").write_text(yaml.safe_dump(cfg))
    probe = data / "probe.json"
    child = (
        "import json, resource, sys\n"
        "from chivessel.cli import main\n"
        "rc = main(['segment', '--config', sys.argv[1], '--out', sys.argv[2]])\n"
        "peak_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss\n"
        "json.dump({'rc': rc, 'peak_kb': peak_kb}, open(sys.argv[3], 'w'))\n"
    )
    t0 = time.time()
    proc = subprocess.run(
        [sys.executable, "-c", child, str(data / "config.yaml"), str(data / "seg"), str(probe)],
        capture_output=True,
        text=True,
        timeout=time_limit_s + 300,
    )
    wall = time.time() - t0
    assert proc.returncode == 0, proc.stderr[-2000:]
    stats = json.loads(probe.read_text())
    assert stats["rc"] == 0
    peak_gb = stats["peak_kb"] / (1024.0 * 1024.0)
    assert wall <= time_limit_s, f"{tag}: {wall:.0f}s exceeds {time_limit_s}s"
    assert peak_gb <= mem_limit_gb, f"{tag}: {peak_gb:.2f} GB exceeds {mem_limit_gb} GB"
    assert (data / "seg" / "vessel_mask_para.nii.gz").exists()
    return wall, peak_gb


def test_criterion_9a_performance_3t(tmp_path):
    """Full pipeline on the 256x224x176 matrix within 10 min and 8 GB."""
    wall, peak = _run_perf_case(tmp_path, (256, 224, 176), 600, 8.0, "3t")
    report(9, f"3T matrix: {wall:.0f}s (<=600s), peak {peak:.2f} GB (<=8 GB)")


def test_criterion_9b_performance_7t(tmp_path):
    """Full pipeline on the 350x284x224 matrix within 40 min and 16 GB."""
    wall, peak = _run_perf_case(tmp_path, (350, 284, 224), 2400, 16.0, "7t")
    report(9, f"7T matrix: {wall:.0f}s (<=2400s), peak {peak:.2f} GB (<=16 GB)")


def test_criterion_10_determinism(tmp_path):
    """Two segment runs with identical inputs/config at different thread
    counts produce byte-identical masks and reports."""
    spec = default_scene_spec((64, 64, 64))
    spec["tubes"] = spec["tubes"][:2]
    spec["blobs"] = [{"center": [40.0, 35.0, 15.0], "radius": 6.0, "intensity": 1.25}]
    scene = generate_scene(spec, rng_seed=3)
    data = tmp_path / "inputs"
    data.mkdir()
    save_volume(scene.r2star_like, data / "r2star.nii.gz")
    save_volume(scene.chi_para_like, data / "chi_para.nii.gz")
    save_volume(scene.chi_dia_like, data / "chi_dia.nii.gz")
    save_mask(scene.brain, data / "brain_mask.nii.gz")
    cfg = {
        "r2star": str(data / "r2star.nii.gz"),
        "chi_para": str(data / "chi_para.nii.gz"),
        "chi_dia": str(data / "chi_dia.nii.gz"),
        "brain_mask": str(data / "brain_mask.nii.gz"),
        "seed_stats_domain": "support",
    }
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    from chivessel.cli import main

    outs = []
    for run, threads in (("r1", "1"), ("r2", "2"), ("r3", "1")):
        out = tmp_path / run
        assert main(["segment", "--config", str(cfg_path), "--out", str(out),
                     "--threads", threads]) == 0
        outs.append(out)
    names = ("vessel_mask_para.nii.gz", "vessel_mask_dia.nii.gz",
             "vessel_mask_union.nii.gz", "report.json", "run_manifest.txt")
    for name in names:
        blobs = [(o / name).read_bytes() for o in outs]
        assert blobs[0] == blobs[1] == blobs[2], f"{name} differs across runs"
    report(10, f"3 runs (threads 1/2/1): {len(names)} outputs byte-identical")
