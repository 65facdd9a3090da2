"""Pipeline orchestration: configuration, the three segmentation steps,
report/manifest output, and the eval/phantom entry points."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, InputError, OutputError
from .filters import InverseHammingSpec
from .grow import GrowConfig, intensity_limits, region_grow
from .metrics import (
    MetricsReport,
    central_slices,
    dice,
    dice_restricted,
    masked_mean_susceptibility,
    rmse_psnr,
    vessel_proportion,
)
from .nifti import load_mask, load_volume, save_mask, save_volume
from .overlays import write_overlays
from .phantom import default_scene_spec, generate_scene
from .refine import RefineConfig, component_table, remove_low_anisotropy
from .seeds import SeedConfig, combine_seeds, large_vessel_seeds, small_vessel_seeds
from .vesselness import MfatConfig, mfat
from .volume import BinaryMask3, Volume3, check_same_geometry

CONFIG_DEFAULTS = {
    # inputs
    "r2star": None,
    "chi_para": None,
    "chi_dia": None,
    "brain_mask": None,
    # seed generation
    "k_large": 2.0,
    "k_small": 1.0,
    "slab_mm": 16.0,
    "mip_axis": 2,
    "hamming_h": [80, 80, 80],
    "seed_stats_domain": "brain",
    "inpaint_max_iters": 400,
    "inpaint_tol": 1e-4,
    # vesselness
    "sigmas": [0.25, 0.5, 0.75, 1.0],
    "tau_rho": 0.02,
    "tau_nu": 0.35,
    "delta": 0.3,
    # region growing
    "gamma1": 0.5,
    "gamma2": 0.5,
    "grow_connectivity": 26,
    "restrict_to_brain": True,
    # refinement
    "cc_connectivity": 26,
    "aniso_thresh_para": 1.2e-3,
    "aniso_thresh_dia": 1.2e-3,
    # execution
    "threads": 1,
    "dump_intermediates": False,
    "emit_overlays": False,
    "write_union": True,
}

_INPUT_KEYS = ("r2star", "chi_para", "chi_dia", "brain_mask")


@dataclass
class PipelineConfig:
    """Validated flat configuration plus derived sub-configs."""

    values: dict
    out_dir: Path

    @classmethod
    def from_file(cls, path, out_dir, **overrides) -> "PipelineConfig":
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping of keys to values")
        return cls.from_dict(raw, out_dir, config_dir=Path(path).parent, **overrides)

    @classmethod
    def from_dict(cls, raw: dict, out_dir, config_dir=None, **overrides) -> "PipelineConfig":
        unknown = set(raw) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values = dict(CONFIG_DEFAULTS)
        values.update(raw)
        for key, val in overrides.items():
            if val is not None:
                values[key] = val
        missing = [k for k in _INPUT_KEYS if not values[k]]
        if missing:
            raise ConfigError(f"config missing required input paths: {missing}")
        if config_dir is not None:
            for k in _INPUT_KEYS:
                p = Path(values[k])
                if not p.is_absolute():
                    values[k] = str(config_dir / p)
        cfg = cls(values=values, out_dir=Path(out_dir))
        cfg._check()
        return cfg

    def _check(self):
        try:
            self.seed_config()
            self.grow_config()
            self.refine_config("para")
            self.refine_config("dia")
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if int(self.values["threads"]) < 1:
            raise ConfigError("threads must be >= 1")
        if self.values["mip_axis"] not in (0, 1, 2):
            raise ConfigError("mip_axis must be 0, 1 or 2")

    def mfat_config(self) -> MfatConfig:
        v = self.values
        return MfatConfig(
            sigmas=tuple(v["sigmas"]),
            tau_rho=float(v["tau_rho"]),
            tau_nu=float(v["tau_nu"]),
            delta=float(v["delta"]),
        )

    def seed_config(self) -> SeedConfig:
        v = self.values
        h = v["hamming_h"]
        if not (isinstance(h, (list, tuple)) and len(h) == 3):
            raise ValueError(f"hamming_h must be three sizes, got {h}")
        return SeedConfig(
            k_large=float(v["k_large"]),
            k_small=float(v["k_small"]),
            slab_mm=float(v["slab_mm"]),
            mip_axis=int(v["mip_axis"]),
            hamming=InverseHammingSpec(tuple(int(x) for x in h)),
            mfat=self.mfat_config(),
            stats_domain=str(v["seed_stats_domain"]),
            inpaint_max_iters=int(v["inpaint_max_iters"]),
            inpaint_tol=float(v["inpaint_tol"]),
        )

    def grow_config(self) -> GrowConfig:
        v = self.values
        return GrowConfig(
            gamma1=float(v["gamma1"]),
            gamma2=float(v["gamma2"]),
            connectivity=int(v["grow_connectivity"]),
            restrict_to_brain=bool(v["restrict_to_brain"]),
        )

    def refine_config(self, which: str) -> RefineConfig:
        v = self.values
        return RefineConfig(
            aniso_thresh=float(v[f"aniso_thresh_{which}"]),
            connectivity=int(v["cc_connectivity"]),
        )

    # keys that steer execution but cannot affect mask/report content
    EXECUTION_KEYS = frozenset({"threads", "dump_intermediates", "emit_overlays"})

    def canonical(self) -> str:
        result_keys = {k: v for k, v in self.values.items() if k not in self.EXECUTION_KEYS}
        return json.dumps(result_keys, sort_keys=True, default=str)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".part")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e


def _load_inputs(cfg: PipelineConfig):
    v = cfg.values
    for k in _INPUT_KEYS:
        if not Path(v[k]).exists():
            raise InputError(f"input file not found: {v[k]} (config key {k!r})")
    r2star = load_volume(v["r2star"])
    chi_para = load_volume(v["chi_para"])
    chi_dia = load_volume(v["chi_dia"])
    brain = load_mask(v["brain_mask"])
    check_same_geometry(r2star, chi_para, chi_dia, brain, what="pipeline inputs")
    return r2star, chi_para, chi_dia, brain


def run_pipeline(cfg: PipelineConfig):
    """Seeds -> per-map region growing -> per-map refinement.

    Writes both vessel masks (plus optional union, intermediates, QC
    overlays), a JSON run report, and a manifest of config echo and
    output hashes. Returns (mask_para, mask_dia, report).
    """
    r2star, chi_para, chi_dia, brain = _load_inputs(cfg)
    out_dir = cfg.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {out_dir}: {e}") from e

    v = cfg.values
    seed_cfg = cfg.seed_config()
    grow_cfg = cfg.grow_config()
    workers = int(v["threads"])
    inter = {} if v["dump_intermediates"] else None

    large = large_vessel_seeds(r2star, brain, seed_cfg, workers=workers, intermediates=inter)
    small = small_vessel_seeds(chi_para, chi_dia, large, brain, seed_cfg, intermediates=inter)
    seeds = combine_seeds(large, small)

    metrics = {
        "n_seed_large": large.count(),
        "n_seed_small": small.count(),
        "n_seed_total": seeds.count(),
    }

    masks = {}
    tables = {}
    for name, chi in (("para", chi_para), ("dia", chi_dia)):
        ves = mfat(chi, seed_cfg.mfat)
        limits = intensity_limits(chi, seeds, grow_cfg)
        initial = region_grow(chi, seeds, ves, brain, grow_cfg)
        final = remove_low_anisotropy(initial, ves.ani, cfg.refine_config(name))
        masks[name] = final
        tables[name] = component_table(initial, ves.ani, int(v["cc_connectivity"]))
        metrics.update(
            {
                f"upper_limit_{name}": limits.upper,
                f"lower_limit_{name}": limits.lower,
                f"n_initial_{name}": initial.count(),
                f"n_final_{name}": final.count(),
                f"n_components_initial_{name}": len(tables[name]),
            }
        )
        if inter is not None:
            inter[f"v_mfat_{name}"] = ves.v_mfat
            inter[f"ani_{name}"] = ves.ani
            inter[f"initial_mask_{name}"] = initial
        del ves, initial

    outputs = {}

    def _emit_mask(mask, relpath):
        path = out_dir / relpath
        save_mask(mask, path)
        outputs[relpath] = path

    _emit_mask(masks["para"], "vessel_mask_para.nii.gz")
    _emit_mask(masks["dia"], "vessel_mask_dia.nii.gz")
    if v["write_union"]:
        union = masks["para"].like(masks["para"].data | masks["dia"].data)
        _emit_mask(union, "vessel_mask_union.nii.gz")

    if inter is not None:
        inter["seeds_large"] = large
        inter["seeds_small"] = small
        inter["seeds_combined"] = seeds
        for key, obj in inter.items():
            rel = f"intermediates/{key}.nii.gz"
            path = out_dir / rel
            if isinstance(obj, BinaryMask3):
                save_mask(obj, path)
            elif isinstance(obj, list):
                # slab stack: one slice per slab along the projection axis
                stacked = np.stack(obj, axis=-1).astype(np.float32)
                save_volume(Volume3(stacked, chi_para.spacing), path)
            else:
                save_volume(obj, path)
            outputs[rel] = path
        for name in ("para", "dia"):
            rel = f"intermediates/components_{name}.txt"
            lines = ["size\tmean_anisotropy"]
            lines += [f"{size}\t{mean:.8e}" for size, mean in tables[name]]
            _atomic_text(out_dir / rel, "\n".join(lines) + "\n")
            outputs[rel] = out_dir / rel

    if v["emit_overlays"]:
        for name, chi in (("para", chi_para), ("dia", chi_dia)):
            for rel in write_overlays(chi, masks[name], out_dir / "overlays", name):
                outputs[rel] = out_dir / rel

    report = MetricsReport(
        metrics=metrics,
        provenance={
            "config_hash": cfg.config_hash(),
            **{k: str(v[k]) for k in _INPUT_KEYS},
        },
    )
    _atomic_text(out_dir / "report.json", report.to_json())
    outputs["report.json"] = out_dir / "report.json"

    manifest = ["# run manifest", "[config]", cfg.canonical(), "", "[outputs]"]
    manifest += [f"{_sha256(outputs[rel])}  {rel}" for rel in sorted(outputs)]
    _atomic_text(out_dir / "run_manifest.txt", "\n".join(manifest) + "\n")

    return masks["para"], masks["dia"], report


def run_eval(
    pred_mask_path,
    gt_mask_path,
    central_slice_count: int | None = None,
    chi_path=None,
    roi_path=None,
    pred_chi_path=None,
    ref_chi_path=None,
) -> MetricsReport:
    """Overlap metrics for a predicted mask, optionally restricted-slice
    DSC, ROI statistics, and per-condition reconstruction errors."""
    for p in (pred_mask_path, gt_mask_path, chi_path, roi_path, pred_chi_path, ref_chi_path):
        if p is not None and not Path(p).exists():
            raise InputError(f"input file not found: {p}")
    pred = load_mask(pred_mask_path)
    gt = load_mask(gt_mask_path)
    check_same_geometry(pred, gt, what="eval masks")
    metrics: dict = {"dsc": dice(pred, gt)}
    if central_slice_count is not None:
        metrics["dsc_central_slices"] = dice_restricted(
            pred, gt, central_slices(pred.dims, central_slice_count)
        )
        metrics["central_slice_count"] = central_slice_count
    roi = None
    if roi_path is not None:
        roi = load_mask(roi_path)
        check_same_geometry(pred, roi, what="eval roi")
        metrics["vessel_proportion_pct"] = vessel_proportion(roi, pred)
    if chi_path is not None:
        chi = load_volume(chi_path)
        check_same_geometry(pred, chi, what="eval chi")
        base_roi = roi if roi is not None else BinaryMask3(
            np.ones(chi.dims, dtype=np.uint8), chi.spacing
        )
        metrics["mean_susceptibility"] = masked_mean_susceptibility(chi, base_roi, pred, False)
        metrics["mean_susceptibility_no_vessels"] = masked_mean_susceptibility(
            chi, base_roi, pred, True
        )
    if pred_chi_path is not None or ref_chi_path is not None:
        if pred_chi_path is None or ref_chi_path is None:
            raise InputError("reconstruction metrics need both --pred-chi and --ref-chi")
        pv = load_volume(pred_chi_path)
        rv = load_volume(ref_chi_path)
        check_same_geometry(pred, pv, rv, what="eval volumes")
        base = roi.bool() if roi is not None else np.ones(pred.dims, dtype=bool)
        vessel = pred.bool()
        conditions = {
            "without_mask": base,
            "with_mask": base & ~vessel,
            "within_mask": base & vessel,
        }
        for label, region in conditions.items():
            if not region.any():
                metrics[label] = {"condition": label, "rmse": None, "psnr": None}
                continue
            rm = BinaryMask3(region.astype(np.uint8), pred.spacing)
            rmse, psnr = rmse_psnr(pv, rv, rm)
            metrics[label] = {"condition": label, "rmse": rmse, "psnr": psnr}
    provenance = {"pred_mask": str(pred_mask_path), "gt_mask": str(gt_mask_path)}
    return MetricsReport(metrics=metrics, provenance=provenance)


def run_phantom(spec_path, rng_seed: int, out_dir) -> list:
    """Generate a scene and write its six volumes plus the spec echo."""
    if spec_path is None:
        spec = default_scene_spec()
    else:
        if not Path(spec_path).exists():
            raise InputError(f"scene spec not found: {spec_path}")
        try:
            with open(spec_path) as fh:
                spec = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"scene spec {spec_path} is not valid YAML: {e}") from e
        if not isinstance(spec, dict):
            raise ConfigError(f"scene spec {spec_path} must be a mapping")
    scene = generate_scene(spec, rng_seed)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {out}: {e}") from e
    written = []
    for name, vol in (
        ("r2star", scene.r2star_like),
        ("chi_para", scene.chi_para_like),
        ("chi_dia", scene.chi_dia_like),
    ):
        save_volume(vol, out / f"{name}.nii.gz")
        written.append(out / f"{name}.nii.gz")
    for name, mask in (
        ("brain_mask", scene.brain),
        ("gt_vessels", scene.gt_vessels),
        ("gt_blobs", scene.gt_blobs),
    ):
        save_mask(mask, out / f"{name}.nii.gz")
        written.append(out / f"{name}.nii.gz")
    echo = {"rng_seed": rng_seed, **scene.scene_spec}
    _atomic_text(out / "scene_spec.yaml", yaml.safe_dump(echo, sort_keys=True))
    written.append(out / "scene_spec.yaml")
    return written
