"""Command-line interface.

Subcommands: segment, eval, phantom, vesselness. Exit codes: 0 success,
2 config/parse error, 3 input error, 4 geometry mismatch, 5 output error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ChiVesselError, ConfigError
from .nifti import load_volume, save_volume
from .pipeline import PipelineConfig, run_eval, run_phantom, run_pipeline
from .vesselness import MfatConfig, mfat


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chivessel",
        description="Vessel segmentation for susceptibility component maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="run the full three-step segmentation")
    seg.add_argument("--config", required=True, help="pipeline config YAML")
    seg.add_argument("--out", required=True, help="output directory")
    seg.add_argument("--dump-intermediates", action="store_true", default=None)
    seg.add_argument("--overlays", action="store_true", default=None)
    seg.add_argument("--threads", type=int, default=None)
    seg.add_argument("--aniso-thresh-para", type=float, default=None)
    seg.add_argument("--aniso-thresh-dia", type=float, default=None)

    ev = sub.add_parser("eval", help="score a predicted mask against ground truth")
    ev.add_argument("--pred", required=True, help="predicted vessel mask (NIfTI)")
    ev.add_argument("--gt", required=True, help="ground-truth mask (NIfTI)")
    ev.add_argument("--out", required=True, help="output JSON report path")
    ev.add_argument("--central-slices", type=int, default=None,
                    help="also report DSC over this many central slices per plane")
    ev.add_argument("--chi", default=None, help="susceptibility map for ROI means")
    ev.add_argument("--roi", default=None, help="ROI mask for proportion/mean stats")
    ev.add_argument("--pred-chi", default=None, help="reconstructed map to score")
    ev.add_argument("--ref-chi", default=None, help="reference map to score against")

    ph = sub.add_parser("phantom", help="generate a synthetic scene with ground truth")
    ph.add_argument("--spec", default=None, help="scene spec YAML (default: stock scene)")
    ph.add_argument("--seed", type=int, default=0, help="noise RNG seed")
    ph.add_argument("--out", required=True, help="output directory")

    ve = sub.add_parser("vesselness", help="compute and save the vesselness volume only")
    ve.add_argument("--input", required=True, help="input volume (NIfTI)")
    ve.add_argument("--out", required=True, help="output NIfTI path")
    ve.add_argument("--sigmas", type=float, nargs="+", default=None)
    ve.add_argument("--tau-rho", type=float, default=None)
    ve.add_argument("--tau-nu", type=float, default=None)
    ve.add_argument("--delta", type=float, default=None)
    return parser


def _cmd_segment(args) -> int:
    cfg = PipelineConfig.from_file(
        args.config,
        args.out,
        dump_intermediates=args.dump_intermediates,
        emit_overlays=args.overlays,
        threads=args.threads,
        aniso_thresh_para=args.aniso_thresh_para,
        aniso_thresh_dia=args.aniso_thresh_dia,
    )
    mask_para, mask_dia, report = run_pipeline(cfg)
    print(f"wrote vessel masks to {cfg.out_dir} "
          f"(para: {mask_para.count()} voxels, dia: {mask_dia.count()} voxels)")
    return 0


def _cmd_eval(args) -> int:
    report = run_eval(
        args.pred,
        args.gt,
        central_slice_count=args.central_slices,
        chi_path=args.chi,
        roi_path=args.roi,
        pred_chi_path=args.pred_chi,
        ref_chi_path=args.ref_chi,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".part")
    tmp.write_text(report.to_json())
    tmp.replace(out)
    print(f"wrote {out} (dsc={report.metrics['dsc']:.4f})")
    return 0


def _cmd_phantom(args) -> int:
    written = run_phantom(args.spec, args.seed, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def _cmd_vesselness(args) -> int:
    kwargs = {}
    if args.sigmas is not None:
        kwargs["sigmas"] = tuple(args.sigmas)
    if args.tau_rho is not None:
        kwargs["tau_rho"] = args.tau_rho
    if args.tau_nu is not None:
        kwargs["tau_nu"] = args.tau_nu
    if args.delta is not None:
        kwargs["delta"] = args.delta
    try:
        cfg = MfatConfig(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    vol = load_volume(args.input)
    save_volume(mfat(vol, cfg).v_mfat, args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "segment": _cmd_segment,
    "eval": _cmd_eval,
    "phantom": _cmd_phantom,
    "vesselness": _cmd_vesselness,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ChiVesselError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
