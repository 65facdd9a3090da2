"""Vessel segmentation for susceptibility component maps."""

from .errors import (
    ChiVesselError,
    ConfigError,
    GeometryError,
    InputError,
    OutputError,
)
from .filters import (
    InverseHammingSpec,
    highpass_inverse_hamming,
    inpaint_outside_mask,
    inverse_hamming_weight,
)
from .grow import GrowConfig, GrowLimits, grow_condition, intensity_limits, region_grow
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
from .phantom import (
    PhantomScene,
    default_scene_spec,
    generate_blob,
    generate_scene,
    generate_tube,
)
from .pipeline import PipelineConfig, run_eval, run_phantom, run_pipeline
from .refine import RefineConfig, cc_mean_anisotropy, component_table, remove_low_anisotropy
from .seeds import SeedConfig, combine_seeds, large_vessel_seeds, small_vessel_seeds
from .vesselness import (
    EigenSystem,
    MfatConfig,
    Mfat2dResult,
    VesselnessResult,
    eig_sym3,
    fat_vesselness,
    gaussian_smooth,
    hessian_at_scale,
    mfat,
    mfat_2d,
    r_lambda,
    regularize_eigen,
)
from .volume import (
    BinaryMask3,
    MipStack,
    Volume3,
    backproject,
    check_same_geometry,
    connected_components,
    linear_index,
    masked_mean_std,
    mip_slabs,
    unlinear_index,
)

__version__ = "0.1.0"
