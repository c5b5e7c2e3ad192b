"""pano4d: equirectangular panorama geometry, depth alignment, and
Gaussian-splat 4D scene reconstruction."""

from pano4d.erp import (
    PerspectiveCamera,
    ViewRig,
    build_correspondence_mask,
    circular_pad,
    default_rig,
    dir_for_erp_pixel,
    erp_pixel_for_dir,
    icosahedral_rig,
    project_erp_to_perspective,
    project_perspective_to_erp,
    project_shared_noise,
    rotate_latent_90,
    spherical_pos_encoding,
)
from pano4d.gaussians import (
    FrameView,
    GaussianSet,
    SceneCamera,
    lift_depth_to_gaussians,
    optimize_frame,
    reconstruct_4d,
)
from pano4d.losses import ReconLossConfig
from pano4d.raster import RasterizeConfig, rasterize, rasterize_backward
from pano4d.spatial_align import (
    AlignmentParams,
    GeometricField,
    SpatialAlignConfig,
    TangentDepthSet,
    align,
    fuse_panorama_depth,
)
from pano4d.temporal_align import (
    MetricReference,
    TemporalCalibration,
    align_sequence,
    calibrate_frame,
    center_perspective_depth,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentParams",
    "FrameView",
    "GaussianSet",
    "GeometricField",
    "MetricReference",
    "PerspectiveCamera",
    "RasterizeConfig",
    "ReconLossConfig",
    "SceneCamera",
    "SpatialAlignConfig",
    "TangentDepthSet",
    "TemporalCalibration",
    "ViewRig",
    "align",
    "align_sequence",
    "build_correspondence_mask",
    "calibrate_frame",
    "center_perspective_depth",
    "circular_pad",
    "default_rig",
    "dir_for_erp_pixel",
    "erp_pixel_for_dir",
    "fuse_panorama_depth",
    "icosahedral_rig",
    "lift_depth_to_gaussians",
    "optimize_frame",
    "project_erp_to_perspective",
    "project_perspective_to_erp",
    "project_shared_noise",
    "rasterize",
    "rasterize_backward",
    "reconstruct_4d",
    "rotate_latent_90",
    "spherical_pos_encoding",
]
