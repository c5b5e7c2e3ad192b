"""Temporal metric calibration of a panorama depth sequence.

Each frame's panorama depth is projected into a center perspective view,
compared with an externally supplied metric depth grid via robust medians,
and the resulting per-frame affine map (alpha, beta) is applied to the full
panorama grid:

    alpha = median(d_metric / d),  beta = median(d_metric - alpha * d),
    D_aligned = alpha * D + beta.

Depths are radial (distance from the viewpoint); the metric estimator's
values are treated as ray distances, which coincide with radial samples
for a camera at the panorama center, so the center projection is a plain
gnomonic resampling of the radial grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from pano4d.erp import PerspectiveCamera, erp_dims, project_erp_to_perspective

REFERENCE_CAMERA_FOV = 0.5 * math.pi  # azimuth 0, elevation 0, 90 deg


@dataclass(frozen=True)
class TemporalCalibration:
    alpha: float
    beta: float


@dataclass
class MetricReference:
    """Per-frame metric perspective depths with their camera poses.

    depths: (T, h, w) positive grids; poses: list of dicts with keys
    R (3, 3), t (3,), fov (radians), h, w (as read by
    :func:`pano4d.io.read_poses_json`).
    """

    depths: np.ndarray
    poses: list[dict]

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=np.float64)
        if self.depths.ndim != 3:
            raise ValueError("metric depths must be (T, h, w)")
        if np.any(self.depths <= 0) or not np.all(np.isfinite(self.depths)):
            raise ValueError("metric depths must be finite and positive")
        if len(self.poses) != self.depths.shape[0]:
            raise ValueError("pose count must match the frame count")
        for i, p in enumerate(self.poses):
            r = np.asarray(p["R"], dtype=np.float64)
            if np.abs(r @ r.T - np.eye(3)).max() > 1e-5 or np.linalg.det(r) < 0:
                raise ValueError(f"pose {i}: rotation not orthonormal with det +1")

    @property
    def t(self) -> int:
        return self.depths.shape[0]


def lower_median(values: np.ndarray) -> float:
    """Median with the lower of the two middle elements for even counts
    (deterministic and order-independent)."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size == 0:
        raise ValueError("median of an empty grid")
    return float(np.partition(flat, (flat.size - 1) // 2)[(flat.size - 1) // 2])


def center_perspective_depth(pano_depth: np.ndarray,
                             ref_cam: PerspectiveCamera | None = None,
                             resolution: tuple[int, int] = (64, 64)) -> np.ndarray:
    """Project a radial panorama depth grid into the center reference view.

    Values are distances along the perspective rays; since the camera sits
    at the panorama center, these equal the radial samples and the
    projection is a bilinear gnomonic resampling.
    """
    erp_dims(pano_depth)
    if ref_cam is None:
        ref_cam = PerspectiveCamera(azimuth=0.0, elevation=0.0,
                                    fov=REFERENCE_CAMERA_FOV,
                                    height=resolution[0], width=resolution[1])
    return project_erp_to_perspective(pano_depth, ref_cam, sampling="bilinear")


def calibrate_frame(d: np.ndarray, d_metric: np.ndarray) -> TemporalCalibration:
    """Robust per-frame affine fit of d to d_metric.

    alpha is the (lower) median of per-pixel ratios; beta the median of the
    residuals after the alpha scaling.
    """
    d = np.asarray(d, dtype=np.float64)
    d_metric = np.asarray(d_metric, dtype=np.float64)
    if d.shape != d_metric.shape:
        raise ValueError(f"shape mismatch {d.shape} vs {d_metric.shape}")
    if d.size == 0:
        raise ValueError("cannot calibrate empty grids")
    if np.any(d <= 0):
        raise ValueError("projected depths must be strictly positive")
    alpha = lower_median(d_metric / d)
    beta = lower_median(d_metric - alpha * d)
    return TemporalCalibration(alpha=alpha, beta=beta)


def align_sequence(pano_depths: np.ndarray, ref: MetricReference
                   ) -> tuple[np.ndarray, list[TemporalCalibration]]:
    """Calibrate every frame of a panorama depth sequence into the
    reference's metric space.

    Returns (aligned (T, H, W), calibrations).  A frame with alpha <= 0 is
    reported with a warning but still processed; the affine map is applied
    to the full panorama grid bit-for-bit as alpha * D + beta.
    """
    pano_depths = np.asarray(pano_depths, dtype=np.float64)
    if pano_depths.ndim != 3:
        raise ValueError("pano_depths must be (T, H, W)")
    if pano_depths.shape[0] != ref.t:
        raise ValueError(
            f"frame count mismatch: {pano_depths.shape[0]} panorama depths "
            f"vs {ref.t} metric references")
    aligned = np.empty_like(pano_depths)
    calibrations: list[TemporalCalibration] = []
    for t in range(ref.t):
        pose = ref.poses[t]
        cam = PerspectiveCamera(azimuth=0.0, elevation=0.0, fov=pose["fov"],
                                height=pose["h"], width=pose["w"])
        projected = center_perspective_depth(pano_depths[t], ref_cam=cam)
        cal = calibrate_frame(projected, ref.depths[t])
        if cal.alpha <= 0:
            warnings.warn(f"frame {t}: calibration scale {cal.alpha} is not "
                          "positive", stacklevel=2)
        aligned[t] = cal.alpha * pano_depths[t] + cal.beta
        calibrations.append(cal)
    return aligned, calibrations
