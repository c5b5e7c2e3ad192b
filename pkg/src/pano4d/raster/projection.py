"""Perspective projection of 3D Gaussians to screen-space splats (EWA),
with the full analytic backward chain to positions, quaternions, log
scales, raw opacities, and colors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pano4d.rotations import normalize_quats, quat_rot_partials, quats_to_rots


@dataclass
class RasterizeConfig:
    """Splatting knobs.  Thresholds are performance cutoffs; setting
    alpha_min = t_min = 0 with a large radius_sigmas makes the render an
    exact evaluation of the compositing equation (used by the oracle and
    gradient tests)."""

    alpha_min: float = 1.0 / 255.0
    t_min: float = 1e-4
    alpha_max: float = 0.999
    radius_sigmas: float = 3.0
    lowpass: float = 0.3
    z_near: float = 0.01


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def camera_focal(fov: float, width: int) -> float:
    """Pixels of focal length for a horizontal field of view."""
    return 0.5 * width / math.tan(0.5 * fov)


def project_gaussians(gs, cam, cfg: RasterizeConfig):
    """Screen-space quantities of every Gaussian visible in ``cam``.

    Returns a dict holding the per-splat arrays (restricted to Gaussians
    in front of the near plane with positive-definite 2D covariance) plus
    everything the backward pass needs.
    """
    means = np.asarray(gs.means, dtype=np.float64)
    quats = np.asarray(gs.quats, dtype=np.float64)
    log_scales = np.asarray(gs.log_scales, dtype=np.float64)
    opacity_raw = np.asarray(gs.opacity_raw, dtype=np.float64)
    colors = np.asarray(gs.colors, dtype=np.float64)

    r_wc = np.asarray(cam.rotation, dtype=np.float64)
    t_wc = np.asarray(cam.translation, dtype=np.float64)
    h, w = cam.height, cam.width
    # proper rotations keep the camera y-axis pointing up; the image v-axis
    # grows downward, so the y focal length carries the sign flip
    fx = camera_focal(cam.fov, w)
    fy = -fx
    cx, cy = 0.5 * w, 0.5 * h

    t_cam = means @ r_wc.T + t_wc
    valid = t_cam[:, 2] > cfg.z_near
    # Frustum culling with a 3-sigma slack: points far outside the side
    # planes cannot contribute, and near the camera plane the EWA affine
    # approximation degenerates into image-wide splats.
    tan_x = math.tan(0.5 * cam.fov)
    tan_y = tan_x * h / w
    slack = cfg.radius_sigmas * np.exp(log_scales).max(axis=1)
    tx_, ty_, tz_ = t_cam[:, 0], t_cam[:, 1], t_cam[:, 2]
    inv_nx = 1.0 / math.sqrt(1.0 + tan_x * tan_x)
    inv_ny = 1.0 / math.sqrt(1.0 + tan_y * tan_y)
    valid &= (tan_x * tz_ - tx_) * inv_nx >= -slack
    valid &= (tan_x * tz_ + tx_) * inv_nx >= -slack
    valid &= (tan_y * tz_ - ty_) * inv_ny >= -slack
    valid &= (tan_y * tz_ + ty_) * inv_ny >= -slack
    idx = np.nonzero(valid)[0]
    t_cam = t_cam[idx]
    tz = t_cam[:, 2]

    mean2d = np.stack([fx * t_cam[:, 0] / tz + cx,
                       fy * t_cam[:, 1] / tz + cy], axis=1)

    q_norm = normalize_quats(quats[idx])
    rot = quats_to_rots(q_norm)
    scales = np.exp(log_scales[idx])
    v_mat = rot * scales[:, None, :]
    sigma3 = v_mat @ v_mat.transpose(0, 2, 1)

    n = len(idx)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = fx / tz
    jac[:, 0, 2] = -fx * t_cam[:, 0] / tz ** 2
    jac[:, 1, 1] = fy / tz
    jac[:, 1, 2] = -fy * t_cam[:, 1] / tz ** 2
    m_mat = jac @ r_wc
    cov2d = m_mat @ sigma3 @ m_mat.transpose(0, 2, 1)
    cov2d[:, 0, 0] += cfg.lowpass
    cov2d[:, 1, 1] += cfg.lowpass

    a = cov2d[:, 0, 0]
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - b * b
    pd = det > 0
    idx = idx[pd]
    if not np.all(pd):
        (t_cam, tz, mean2d, q_norm, rot, scales, v_mat, sigma3, jac, m_mat,
         cov2d, a, b, c, det) = (arr[pd] for arr in (
            t_cam, tz, mean2d, q_norm, rot, scales, v_mat, sigma3, jac,
            m_mat, cov2d, a, b, c, det))
    conic = np.stack([c / det, -b / det, a / det], axis=1)
    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = np.ceil(cfg.radius_sigmas * np.sqrt(lam_max))

    return {
        "idx": idx, "n_total": means.shape[0],
        "t_cam": t_cam, "mean2d": mean2d, "depth": tz.copy(),
        "conic": conic, "cov2d": cov2d, "radius": radius,
        "q_norm": q_norm, "quats_raw": quats[idx], "rot": rot,
        "scales": scales, "v_mat": v_mat, "sigma3": sigma3,
        "jac": jac, "m_mat": m_mat,
        "opac": sigmoid(opacity_raw[idx]), "colors": colors[idx],
        "r_wc": r_wc, "f": f,
    }


def project_gaussians_backward(proj: dict, g_mean2d, g_conic, g_color,
                               g_opac, g_depth):
    """Chain kernel gradients (w.r.t. screen-space splats) back to the
    Gaussian parameters.  Returns dense (n_total, ...) gradient arrays with
    zeros for culled Gaussians."""
    idx = proj["idx"]
    n_total = proj["n_total"]
    f = proj["f"]
    r_wc = proj["r_wc"]
    t_cam = proj["t_cam"]
    tz = proj["depth"]

    # conic = inv(cov2d):  dL/dcov = -conic dL/dconic conic
    d_conic_mat = np.empty((len(idx), 2, 2))
    d_conic_mat[:, 0, 0] = g_conic[:, 0]
    d_conic_mat[:, 0, 1] = 0.5 * g_conic[:, 1]
    d_conic_mat[:, 1, 0] = 0.5 * g_conic[:, 1]
    d_conic_mat[:, 1, 1] = g_conic[:, 2]
    conic_mat = np.empty_like(d_conic_mat)
    conic_mat[:, 0, 0] = proj["conic"][:, 0]
    conic_mat[:, 0, 1] = proj["conic"][:, 1]
    conic_mat[:, 1, 0] = proj["conic"][:, 1]
    conic_mat[:, 1, 1] = proj["conic"][:, 2]
    d_cov2d = -conic_mat @ d_conic_mat @ conic_mat

    m_mat, sigma3 = proj["m_mat"], proj["sigma3"]
    d_sigma3 = m_mat.transpose(0, 2, 1) @ d_cov2d @ m_mat
    d_m = (d_cov2d + d_cov2d.transpose(0, 2, 1)) @ m_mat @ sigma3
    d_jac = d_m @ r_wc.T

    d_t_cam = np.zeros_like(t_cam)
    tz2 = tz * tz
    d_t_cam[:, 0] += d_jac[:, 0, 2] * (-f / tz2)
    d_t_cam[:, 1] += d_jac[:, 1, 2] * (-f / tz2)
    d_t_cam[:, 2] += (d_jac[:, 0, 0] * (-f / tz2)
                      + d_jac[:, 1, 1] * (-f / tz2)
                      + d_jac[:, 0, 2] * (2 * f * t_cam[:, 0] / (tz2 * tz))
                      + d_jac[:, 1, 2] * (2 * f * t_cam[:, 1] / (tz2 * tz)))
    # projection of the center
    d_t_cam[:, 0] += g_mean2d[:, 0] * f / tz
    d_t_cam[:, 2] += g_mean2d[:, 0] * (-f * t_cam[:, 0] / tz2)
    d_t_cam[:, 1] += g_mean2d[:, 1] * f / tz
    d_t_cam[:, 2] += g_mean2d[:, 1] * (-f * t_cam[:, 1] / tz2)
    d_t_cam[:, 2] += g_depth

    d_means = d_t_cam @ r_wc

    # sigma3 = V V^T with V = R diag(s)
    v_mat, rot, scales = proj["v_mat"], proj["rot"], proj["scales"]
    d_v = (d_sigma3 + d_sigma3.transpose(0, 2, 1)) @ v_mat
    d_scales = np.einsum("nij,nij->nj", rot, d_v)
    d_log_scales = d_scales * scales
    d_rot = d_v * scales[:, None, :]

    partials = quat_rot_partials(proj["q_norm"])  # (n, 4, 3, 3)
    d_qn = np.einsum("nkij,nij->nk", partials, d_rot)
    q_raw = proj["quats_raw"]
    norm = np.linalg.norm(q_raw, axis=1, keepdims=True)
    q_unit = q_raw / norm
    d_quats = (d_qn - np.sum(d_qn * q_unit, axis=1, keepdims=True) * q_unit) / norm

    opac = proj["opac"]
    d_opacity_raw = g_opac * opac * (1.0 - opac)

    grads = {
        "means": np.zeros((n_total, 3)),
        "quats": np.zeros((n_total, 4)),
        "log_scales": np.zeros((n_total, 3)),
        "opacity_raw": np.zeros(n_total),
        "colors": np.zeros((n_total, 3)),
    }
    grads["means"][idx] = d_means
    grads["quats"][idx] = d_quats
    grads["log_scales"][idx] = d_log_scales
    grads["opacity_raw"][idx] = d_opacity_raw
    grads["colors"][idx] = g_color
    return grads
