"""Pure-NumPy compositing kernels: the reference implementation of the
per-pixel front-to-back alpha blend and its backward pass.

The compiled Cython twin (kernels_cy) implements exactly the same
semantics; the backend is selected at import time in pano4d.raster.
Gaussians arrive pre-sorted by ascending view depth.  The backward pass
replays the forward pass in reverse depth order, reconstructing each
contributor's transmittance by dividing it back out and skipping exactly
the hits the forward pass skipped (per-pixel hit/contributor counters).
"""

from __future__ import annotations

import numpy as np


def composite_forward(mean2d, conic, color, opac, depth, radius, h, w,
                      alpha_min, t_min, alpha_max):
    """Front-to-back composite of depth-sorted splats.

    Returns (color (h,w,3), depth (h,w), alpha (h,w), final_t (h,w),
    n_contrib (h,w), n_hit (h,w)).
    """
    out_color = np.zeros((h, w, 3))
    out_depth = np.zeros((h, w))
    out_alpha = np.zeros((h, w))
    trans = np.ones((h, w))
    n_contrib = np.zeros((h, w), dtype=np.int32)
    n_hit = np.zeros((h, w), dtype=np.int32)

    for i in range(mean2d.shape[0]):
        x0 = max(int(np.floor(mean2d[i, 0] - radius[i])), 0)
        x1 = min(int(np.ceil(mean2d[i, 0] + radius[i])) + 1, w)
        y0 = max(int(np.floor(mean2d[i, 1] - radius[i])), 0)
        y1 = min(int(np.ceil(mean2d[i, 1] + radius[i])) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) + 0.5 - mean2d[i, 0]
        ys = np.arange(y0, y1) + 0.5 - mean2d[i, 1]
        dx, dy = np.meshgrid(xs, ys)
        power = (-0.5 * conic[i, 0] * dx * dx - 0.5 * conic[i, 2] * dy * dy
                 - conic[i, 1] * dx * dy)
        alpha = np.minimum(opac[i] * np.exp(power), alpha_max)
        hit = (power <= 0.0) & (alpha >= alpha_min)
        if not hit.any():
            continue
        n_hit[y0:y1, x0:x1] += hit
        t_blk = trans[y0:y1, x0:x1]
        live = hit & (t_blk >= t_min)
        contrib = np.where(live, alpha * t_blk, 0.0)
        out_color[y0:y1, x0:x1] += contrib[..., None] * color[i]
        out_depth[y0:y1, x0:x1] += contrib * depth[i]
        out_alpha[y0:y1, x0:x1] += contrib
        trans[y0:y1, x0:x1] = np.where(live, t_blk * (1.0 - alpha), t_blk)
        n_contrib[y0:y1, x0:x1] += live
    return out_color, out_depth, out_alpha, trans, n_contrib, n_hit


def composite_backward(mean2d, conic, color, opac, depth, radius, h, w,
                       alpha_min, t_min, alpha_max,
                       final_t, n_contrib, n_hit,
                       d_color, d_depth, d_alpha):
    """Gradients of the composite w.r.t. per-splat 2D quantities.

    Returns (g_mean2d, g_conic, g_color, g_opac, g_depth).
    """
    m = mean2d.shape[0]
    g_mean2d = np.zeros((m, 2))
    g_conic = np.zeros((m, 3))
    g_color = np.zeros((m, 3))
    g_opac = np.zeros(m)
    g_depth = np.zeros(m)

    t_state = final_t.copy()
    hits_seen = np.zeros((h, w), dtype=np.int32)
    suffix_c = np.zeros((h, w, 3))
    suffix_z = np.zeros((h, w))
    suffix_a = np.zeros((h, w))

    for i in range(m - 1, -1, -1):
        x0 = max(int(np.floor(mean2d[i, 0] - radius[i])), 0)
        x1 = min(int(np.ceil(mean2d[i, 0] + radius[i])) + 1, w)
        y0 = max(int(np.floor(mean2d[i, 1] - radius[i])), 0)
        y1 = min(int(np.ceil(mean2d[i, 1] + radius[i])) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) + 0.5 - mean2d[i, 0]
        ys = np.arange(y0, y1) + 0.5 - mean2d[i, 1]
        dx, dy = np.meshgrid(xs, ys)
        power = (-0.5 * conic[i, 0] * dx * dx - 0.5 * conic[i, 2] * dy * dy
                 - conic[i, 1] * dx * dy)
        raw_alpha = opac[i] * np.exp(power)
        alpha = np.minimum(raw_alpha, alpha_max)
        hit = (power <= 0.0) & (alpha >= alpha_min)
        if not hit.any():
            continue
        hs = hits_seen[y0:y1, x0:x1]
        # forward processing rank of this hit among the pixel's hits
        rank = n_hit[y0:y1, x0:x1] - hs - 1
        live = hit & (rank < n_contrib[y0:y1, x0:x1]) & (rank >= 0)
        hits_seen[y0:y1, x0:x1] = hs + hit

        one_minus = np.where(live, 1.0 - alpha, 1.0)
        t_blk = t_state[y0:y1, x0:x1] / one_minus  # transmittance before i
        t_state[y0:y1, x0:x1] = t_blk
        weight = np.where(live, alpha * t_blk, 0.0)

        dc_blk = d_color[y0:y1, x0:x1]
        dz_blk = d_depth[y0:y1, x0:x1]
        da_blk = d_alpha[y0:y1, x0:x1]
        g_color[i] = np.tensordot(weight, dc_blk, axes=((0, 1), (0, 1)))
        g_depth[i] = float(np.sum(weight * dz_blk))

        sc = suffix_c[y0:y1, x0:x1]
        sz = suffix_z[y0:y1, x0:x1]
        sa = suffix_a[y0:y1, x0:x1]
        d_alpha_i = np.where(
            live,
            np.sum(dc_blk * (color[i] * t_blk[..., None] - sc / one_minus[..., None]),
                   axis=-1)
            + dz_blk * (depth[i] * t_blk - sz / one_minus)
            + da_blk * (t_blk - sa / one_minus),
            0.0)
        # alpha clamped at alpha_max has zero local derivative
        d_alpha_i = np.where(raw_alpha >= alpha_max, 0.0, d_alpha_i)
        g_opac[i] = float(np.sum(d_alpha_i * np.where(live, np.exp(power), 0.0)))
        d_power = d_alpha_i * alpha
        gx = np.sum(d_power * (conic[i, 0] * dx + conic[i, 1] * dy))
        gy = np.sum(d_power * (conic[i, 2] * dy + conic[i, 1] * dx))
        g_mean2d[i, 0] = gx
        g_mean2d[i, 1] = gy
        g_conic[i, 0] = np.sum(d_power * (-0.5 * dx * dx))
        g_conic[i, 1] = np.sum(d_power * (-dx * dy))
        g_conic[i, 2] = np.sum(d_power * (-0.5 * dy * dy))

        suffix_c[y0:y1, x0:x1] = sc + weight[..., None] * color[i]
        suffix_z[y0:y1, x0:x1] = sz + weight * depth[i]
        suffix_a[y0:y1, x0:x1] = sa + weight
    return g_mean2d, g_conic, g_color, g_opac, g_depth
