# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled compositing kernels; semantics identical to kernels_py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, floor

cnp.import_array()


def composite_forward(double[:, ::1] mean2d, double[:, ::1] conic,
                      double[:, ::1] color, double[::1] opac,
                      double[::1] depth, double[::1] radius,
                      int h, int w,
                      double alpha_min, double t_min, double alpha_max):
    out_color_arr = np.zeros((h, w, 3))
    out_depth_arr = np.zeros((h, w))
    out_alpha_arr = np.zeros((h, w))
    trans_arr = np.ones((h, w))
    n_contrib_arr = np.zeros((h, w), dtype=np.int32)
    n_hit_arr = np.zeros((h, w), dtype=np.int32)

    cdef double[:, :, ::1] out_color = out_color_arr
    cdef double[:, ::1] out_depth = out_depth_arr
    cdef double[:, ::1] out_alpha = out_alpha_arr
    cdef double[:, ::1] trans = trans_arr
    cdef int[:, ::1] n_contrib = n_contrib_arr
    cdef int[:, ::1] n_hit = n_hit_arr

    cdef Py_ssize_t m = mean2d.shape[0]
    cdef Py_ssize_t i
    cdef int x0, x1, y0, y1, x, y
    cdef double mx, my, ca, cb, cc, op, dep, rad
    cdef double dx, dy, power, alpha, t, contrib
    cdef double c0, c1, c2

    for i in range(m):
        mx = mean2d[i, 0]
        my = mean2d[i, 1]
        rad = radius[i]
        x0 = <int>floor(mx - rad)
        x1 = <int>ceil(mx + rad) + 1
        y0 = <int>floor(my - rad)
        y1 = <int>ceil(my + rad) + 1
        if x0 < 0: x0 = 0
        if y0 < 0: y0 = 0
        if x1 > w: x1 = w
        if y1 > h: y1 = h
        if x0 >= x1 or y0 >= y1:
            continue
        ca = conic[i, 0]
        cb = conic[i, 1]
        cc = conic[i, 2]
        op = opac[i]
        dep = depth[i]
        c0 = color[i, 0]
        c1 = color[i, 1]
        c2 = color[i, 2]
        for y in range(y0, y1):
            dy = (y + 0.5) - my
            for x in range(x0, x1):
                dx = (x + 0.5) - mx
                power = -0.5 * ca * dx * dx - 0.5 * cc * dy * dy - cb * dx * dy
                if power > 0.0:
                    continue
                alpha = op * exp(power)
                if alpha > alpha_max:
                    alpha = alpha_max
                if alpha < alpha_min:
                    continue
                n_hit[y, x] += 1
                t = trans[y, x]
                if t < t_min:
                    continue
                contrib = alpha * t
                out_color[y, x, 0] += contrib * c0
                out_color[y, x, 1] += contrib * c1
                out_color[y, x, 2] += contrib * c2
                out_depth[y, x] += contrib * dep
                out_alpha[y, x] += contrib
                trans[y, x] = t * (1.0 - alpha)
                n_contrib[y, x] += 1
    return (out_color_arr, out_depth_arr, out_alpha_arr, trans_arr,
            n_contrib_arr, n_hit_arr)


def composite_backward(double[:, ::1] mean2d, double[:, ::1] conic,
                       double[:, ::1] color, double[::1] opac,
                       double[::1] depth, double[::1] radius,
                       int h, int w,
                       double alpha_min, double t_min, double alpha_max,
                       double[:, ::1] final_t, int[:, ::1] n_contrib,
                       int[:, ::1] n_hit,
                       double[:, :, ::1] d_color, double[:, ::1] d_depth,
                       double[:, ::1] d_alpha):
    cdef Py_ssize_t m = mean2d.shape[0]
    g_mean2d_arr = np.zeros((m, 2))
    g_conic_arr = np.zeros((m, 3))
    g_color_arr = np.zeros((m, 3))
    g_opac_arr = np.zeros(m)
    g_depth_arr = np.zeros(m)
    t_state_arr = np.array(final_t, copy=True)
    hits_seen_arr = np.zeros((h, w), dtype=np.int32)
    suffix_c_arr = np.zeros((h, w, 3))
    suffix_z_arr = np.zeros((h, w))
    suffix_a_arr = np.zeros((h, w))

    cdef double[:, ::1] g_mean2d = g_mean2d_arr
    cdef double[:, ::1] g_conic = g_conic_arr
    cdef double[:, ::1] g_color = g_color_arr
    cdef double[::1] g_opac = g_opac_arr
    cdef double[::1] g_depth = g_depth_arr
    cdef double[:, ::1] t_state = t_state_arr
    cdef int[:, ::1] hits_seen = hits_seen_arr
    cdef double[:, :, ::1] suffix_c = suffix_c_arr
    cdef double[:, ::1] suffix_z = suffix_z_arr
    cdef double[:, ::1] suffix_a = suffix_a_arr

    cdef Py_ssize_t i
    cdef int x0, x1, y0, y1, x, y, rank
    cdef double mx, my, ca, cb, cc, op, dep, rad
    cdef double dx, dy, power, raw_alpha, alpha, one_minus, t_before, weight
    cdef double c0, c1, c2, d_alpha_i, d_power, g
    cdef double acc_mx, acc_my, acc_ca, acc_cb, acc_cc, acc_op, acc_dep
    cdef double acc_c0, acc_c1, acc_c2

    for i in range(m - 1, -1, -1):
        mx = mean2d[i, 0]
        my = mean2d[i, 1]
        rad = radius[i]
        x0 = <int>floor(mx - rad)
        x1 = <int>ceil(mx + rad) + 1
        y0 = <int>floor(my - rad)
        y1 = <int>ceil(my + rad) + 1
        if x0 < 0: x0 = 0
        if y0 < 0: y0 = 0
        if x1 > w: x1 = w
        if y1 > h: y1 = h
        if x0 >= x1 or y0 >= y1:
            continue
        ca = conic[i, 0]
        cb = conic[i, 1]
        cc = conic[i, 2]
        op = opac[i]
        dep = depth[i]
        c0 = color[i, 0]
        c1 = color[i, 1]
        c2 = color[i, 2]
        acc_mx = 0.0
        acc_my = 0.0
        acc_ca = 0.0
        acc_cb = 0.0
        acc_cc = 0.0
        acc_op = 0.0
        acc_dep = 0.0
        acc_c0 = 0.0
        acc_c1 = 0.0
        acc_c2 = 0.0
        for y in range(y0, y1):
            dy = (y + 0.5) - my
            for x in range(x0, x1):
                dx = (x + 0.5) - mx
                power = -0.5 * ca * dx * dx - 0.5 * cc * dy * dy - cb * dx * dy
                if power > 0.0:
                    continue
                raw_alpha = op * exp(power)
                alpha = raw_alpha
                if alpha > alpha_max:
                    alpha = alpha_max
                if alpha < alpha_min:
                    continue
                rank = n_hit[y, x] - hits_seen[y, x] - 1
                hits_seen[y, x] += 1
                if rank < 0 or rank >= n_contrib[y, x]:
                    continue
                one_minus = 1.0 - alpha
                t_before = t_state[y, x] / one_minus
                t_state[y, x] = t_before
                weight = alpha * t_before

                acc_c0 += weight * d_color[y, x, 0]
                acc_c1 += weight * d_color[y, x, 1]
                acc_c2 += weight * d_color[y, x, 2]
                acc_dep += weight * d_depth[y, x]

                d_alpha_i = (
                    d_color[y, x, 0] * (c0 * t_before - suffix_c[y, x, 0] / one_minus)
                    + d_color[y, x, 1] * (c1 * t_before - suffix_c[y, x, 1] / one_minus)
                    + d_color[y, x, 2] * (c2 * t_before - suffix_c[y, x, 2] / one_minus)
                    + d_depth[y, x] * (dep * t_before - suffix_z[y, x] / one_minus)
                    + d_alpha[y, x] * (t_before - suffix_a[y, x] / one_minus))
                if raw_alpha >= alpha_max:
                    d_alpha_i = 0.0
                acc_op += d_alpha_i * exp(power)
                d_power = d_alpha_i * alpha
                acc_mx += d_power * (ca * dx + cb * dy)
                acc_my += d_power * (cc * dy + cb * dx)
                acc_ca += d_power * (-0.5 * dx * dx)
                acc_cb += d_power * (-dx * dy)
                acc_cc += d_power * (-0.5 * dy * dy)

                suffix_c[y, x, 0] += weight * c0
                suffix_c[y, x, 1] += weight * c1
                suffix_c[y, x, 2] += weight * c2
                suffix_z[y, x] += weight * dep
                suffix_a[y, x] += weight
        g_mean2d[i, 0] = acc_mx
        g_mean2d[i, 1] = acc_my
        g_conic[i, 0] = acc_ca
        g_conic[i, 1] = acc_cb
        g_conic[i, 2] = acc_cc
        g_opac[i] = acc_op
        g_depth[i] = acc_dep
        g_color[i, 0] = acc_c0
        g_color[i, 1] = acc_c1
        g_color[i, 2] = acc_c2
    return g_mean2d_arr, g_conic_arr, g_color_arr, g_opac_arr, g_depth_arr
