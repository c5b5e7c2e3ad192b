"""Differentiable Gaussian-splat rasterizer.

Hot per-pixel compositing loops run in a compiled Cython kernel when the
extension built; a pure-NumPy twin with identical semantics is selected
otherwise (or when PANO4D_FORCE_PYTHON=1).  Projection and the parameter
backward chain are shared NumPy code either way.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from pano4d.raster import kernels_py
from pano4d.raster.projection import (
    RasterizeConfig,
    camera_focal,
    project_gaussians,
    project_gaussians_backward,
)

_BACKENDS = {"python": kernels_py}
try:  # compiled extension is optional
    from pano4d.raster import kernels_cy  # type: ignore

    _BACKENDS["cython"] = kernels_cy
except ImportError:  # pragma: no cover - depends on the build environment
    kernels_cy = None

_active = "python"
if kernels_cy is not None and os.environ.get("PANO4D_FORCE_PYTHON", "") != "1":
    _active = "cython"


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    """Select the compositing backend ("python" or "cython")."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; built: {sorted(_BACKENDS)}")
    _active = name


@dataclass
class RenderResult:
    color: np.ndarray   # (h, w, 3)
    depth: np.ndarray   # (h, w), alpha-weighted composite of view depth
    alpha: np.ndarray   # (h, w), accumulated opacity in [0, 1]
    cache: dict | None = None


def rasterize(gs, cam, cfg: RasterizeConfig | None = None,
              want_grad: bool = False) -> RenderResult:
    """Render a Gaussian set through a pinhole camera.

    Gaussians are depth-sorted internally (stable sort, so exact depth
    ties keep input order); an empty set renders black with zero alpha.
    With ``want_grad`` the result carries the cache consumed by
    :func:`rasterize_backward`.
    """
    cfg = cfg or RasterizeConfig()
    h, w = cam.height, cam.width
    if len(gs.means) == 0:
        return RenderResult(np.zeros((h, w, 3)), np.zeros((h, w)), np.zeros((h, w)),
                            cache={"empty": True, "cfg": cfg})
    proj = project_gaussians(gs, cam, cfg)
    order = np.argsort(proj["depth"], kind="stable")
    sorted_arrays = {
        "mean2d": np.ascontiguousarray(proj["mean2d"][order]),
        "conic": np.ascontiguousarray(proj["conic"][order]),
        "color": np.ascontiguousarray(proj["colors"][order]),
        "opac": np.ascontiguousarray(proj["opac"][order]),
        "depth": np.ascontiguousarray(proj["depth"][order]),
        "radius": np.ascontiguousarray(proj["radius"][order]),
    }
    kern = _BACKENDS[_active]
    out_color, out_depth, out_alpha, final_t, n_contrib, n_hit = kern.composite_forward(
        sorted_arrays["mean2d"], sorted_arrays["conic"], sorted_arrays["color"],
        sorted_arrays["opac"], sorted_arrays["depth"], sorted_arrays["radius"],
        h, w, cfg.alpha_min, cfg.t_min, cfg.alpha_max)
    cache = None
    if want_grad:
        cache = {"proj": proj, "order": order, "sorted": sorted_arrays,
                 "final_t": final_t, "n_contrib": n_contrib, "n_hit": n_hit,
                 "h": h, "w": w, "cfg": cfg}
    return RenderResult(np.asarray(out_color), np.asarray(out_depth),
                        np.asarray(out_alpha), cache)


def rasterize_backward(cache: dict, d_color=None, d_depth=None, d_alpha=None):
    """Gradients of a rendered image w.r.t. all Gaussian parameters.

    Any of the adjoint images may be omitted (treated as zero).  Returns a
    dict with keys means, quats, log_scales, opacity_raw, colors.
    """
    if cache.get("empty"):
        raise ValueError("cannot backpropagate through an empty render")
    h, w = cache["h"], cache["w"]
    if d_color is None:
        d_color = np.zeros((h, w, 3))
    if d_depth is None:
        d_depth = np.zeros((h, w))
    if d_alpha is None:
        d_alpha = np.zeros((h, w))
    cfg = cache["cfg"]
    s = cache["sorted"]
    kern = _BACKENDS[_active]
    g_mean2d, g_conic, g_color, g_opac, g_depth = kern.composite_backward(
        s["mean2d"], s["conic"], s["color"], s["opac"], s["depth"], s["radius"],
        h, w, cfg.alpha_min, cfg.t_min, cfg.alpha_max,
        cache["final_t"], cache["n_contrib"], cache["n_hit"],
        np.ascontiguousarray(d_color, dtype=np.float64),
        np.ascontiguousarray(d_depth, dtype=np.float64),
        np.ascontiguousarray(d_alpha, dtype=np.float64))
    # undo the depth sort
    order = cache["order"]
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return project_gaussians_backward(
        cache["proj"],
        np.asarray(g_mean2d)[inv], np.asarray(g_conic)[inv],
        np.asarray(g_color)[inv], np.asarray(g_opac)[inv],
        np.asarray(g_depth)[inv])


__all__ = [
    "RasterizeConfig", "RenderResult", "active_backend", "set_backend",
    "rasterize", "rasterize_backward", "camera_focal",
    "project_gaussians", "project_gaussians_backward",
]
