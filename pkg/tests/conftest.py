"""Shared synthetic-scene helpers.

The test scenes are built from low-order polynomials of the unit view
direction: band-limited on the sphere (no pole artifacts, resolvable by
modest grids) yet textured enough to pin down alignment scales and splat
colors.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))


def sphere_room_depth(dirs: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Smooth strictly positive radial depth field of a synthetic room."""
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    return (3.5 + 0.3 * x + 0.2 * y - 0.25 * z
            + 0.2 * x * y + 0.15 * (x * x - z * z) + 0.1 * y * z
            + 0.05 * t * x)


def sphere_room_rgb(dirs: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Textured color field in [0, 1] with a mild time dependence."""
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    r = 0.55 + 0.35 * np.sin(3 * x + 2 * y + 0.7 * t) + 0.05 * np.sin(8 * z)
    g = 0.50 + 0.35 * np.cos(2 * z + 3 * y - 0.5 * t) + 0.05 * np.cos(7 * x)
    b = 0.50 + 0.35 * np.sin(2 * x + 2 * z + 0.3 * t) + 0.08 * np.sin(5 * y)
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def erp_grid_dirs(h: int, w: int) -> np.ndarray:
    from pano4d.erp import dir_for_erp_pixel

    vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return dir_for_erp_pixel((h, w), uu, vv)


def pano_depth_frame(h: int, w: int, t: float = 0.0) -> np.ndarray:
    return sphere_room_depth(erp_grid_dirs(h, w), t)


def pano_rgb_frame(h: int, w: int, t: float = 0.0) -> np.ndarray:
    return sphere_room_rgb(erp_grid_dirs(h, w), t)


def grad_rel_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    """Norm-based relative error between gradient vectors."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    fd = np.asarray(fd, dtype=np.float64).ravel()
    denom = max(float(np.linalg.norm(fd)), 1e-12)
    return float(np.linalg.norm(analytic - fd)) / denom
