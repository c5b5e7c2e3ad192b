"""Equirectangular (ERP) <-> perspective (gnomonic tangent) geometry.

Conventions used throughout the package:

* World / panorama frame is right-handed with y up, z forward:
  ``dir(lon, lat) = (cos(lat)*sin(lon), sin(lat), cos(lat)*cos(lon))``.
* An ERP grid of shape (H, W[, C]) must satisfy W == 2*H.  Pixel (u, v)
  (u = column, v = row) has its center at
  ``lon = 2*pi*(u + 0.5)/W - pi`` and ``lat = pi/2 - pi*(v + 0.5)/H``,
  so longitude increases to the right and latitude decreases downward.
* Perspective cameras have square frusta, x right / y down image axes,
  and pixel centers at half-integer offsets as well.
* Bilinear ERP sampling wraps horizontally across the seam and clamps
  vertically at the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def erp_dims(frame: np.ndarray) -> tuple[int, int]:
    """Return (H, W) of an ERP grid, enforcing the 2:1 aspect invariant."""
    if frame.ndim not in (2, 3):
        raise ValueError(f"ERP frame must be (H, W) or (H, W, C), got shape {frame.shape}")
    h, w = frame.shape[0], frame.shape[1]
    if w != 2 * h:
        raise ValueError(f"ERP frame width must be exactly 2x height, got {h}x{w}")
    return h, w


def dir_for_erp_pixel(dims: tuple[int, int], u, v) -> np.ndarray:
    """Unit direction(s) of ERP pixel center(s) (u, v) on an H x W grid.

    u and v may be scalars or arrays (fractional coordinates allowed);
    out-of-range values raise ValueError.
    """
    h, w = dims
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < 0) or np.any(u >= w) or np.any(v < 0) or np.any(v >= h):
        raise ValueError("pixel coordinates outside the ERP grid")
    lon = TWO_PI * (u + 0.5) / w - math.pi
    lat = 0.5 * math.pi - math.pi * (v + 0.5) / h
    return dirs_from_lonlat(lon, lat)


def erp_pixel_for_dir(dims: tuple[int, int], dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fractional ERP pixel coordinates (u, v) whose centers map to ``dirs``.

    Inverse of :func:`dir_for_erp_pixel` on pixel centers.  u is wrapped to
    [-0.5, W-0.5); v may lie slightly outside [0, H) for directions beyond
    the pole row centers (callers clamp).
    """
    h, w = dims
    lon, lat = lonlat_from_dirs(dirs)
    u = (lon + math.pi) * w / TWO_PI - 0.5
    v = (0.5 * math.pi - lat) * h / math.pi - 0.5
    u = np.mod(u + 0.5, w) - 0.5
    return u, v


def dirs_from_lonlat(lon, lat) -> np.ndarray:
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    cl = np.cos(lat)
    return np.stack([cl * np.sin(lon), np.sin(lat), cl * np.cos(lon)], axis=-1)


def lonlat_from_dirs(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(dirs, dtype=np.float64)
    lon = np.arctan2(d[..., 0], d[..., 2])
    lat = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    return lon, lat


@dataclass(frozen=True)
class PerspectiveCamera:
    """Tangent-view camera: square frustum looking at (azimuth, elevation).

    Angles in radians; ``fov`` is the full horizontal (= vertical for the
    square frustum) field of view.
    """

    azimuth: float
    elevation: float
    fov: float
    height: int
    width: int

    def __post_init__(self):
        if not (0.0 < self.fov < math.pi):
            raise ValueError(f"fov must be in (0, pi), got {self.fov}")
        if self.height < 1 or self.width < 1:
            raise ValueError("camera resolution must be at least 1x1")

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.height, self.width)

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) unit vectors in the world frame.

        Undefined at elevation +-90 deg (world-up used to fix roll).
        """
        forward = dirs_from_lonlat(self.azimuth, self.elevation)
        world_up = np.array([0.0, 1.0, 0.0])
        right = np.cross(world_up, forward)
        n = np.linalg.norm(right)
        if n < 1e-12:
            raise ValueError("camera elevation too close to a pole for a stable basis")
        right = right / n
        up = np.cross(forward, right)
        return right, up, forward


@dataclass(frozen=True)
class ViewRig:
    """Ordered collection of perspective cameras."""

    cameras: tuple[PerspectiveCamera, ...]

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, i: int) -> PerspectiveCamera:
        return self.cameras[i]


def default_rig(resolution: int = 256, fov: float = 0.5 * math.pi) -> ViewRig:
    """Four equatorial views at azimuths 0/90/180/270 deg, 90 deg FOV."""
    cams = tuple(
        PerspectiveCamera(azimuth=k * 0.5 * math.pi, elevation=0.0, fov=fov,
                          height=resolution, width=resolution)
        for k in range(4)
    )
    return ViewRig(cams)


def icosahedral_rig(resolution: int = 64, fov: float = 0.5 * math.pi) -> ViewRig:
    """Twenty overlapping tangent views centered on icosahedron face normals.

    Face centers of an icosahedron are the vertices of a dodecahedron; the
    20 directions jointly cover the sphere with a 90 deg square frustum.
    Ordering is fixed (sorted by elevation then azimuth) for determinism.
    """
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                verts.append((sx, sy, sz))
    for sa in (-1.0, 1.0):
        for sb in (-1.0, 1.0):
            verts.append((0.0, sa / phi, sb * phi))
            verts.append((sa / phi, sb * phi, 0.0))
            verts.append((sa * phi, 0.0, sb / phi))
    dirs = np.array(verts)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lon, lat = lonlat_from_dirs(dirs)
    order = np.lexsort((np.round(lon, 12), np.round(lat, 12)))
    cams = tuple(
        PerspectiveCamera(azimuth=float(lon[i]), elevation=float(lat[i]), fov=fov,
                          height=resolution, width=resolution)
        for i in order
    )
    return ViewRig(cams)


def camera_rays(cam: PerspectiveCamera, resolution: tuple[int, int] | None = None) -> np.ndarray:
    """Unit ray directions (h, w, 3) through every pixel center of ``cam``.

    ``resolution`` overrides the camera's own grid (used for token grids,
    which are integer downsamplings of the pixel grid).
    """
    h, w = resolution if resolution is not None else cam.resolution
    right, up, forward = cam.basis()
    t = math.tan(0.5 * cam.fov)
    xs = t * (2.0 * (np.arange(w) + 0.5) / w - 1.0)
    ys = t * (2.0 * (np.arange(h) + 0.5) / h - 1.0)
    xg, yg = np.meshgrid(xs, ys)
    rays = (forward[None, None, :]
            + xg[..., None] * right[None, None, :]
            - yg[..., None] * up[None, None, :])
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    return rays


def sample_erp(frame: np.ndarray, u: np.ndarray, v: np.ndarray, sampling: str = "bilinear") -> np.ndarray:
    """Sample an ERP grid at fractional pixel coords with seam wrap.

    Horizontal coordinates wrap modulo W; vertical coordinates clamp at the
    pole rows.  ``sampling`` is "nearest" or "bilinear".
    """
    h, w = frame.shape[0], frame.shape[1]
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if sampling == "nearest":
        ui = np.mod(np.floor(u + 0.5).astype(np.int64), w)
        vi = np.clip(np.floor(v + 0.5).astype(np.int64), 0, h - 1)
        return frame[vi, ui]
    if sampling != "bilinear":
        raise ValueError(f"unknown sampling mode {sampling!r}")
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = u - u0
    fv = v - v0
    u0m = np.mod(u0, w)
    u1m = np.mod(u0 + 1, w)
    v0c = np.clip(v0, 0, h - 1)
    v1c = np.clip(v0 + 1, 0, h - 1)
    if frame.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    top = frame[v0c, u0m] * (1.0 - fu) + frame[v0c, u1m] * fu
    bot = frame[v1c, u0m] * (1.0 - fu) + frame[v1c, u1m] * fu
    return top * (1.0 - fv) + bot * fv


def project_erp_to_perspective(src: np.ndarray, cam: PerspectiveCamera,
                               sampling: str = "bilinear") -> np.ndarray:
    """Gnomonic projection of an ERP grid into a perspective image."""
    dims = erp_dims(src)
    rays = camera_rays(cam)
    u, v = erp_pixel_for_dir(dims, rays)
    return sample_erp(src, u, v, sampling=sampling)


def camera_footprint(cam: PerspectiveCamera, dst_dims: tuple[int, int]) -> np.ndarray:
    """Boolean ERP mask of pixels whose center ray lies inside the frustum."""
    h, w = dst_dims
    vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dirs = dir_for_erp_pixel((h, w), uu, vv)
    right, up, forward = cam.basis()
    t = math.tan(0.5 * cam.fov)
    fz = dirs @ forward
    px = dirs @ right
    py = dirs @ up
    with np.errstate(divide="ignore", invalid="ignore"):
        inside = (fz > 0) & (np.abs(px) <= t * fz) & (np.abs(py) <= t * fz)
    return inside


def project_perspective_to_erp(src: np.ndarray, cam: PerspectiveCamera,
                               dst_dims: tuple[int, int],
                               sampling: str = "nearest") -> tuple[np.ndarray, np.ndarray]:
    """Inverse tangent projection: fill ERP pixels covered by the frustum.

    Returns (erp, coverage); pixels outside the footprint are zero and
    flagged False in the coverage mask.
    """
    h, w = dst_dims
    if w != 2 * h:
        raise ValueError(f"destination dims must be 2:1, got {dst_dims}")
    vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dirs = dir_for_erp_pixel((h, w), uu, vv)
    right, up, forward = cam.basis()
    t = math.tan(0.5 * cam.fov)
    fz = dirs @ forward
    px = dirs @ right
    py = dirs @ up
    inside = (fz > 0) & (np.abs(px) <= t * fz) & (np.abs(py) <= t * fz)

    sh, sw = src.shape[0], src.shape[1]
    out_shape = (h, w) if src.ndim == 2 else (h, w, src.shape[2])
    out = np.zeros(out_shape, dtype=np.float64)
    if not np.any(inside):
        return out, inside
    fzi = fz[inside]
    xn = (px[inside] / fzi) / t          # [-1, 1] across the frustum
    yn = -(py[inside] / fzi) / t
    su = (xn + 1.0) * 0.5 * sw - 0.5
    sv = (yn + 1.0) * 0.5 * sh - 0.5
    if sampling == "nearest":
        si = np.clip(np.floor(su + 0.5).astype(np.int64), 0, sw - 1)
        sj = np.clip(np.floor(sv + 0.5).astype(np.int64), 0, sh - 1)
        vals = src[sj, si]
    elif sampling == "bilinear":
        u0 = np.clip(np.floor(su).astype(np.int64), 0, sw - 1)
        v0 = np.clip(np.floor(sv).astype(np.int64), 0, sh - 1)
        u1 = np.clip(u0 + 1, 0, sw - 1)
        v1 = np.clip(v0 + 1, 0, sh - 1)
        fu = np.clip(su - u0, 0.0, 1.0)
        fv = np.clip(sv - v0, 0.0, 1.0)
        if src.ndim == 3:
            fu = fu[:, None]
            fv = fv[:, None]
        vals = ((src[v0, u0] * (1 - fu) + src[v0, u1] * fu) * (1 - fv)
                + (src[v1, u0] * (1 - fu) + src[v1, u1] * fu) * fv)
    else:
        raise ValueError(f"unknown sampling mode {sampling!r}")
    out[inside] = vals
    return out, inside


def circular_pad(frame: np.ndarray, pad: int) -> np.ndarray:
    """Horizontal wraparound padding: left pad copies the rightmost columns,
    right pad copies the leftmost.  Rows are untouched."""
    w = frame.shape[1]
    if pad < 0 or pad > w:
        raise ValueError(f"pad must be in [0, W={w}], got {pad}")
    if pad == 0:
        return frame.copy()
    return np.concatenate([frame[:, w - pad:], frame, frame[:, :pad]], axis=1)


def rotate_latent_90(frame: np.ndarray) -> np.ndarray:
    """Roll the grid right by W/4 columns (a 90 deg longitude rotation).

    Four applications are bit-identical to the input.
    """
    w = frame.shape[1]
    if w % 4 != 0:
        raise ValueError(f"width must be divisible by 4, got {w}")
    return np.roll(frame, w // 4, axis=1)


def project_shared_noise(pano_noise: np.ndarray, rig: ViewRig) -> list[np.ndarray]:
    """Per-view noise grids projected from one panoramic noise field.

    Nearest-neighbor sampling keeps every output pixel an exact copy of a
    source sample, so N(0, 1) marginals survive the projection (bilinear
    averaging would shrink the variance).
    """
    erp_dims(pano_noise)
    return [project_erp_to_perspective(pano_noise, cam, sampling="nearest")
            for cam in rig]


def spherical_pos_encoding(dirs: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal position features of unit directions, (N, dim).

    Feature pairs alternate between longitude and latitude harmonics at
    geometrically spaced (power-of-two) frequencies.  Longitude pairs are
    weighted by cos(lat) so that for nearby tokens the feature distance
    tracks true angular distance even near the poles; integer frequencies
    make every longitude feature continuous across the +-pi seam (the first
    longitude pair is exactly (sin lon, cos lon) scaled by cos lat).
    """
    d = np.asarray(dirs, dtype=np.float64)
    if d.ndim != 2 or d.shape[1] != 3:
        raise ValueError("dirs must be (N, 3)")
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"encoding dim must be a positive even number, got {dim}")
    norms = np.linalg.norm(d, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("directions must be unit-norm")
    lon, lat = lonlat_from_dirs(d)
    clat = np.cos(lat)
    out = np.empty((d.shape[0], dim), dtype=np.float64)
    for pair in range(dim // 2):
        octave = pair // 2
        freq = float(2 ** octave)
        if pair % 2 == 0:
            out[:, 2 * pair] = clat * np.sin(freq * lon)
            out[:, 2 * pair + 1] = clat * np.cos(freq * lon)
        else:
            out[:, 2 * pair] = np.sin(freq * lat)
            out[:, 2 * pair + 1] = np.cos(freq * lat)
    return out


def erp_token_dirs(pano_dims: tuple[int, int], token_hw: tuple[int, int]) -> np.ndarray:
    """Center directions of a token grid over the full ERP rectangle, (P, 3)."""
    h, w = pano_dims
    th, tw = token_hw
    if h % th != 0 or w % tw != 0:
        raise ValueError("token grid must be an integer downsampling of the pixel grid")
    vv, uu = np.meshgrid(np.arange(th), np.arange(tw), indexing="ij")
    # token centers expressed in pixel coordinates of the full grid
    u = (uu + 0.5) * (w / tw) - 0.5
    v = (vv + 0.5) * (h / th) - 0.5
    return dir_for_erp_pixel((h, w), u, v).reshape(-1, 3)


def perspective_token_dirs(cam: PerspectiveCamera, token_hw: tuple[int, int]) -> np.ndarray:
    """Center directions of a perspective token grid, (Q, 3)."""
    th, tw = token_hw
    if cam.height % th != 0 or cam.width % tw != 0:
        raise ValueError("token grid must be an integer downsampling of the pixel grid")
    return camera_rays(cam, resolution=(th, tw)).reshape(-1, 3)


def build_correspondence_mask(pano_dims: tuple[int, int],
                              pano_token_hw: tuple[int, int],
                              cam: PerspectiveCamera,
                              persp_token_hw: tuple[int, int],
                              dilate: int = 1) -> np.ndarray:
    """Boolean mask (pano tokens P x perspective tokens Q).

    mask[p, q] is True iff perspective token q's central ray lands inside
    panorama token p's footprint dilated by ``dilate`` tokens (horizontal
    wrap across the seam, vertical clamp at the poles).  The default 1-token
    dilation keeps bilinearly interpolated features away from a hard zero
    boundary.
    """
    th, tw = pano_token_hw
    qh, qw = persp_token_hw
    if pano_dims[0] % th != 0 or pano_dims[1] % tw != 0:
        raise ValueError("pano token grid must divide the pixel grid")
    q_dirs = perspective_token_dirs(cam, persp_token_hw)
    lon, lat = lonlat_from_dirs(q_dirs)
    tu = np.floor((lon + math.pi) / TWO_PI * tw).astype(np.int64) % tw
    tv = np.clip(np.floor((0.5 * math.pi - lat) / math.pi * th).astype(np.int64), 0, th - 1)
    mask = np.zeros((th * tw, qh * qw), dtype=bool)
    q_idx = np.arange(qh * qw)
    for dv in range(-dilate, dilate + 1):
        pv = tv + dv
        ok = (pv >= 0) & (pv < th)
        for du in range(-dilate, dilate + 1):
            pu = (tu + du) % tw
            rows = pv[ok] * tw + pu[ok]
            mask[rows, q_idx[ok]] = True
    return mask
