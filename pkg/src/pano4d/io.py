"""File formats: raw float grids, PNG images, camera/pose JSON, Gaussian PLY.

The raw grid format ("ERPF") is a little-endian header
``magic "ERPF", u32 H, u32 W, u32 C, u32 T`` followed by T*H*W*C float32
values, row-major within a frame, frame-major across time.  It stores ERP
frames and videos as well as generic grids (tangent depth stacks).
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from pano4d.erp import PerspectiveCamera

ERPF_MAGIC = b"ERPF"


class PipelineInputError(Exception):
    """Invalid or unreadable input artifact (maps to CLI exit code 2)."""


def write_raw_grid(path, data: np.ndarray) -> None:
    """Write a (T, H, W, C) float grid; lower-rank arrays are promoted.

    (H, W) -> T=1, C=1; (H, W, C) -> T=1; (T, H, W) -> C=1.
    """
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None, :, :, None]
    elif arr.ndim == 3 and arr.shape[2] <= 4:
        arr = arr[None]
    elif arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4:
        raise ValueError(f"cannot interpret array of shape {data.shape} as a grid file")
    t, h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(ERPF_MAGIC)
        f.write(struct.pack("<IIII", h, w, c, t))
        f.write(arr.astype("<f4").tobytes())


def read_raw_grid(path) -> np.ndarray:
    """Read a raw float grid file as a (T, H, W, C) float32 array."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise PipelineInputError(f"cannot read grid file {path}: {exc}") from exc
    if len(blob) < 20 or blob[:4] != ERPF_MAGIC:
        raise PipelineInputError(f"{path}: not a raw float grid file (bad magic)")
    h, w, c, t = struct.unpack("<IIII", blob[4:20])
    expected = 20 + 4 * t * h * w * c
    if len(blob) != expected:
        raise PipelineInputError(
            f"{path}: corrupt grid file (payload {len(blob) - 20} bytes, "
            f"expected {expected - 20} for {t}x{h}x{w}x{c})")
    arr = np.frombuffer(blob, dtype="<f4", offset=20)
    return arr.reshape(t, h, w, c).copy()


def squeeze_grid(arr: np.ndarray) -> np.ndarray:
    """Drop singleton T and C axes of a (T, H, W, C) grid."""
    if arr.shape[3] == 1:
        arr = arr[..., 0]
    if arr.shape[0] == 1:
        arr = arr[0]
    return arr


def write_png(path, image: np.ndarray) -> None:
    """Write a float image in [0, 1] (H, W) or (H, W, 3) as 8-bit PNG."""
    arr = np.asarray(image, dtype=np.float64)
    q = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    Image.fromarray(q).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Read a PNG as float64 in [0, 1]; RGB(A) images keep 3 channels."""
    try:
        img = Image.open(path)
    except OSError as exc:
        raise PipelineInputError(f"cannot read image {path}: {exc}") from exc
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def write_cameras_json(path, cameras) -> None:
    entries = [
        {"azimuth_deg": math.degrees(c.azimuth),
         "elevation_deg": math.degrees(c.elevation),
         "fov_deg": math.degrees(c.fov),
         "h": c.height, "w": c.width}
        for c in cameras
    ]
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")


def read_cameras_json(path) -> list[PerspectiveCamera]:
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PipelineInputError(f"cannot parse camera file {path}: {exc}") from exc
    cams = []
    try:
        for e in entries:
            cams.append(PerspectiveCamera(
                azimuth=math.radians(e["azimuth_deg"]),
                elevation=math.radians(e["elevation_deg"]),
                fov=math.radians(e["fov_deg"]),
                height=int(e["h"]), width=int(e["w"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineInputError(f"invalid camera entry in {path}: {exc}") from exc
    return cams


def write_poses_json(path, poses) -> None:
    """Poses: iterable of dicts {R: (3,3), t: (3,), fov: rad, h, w}."""
    entries = []
    for p in poses:
        entries.append({
            "R": np.asarray(p["R"], dtype=float).reshape(9).tolist(),
            "t": np.asarray(p["t"], dtype=float).reshape(3).tolist(),
            "fov_deg": math.degrees(float(p["fov"])),
            "h": int(p["h"]), "w": int(p["w"]),
        })
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")


def read_poses_json(path) -> list[dict]:
    """Read a pose file: T entries of {R row-major 9, t 3, fov_deg, h, w}.

    Returns dicts with keys R (3,3 ndarray), t (3,), fov (radians), h, w.
    Rotations must be orthonormal with determinant +1.
    """
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PipelineInputError(f"cannot parse pose file {path}: {exc}") from exc
    poses = []
    for i, e in enumerate(entries):
        try:
            r = np.array(e["R"], dtype=np.float64).reshape(3, 3)
            t = np.array(e["t"], dtype=np.float64).reshape(3)
            fov = math.radians(float(e["fov_deg"]))
            h, w = int(e["h"]), int(e["w"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PipelineInputError(f"invalid pose entry {i} in {path}: {exc}") from exc
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-5 or np.linalg.det(r) < 0:
            raise PipelineInputError(
                f"pose {i} in {path}: rotation is not orthonormal with det +1")
        poses.append({"R": r, "t": t, "fov": fov, "h": h, "w": w})
    return poses


# Binary PLY with one float32 property per Gaussian attribute.
PLY_PROPS = ("x", "y", "z",
             "quat_w", "quat_x", "quat_y", "quat_z",
             "log_scale_x", "log_scale_y", "log_scale_z",
             "opacity_raw", "r", "g", "b")


def write_gaussians_ply(path, gaussians) -> None:
    from pano4d.gaussians import GaussianSet  # local import to avoid a cycle

    assert isinstance(gaussians, GaussianSet)
    n = len(gaussians)
    cols = np.concatenate([
        gaussians.means, gaussians.quats, gaussians.log_scales,
        gaussians.opacity_raw[:, None], gaussians.colors], axis=1)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in PLY_PROPS]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(cols.astype("<f4").tobytes())


def read_gaussians_ply(path):
    from pano4d.gaussians import GaussianSet

    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise PipelineInputError(f"cannot read PLY {path}: {exc}") from exc
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise PipelineInputError(f"{path}: not a PLY file")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    n = None
    props = []
    for line in header:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        elif line.startswith("property float"):
            props.append(line.split()[-1])
    if n is None or tuple(props) != PLY_PROPS:
        raise PipelineInputError(f"{path}: unexpected PLY layout {props}")
    data = np.frombuffer(blob, dtype="<f4", offset=end + len(b"end_header\n"))
    if data.size != n * len(PLY_PROPS):
        raise PipelineInputError(f"{path}: truncated PLY payload")
    cols = data.reshape(n, len(PLY_PROPS)).astype(np.float64)
    return GaussianSet(means=cols[:, 0:3], quats=cols[:, 3:7],
                       log_scales=cols[:, 7:10], opacity_raw=cols[:, 10],
                       colors=cols[:, 11:14])


def write_loss_trace_csv(path, trace) -> None:
    """Trace rows: dicts with keys iteration, l1, ssim, lpips, sem, geo, total."""
    lines = ["iteration,L1,ssim,lpips,sem,geo,total"]
    for row in trace:
        lines.append("{iteration},{l1:.9g},{ssim:.9g},{lpips:.9g},{sem:.9g},"
                     "{geo:.9g},{total:.9g}".format(**row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_calibration_csv(path, calibrations) -> None:
    lines = ["t,alpha,beta"]
    for t, cal in enumerate(calibrations):
        lines.append(f"{t},{cal.alpha:.12g},{cal.beta:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")
