"""Command-line pipeline: project, align-spatial, align-temporal,
reconstruct, render, export-ply.

Every command resolves an effective configuration (defaults <- optional
--config JSON <- command-line flags) and serializes it into the output
directory as run_config.json, making runs reproducible from their
artifacts alone.  Exit codes: 0 success, 2 input/validation error,
3 numerical/optimization failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from pano4d import erp, io
from pano4d.gaussians import SceneCamera, lift_depth_to_gaussians, reconstruct_4d
from pano4d.io import PipelineInputError
from pano4d.losses import ReconLossConfig
from pano4d.optim import OptimizationError
from pano4d.spatial_align import (
    GeometricFieldConfig,
    SpatialAlignConfig,
    TangentDepthSet,
    align,
    depth_loss,
    fuse_panorama_depth,
    scale_reg,
    shift_smoothness,
)
from pano4d.temporal_align import MetricReference, align_sequence
from pano4d.trajectory import load_trajectory

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "project": {"resolution": 256, "fov_deg": 90.0},
    "align_spatial": {
        "lambda_alpha": 0.1, "lambda_beta": 0.1, "iterations": 1000,
        "step_size": 1e-2, "fused_height": 64,
        "field_layers": 4, "field_width": 128, "field_octaves": 6,
    },
    "reconstruct": {
        "views": 8, "view_resolution": 128, "view_fov_deg": 90.0,
        "stride": 2, "iterations": 800, "step_size": 5e-3,
        "loss": ReconLossConfig().to_json_dict(),
    },
    "render": {"write_depth": False},
}


def training_rig(count: int, resolution: int, fov: float) -> list[erp.PerspectiveCamera]:
    """Tangent-view rig used to supervise reconstruction.

    4 views: the equatorial rig.  8 views: equatorial plus an elevated ring
    at +-45 deg rotated half a step.  20: the icosahedral set.
    """
    if count == 4:
        return list(erp.default_rig(resolution, fov).cameras)
    if count == 8:
        cams = list(erp.default_rig(resolution, fov).cameras)
        for k in range(4):
            el = math.radians(45.0) if k % 2 == 0 else math.radians(-45.0)
            cams.append(erp.PerspectiveCamera(
                azimuth=(k + 0.5) * 0.5 * math.pi, elevation=el, fov=fov,
                height=resolution, width=resolution))
        return cams
    if count == 20:
        return list(erp.icosahedral_rig(resolution, fov).cameras)
    raise PipelineInputError(f"unsupported rig size {count} (use 4, 8, or 20)")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_config(path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PipelineInputError(f"cannot read config {path}: {exc}") from exc
        cfg = _merge(cfg, user)
    return cfg


def _write_run_config(out_dir: Path, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _read_pano_image(path: str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise PipelineInputError(f"input file does not exist: {p}")
    if p.suffix.lower() == ".png":
        img = io.read_png(p)
    else:
        img = io.squeeze_grid(io.read_raw_grid(p))
        if img.ndim == 4:
            raise PipelineInputError(f"{p}: expected a single frame")
    erp.erp_dims(img)
    return img


def cmd_project(args, cfg) -> int:
    section = cfg["project"]
    pano = _read_pano_image(args.input)
    out_dir = Path(args.out_dir)
    _write_run_config(out_dir, cfg)
    rig = erp.default_rig(section["resolution"], math.radians(section["fov_deg"]))
    for cam in rig:
        view = erp.project_erp_to_perspective(pano, cam, sampling="bilinear")
        name = f"view_{round(math.degrees(cam.azimuth)) % 360:03d}.png"
        io.write_png(out_dir / name, view)
    return EXIT_OK


def cmd_align_spatial(args, cfg) -> int:
    section = cfg["align_spatial"]
    depth_path = Path(args.depths)
    if not depth_path.exists():
        raise PipelineInputError(f"depth set does not exist: {depth_path}")
    grid = io.read_raw_grid(depth_path)
    if grid.shape[3] != 1:
        raise PipelineInputError(f"{depth_path}: depth grids must have one channel")
    cameras = io.read_cameras_json(args.cameras)
    if len(cameras) != grid.shape[0]:
        raise PipelineInputError(
            f"{len(cameras)} cameras for {grid.shape[0]} depth views")
    views = TangentDepthSet(depths=grid[..., 0].astype(np.float64), cameras=cameras)
    align_cfg = SpatialAlignConfig(
        lambda_alpha=section["lambda_alpha"], lambda_beta=section["lambda_beta"],
        iterations=section["iterations"], step_size=section["step_size"],
        seed=cfg["seed"],
        field=GeometricFieldConfig(hidden_layers=section["field_layers"],
                                   width=section["field_width"],
                                   octaves=section["field_octaves"]))
    out_dir = Path(args.out_dir)
    _write_run_config(out_dir, cfg)
    try:
        result = align(views, align_cfg)
    except OptimizationError as exc:
        print(f"pano4d: optimization diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    fused_h = section["fused_height"]
    fused = fuse_panorama_depth(views, result.params, result.field,
                                (fused_h, 2 * fused_h))
    io.write_raw_grid(out_dir / "fused_depth.erpf", fused)
    report = {
        "alpha_raw": result.params.raw_scale.tolist(),
        "alpha_effective": result.params.effective_scale.tolist(),
        "final_depth_loss": depth_loss(result.params, result.field, views),
        "final_scale_reg": scale_reg(result.params),
        "final_shift_smoothness": shift_smoothness(result.params),
        "final_objective": result.trace[-1]["total"],
        "iterations_recorded": len(result.trace) - 1,
    }
    (out_dir / "alignment.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_align_temporal(args, cfg) -> int:
    pano_path = Path(args.pano_depths)
    if not pano_path.exists():
        raise PipelineInputError(f"panorama depth file does not exist: {pano_path}")
    pano = io.read_raw_grid(pano_path)[..., 0].astype(np.float64)
    metric = io.read_raw_grid(args.metric_depths)[..., 0].astype(np.float64)
    poses = io.read_poses_json(args.poses)
    ref = MetricReference(depths=metric, poses=poses)
    aligned, calibrations = align_sequence(pano, ref)
    out_dir = Path(args.out_dir)
    _write_run_config(out_dir, cfg)
    io.write_raw_grid(out_dir / "aligned_depth.erpf", aligned[..., None])
    io.write_calibration_csv(out_dir / "calibration.csv", calibrations)
    return EXIT_OK


def cmd_reconstruct(args, cfg) -> int:
    section = cfg["reconstruct"]
    video_path = Path(args.video)
    if not video_path.exists():
        raise PipelineInputError(f"video file does not exist: {video_path}")
    video = io.read_raw_grid(video_path).astype(np.float64)
    if video.shape[3] != 3:
        raise PipelineInputError(f"{video_path}: expected 3 color channels")
    depths = io.read_raw_grid(args.depths)[..., 0].astype(np.float64)
    if np.any(depths <= 0):
        raise PipelineInputError(f"{args.depths}: depths must be strictly positive")
    poses = io.read_poses_json(args.poses)
    if not (video.shape[0] == depths.shape[0] == len(poses)):
        raise PipelineInputError("frame counts of video, depths, poses differ")
    scene_poses = [SceneCamera(rotation=p["R"], translation=p["t"], fov=p["fov"],
                               height=p["h"], width=p["w"]) for p in poses]
    loss_cfg = ReconLossConfig(
        lambda_l1=section["loss"]["lambda_l1"],
        lambda_ssim=section["loss"]["lambda_ssim"],
        lambda_lpips=section["loss"]["lambda_lpips"],
        lambda_sem=section["loss"]["lambda_sem"],
        lambda_geo=section["loss"]["lambda_geo"],
        sem_window=tuple(section["loss"]["sem_window"]),
        iterations=section["loss"]["iterations"],
        perturb_rot_deg=section["loss"]["perturb_rot_deg"],
        perturb_trans_frac=section["loss"]["perturb_trans_frac"])
    rig = training_rig(section["views"], section["view_resolution"],
                       math.radians(section["view_fov_deg"]))
    out_dir = Path(args.out_dir)
    _write_run_config(out_dir, cfg)
    try:
        frames, traces = reconstruct_4d(
            video, depths, scene_poses, loss_cfg, rig,
            stride=section["stride"], seed=cfg["seed"],
            iterations=section["iterations"], step_size=section["step_size"],
            jobs=cfg["jobs"])
    except OptimizationError as exc:
        print(f"pano4d: optimization diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for t, (gs, trace) in enumerate(zip(frames, traces)):
        io.write_gaussians_ply(out_dir / f"frame_{t:04d}.ply", gs)
        io.write_loss_trace_csv(out_dir / f"loss_{t:04d}.csv", trace)
    return EXIT_OK


def cmd_render(args, cfg) -> int:
    from pano4d.raster import RasterizeConfig, rasterize

    scene_dir = Path(args.scene_dir)
    plys = sorted(scene_dir.glob("frame_*.ply"))
    if not plys:
        raise PipelineInputError(f"no frame_*.ply files in {scene_dir}")
    spec = load_trajectory(args.trajectory)
    frames = [io.read_gaussians_ply(p) for p in plys]
    out_dir = Path(args.out_dir)
    _write_run_config(out_dir, cfg)
    raster_cfg = RasterizeConfig()
    for step, cam in enumerate(spec.cameras()):
        frame_idx = spec.frame_for_step(step)
        if not (0 <= frame_idx < len(frames)):
            raise PipelineInputError(
                f"trajectory step {step} references frame {frame_idx}, "
                f"but only {len(frames)} frames exist")
        result = rasterize(frames[frame_idx], cam, raster_cfg)
        io.write_png(out_dir / f"step_{step:04d}.png", np.clip(result.color, 0, 1))
        if cfg["render"]["write_depth"] or args.write_depth:
            io.write_raw_grid(out_dir / f"step_{step:04d}_depth.erpf", result.depth)
    return EXIT_OK


def cmd_export_ply(args, cfg) -> int:
    pano = _read_pano_image(args.pano)
    if pano.ndim != 3:
        raise PipelineInputError("panorama must be a color image")
    depth = io.squeeze_grid(io.read_raw_grid(args.depth))
    if depth.ndim != 2:
        raise PipelineInputError(f"{args.depth}: expected a single depth frame")
    if np.any(depth <= 0):
        raise PipelineInputError(f"{args.depth}: depths must be strictly positive")
    out_dir = Path(args.out_dir)
    _write_run_config(out_dir, cfg)
    gs = lift_depth_to_gaussians(pano, depth.astype(np.float64), stride=args.stride)
    io.write_gaussians_ply(out_dir / "gaussians.ply", gs)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pano4d",
        description="Panorama geometry and Gaussian-splat 4D reconstruction")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=None)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project a panorama into rig views")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("align-spatial", help="fuse tangent depth views")
    p.add_argument("--depths", required=True)
    p.add_argument("--cameras", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_align_spatial)

    p = sub.add_parser("align-temporal", help="metric-calibrate a depth sequence")
    p.add_argument("--pano-depths", required=True)
    p.add_argument("--metric-depths", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_align_temporal)

    p = sub.add_parser("reconstruct", help="optimize per-frame Gaussian sets")
    p.add_argument("--video", required=True)
    p.add_argument("--depths", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("render", help="render a camera trajectory")
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--write-depth", action="store_true")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("export-ply", help="lift a panorama to a Gaussian PLY")
    p.add_argument("--pano", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stride", type=int, default=2)
    p.set_defaults(func=cmd_export_ply)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.jobs is not None:
            cfg["jobs"] = args.jobs
        return args.func(args, cfg)
    except PipelineInputError as exc:
        print(f"pano4d: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OptimizationError as exc:
        print(f"pano4d: optimization diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"pano4d: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
