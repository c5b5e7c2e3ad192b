"""Benchmark: compiled vs pure-Python compositing kernels.

Renders panoramic splat scenes of increasing size through a 128x128 camera
and times forward and forward+backward passes on each backend, verifying
along the way that the two produce the same images.

    python benchmarks/bench_rasterizer.py [--sizes 1000 4000 16000]
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from pano4d import raster  # noqa: E402
from pano4d.gaussians import GaussianSet, SceneCamera  # noqa: E402
from pano4d.raster import rasterize, rasterize_backward  # noqa: E402


def make_scene(n: int, seed: int = 0) -> GaussianSet:
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    depth = rng.uniform(2.0, 4.0, n)
    return GaussianSet(
        means=dirs * depth[:, None],
        quats=rng.normal(size=(n, 4)),
        log_scales=np.log(rng.uniform(0.02, 0.08, (n, 3))),
        opacity_raw=rng.normal(0.5, 0.8, n),
        colors=rng.uniform(0.0, 1.0, (n, 3)))


def time_backend(backend: str, gs: GaussianSet, cam: SceneCamera,
                 repeats: int) -> tuple[float, float, np.ndarray]:
    raster.set_backend(backend)
    rng = np.random.default_rng(1)
    d_color = rng.normal(size=(cam.height, cam.width, 3))
    # warm-up
    result = rasterize(gs, cam, want_grad=True)
    rasterize_backward(result.cache, d_color=d_color)
    fwd = bwd = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = rasterize(gs, cam, want_grad=True)
        t1 = time.perf_counter()
        rasterize_backward(result.cache, d_color=d_color)
        t2 = time.perf_counter()
        fwd = min(fwd, t1 - t0)
        bwd = min(bwd, t2 - t1)
    return fwd, bwd, result.color


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[1000, 4000, 16000])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = ["python"]
    if "cython" in raster._BACKENDS:
        backends.append("cython")
    else:
        print("compiled kernels not built; benchmarking the fallback only")

    cam = SceneCamera(rotation=np.eye(3), translation=np.zeros(3),
                      fov=math.pi / 2, height=128, width=128)
    print(f"{'splats':>8} {'backend':>8} {'forward':>10} {'backward':>10} "
          f"{'speedup':>8}")
    for n in args.sizes:
        gs = make_scene(n)
        rows = {}
        images = {}
        for backend in backends:
            fwd, bwd, img = time_backend(backend, gs, cam, args.repeats)
            rows[backend] = (fwd, bwd)
            images[backend] = img
        if len(backends) == 2:
            diff = np.abs(images["python"] - images["cython"]).max()
            assert diff < 1e-12, f"backend mismatch: {diff}"
        base = rows["python"][0] + rows["python"][1]
        for backend in backends:
            fwd, bwd = rows[backend]
            speedup = base / (fwd + bwd)
            print(f"{n:>8} {backend:>8} {fwd * 1e3:>8.1f}ms {bwd * 1e3:>8.1f}ms "
                  f"{speedup:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
