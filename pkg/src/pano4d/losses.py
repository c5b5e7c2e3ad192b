"""Reconstruction losses: L1, SSIM, Pearson depth correlation, and the
feature-cosine semantic term, all with analytic gradients w.r.t. the
rendered image (verified against finite differences in the test suite).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2  # data range fixed to 1.0
SSIM_C2 = 0.03 ** 2


@dataclass
class ReconLossConfig:
    """Weights and schedule of the splat-optimization objective."""

    lambda_l1: float = 0.8
    lambda_ssim: float = 0.2
    lambda_lpips: float = 0.05
    lambda_sem: float = 1.0
    lambda_geo: float = 0.05
    sem_window: tuple[int, int] = (5400, 9000)  # [start, end) in iterations
    iterations: int = 15000
    perturb_rot_deg: float = 2.0
    perturb_trans_frac: float = 0.01

    def __post_init__(self):
        for name in ("lambda_l1", "lambda_ssim", "lambda_lpips", "lambda_sem", "lambda_geo"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        start, end = self.sem_window
        if not (0 <= start <= end <= self.iterations):
            raise ValueError("semantic window must lie within the total iterations")

    def to_json_dict(self) -> dict:
        return {
            "lambda_l1": self.lambda_l1,
            "lambda_ssim": self.lambda_ssim,
            "lambda_lpips": self.lambda_lpips,
            "lambda_sem": self.lambda_sem,
            "lambda_geo": self.lambda_geo,
            "sem_window": list(self.sem_window),
            "iterations": self.iterations,
            "perturb_rot_deg": self.perturb_rot_deg,
            "perturb_trans_frac": self.perturb_trans_frac,
        }


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(a - b)))


def l1_loss_and_grad(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    diff = a - b
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def _gauss_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _window_filter(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable windowed correlation cropped to fully-interior positions."""
    r = len(k) // 2
    a = correlate1d(img, k, axis=0, mode="constant")
    a = correlate1d(a, k, axis=1, mode="constant")
    return a[r:img.shape[0] - r, r:img.shape[1] - r]


def _window_adjoint(fld: np.ndarray, k: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    r = len(k) // 2
    canvas = np.zeros(shape, dtype=np.float64)
    canvas[r:shape[0] - r, r:shape[1] - r] = fld
    a = correlate1d(canvas, k, axis=0, mode="constant")
    return correlate1d(a, k, axis=1, mode="constant")


def _ssim_channel(x: np.ndarray, y: np.ndarray, k: np.ndarray, want_grad: bool):
    mx = _window_filter(x, k)
    my = _window_filter(y, k)
    vx = _window_filter(x * x, k) - mx * mx
    vy = _window_filter(y * y, k) - my * my
    cxy = _window_filter(x * y, k) - mx * my
    a1 = 2 * mx * my + SSIM_C1
    a2 = 2 * cxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = vx + vy + SSIM_C2
    s = (a1 * a2) / (b1 * b2)
    value = float(np.mean(s))
    if not want_grad:
        return value, None
    # d mean(s)/dx, derived by the quotient rule then pushed through the
    # (windowed mean, variance, covariance) adjoints.
    coef = 1.0 / s.size
    ds_dmx = coef * (2 * my * a2 / (b1 * b2) - 2 * mx * a1 * a2 / (b1 * b1 * b2))
    ds_dvx = coef * (-a1 * a2 / (b1 * b2 * b2))
    ds_dcxy = coef * (2 * a1 / (b1 * b2))
    g1 = ds_dmx - 2 * mx * ds_dvx - my * ds_dcxy
    grad = (_window_adjoint(g1, k, x.shape)
            + 2 * x * _window_adjoint(ds_dvx, k, x.shape)
            + y * _window_adjoint(ds_dcxy, k, x.shape))
    return value, grad


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean structural similarity, 11x11 Gaussian window (sigma 1.5),
    standard constants, unit data range.  Multi-channel inputs average the
    per-channel index."""
    return ssim_and_grad(x, y, want_grad=False)[0]


def ssim_and_grad(x: np.ndarray, y: np.ndarray, want_grad: bool = True):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}px in each dimension")
    k = _gauss_kernel()
    if x.ndim == 2:
        return _ssim_channel(x, y, k, want_grad)
    vals = []
    grad = np.zeros_like(x) if want_grad else None
    for c in range(x.shape[2]):
        v, g = _ssim_channel(x[..., c], y[..., c], k, want_grad)
        vals.append(v)
        if want_grad:
            grad[..., c] = g / x.shape[2]
    return float(np.mean(vals)), grad


def pearson_loss(rendered: np.ndarray, reference: np.ndarray) -> float:
    return pearson_loss_and_grad(rendered, reference)[0]


def pearson_loss_and_grad(rendered: np.ndarray, reference: np.ndarray):
    """1 - Pearson correlation between two grids; range [0, 2].

    Exactly 0 for any positive affine map of the reference.  Zero variance
    in either grid is degenerate: the loss is defined as 1 with zero
    gradient and a warning is emitted.
    """
    x = np.asarray(rendered, dtype=np.float64).ravel()
    y = np.asarray(reference, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("shape mismatch")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx <= 0.0 or syy <= 0.0:
        warnings.warn("constant grid in correlation loss; returning loss 1", stacklevel=2)
        return 1.0, np.zeros_like(np.asarray(rendered, dtype=np.float64))
    sxy = float(xc @ yc)
    denom = np.sqrt(sxx * syy)
    rho = sxy / denom
    grad = -((yc - xc * (sxy / sxx)) / denom)
    return 1.0 - rho, grad.reshape(np.asarray(rendered).shape)


class PyramidMeanFeatures:
    """Default feature extractor: per-channel patch means at 3 pyramid
    levels (1x1, 2x2, 4x4 blocks).  Deterministic, fixed output dimension
    for any input size, linear (so the backward pass is exact)."""

    levels = (1, 2, 4)

    def dim(self, channels: int = 3) -> int:
        return channels * sum(l * l for l in self.levels)

    @staticmethod
    def _blocks(n: int, parts: int) -> list[slice]:
        bounds = np.linspace(0, n, parts + 1).astype(int)
        return [slice(bounds[i], bounds[i + 1]) for i in range(parts)]

    def __call__(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 2:
            img = img[..., None]
        feats = []
        for level in self.levels:
            for rs in self._blocks(img.shape[0], level):
                for cs in self._blocks(img.shape[1], level):
                    feats.append(img[rs, cs].mean(axis=(0, 1)))
        return np.concatenate(feats)

    def backprop(self, img_shape: tuple, dfeat: np.ndarray) -> np.ndarray:
        shape = tuple(img_shape)
        squeeze = len(shape) == 2
        if squeeze:
            shape = shape + (1,)
        grad = np.zeros(shape, dtype=np.float64)
        i = 0
        c = shape[2]
        for level in self.levels:
            for rs in self._blocks(shape[0], level):
                for cs in self._blocks(shape[1], level):
                    block = grad[rs, cs]
                    count = block.shape[0] * block.shape[1]
                    block += dfeat[i:i + c] / count
                    i += c
        return grad[..., 0] if squeeze else grad


def semantic_loss(img_a: np.ndarray, img_b: np.ndarray, extractor) -> float:
    return semantic_loss_and_grads(img_a, img_b, extractor)[0]


def semantic_loss_and_grads(img_a: np.ndarray, img_b: np.ndarray, extractor):
    """1 - cosine similarity of extracted features; range [0, 2].

    A zero-norm feature vector is treated as orthogonal (loss 1, zero
    gradient) with a warning.
    """
    fa = extractor(img_a)
    fb = extractor(img_b)
    na = float(np.linalg.norm(fa))
    nb = float(np.linalg.norm(fb))
    if na == 0.0 or nb == 0.0:
        warnings.warn("zero-norm feature vector in semantic loss; returning loss 1",
                      stacklevel=2)
        zero_a = np.zeros(np.shape(img_a), dtype=np.float64)
        zero_b = np.zeros(np.shape(img_b), dtype=np.float64)
        return 1.0, zero_a, zero_b
    cos = float(fa @ fb) / (na * nb)
    dcos_dfa = fb / (na * nb) - cos * fa / (na * na)
    dcos_dfb = fa / (na * nb) - cos * fb / (nb * nb)
    ga = extractor.backprop(np.shape(img_a), -dcos_dfa)
    gb = extractor.backprop(np.shape(img_b), -dcos_dfb)
    return 1.0 - cos, ga, gb


class PatchStatsPerceptual:
    """Optional lightweight perceptual metric: squared distance between
    pyramid patch-mean features.  Plug into :func:`rgb_loss` in place of a
    pretrained perceptual network."""

    def __init__(self):
        self._fx = PyramidMeanFeatures()

    def loss_and_grad(self, a: np.ndarray, b: np.ndarray):
        fa = self._fx(a)
        fb = self._fx(b)
        diff = fa - fb
        val = float(diff @ diff) / diff.size
        grad = self._fx.backprop(np.shape(a), 2.0 * diff / diff.size)
        return val, grad


def rgb_loss(rendered: np.ndarray, target: np.ndarray, cfg: ReconLossConfig,
             perceptual=None) -> float:
    return rgb_loss_and_grad(rendered, target, cfg, perceptual)[0]


def rgb_loss_and_grad(rendered: np.ndarray, target: np.ndarray, cfg: ReconLossConfig,
                      perceptual=None):
    """Weighted photometric loss: lambda_l1*L1 + lambda_ssim*(1-SSIM)
    + lambda_lpips*perceptual.  The perceptual term contributes 0 when no
    metric is plugged in.

    Returns (total, grad w.r.t. rendered, components dict).
    """
    if rendered.shape != target.shape:
        raise ValueError(f"shape mismatch {rendered.shape} vs {target.shape}")
    l1, g_l1 = l1_loss_and_grad(rendered, target)
    ssim_val, g_ssim = ssim_and_grad(rendered, target)
    ssim_loss = 1.0 - ssim_val
    lp = 0.0
    grad = cfg.lambda_l1 * g_l1 - cfg.lambda_ssim * g_ssim
    if perceptual is not None:
        lp, g_lp = perceptual.loss_and_grad(rendered, target)
        grad = grad + cfg.lambda_lpips * g_lp
    total = cfg.lambda_l1 * l1 + cfg.lambda_ssim * ssim_loss + cfg.lambda_lpips * lp
    return total, grad, {"l1": l1, "ssim": ssim_loss, "lpips": lp}


def psnr(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(data_range ** 2 / mse)
