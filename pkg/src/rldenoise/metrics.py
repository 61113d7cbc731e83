"""Image-quality metrics: windowed PSNR and SSIM, gradient SSIM, the
no-reference training target, and the distance-ratio objective reward.

PSNR and SSIM operate on a clinical display window: both inputs are clipped
to [lo, hi] first and the window width serves as the dynamic range, so
metric values reflect the range a reader actually inspects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d


@dataclass(frozen=True)
class EvalWindow:
    """Display window in HU: clip range and dynamic range for metrics."""

    lo: float = -160.0
    hi: float = 240.0

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError(f"window needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def clip(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lo, self.hi)


SOFT_TISSUE_WINDOW = EvalWindow(-160.0, 240.0)

# Air threshold for evaluation masks.
AIR_THRESHOLD_HU = -500.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(test: np.ndarray, ref: np.ndarray, window: EvalWindow = SOFT_TISSUE_WINDOW,
         mask: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio over a display window, in dB.

    Identical inputs give +inf.  An optional boolean mask restricts the MSE
    to selected voxels.
    """
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if test.shape != ref.shape:
        raise ValueError(f"shape mismatch: {test.shape} vs {ref.shape}")
    a = window.clip(test)
    b = window.clip(ref)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError(f"mask shape {mask.shape} does not match {a.shape}")
        if not mask.any():
            raise ValueError("mask selects no voxels")
        a = a[mask]
        b = b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(window.width ** 2 / mse)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    ax = np.arange(size) - half
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_core(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    """Mean SSIM over valid (fully inside) 11x11 Gaussian windows."""
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image {x.shape} smaller than the {SSIM_WINDOW}x"
                         f"{SSIM_WINDOW} SSIM window")
    k = _gaussian_kernel()
    mu_x = convolve2d(x, k, mode="valid")
    mu_y = convolve2d(y, k, mode="valid")
    xx = convolve2d(x * x, k, mode="valid")
    yy = convolve2d(y * y, k, mode="valid")
    xy = convolve2d(x * y, k, mode="valid")
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def ssim(test: np.ndarray, ref: np.ndarray,
         window: EvalWindow = SOFT_TISSUE_WINDOW) -> float:
    """Windowed structural similarity between two 2D images."""
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if test.ndim != 2 or test.shape != ref.shape:
        raise ValueError(f"expected equal-shape 2D images, got {test.shape} "
                         f"vs {ref.shape}")
    return _ssim_core(window.clip(test), window.clip(ref), window.width)


def ssim_volume(test: np.ndarray, ref: np.ndarray,
                window: EvalWindow = SOFT_TISSUE_WINDOW) -> float:
    """Mean SSIM over the axial (z) slices of two volumes."""
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if test.ndim != 3 or test.shape != ref.shape:
        raise ValueError(f"expected equal-shape 3D volumes, got {test.shape} "
                         f"vs {ref.shape}")
    return float(np.mean([ssim(test[:, :, z], ref[:, :, z], window)
                          for z in range(test.shape[2])]))


def _gradient_magnitude(img: np.ndarray) -> np.ndarray:
    gx, gy = np.gradient(img)
    return np.hypot(gx, gy)


def gssim(test: np.ndarray, ref: np.ndarray) -> float:
    """SSIM on gradient-magnitude maps, rewarding preserved edges.

    The dynamic range is the span covered by both gradient maps together.
    Two identical constant maps (zero span) count as a perfect match.
    """
    test = np.asarray(test, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if test.ndim != 2 or test.shape != ref.shape:
        raise ValueError(f"expected equal-shape 2D images, got {test.shape} "
                         f"vs {ref.shape}")
    gt = _gradient_magnitude(test)
    gr = _gradient_magnitude(ref)
    span = float(max(gt.max(), gr.max()) - min(gt.min(), gr.min()))
    if span == 0.0:
        return 1.0
    return _ssim_core(gt, gr, span)


def reward_target(noisy: np.ndarray, clean: np.ndarray,
                  window: EvalWindow = SOFT_TISSUE_WINDOW,
                  roi: float = 81.0) -> float:
    """Supervised target for the no-reference quality network:
    GSSIM(noisy, clean) + 1 / (MSE(noisy, clean) / roi + 1).

    Both terms are computed on window-clipped images; a perfect match scores
    exactly 2.0.  The MSE is divided by the 81-pixel reference ROI area.
    """
    noisy = np.asarray(noisy, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    if noisy.shape != clean.shape:
        raise ValueError(f"shape mismatch: {noisy.shape} vs {clean.shape}")
    a = window.clip(noisy)
    b = window.clip(clean)
    mse = float(np.mean((a - b) ** 2))
    return gssim(a, b) + 1.0 / (mse / roi + 1.0)


REWARD_CAP = 1e6
_NORM_EPS = 1e-12


def objective_reward(prev_state: np.ndarray, next_state: np.ndarray,
                     truth: np.ndarray) -> float:
    """Distance-ratio reward against a known ground truth:
    |truth| / |next - truth|  -  |truth| / |prev - truth|.

    Positive when the step moved closer to the truth.  Denominators are
    floored at 1e-12 and each ratio capped at 1e6, so an exact hit yields
    the cap instead of infinity.  next == prev gives exactly zero.
    """
    prev_state = np.asarray(prev_state, dtype=np.float64)
    next_state = np.asarray(next_state, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if prev_state.shape != truth.shape or next_state.shape != truth.shape:
        raise ValueError("prev, next and truth must share one shape")
    t_norm = float(np.linalg.norm(truth))
    d_next = max(float(np.linalg.norm(next_state - truth)), _NORM_EPS)
    d_prev = max(float(np.linalg.norm(prev_state - truth)), _NORM_EPS)
    return min(t_norm / d_next, REWARD_CAP) - min(t_norm / d_prev, REWARD_CAP)
