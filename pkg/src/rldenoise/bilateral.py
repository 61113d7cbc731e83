"""Bilateral filters over detector views (5x5) and volumes (5x5x5).

The filtered value is a weighted mean over the neighborhood; each neighbor
is weighted by a spatial Gaussian in its offset distance times an intensity
Gaussian in its value difference from the center.  Gaussian normalization
factors cancel in the ratio.  At borders the neighborhood is truncated to
in-bounds voxels and the weights renormalized over what remains.

2D filtering uses one (sigma_i, sigma_s) pair per view; 3D filtering reads
per-voxel sigma fields, so every output voxel can be smoothed differently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .ct.volume import Volume

SIGMA_MIN = 0.1
SIGMA_MAX = 100.0


def gaussian_weight(x, sigma):
    """exp(-x^2 / (2 sigma^2)) / (2 sigma^2), elementwise."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
        raise ValueError("sigma must be positive and finite")
    x = np.asarray(x, dtype=np.float64)
    s2 = 2.0 * sigma * sigma
    return np.exp(-(x * x) / s2) / s2


@dataclass
class BilateralParams2D:
    """Per-view filter widths for a stack of detector views."""

    sigma_i: np.ndarray
    sigma_s: np.ndarray

    def __post_init__(self):
        self.sigma_i = np.asarray(self.sigma_i, dtype=np.float64)
        self.sigma_s = np.asarray(self.sigma_s, dtype=np.float64)
        if self.sigma_i.ndim != 1 or self.sigma_i.shape != self.sigma_s.shape:
            raise ValueError("sigma_i and sigma_s must be 1D arrays of equal length")
        _check_sigma(self.sigma_i)
        _check_sigma(self.sigma_s)

    @property
    def n_views(self) -> int:
        return self.sigma_i.size

    def copy(self) -> "BilateralParams2D":
        return BilateralParams2D(self.sigma_i.copy(), self.sigma_s.copy())


@dataclass
class BilateralParams3D:
    """Per-voxel filter widths for a volume."""

    sigma_i: np.ndarray
    sigma_s: np.ndarray

    def __post_init__(self):
        self.sigma_i = np.asarray(self.sigma_i, dtype=np.float64)
        self.sigma_s = np.asarray(self.sigma_s, dtype=np.float64)
        if self.sigma_i.ndim != 3 or self.sigma_i.shape != self.sigma_s.shape:
            raise ValueError("sigma_i and sigma_s must be 3D arrays of equal shape")
        _check_sigma(self.sigma_i)
        _check_sigma(self.sigma_s)

    @property
    def shape(self):
        return self.sigma_i.shape

    def copy(self) -> "BilateralParams3D":
        return BilateralParams3D(self.sigma_i.copy(), self.sigma_s.copy())


def _check_sigma(arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("sigma values must be positive and finite")


@njit(cache=True)
def _filt2d(img, sigma_i, sigma_s, out):
    h, w = img.shape
    table = np.empty((5, 5), dtype=np.float64)
    si2 = 2.0 * sigma_i * sigma_i
    ss2 = 2.0 * sigma_s * sigma_s
    for dr in range(-2, 3):
        for dc in range(-2, 3):
            table[dr + 2, dc + 2] = np.exp(-(dr * dr + dc * dc) / ss2)
    for r in range(h):
        for c in range(w):
            center = img[r, c]
            num = 0.0
            den = 0.0
            for dr in range(-2, 3):
                rr = r + dr
                if rr < 0 or rr >= h:
                    continue
                for dc in range(-2, 3):
                    cc = c + dc
                    if cc < 0 or cc >= w:
                        continue
                    diff = img[rr, cc] - center
                    wgt = table[dr + 2, dc + 2] * np.exp(-(diff * diff) / si2)
                    num += wgt * img[rr, cc]
                    den += wgt
            out[r, c] = num / den


@njit(cache=True)
def _filt3d(vol, sigma_i, sigma_s, out):
    nx, ny, nz = vol.shape
    # squared offset distances range over the integers 0..12
    dist_table = np.empty(13, dtype=np.float64)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                center = vol[x, y, z]
                si2 = 2.0 * sigma_i[x, y, z] * sigma_i[x, y, z]
                ss2 = 2.0 * sigma_s[x, y, z] * sigma_s[x, y, z]
                for d2 in range(13):
                    dist_table[d2] = np.exp(-d2 / ss2)
                num = 0.0
                den = 0.0
                for dx in range(-2, 3):
                    xx = x + dx
                    if xx < 0 or xx >= nx:
                        continue
                    for dy in range(-2, 3):
                        yy = y + dy
                        if yy < 0 or yy >= ny:
                            continue
                        for dz in range(-2, 3):
                            zz = z + dz
                            if zz < 0 or zz >= nz:
                                continue
                            diff = vol[xx, yy, zz] - center
                            d2 = dx * dx + dy * dy + dz * dz
                            wgt = dist_table[d2] * np.exp(-(diff * diff) / si2)
                            num += wgt * vol[xx, yy, zz]
                            den += wgt
                out[x, y, z] = num / den


def bilateral_2d(image: np.ndarray, sigma_i: float, sigma_s: float) -> np.ndarray:
    """Filter one 2D image with scalar widths."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    _check_sigma(np.asarray([sigma_i, sigma_s]))
    out = np.empty_like(image)
    _filt2d(image, float(sigma_i), float(sigma_s), out)
    return out


def bilateral_3d_values(values: np.ndarray, params: BilateralParams3D) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {values.shape}")
    if values.shape != params.shape:
        raise ValueError(f"sigma fields have shape {params.shape}, "
                         f"volume has shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("volume contains non-finite values")
    out = np.empty_like(values)
    _filt3d(np.ascontiguousarray(values),
            np.ascontiguousarray(params.sigma_i),
            np.ascontiguousarray(params.sigma_s), out)
    return out


def bilateral_3d(vol: Volume, params: BilateralParams3D) -> Volume:
    """Filter a volume with per-voxel widths."""
    return Volume(bilateral_3d_values(vol.values, params), vol.spacing, vol.units)


def apply_filt_sin(sino_values: np.ndarray, params: BilateralParams2D) -> np.ndarray:
    """Filter every view of a (views, rows, cols) stack with its own widths."""
    sino_values = np.asarray(sino_values, dtype=np.float64)
    if sino_values.ndim != 3:
        raise ValueError(f"expected (views, rows, cols), got shape {sino_values.shape}")
    if sino_values.shape[0] != params.n_views:
        raise ValueError(f"params cover {params.n_views} views, "
                         f"sinogram has {sino_values.shape[0]}")
    if not np.all(np.isfinite(sino_values)):
        raise ValueError("sinogram contains non-finite values")
    out = np.empty_like(sino_values)
    for v in range(sino_values.shape[0]):
        _filt2d(sino_values[v], params.sigma_i[v], params.sigma_s[v], out[v])
    return out
