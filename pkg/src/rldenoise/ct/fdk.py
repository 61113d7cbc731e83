"""Feldkamp-Davis-Kress reconstruction for circular cone-beam scans.

Steps: cosine-weight each projection, ramp-filter each detector row with the
band-limited discrete ramp kernel (optionally softened by a cosine window),
then backproject with inverse-square distance weighting.  Detector
coordinates are rescaled to the isocenter plane, so the ramp kernel spacing
equals the scaled column pitch.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit

from .geometry import ConeBeamGeometry
from .volume import Volume, Sinogram, mu_to_hu, MU_WATER_PER_MM


def ramp_kernel(n: int, spacing: float) -> np.ndarray:
    """Band-limited ramp filter in the spatial domain, length n (wrapped).

    Center tap 1/(4 T^2), odd taps -1/(pi n T)^2, even taps zero.
    """
    if n < 2:
        raise ValueError("kernel length must be >= 2")
    if spacing <= 0:
        raise ValueError("sample spacing must be positive")
    idx = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
    h = np.zeros(n, dtype=np.float64)
    h[0] = 1.0 / (4.0 * spacing * spacing)
    odd = idx % 2 != 0
    h[odd] = -1.0 / (np.pi * idx[odd] * spacing) ** 2
    return h


def _filter_rows(proj: np.ndarray, du: float, window: str) -> np.ndarray:
    """Ramp-filter the last axis of (rows, cols) data, discrete convolution
    scaled by the sample pitch."""
    cols = proj.shape[-1]
    size = 1
    while size < 2 * cols:
        size *= 2
    h = ramp_kernel(size, du)
    hf = np.fft.rfft(h).real
    if window == "cosine":
        f = np.fft.rfftfreq(size, du)
        hf = hf * np.cos(0.5 * np.pi * f / f[-1])
    elif window != "none":
        raise ValueError(f"unknown filter window {window!r}")
    spec = np.fft.rfft(proj, n=size, axis=-1)
    filt = np.fft.irfft(spec * hf, n=size, axis=-1)[..., :cols]
    return filt * du


@njit(cache=True)
def _backproject(filtered, angles, r_iso, du, dv, sx, sy, sz, out):
    n_views, n_rows, n_cols = filtered.shape
    nx, ny, nz = out.shape
    cu0 = (n_cols - 1) / 2.0
    cv0 = (n_rows - 1) / 2.0
    for a in range(n_views):
        cb = np.cos(angles[a])
        sb = np.sin(angles[a])
        view = filtered[a]
        for ix in range(nx):
            x = (ix - (nx - 1) / 2.0) * sx
            for iy in range(ny):
                y = (iy - (ny - 1) / 2.0) * sy
                big_u = r_iso - x * cb - y * sb
                if big_u < 1e-6:
                    continue
                w = (r_iso / big_u) ** 2
                u_iso = r_iso * (-x * sb + y * cb) / big_u
                cu = u_iso / du + cu0
                if cu < 0.0 or cu > n_cols - 1:
                    continue
                ju = int(np.floor(cu))
                if ju > n_cols - 2:
                    ju = n_cols - 2
                fu = cu - ju
                zscale = r_iso / big_u / dv
                for iz in range(nz):
                    z = (iz - (nz - 1) / 2.0) * sz
                    cv = z * zscale + cv0
                    if cv < 0.0 or cv > n_rows - 1:
                        continue
                    jv = int(np.floor(cv))
                    if jv > n_rows - 2:
                        jv = n_rows - 2
                    fv = cv - jv
                    val = (view[jv, ju] * (1 - fv) * (1 - fu)
                           + view[jv, ju + 1] * (1 - fv) * fu
                           + view[jv + 1, ju] * fv * (1 - fu)
                           + view[jv + 1, ju + 1] * fv * fu)
                    out[ix, iy, iz] += w * val


def fdk_reconstruct(sino: Sinogram, geom: ConeBeamGeometry, extents, spacing,
                    *, window: str = "none", out_units: str = "hu",
                    mu_water: float = MU_WATER_PER_MM) -> Volume:
    """Reconstruct a volume from a cone-beam sinogram.

    extents/spacing define the output grid (centered at the isocenter).
    window "cosine" softens the ramp filter rolloff; "none" is the plain
    band-limited ramp.  Output units are HU by default, "mu" for raw
    attenuation (in which the whole transform is linear in the input).
    """
    extents = tuple(int(n) for n in extents)
    spacing = tuple(float(s) for s in spacing)
    if len(extents) != 3 or any(n < 1 for n in extents):
        raise ValueError(f"bad output extents {extents}")
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise ValueError(f"bad output spacing {spacing}")
    if out_units not in ("hu", "mu"):
        raise ValueError(f"out_units must be 'hu' or 'mu', got {out_units!r}")
    angles = sino.angles
    n_views = sino.n_views
    if n_views < 2:
        raise ValueError("need at least two views to reconstruct")
    import math
    half_fan = math.atan(0.5 * geom.det_width_mm / geom.source_to_detector_mm)
    span = float(angles.max() - angles.min())
    pitch = span / (n_views - 1)
    if span + pitch < np.pi + 2 * half_fan - 1e-9:
        warnings.warn("angular coverage below the short-scan minimum; "
                      "reconstruction will show limited-angle artifacts",
                      stacklevel=2)
    mag = geom.source_to_iso_mm / geom.source_to_detector_mm
    du = geom.det_col_width_mm * mag
    dv = geom.det_row_height_mm * mag
    r = geom.source_to_iso_mm
    u = (np.arange(geom.det_cols) - (geom.det_cols - 1) / 2.0) * du
    v = (np.arange(geom.det_rows) - (geom.det_rows - 1) / 2.0) * dv
    cosw = r / np.sqrt(r * r + u[None, :] ** 2 + v[:, None] ** 2)
    filtered = np.empty_like(sino.values)
    for a in range(n_views):
        filtered[a] = _filter_rows(sino.values[a] * cosw, du, window)
    acc = np.zeros(extents, dtype=np.float64)
    _backproject(filtered, angles, r, du, dv, spacing[0], spacing[1], spacing[2], acc)
    dbeta = pitch
    mu = acc * (0.5 * dbeta)
    if out_units == "mu":
        return Volume(mu, spacing, "mu")
    return Volume(mu_to_hu(mu, mu_water), spacing, "hu")
