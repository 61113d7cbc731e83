"""Cone-beam forward projection by trilinear ray marching."""

from __future__ import annotations

import numpy as np
from numba import njit

from .geometry import ConeBeamGeometry
from .volume import Volume, Sinogram


@njit(cache=True)
def _march_views(vol, sx, sy, sz, srcs, u_offs, v_offs, u_vecs, v_vecs, e_vecs,
                 sdd, step_max, out):
    nx, ny, nz = vol.shape
    hx = 0.5 * (nx - 1) * sx
    hy = 0.5 * (ny - 1) * sy
    hz = 0.5 * (nz - 1) * sz
    n_views = srcs.shape[0]
    n_rows = v_offs.shape[0]
    n_cols = u_offs.shape[0]
    for a in range(n_views):
        sx0, sy0, sz0 = srcs[a, 0], srcs[a, 1], srcs[a, 2]
        cx = sx0 + sdd * e_vecs[a, 0]
        cy = sy0 + sdd * e_vecs[a, 1]
        cz = sz0 + sdd * e_vecs[a, 2]
        for i in range(n_rows):
            for j in range(n_cols):
                px = cx + u_offs[j] * u_vecs[a, 0] + v_offs[i] * v_vecs[a, 0]
                py = cy + u_offs[j] * u_vecs[a, 1] + v_offs[i] * v_vecs[a, 1]
                pz = cz + u_offs[j] * u_vecs[a, 2] + v_offs[i] * v_vecs[a, 2]
                dx = px - sx0
                dy = py - sy0
                dz = pz - sz0
                t0 = 0.0
                t1 = 1.0
                # slab-clip the ray against the voxel-center bounding box
                ok = True
                for axis in range(3):
                    if axis == 0:
                        d, s0, h = dx, sx0, hx
                    elif axis == 1:
                        d, s0, h = dy, sy0, hy
                    else:
                        d, s0, h = dz, sz0, hz
                    if abs(d) < 1e-12:
                        if abs(s0) > h:
                            ok = False
                            break
                    else:
                        ta = (-h - s0) / d
                        tb = (h - s0) / d
                        if ta > tb:
                            ta, tb = tb, ta
                        if ta > t0:
                            t0 = ta
                        if tb < t1:
                            t1 = tb
                if not ok or t1 <= t0:
                    out[a, i, j] = 0.0
                    continue
                ray_len = np.sqrt(dx * dx + dy * dy + dz * dz)
                seg = (t1 - t0) * ray_len
                n_steps = int(np.ceil(seg / step_max))
                if n_steps < 1:
                    n_steps = 1
                dt = (t1 - t0) / n_steps
                acc = 0.0
                for k in range(n_steps):
                    t = t0 + (k + 0.5) * dt
                    fx = (sx0 + t * dx + hx) / sx
                    fy = (sy0 + t * dy + hy) / sy
                    fz = (sz0 + t * dz + hz) / sz
                    ix = int(np.floor(fx))
                    iy = int(np.floor(fy))
                    iz = int(np.floor(fz))
                    if ix < 0:
                        ix = 0
                    elif ix > nx - 2:
                        ix = nx - 2
                    if iy < 0:
                        iy = 0
                    elif iy > ny - 2:
                        iy = ny - 2
                    if iz < 0:
                        iz = 0
                    elif iz > nz - 2:
                        iz = nz - 2
                    wx = fx - ix
                    wy = fy - iy
                    wz = fz - iz
                    if wx < 0.0:
                        wx = 0.0
                    elif wx > 1.0:
                        wx = 1.0
                    if wy < 0.0:
                        wy = 0.0
                    elif wy > 1.0:
                        wy = 1.0
                    if wz < 0.0:
                        wz = 0.0
                    elif wz > 1.0:
                        wz = 1.0
                    c00 = vol[ix, iy, iz] * (1 - wx) + vol[ix + 1, iy, iz] * wx
                    c10 = vol[ix, iy + 1, iz] * (1 - wx) + vol[ix + 1, iy + 1, iz] * wx
                    c01 = vol[ix, iy, iz + 1] * (1 - wx) + vol[ix + 1, iy, iz + 1] * wx
                    c11 = vol[ix, iy + 1, iz + 1] * (1 - wx) + vol[ix + 1, iy + 1, iz + 1] * wx
                    c0 = c00 * (1 - wy) + c10 * wy
                    c1 = c01 * (1 - wy) + c11 * wy
                    acc += (c0 * (1 - wz) + c1 * wz)
                out[a, i, j] = acc * dt * ray_len


def scan_angles(n_views: int) -> np.ndarray:
    """Uniform full-circle view angles, no duplicate endpoint."""
    if n_views < 1:
        raise ValueError("need at least one view")
    return np.arange(n_views, dtype=np.float64) * (2.0 * np.pi / n_views)


def forward_project(vol: Volume, geom: ConeBeamGeometry, n_views: int | None = None,
                    angles: np.ndarray | None = None) -> Sinogram:
    """Project a volume into line integrals (units: dimensionless attenuation).

    The ray from the source to each detector element is sampled at a step of
    half the smallest voxel spacing with trilinear interpolation.  The volume
    is centered at the isocenter.  HU volumes are converted to attenuation
    internally.
    """
    if angles is None:
        if n_views is None:
            raise ValueError("pass n_views or an explicit angles array")
        angles = scan_angles(n_views)
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 1 or angles.size < 1:
        raise ValueError("angles must be a non-empty 1D array")
    mu = vol.to_mu()
    half_size = [0.5 * (n - 1) * s for n, s in zip(mu.extents, mu.spacing)]
    r = geom.source_to_iso_mm
    cos = np.cos(angles)
    sin = np.sin(angles)
    srcs = np.stack([r * cos, r * sin, np.zeros_like(angles)], axis=1)
    inside = np.all(np.abs(srcs) <= np.asarray(half_size), axis=1)
    if np.any(inside):
        raise ValueError("source trajectory passes through the volume; "
                         "shrink the volume or enlarge source_to_iso_mm")
    e_vecs = np.stack([-cos, -sin, np.zeros_like(angles)], axis=1)
    u_vecs = np.stack([-sin, cos, np.zeros_like(angles)], axis=1)
    v_vecs = np.tile(np.array([0.0, 0.0, 1.0]), (angles.size, 1))
    u_offs = (np.arange(geom.det_cols) - (geom.det_cols - 1) / 2.0) * geom.det_col_width_mm
    v_offs = (np.arange(geom.det_rows) - (geom.det_rows - 1) / 2.0) * geom.det_row_height_mm
    out = np.empty((angles.size, geom.det_rows, geom.det_cols), dtype=np.float64)
    step_max = 0.5 * min(mu.spacing)
    _march_views(np.ascontiguousarray(mu.values), mu.spacing[0], mu.spacing[1],
                 mu.spacing[2], srcs, u_offs, v_offs, u_vecs, v_vecs, e_vecs,
                 geom.source_to_detector_mm, step_max, out)
    return Sinogram(out, angles)
