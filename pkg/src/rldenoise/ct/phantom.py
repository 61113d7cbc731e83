"""Synthetic phantoms: random ellipsoid anatomy, low-contrast inserts,
resolution bar patterns.

Phantoms are defined in a normalized coordinate box [-1, 1]^3 with a fixed
default physical envelope (76.8 x 76.8 x 22.4 mm), so different voxel
extents sample the same anatomy at different resolutions.  Voxel values are
Hounsfield units, rendered with sub-voxel supersampling so partial-volume
edges are smooth, then clamped to [-1000, 2000].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume

PHANTOM_KINDS = ("ellipsoids", "low-contrast-inserts", "resolution-bars")

AIR_HU = -1000.0
CLAMP_LO = -1000.0
CLAMP_HI = 2000.0

# Default physical envelope in mm; matches a 64^3 grid at (1.2, 1.2, 0.35) mm.
DEFAULT_SIZE_MM = (76.8, 76.8, 22.4)

# Objects stay inside this normalized transverse radius so the phantom fits
# the scanner field of view with margin.
BODY_RADIUS = 0.82


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]
    semiaxes: tuple[float, float, float]
    angle: float
    delta_hu: float


@dataclass(frozen=True)
class CylinderZ:
    center: tuple[float, float]
    radius: float
    z_range: tuple[float, float]
    delta_hu: float


def _norm_axes(extents, antialias):
    """Normalized voxel-center coordinates per axis, supersampled."""
    out = []
    for n in extents:
        # antialias samples per voxel, centered inside each voxel
        k = n * antialias
        idx = (np.arange(k) + 0.5) / antialias - 0.5
        out.append((idx - (n - 1) / 2.0) / (n / 2.0))
    return out


def _render(extents, antialias, objects) -> np.ndarray:
    ax, ay, az = _norm_axes(extents, antialias)
    x = ax[:, None, None]
    y = ay[None, :, None]
    z = az[None, None, :]
    fine = np.full((len(ax), len(ay), len(az)), AIR_HU)
    for ob in objects:
        if isinstance(ob, Ellipsoid):
            ca, sa = np.cos(ob.angle), np.sin(ob.angle)
            dx = x - ob.center[0]
            dy = y - ob.center[1]
            dz = z - ob.center[2]
            u = (ca * dx + sa * dy) / ob.semiaxes[0]
            v = (-sa * dx + ca * dy) / ob.semiaxes[1]
            w = dz / ob.semiaxes[2]
            fine += np.where(u * u + v * v + w * w <= 1.0, ob.delta_hu, 0.0)
        elif isinstance(ob, CylinderZ):
            dx = x - ob.center[0]
            dy = y - ob.center[1]
            inside = (dx * dx + dy * dy <= ob.radius ** 2) \
                & (z >= ob.z_range[0]) & (z <= ob.z_range[1])
            fine += np.where(inside, ob.delta_hu, 0.0)
        else:
            raise TypeError(f"unknown phantom object {type(ob)!r}")
    a = antialias
    nx, ny, nz = extents
    coarse = fine.reshape(nx, a, ny, a, nz, a).mean(axis=(1, 3, 5))
    return np.clip(coarse, CLAMP_LO, CLAMP_HI)


def _ellipsoid_objects(rng: np.random.Generator, n_objects: int) -> list:
    objects: list = []
    if n_objects >= 1:
        objects.append(Ellipsoid((0.0, 0.0, 0.0), (BODY_RADIUS, 0.68, 0.8),
                                 0.0, 1040.0))
    for _ in range(max(0, n_objects - 1)):
        direction = rng.standard_normal(3)
        direction /= max(np.linalg.norm(direction), 1e-9)
        r = rng.uniform(0.0, 0.5) ** (1 / 3)
        center = direction * r * np.array([BODY_RADIUS, 0.68, 0.8]) * 0.8
        semi = rng.uniform(0.08, 0.28, size=3)
        semi[2] = rng.uniform(0.15, 0.5)
        delta = rng.uniform(40.0, 160.0) * rng.choice([-1.0, 1.0])
        objects.append(Ellipsoid(tuple(center), tuple(semi),
                                 rng.uniform(0, np.pi), float(delta)))
    return objects


# ring of rods: (angle index, contrast HU)
_INSERT_CONTRASTS = (10.0, 20.0, 30.0, 40.0, -20.0, -40.0)
_INSERT_RING = 0.45
_INSERT_RADIUS = 0.12


def _insert_objects() -> list:
    objects = [CylinderZ((0.0, 0.0), BODY_RADIUS, (-0.85, 0.85), 1000.0)]
    for k, delta in enumerate(_INSERT_CONTRASTS):
        phi = 2 * np.pi * k / len(_INSERT_CONTRASTS)
        cx = _INSERT_RING * np.cos(phi)
        cy = _INSERT_RING * np.sin(phi)
        objects.append(CylinderZ((cx, cy), _INSERT_RADIUS, (-0.6, 0.6), delta))
    return objects


def low_contrast_layout(extents) -> list[dict]:
    """Voxel-space description of the low-contrast rods, for ROI checks."""
    nx, ny = extents[0], extents[1]
    rods = []
    for k, delta in enumerate(_INSERT_CONTRASTS):
        phi = 2 * np.pi * k / len(_INSERT_CONTRASTS)
        rods.append({
            "center_xy": (( _INSERT_RING * np.cos(phi)) * nx / 2.0 + (nx - 1) / 2.0,
                          ( _INSERT_RING * np.sin(phi)) * ny / 2.0 + (ny - 1) / 2.0),
            "radius_vox": _INSERT_RADIUS * nx / 2.0,
            "delta_hu": delta,
        })
    return rods


# (normalized y period, x band center); periods chosen so the finest group
# is two voxels wide on a 64-grid
_BAR_GROUPS = ((0.25, -0.56), (0.1875, -0.28), (0.125, 0.0),
               (0.09375, 0.28), (0.0625, 0.56))


def _bar_objects_mask(x, y, z):
    body = x * x + y * y <= BODY_RADIUS ** 2
    bars = np.zeros(np.broadcast_shapes(x.shape, y.shape, z.shape), dtype=bool)
    for period, cx in _BAR_GROUPS:
        band = (np.abs(x - cx) <= 0.09) & (np.abs(y) <= 0.55) & (np.abs(z) <= 0.5)
        stripe = (np.floor(y / period).astype(np.int64) % 2) == 0
        bars |= band & stripe
    return body, bars


def _render_bars(extents, antialias) -> np.ndarray:
    ax, ay, az = _norm_axes(extents, antialias)
    x = ax[:, None, None]
    y = ay[None, :, None]
    z = az[None, None, :]
    body, bars = _bar_objects_mask(x, y, z)
    fine = np.full(np.broadcast_shapes(x.shape, y.shape, z.shape), AIR_HU)
    fine += np.where(body, 1000.0, 0.0)
    fine += np.where(body & bars, 400.0, 0.0)
    a = antialias
    nx, ny, nz = extents
    coarse = fine.reshape(nx, a, ny, a, nz, a).mean(axis=(1, 3, 5))
    return np.clip(coarse, CLAMP_LO, CLAMP_HI)


def make_phantom(kind: str, extents, seed: int = 0, spacing=None,
                 n_objects: int | None = None, antialias: int = 2) -> Volume:
    """Build a synthetic HU phantom.

    kind is one of PHANTOM_KINDS.  extents are voxel counts (x, y, z), each
    at least 16.  The same seed always yields the same phantom.  n_objects
    controls the total ellipsoid count for the "ellipsoids" kind (body
    included; 0 gives uniform air); the other kinds have fixed layouts.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}, expected one of {PHANTOM_KINDS}")
    extents = tuple(int(n) for n in extents)
    if len(extents) != 3 or any(n < 16 for n in extents):
        raise ValueError(f"extents must be three values >= 16, got {extents}")
    if antialias < 1:
        raise ValueError("antialias factor must be >= 1")
    if spacing is None:
        spacing = tuple(s / n for s, n in zip(DEFAULT_SIZE_MM, extents))
    rng = np.random.default_rng(seed)
    if kind == "ellipsoids":
        count = int(n_objects) if n_objects is not None else int(rng.integers(5, 10))
        if count < 0:
            raise ValueError("n_objects must be >= 0")
        values = _render(extents, antialias, _ellipsoid_objects(rng, count))
    elif kind == "low-contrast-inserts":
        values = _render(extents, antialias, _insert_objects())
    else:
        values = _render_bars(extents, antialias)
    return Volume(values, spacing, "hu")
