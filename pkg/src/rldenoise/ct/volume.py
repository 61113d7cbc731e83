"""Volume and sinogram containers plus HU/attenuation conversion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Linear attenuation of water at the simulated beam quality, per mm.
MU_WATER_PER_MM = 0.02


def hu_to_mu(hu, mu_water: float = MU_WATER_PER_MM):
    """Hounsfield units -> linear attenuation per mm (exact affine map)."""
    return mu_water * (1.0 + np.asarray(hu, dtype=np.float64) / 1000.0)


def mu_to_hu(mu, mu_water: float = MU_WATER_PER_MM):
    return 1000.0 * (np.asarray(mu, dtype=np.float64) / mu_water - 1.0)


@dataclass
class Volume:
    """A 3D image on a regular grid centered at the isocenter.

    values are indexed (x, y, z); spacing is the voxel pitch in mm per axis;
    units is "hu" or "mu".
    """

    values: np.ndarray
    spacing: tuple[float, float, float]
    units: str = "hu"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {self.values.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive floats, got {self.spacing}")
        if self.units not in ("hu", "mu"):
            raise ValueError(f"units must be 'hu' or 'mu', got {self.units!r}")

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def size_mm(self) -> tuple[float, float, float]:
        return tuple(n * s for n, s in zip(self.values.shape, self.spacing))

    def to_mu(self, mu_water: float = MU_WATER_PER_MM) -> "Volume":
        if self.units == "mu":
            return self
        return Volume(hu_to_mu(self.values, mu_water), self.spacing, "mu")

    def to_hu(self, mu_water: float = MU_WATER_PER_MM) -> "Volume":
        if self.units == "hu":
            return self
        return Volume(mu_to_hu(self.values, mu_water), self.spacing, "hu")

    def copy(self) -> "Volume":
        return Volume(self.values.copy(), self.spacing, self.units)


@dataclass
class Sinogram:
    """Stack of projection views: values indexed (view, det_row, det_col),
    angles in radians, one angle per view."""

    values: np.ndarray
    angles: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"sinogram must be (views, rows, cols), got shape "
                             f"{self.values.shape}")
        if self.angles is None:
            raise ValueError("sinogram needs per-view angles")
        self.angles = np.asarray(self.angles, dtype=np.float64)
        if self.angles.shape != (self.values.shape[0],):
            raise ValueError(f"need one angle per view: {self.angles.shape} vs "
                             f"{self.values.shape[0]} views")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sinogram values must be finite")

    @property
    def n_views(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "Sinogram":
        return Sinogram(self.values.copy(), self.angles.copy())
