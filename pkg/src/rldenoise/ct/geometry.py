"""Cone-beam scanner geometry and dose model."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class ConeBeamGeometry:
    """Circular-trajectory cone-beam scanner with a flat detector.

    Distances in millimetres.  The detector is centered on and perpendicular
    to the source-isocenter axis; columns run along the rotation direction,
    rows along the rotation axis (z).
    """

    source_to_iso_mm: float = 595.0
    source_to_detector_mm: float = 1085.0
    det_rows: int = 64
    det_cols: int = 736
    det_row_height_mm: float = 1.285
    det_col_width_mm: float = 1.094
    scan_z_interval_mm: float = 16.0

    def __post_init__(self):
        if not (0 < self.source_to_iso_mm < self.source_to_detector_mm):
            raise ValueError(
                "need 0 < source_to_iso_mm < source_to_detector_mm, got "
                f"{self.source_to_iso_mm} / {self.source_to_detector_mm}")
        if self.det_rows < 1 or self.det_cols < 1:
            raise ValueError("detector must have at least one row and column")
        if self.det_row_height_mm <= 0 or self.det_col_width_mm <= 0:
            raise ValueError("detector element pitch must be positive")

    @property
    def magnification(self) -> float:
        return self.source_to_detector_mm / self.source_to_iso_mm

    @property
    def det_width_mm(self) -> float:
        return self.det_cols * self.det_col_width_mm

    @property
    def det_height_mm(self) -> float:
        return self.det_rows * self.det_row_height_mm

    @property
    def fov_radius_mm(self) -> float:
        """Radius of the transverse field of view at the isocenter plane."""
        import math
        half_fan = math.atan(0.5 * self.det_width_mm / self.source_to_detector_mm)
        return self.source_to_iso_mm * math.sin(half_fan)

    @property
    def fov_half_height_mm(self) -> float:
        """Half-height of the field of view along z at the isocenter."""
        return 0.5 * self.det_height_mm * self.source_to_iso_mm / self.source_to_detector_mm

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConeBeamGeometry":
        return cls(**json.loads(text))


def paper_geometry() -> ConeBeamGeometry:
    """Full clinical-scale geometry (64-row, 736-column detector)."""
    return ConeBeamGeometry()


def desk_geometry() -> ConeBeamGeometry:
    """Reduced geometry sized for single-machine runs: 32x128 detector."""
    return ConeBeamGeometry(det_rows=32, det_cols=128)


@dataclass(frozen=True)
class DoseModel:
    """Poisson photon-counting model: incident photons per ray = i0 * fraction."""

    photons_i0: float = 1e5
    dose_fraction: float = 1.0

    def __post_init__(self):
        if self.photons_i0 <= 0:
            raise ValueError(f"photons_i0 must be > 0, got {self.photons_i0}")
        if not (0 < self.dose_fraction <= 1):
            raise ValueError(f"dose_fraction must be in (0, 1], got {self.dose_fraction}")

    @property
    def incident_photons(self) -> float:
        return self.photons_i0 * self.dose_fraction
