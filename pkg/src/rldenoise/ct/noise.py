"""Poisson photon-counting dose simulation on line integrals."""

from __future__ import annotations

import numpy as np

from .geometry import DoseModel
from .volume import Sinogram


def add_poisson_noise(sino: Sinogram, dose: DoseModel, seed: int) -> Sinogram:
    """Simulate a photon-limited acquisition of a noise-free sinogram.

    Each detector reading becomes counts ~ Poisson(i0 * fraction * exp(-p)).
    Counts are floored at one photon before the log transform so zero-count
    rays stay finite.  Same seed, same sinogram.
    """
    p = sino.values
    if np.any(p < 0):
        raise ValueError("line integrals must be non-negative")
    n0 = dose.incident_photons
    rng = np.random.default_rng(seed)
    counts = rng.poisson(n0 * np.exp(-p)).astype(np.float64)
    counts = np.maximum(counts, 1.0)
    out = np.log(n0) - np.log(counts)
    return Sinogram(out, sino.angles.copy())
