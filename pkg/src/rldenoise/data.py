"""Synthetic desk-scale datasets: phantom -> scan -> low/standard dose
reconstruction pairs, plus patch pairs for reward training."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ct import (ConeBeamGeometry, DoseModel, Volume, make_phantom,
                 forward_project, add_poisson_noise, fdk_reconstruct)
from .ct.phantom import PHANTOM_KINDS

log = logging.getLogger(__name__)

DEFAULT_EXTENTS = (64, 64, 64)
DEFAULT_I0 = 1e5
DEFAULT_LOW_FRACTION = 0.25

AIR_HU = -1000.0


def mask_outside_fov(vol: Volume, geom: ConeBeamGeometry,
                     margin_mm: float = 0.0) -> Volume:
    """Replace voxels outside the scanner's transverse field of view with
    air.  Reconstructions are unreliable there (those voxels are never fully
    measured), so they are cleared before any re-projection."""
    nx, ny, _ = vol.extents
    sx, sy, _ = vol.spacing
    x = (np.arange(nx) - (nx - 1) / 2.0) * sx
    y = (np.arange(ny) - (ny - 1) / 2.0) * sy
    r2 = x[:, None] ** 2 + y[None, :] ** 2
    keep = r2 <= (geom.fov_radius_mm - margin_mm) ** 2
    out = vol.values.copy()
    fill = AIR_HU if vol.units == "hu" else 0.0
    out[~keep, :] = fill
    return Volume(out, vol.spacing, vol.units)


@dataclass
class DenoiseCase:
    """One scan: low-dose input, standard-dose reference, true phantom."""

    name: str
    noisy: Volume
    reference: Volume
    phantom: Volume


def build_case(kind: str, seed: int, geom: ConeBeamGeometry, n_views: int = 180,
               i0: float = DEFAULT_I0, low_fraction: float = DEFAULT_LOW_FRACTION,
               extents=DEFAULT_EXTENTS, window: str = "cosine") -> DenoiseCase:
    """Simulate one phantom at standard and reduced dose."""
    phantom = make_phantom(kind, extents, seed=seed)
    sino = forward_project(phantom, geom, n_views)
    std = add_poisson_noise(sino, DoseModel(i0, 1.0), seed=seed * 7 + 1)
    low = add_poisson_noise(sino, DoseModel(i0, low_fraction), seed=seed * 7 + 2)
    reference = fdk_reconstruct(std, geom, phantom.extents, phantom.spacing,
                                window=window)
    noisy = fdk_reconstruct(low, geom, phantom.extents, phantom.spacing,
                            window=window)
    return DenoiseCase(f"{kind}-{seed}", noisy, reference, phantom)


def build_dataset(n_cases: int, geom: ConeBeamGeometry, seed0: int = 1000,
                  n_views: int = 180, i0: float = DEFAULT_I0,
                  low_fraction: float = DEFAULT_LOW_FRACTION,
                  extents=DEFAULT_EXTENTS) -> list[DenoiseCase]:
    """A mixed-kind list of cases with deterministic per-case seeds."""
    cases = []
    for k in range(n_cases):
        kind = PHANTOM_KINDS[k % len(PHANTOM_KINDS)]
        case = build_case(kind, seed0 + k, geom, n_views=n_views, i0=i0,
                          low_fraction=low_fraction, extents=extents)
        log.info("built case %s", case.name)
        cases.append(case)
    return cases


def _sample_window(rng: np.random.Generator, clean: np.ndarray, size: int,
                   tries: int = 20) -> tuple:
    """An axial window whose clean content is not pure air."""
    nx, ny, nz = clean.shape
    size = min(size, nx, ny)
    for _ in range(tries):
        x0 = int(rng.integers(0, nx - size + 1))
        y0 = int(rng.integers(0, ny - size + 1))
        z = int(rng.integers(2, nz - 2))
        win = (slice(x0, x0 + size), slice(y0, y0 + size), z)
        if clean[win].mean() > -800.0:
            return win
    x0 = (nx - size) // 2
    y0 = (ny - size) // 2
    return (slice(x0, x0 + size), slice(y0, y0 + size), nz // 2)


def _sample_patch(rng: np.random.Generator, noisy: np.ndarray, clean: np.ndarray,
                  size: int, tries: int = 20):
    """One aligned axial patch pair whose clean content is not pure air."""
    win = _sample_window(rng, clean, size, tries)
    return noisy[win].copy(), clean[win].copy()


REWARD_DOSE_FRACTIONS = (1.0, 0.5, 0.25, 0.125, 0.0625)


def build_reward_pairs(geom: ConeBeamGeometry, phantom_seeds=(101, 102, 103, 104, 105),
                       holdout_seeds=(201, 202), n_views: int = 180,
                       i0: float = DEFAULT_I0, extents=DEFAULT_EXTENTS,
                       patch_sizes=(32, 48, 64, 96), patches_per=8,
                       holdout_per=100, seed: int = 0,
                       dose_fractions=REWARD_DOSE_FRACTIONS):
    """Patch pairs for reward training plus a held-out clean-vs-quarter-dose
    set.

    Per phantom, a standard-dose reconstruction is the reference; degraded
    sides are independent realizations at each dose fraction.  Each sampled
    window contributes one pair per dose level plus an identical
    (reference, reference) pair, so every location appears at all noise
    amplitudes: content is constant within the set and the dose is the only
    thing separating the targets, which is what makes the trained net rank
    by noise rather than by anatomy.  The fraction ladder reaches far below
    the quarter dose of interest on purpose: after window normalization,
    quarter-dose noise is small enough that the eLU stack is nearly linear
    in it, and nets trained on mild noise alone plateau without ever
    becoming noise-sensitive.  The strongly degraded examples make the
    noise term first-order at initialization, and the feature the net
    learns there transfers up the dose scale.  Patch sizes larger than the
    slice extent are clamped to it.
    """
    rng = np.random.default_rng(seed)
    train_pairs = []
    for k, ps in enumerate(phantom_seeds):
        kind = PHANTOM_KINDS[k % len(PHANTOM_KINDS)]
        phantom = make_phantom(kind, extents, seed=ps)
        sino = forward_project(phantom, geom, n_views)
        ref = fdk_reconstruct(add_poisson_noise(sino, DoseModel(i0, 1.0), ps * 11 + 1),
                              geom, phantom.extents, phantom.spacing, window="cosine")
        degraded = []
        for j, frac in enumerate(dose_fractions):
            s = add_poisson_noise(sino, DoseModel(i0, frac), ps * 11 + 2 + j)
            degraded.append(fdk_reconstruct(s, geom, phantom.extents,
                                            phantom.spacing, window="cosine"))
        log.info("reward phantom %s-%d reconstructed", kind, ps)
        for size in patch_sizes:
            for _ in range(patches_per):
                win = _sample_window(rng, ref.values, size)
                for vol in degraded:
                    train_pairs.append((vol.values[win].copy(),
                                        ref.values[win].copy()))
                train_pairs.append((ref.values[win].copy(),
                                    ref.values[win].copy()))
    holdout_pairs = []
    for k, ps in enumerate(holdout_seeds):
        kind = PHANTOM_KINDS[k % len(PHANTOM_KINDS)]
        phantom = make_phantom(kind, extents, seed=ps)
        sino = forward_project(phantom, geom, n_views)
        ref = fdk_reconstruct(add_poisson_noise(sino, DoseModel(i0, 1.0), ps * 11 + 1),
                              geom, phantom.extents, phantom.spacing, window="cosine")
        low = fdk_reconstruct(add_poisson_noise(sino, DoseModel(i0, 0.25), ps * 11 + 9),
                              geom, phantom.extents, phantom.spacing, window="cosine")
        for _ in range(holdout_per):
            size = int(rng.choice((32, 48)))
            lo_p, ref_p = _sample_patch(rng, low.values, ref.values, size)
            holdout_pairs.append((lo_p, ref_p))
    return train_pairs, holdout_pairs
