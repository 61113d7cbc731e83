from .geometry import ConeBeamGeometry, DoseModel, desk_geometry, paper_geometry
from .volume import (
    Volume,
    Sinogram,
    MU_WATER_PER_MM,
    hu_to_mu,
    mu_to_hu,
)
from .phantom import make_phantom, PHANTOM_KINDS, low_contrast_layout
from .project import forward_project, scan_angles
from .noise import add_poisson_noise
from .fdk import fdk_reconstruct, ramp_kernel

__all__ = [
    "ConeBeamGeometry",
    "DoseModel",
    "desk_geometry",
    "paper_geometry",
    "Volume",
    "Sinogram",
    "MU_WATER_PER_MM",
    "hu_to_mu",
    "mu_to_hu",
    "make_phantom",
    "PHANTOM_KINDS",
    "low_contrast_layout",
    "forward_project",
    "scan_angles",
    "add_poisson_noise",
    "fdk_reconstruct",
    "ramp_kernel",
]
