"""Forward model and regularized factorization imaging for a disk inclusion
with a strain-gradient elastic interface under antiplane shear."""

__version__ = "0.1.0"

from .forward_model import (  # noqa: E402
    DtNMatrix,
    KernelSpectrum,
    MaterialParams,
    assemble_dtn_matrix,
    build_kernel_spectrum,
    kappa_closed_form,
    solve_mode_system,
)
from .inversion import NoiseSpec, RegularizationSpec, SamplingGrid, build_imaging_map  # noqa: E402
from .parameters import compute_mu0, fit_parameters  # noqa: E402
from .probe import SamplePoint, assemble_probe  # noqa: E402

__all__ = [
    "DtNMatrix",
    "KernelSpectrum",
    "MaterialParams",
    "NoiseSpec",
    "RegularizationSpec",
    "SamplePoint",
    "SamplingGrid",
    "assemble_dtn_matrix",
    "assemble_probe",
    "build_imaging_map",
    "build_kernel_spectrum",
    "compute_mu0",
    "fit_parameters",
    "kappa_closed_form",
    "solve_mode_system",
]
