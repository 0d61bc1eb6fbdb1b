"""Simulation toolkit for spacetime-resolved detection of a free scalar field."""

__version__ = "0.1.0"

from .field import (  # noqa: E402
    FieldError,
    FieldModel,
    FieldState,
    ModeTruncation,
    SpacetimePoint,
    Wavepacket,
    vacuum_wightman,
)
from .detectors import DetectorKernel, KernelMixture, SwitchingProfile  # noqa: E402
from .qtp import qtp_joint, qtp_p, qtp_p_grid, qtp_prob_excitation  # noqa: E402

__all__ = [
    "__version__",
    "FieldError",
    "FieldModel",
    "FieldState",
    "ModeTruncation",
    "SpacetimePoint",
    "Wavepacket",
    "vacuum_wightman",
    "DetectorKernel",
    "KernelMixture",
    "SwitchingProfile",
    "qtp_joint",
    "qtp_p",
    "qtp_p_grid",
    "qtp_prob_excitation",
]
