"""Atoms in superintense ultrashort pulses on a B-spline + spherical basis.

One- and two-electron systems driven by linearly polarized velocity-gauge
fields: bound-state spectra, time propagation, ionization bookkeeping,
Kramers-Henneberger dressed potentials, and an independent-electron model.
All quantities are in hartree atomic units.
"""

from .angular import Channel, ChannelSet, enumerate_channels, one_electron_channels
from .bsplines import RadialBasis, build_radial_basis
from .eigensolve import EigenResult, EigensolveError, bound_states, radial_eigenbasis
from .iemodel import HELIUM_SAE, SaePotentialParams, run_ie, sae_potential
from .operators import (
    BlockOperator,
    assemble_absorber,
    assemble_atomic,
    assemble_dipole_velocity,
    assemble_ee,
    assemble_overlap,
)
from .propagation import (
    ChannelFactorization,
    GmresConfig,
    PropagationError,
    TimeGrid,
    propagate,
)
from .pulses import SineSquaredPulse, pulse_from_quiver

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "ChannelSet",
    "enumerate_channels",
    "one_electron_channels",
    "RadialBasis",
    "build_radial_basis",
    "EigenResult",
    "EigensolveError",
    "bound_states",
    "radial_eigenbasis",
    "HELIUM_SAE",
    "SaePotentialParams",
    "run_ie",
    "sae_potential",
    "BlockOperator",
    "assemble_absorber",
    "assemble_atomic",
    "assemble_dipole_velocity",
    "assemble_ee",
    "assemble_overlap",
    "ChannelFactorization",
    "GmresConfig",
    "PropagationError",
    "TimeGrid",
    "propagate",
    "SineSquaredPulse",
    "pulse_from_quiver",
    "__version__",
]
