"""Continuous dynamical decoupling of a driven qubit gate against bosonic noise.

The package simulates a single qubit executing a Hadamard gate of duration tau
under a continuous control field, while coupled to up to three independent
bosonic reservoirs (dephasing, bit-flip, dissipation).  The reduced dynamics
follow a time-local second-order master equation whose coefficients are
memory integrals over closed-form thermal bath correlation functions.

Layout:

- ``su2``      exact SU(2)/SO(3) algebra: unitaries, adjoint rotations,
               Bloch-vector states, field synthesis from a unitary path
- ``control``  the drive programs: bare gate, x-axis decoupler, full (x and z)
               decoupler, and their closed-form control fields
- ``baths``    spectral densities, thermal kernels, correlation matrices,
               precomputed kernel tables
- ``engine``   decoherence tensor by convolution quadrature and RK4
               propagation of the master equation
- ``scenario`` text scenario files -> validated configuration
- ``runner``   experiments: traces, Bloch-sphere sweeps, coupling-ratio
               sweeps, protection comparison tables; deterministic CSV output
- ``plotting`` static SVG rendering of runner CSVs
- ``cli``      the ``decouple-sim`` command
"""

from .constants import BETA_OMEGA_C_DEFAULT, OMEGA_C_TAU_DEFAULT
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DecoupleSimError,
    DomainError,
    FormatError,
    IntegrationError,
    PathConsistencyError,
    RangeError,
    ScenarioError,
)

__version__ = "0.1.0"

__all__ = [
    "BETA_OMEGA_C_DEFAULT",
    "OMEGA_C_TAU_DEFAULT",
    "DecoupleSimError",
    "DomainError",
    "RangeError",
    "PathConsistencyError",
    "ConvergenceError",
    "ConfigurationError",
    "ScenarioError",
    "FormatError",
    "IntegrationError",
    "__version__",
]
