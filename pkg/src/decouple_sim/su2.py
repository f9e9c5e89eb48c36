"""Exact SU(2)/SO(3) algebra for a driven qubit.

Unitaries are parameterized in axis-angle form U = I cos(alpha) - i (u.sigma)
sin(alpha).  Conjugation of the Pauli vector by a unitary is a proper rotation,
Lambda_mu = U^dag sigma_mu U = sum_nu R_{mu nu} sigma_nu, and that 3x3 adjoint
matrix R is what the decoherence tensor is built from.  The module also
synthesizes the driving field of a unitary path, Omega(t).sigma = i dU/dt U^dag,
which is how every control field in the package is cross-checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, PathConsistencyError

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)
PAULI = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])
PAULI.setflags(write=False)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


def _entries(x) -> np.ndarray:
    """Accept a wrapped type or a bare array and return the ndarray."""
    return np.asarray(getattr(x, "entries", x))


@dataclass(frozen=True)
class QubitUnitary:
    """A 2x2 unitary; unitarity and |det| = 1 enforced at construction."""

    entries: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.entries, dtype=complex)
        if u.shape != (2, 2):
            raise DomainError(f"expected a 2x2 matrix, got shape {u.shape}")
        if np.max(np.abs(u @ u.conj().T - IDENTITY2)) > 1e-12:
            raise DomainError("matrix is not unitary within 1e-12")
        if abs(abs(np.linalg.det(u)) - 1.0) > 1e-12:
            raise DomainError("matrix determinant does not have unit modulus")
        object.__setattr__(self, "entries", _frozen(u))

    @property
    def dagger(self) -> np.ndarray:
        return self.entries.conj().T


@dataclass(frozen=True)
class QubitState:
    """A 2x2 density matrix (Hermitian, unit trace) with a Bloch-vector view."""

    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        if rho.shape != (2, 2):
            raise DomainError(f"expected a 2x2 matrix, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise DomainError("density matrix is not Hermitian within 1e-12")
        if abs(np.trace(rho).real - 1.0) > 1e-12 or abs(np.trace(rho).imag) > 1e-12:
            raise DomainError("density matrix trace differs from 1 beyond 1e-12")
        object.__setattr__(self, "entries", _frozen(rho))

    @property
    def bloch(self) -> np.ndarray:
        """(r_x, r_y, r_z) with rho = (I + r.sigma)/2."""
        return np.real(np.einsum("kab,ba->k", PAULI, self.entries))


@dataclass(frozen=True)
class RotationMatrix3:
    """A proper rotation: orthogonal with determinant +1."""

    entries: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.entries, dtype=float)
        if r.shape != (3, 3):
            raise DomainError(f"expected a 3x3 matrix, got shape {r.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-12:
            raise DomainError("matrix is not orthogonal within 1e-12")
        if abs(np.linalg.det(r) - 1.0) > 1e-12:
            raise DomainError("matrix determinant differs from +1")
        object.__setattr__(self, "entries", _frozen(r))


@dataclass(frozen=True)
class FieldVector:
    """Cartesian components of a driving field, in units of 1/tau."""

    omega_x: float
    omega_y: float
    omega_z: float

    def __post_init__(self):
        for name in ("omega_x", "omega_y", "omega_z"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"field component {name} is not finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.omega_z])


@dataclass(frozen=True)
class UnitaryPath:
    """A time-parameterized unitary t -> U(t) with an optional analytic
    derivative t -> dU/dt.  Without one, field synthesis falls back to a
    central finite difference with step 1e-6 * tau."""

    evaluate: Callable[[float], object]
    derivative: Callable[[float], np.ndarray] | None = None
    tau: float = 1.0


def unitary_from_axis_angle(alpha: float, u) -> QubitUnitary:
    """U = I cos(alpha) - i (u.sigma) sin(alpha) for a unit axis u."""
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > 1e-9:
        raise DomainError(f"rotation axis must be a unit vector, |u| = {norm!r}")
    generator = np.einsum("k,kab->ab", u, PAULI)
    return QubitUnitary(np.cos(alpha) * IDENTITY2 - 1j * np.sin(alpha) * generator)


def rotations_from_unitaries(u_stack: np.ndarray) -> np.ndarray:
    """Adjoint rotations for a stack of unitaries: (..., 2, 2) -> (..., 3, 3).

    R_{mu nu} = Re Tr[sigma_nu U^dag sigma_mu U] / 2.
    """
    u = np.asarray(u_stack, dtype=complex)
    ud = np.conj(np.swapaxes(u, -1, -2))
    # Lambda_mu = U^dag sigma_mu U, stacked over mu in the leading axis.
    lam = np.einsum("...ab,mbc,...cd->m...ad", ud, PAULI, u, optimize=True)
    return 0.5 * np.real(np.einsum("nab,m...ba->...mn", PAULI, lam, optimize=True))


def rotation_from_unitary(u) -> RotationMatrix3:
    """Adjoint rotation of a single unitary."""
    return RotationMatrix3(rotations_from_unitaries(_entries(u)))


def field_from_path(path: UnitaryPath, t: float) -> FieldVector:
    """Synthesize Omega(t) with Omega.sigma = i dU/dt U^dag.

    The generator must come out traceless Hermitian (that is what makes the
    path unitary); tolerance is relative to the generator's own magnitude,
    since fast decoupling drives reach |Omega| of a few hundred per tau.
    """
    u = np.asarray(_entries(path.evaluate(t)), dtype=complex)
    if path.derivative is not None:
        du = np.asarray(path.derivative(t), dtype=complex)
    else:
        h = 1e-6 * path.tau
        du = (np.asarray(_entries(path.evaluate(t + h)), dtype=complex)
              - np.asarray(_entries(path.evaluate(t - h)), dtype=complex)) / (2.0 * h)
    gen = 1j * du @ u.conj().T
    scale = max(1.0, float(np.max(np.abs(gen))) * path.tau)
    if np.max(np.abs(gen - gen.conj().T)) > 1e-8 * scale:
        raise PathConsistencyError(
            "path generator i dU/dt U^dag is not Hermitian within tolerance")
    if abs(np.trace(gen)) > 1e-8 * scale:
        raise PathConsistencyError(
            "path generator i dU/dt U^dag is not traceless within tolerance")
    omega = 0.5 * np.real(np.einsum("kab,ba->k", PAULI, gen))
    return FieldVector(*omega)


def density_from_bloch(theta: float, phi: float) -> QubitState:
    """Pure state at polar angle theta, azimuth phi on the Bloch sphere."""
    r = np.array([np.sin(theta) * np.cos(phi),
                  np.sin(theta) * np.sin(phi),
                  np.cos(theta)])
    rho = 0.5 * (IDENTITY2 + np.einsum("k,kab->ab", r, PAULI))
    return QubitState(rho)


def bloch_state_batch(thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Grid of pure states: one row per (theta, phi) pair in row-major order,
    shape (len(thetas) * len(phis), 2, 2)."""
    tg, pg = np.meshgrid(thetas, phis, indexing="ij")
    r = np.stack([np.sin(tg) * np.cos(pg),
                  np.sin(tg) * np.sin(pg),
                  np.cos(tg)], axis=-1).reshape(-1, 3)
    return 0.5 * (IDENTITY2 + np.einsum("bk,kij->bij", r, PAULI))


def overlap(a, b) -> float:
    """Re Tr[a b] — the fidelity functional between two states."""
    return float(np.real(np.trace(_entries(a) @ _entries(b))))
