"""Bosonic reservoir kernels and correlation matrices.

Each reservoir couples one error direction of the qubit to a continuum of
thermal modes with spectral density

    J(omega) = eta * omega^s / omega_c^(s-1) * exp(-omega/omega_c),

ohmic for s = 1, super-ohmic for s >= 2.  The two-time correlation functions
that drive the master equation reduce to two frequency integrals with closed
forms:

    vacuum:   int J(w) e^{-i w d} dw            = eta wc^2 s! / (1 + i wc d)^(s+1)
    thermal:  int J(w) n(w) e^{-i w d} dw
            = eta wc^2 sum_{k>=1} s! / (1 + i wc d + b k)^(s+1),   b = beta wc,

where the geometric expansion of the Bose factor n(w) = 1/(e^{b w/wc} - 1)
produces the discrete sum.  The sum converges like K^-s, so it is evaluated
with an Euler-Maclaurin tail (integral + three correction terms) and a
certified residual bound taken from the first omitted correction.

A reservoir's coupling geometry is its complex error vector lambda: bit flip
couples along x, dissipation along (x + i y)/2 (the lowering combination),
dephasing along z.  The 3x3 correlation matrix entering the decoherence
tensor is the bilinear sum over reservoirs

    C_{mu nu}(d) = sum_i [ lam_mu lam*_nu I1_i(d) + lam*_mu lam_nu I2_i(d) ],

with I1 the thermal kernel and I2 = conj(thermal) + conj(vacuum) (absorption
vs emission weight n and n+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .constants import BETA_OMEGA_C_DEFAULT, OMEGA_C_TAU_DEFAULT
from .errors import ConfigurationError, ConvergenceError, DomainError

ERROR_CLASSES = ("bit_flip", "dissipation", "dephasing")

_ERROR_VECTORS = {
    "bit_flip": np.array([1.0, 0.0, 0.0], dtype=complex),
    "dissipation": np.array([0.5, 0.5j, 0.0], dtype=complex),
    "dephasing": np.array([0.0, 0.0, 1.0], dtype=complex),
}
for _v in _ERROR_VECTORS.values():
    _v.setflags(write=False)


@dataclass(frozen=True)
class ReservoirSpec:
    """One bosonic reservoir: error class, coupling, ohmicity, cutoff."""

    error_class: str
    eta: float
    s: int
    omega_c: float = OMEGA_C_TAU_DEFAULT

    def __post_init__(self):
        if self.error_class not in ERROR_CLASSES:
            raise ConfigurationError(
                f"unknown error class {self.error_class!r}; expected one of {ERROR_CLASSES}")
        if self.eta < 0.0:
            raise ConfigurationError(f"coupling eta must be >= 0, got {self.eta}")
        if not isinstance(self.s, (int, np.integer)) or self.s < 1:
            raise ConfigurationError(
                f"ohmicity exponent s must be a positive integer, got {self.s!r}")
        if self.omega_c <= 0.0:
            raise ConfigurationError(f"cutoff omega_c must be positive, got {self.omega_c}")

    @property
    def lam(self) -> np.ndarray:
        """Complex error vector fixed by the error class."""
        return _ERROR_VECTORS[self.error_class]


@dataclass(frozen=True)
class ThermalParams:
    """Dimensionless inverse temperature beta * omega_c, optionally carrying
    the physical inputs it was derived from."""

    beta_omega_c: float
    temperature_kelvin: float | None = None
    tau_seconds: float | None = None

    def __post_init__(self):
        if self.beta_omega_c <= 0.0:
            raise ConfigurationError(
                f"beta_omega_c must be positive, got {self.beta_omega_c}")

    @classmethod
    def from_physical(cls, temperature_kelvin: float, tau_seconds: float,
                      omega_c_tau: float = OMEGA_C_TAU_DEFAULT) -> "ThermalParams":
        from .constants import beta_omega_c as _derive
        return cls(_derive(temperature_kelvin, tau_seconds, omega_c_tau),
                   temperature_kelvin=temperature_kelvin, tau_seconds=tau_seconds)


DEFAULT_THERMAL = ThermalParams(BETA_OMEGA_C_DEFAULT,
                                temperature_kelvin=0.25, tau_seconds=1e-10)


def spectral_density(omega, r: ReservoirSpec):
    """J(omega) on omega >= 0."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0.0):
        raise DomainError("spectral density is defined for omega >= 0 only")
    out = r.eta * omega ** r.s / r.omega_c ** (r.s - 1) * np.exp(-omega / r.omega_c)
    return out if out.ndim else float(out)


def thermal_occupation(omega, beta):
    """Bose occupation 1/(e^{beta omega} - 1) for omega > 0."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0.0):
        raise DomainError("thermal occupation requires omega > 0 "
                          "(the omega = 0 divergence never appears pointwise)")
    if beta <= 0.0:
        raise DomainError(f"inverse temperature must be positive, got {beta}")
    out = 1.0 / np.expm1(beta * omega)
    return out if out.ndim else float(out)


def kernel_vacuum(delta, r: ReservoirSpec):
    """Closed form of int_0^inf J(w) e^{-i w delta} dw."""
    delta = np.asarray(delta, dtype=float)
    out = (r.eta * r.omega_c ** 2 * math.factorial(r.s)
           / (1.0 + 1j * r.omega_c * delta) ** (r.s + 1))
    return out if out.ndim else complex(out)


def _thermal_sum(z: np.ndarray, s: int, b: float, rel_tol: float,
                 max_terms: int) -> np.ndarray:
    """sum_{k>=1} s!/(z + b k)^(s+1) with an Euler-Maclaurin tail.

    The partial sum covers k = 1..K; the remainder from K+1 on is

        int_{K+1}^inf f + f(K+1)/2 - f'(K+1)/12 + f'''(K+1)/720,

    f(k) = s!/(z + b k)^(s+1), with the first omitted correction
    |f^(5)(K+1)|/30240 serving as the residual bound.  K doubles until the
    bound drops below rel_tol of the running total.
    """
    sf = math.factorial(s)
    K = 64
    while True:
        total = np.zeros_like(z)
        for start in range(1, K + 1, 128):
            ks = np.arange(start, min(start + 128, K + 1))
            total += (sf / (z[..., None] + b * ks) ** (s + 1)).sum(axis=-1)
        u = z + b * (K + 1)
        tail = (math.factorial(s - 1) / (b * u ** s)
                + 0.5 * sf / u ** (s + 1)
                + math.factorial(s + 1) * b / (12.0 * u ** (s + 2))
                - math.factorial(s + 3) * b ** 3 / (720.0 * u ** (s + 4)))
        total = total + tail
        bound = math.factorial(s + 5) * b ** 5 / (30240.0 * np.abs(u) ** (s + 6))
        achieved = float(np.max(bound / np.maximum(np.abs(total), 1e-300)))
        if achieved <= rel_tol:
            return total
        if 2 * K > max_terms:
            raise ConvergenceError(
                f"thermal kernel sum did not reach relative tolerance {rel_tol:g} "
                f"within {max_terms} terms (achieved {achieved:g})",
                requested=rel_tol, achieved=achieved)
        K *= 2


def kernel_thermal(delta, r: ReservoirSpec, th: ThermalParams,
                   rel_tol: float = 1e-12, max_terms: int = 10 ** 7):
    """Closed form of int_0^inf J(w) n(w) e^{-i w delta} dw."""
    delta = np.asarray(delta, dtype=float)
    z = 1.0 + 1j * r.omega_c * delta
    out = r.eta * r.omega_c ** 2 * _thermal_sum(
        np.atleast_1d(z).astype(complex), r.s, th.beta_omega_c, rel_tol, max_terms)
    out = out.reshape(z.shape) if z.ndim else out[0]
    return out if np.ndim(out) else complex(out)


def bath_autocorrelations(delta, r: ReservoirSpec, th: ThermalParams):
    """The two correlation integrals (I1, I2) of one reservoir.

    I1 weights absorption with the occupation n; I2 weights emission with
    n + 1, which splits into the conjugated thermal and vacuum kernels.
    """
    i1 = kernel_thermal(delta, r, th)
    i2 = np.conj(i1) + np.conj(kernel_vacuum(delta, r))
    return i1, i2


def _check_no_duplicates(reservoirs):
    seen = set()
    for r in reservoirs:
        if r.error_class in seen:
            raise ConfigurationError(
                f"duplicate reservoir error class {r.error_class!r}")
        seen.add(r.error_class)


def correlation_matrix(delta, reservoirs, th: ThermalParams) -> np.ndarray:
    """3x3 correlation matrix C(delta), summed over independent reservoirs.

    Shape (..., 3, 3) following the shape of delta.
    """
    _check_no_duplicates(reservoirs)
    delta = np.asarray(delta, dtype=float)
    c = np.zeros(delta.shape + (3, 3), dtype=complex)
    for r in reservoirs:
        i1, i2 = bath_autocorrelations(delta, r, th)
        lam = r.lam
        c += np.multiply.outer(np.asarray(i1), np.outer(lam, np.conj(lam)))
        c += np.multiply.outer(np.asarray(i2), np.outer(np.conj(lam), lam))
    return c


def required_spacing(reservoirs, windings: tuple[int, int] = (0, 0),
                     tau: float = 1.0) -> float:
    """Grid-spacing bound: >= 40 points per kernel oscillation/decay scale and
    per period of the fastest rotation-matrix component."""
    bound = math.inf
    for r in reservoirs:
        bound = min(bound, 2.0 * np.pi / (40.0 * r.omega_c * r.s))
    n, m = windings
    bound = min(bound, tau / (40.0 * (4 * n + 4 * m + 1)))
    return bound


@dataclass(frozen=True)
class KernelTable:
    """Per-reservoir I1/I2 tabulated on a uniform delta grid, with cubic
    interpolation for off-grid probes.  Write-once; safe to share."""

    delta_grid: np.ndarray
    reservoirs: tuple[ReservoirSpec, ...]
    thermal: ThermalParams
    i1: np.ndarray  # (n_reservoirs, n_grid) complex
    i2: np.ndarray

    @cached_property
    def spacing(self) -> float:
        return float(self.delta_grid[1] - self.delta_grid[0]) if self.delta_grid.size > 1 else 0.0

    @cached_property
    def _splines(self):
        out = []
        for k in range(len(self.reservoirs)):
            out.append(tuple(CubicSpline(self.delta_grid, part)
                             for arr in (self.i1[k], self.i2[k])
                             for part in (arr.real, arr.imag)))
        return out

    def lookup(self, delta, index: int):
        """(I1, I2) of reservoir ``index`` at delta; exact at grid nodes,
        cubic interpolation elsewhere."""
        delta = np.asarray(delta, dtype=float)
        span = max(self.delta_grid[-1], 1.0)
        idx = np.clip(np.rint(delta / self.spacing).astype(int),
                      0, len(self.delta_grid) - 1)
        on_node = np.abs(delta - self.delta_grid[idx]) <= 1e-12 * span
        re1, im1, re2, im2 = self._splines[index]
        i1 = np.where(on_node, self.i1[index][idx], re1(delta) + 1j * im1(delta))
        i2 = np.where(on_node, self.i2[index][idx], re2(delta) + 1j * im2(delta))
        if delta.ndim == 0:
            return complex(i1), complex(i2)
        return i1, i2

    def correlation_on_grid(self) -> np.ndarray:
        """C(delta) on the full grid, shape (n_grid, 3, 3), from stored values."""
        c = np.zeros((len(self.delta_grid), 3, 3), dtype=complex)
        for k, r in enumerate(self.reservoirs):
            lam = r.lam
            c += np.multiply.outer(self.i1[k], np.outer(lam, np.conj(lam)))
            c += np.multiply.outer(self.i2[k], np.outer(np.conj(lam), lam))
        return c

    def correlation_at(self, delta) -> np.ndarray:
        """C(delta) at arbitrary delta (interpolated), shape (..., 3, 3)."""
        delta = np.asarray(delta, dtype=float)
        c = np.zeros(delta.shape + (3, 3), dtype=complex)
        for k, r in enumerate(self.reservoirs):
            i1, i2 = self.lookup(delta, k)
            lam = r.lam
            c += np.multiply.outer(np.asarray(i1), np.outer(lam, np.conj(lam)))
            c += np.multiply.outer(np.asarray(i2), np.outer(np.conj(lam), lam))
        return c


def build_kernel_table(reservoirs, th: ThermalParams, delta_grid: np.ndarray,
                       windings: tuple[int, int] = (0, 0)) -> KernelTable:
    """Tabulate I1/I2 for every reservoir on a uniform delta grid.

    The grid must be fine enough for both the kernel decay and the fastest
    rotation oscillation of the control (windings (n, m), zero when off).
    """
    _check_no_duplicates(reservoirs)
    delta_grid = np.asarray(delta_grid, dtype=float)
    if delta_grid.ndim != 1 or delta_grid.size < 2:
        raise ConfigurationError("delta grid must be a 1-D array of >= 2 points")
    steps = np.diff(delta_grid)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]):
        raise ConfigurationError("delta grid must be uniform")
    tau = float(delta_grid[-1])
    spacing = float(steps[0])
    if reservoirs:
        bound = required_spacing(reservoirs, windings, tau)
        if spacing > bound * (1 + 1e-9):
            raise ConfigurationError(
                f"delta grid spacing {spacing:g} exceeds the resolution bound "
                f"{bound:g} for these reservoirs and windings")
    i1 = np.zeros((len(reservoirs), delta_grid.size), dtype=complex)
    i2 = np.zeros_like(i1)
    for k, r in enumerate(reservoirs):
        i1[k], i2[k] = bath_autocorrelations(delta_grid, r, th)
    tab = KernelTable(delta_grid=_readonly(delta_grid), reservoirs=tuple(reservoirs),
                      thermal=th, i1=_readonly(i1), i2=_readonly(i2))
    return tab


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a
