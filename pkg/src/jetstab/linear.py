"""Linear theory of the jet around the flat cylinder r = rho.

At the flat state the system reduces to the Fourier multiplier matrix

    d/dt (eta, psi) = [[0, G0(xi)], [1/rho^2 - xi^2, 0]] (eta, psi),
    G0(xi) = ratio(rho |xi|) |xi|,

whose eigen-speeds are Lambda_g on the growing band 1 <= |xi| < 1/rho and
Lambda_d on the dispersive band {0} u {|xi| > 1/rho}. In the complex coordinate
z the flow is diagonal: Re z grows and Im z decays on the growing band, z
rotates with phase Lambda_d on the dispersive band.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from . import bessel, spectral
from .errors import ConfigError, DomainError
from .spectral import FourierGrid, RealField, Spectrum

NEAR_INTEGER_TOL = 1e-9


@dataclass(frozen=True)
class DispersionParams:
    """Unperturbed jet radius rho in (0, 1) with 1/rho not an integer."""

    rho: float

    def __post_init__(self):
        rho = float(self.rho)
        if not 0.0 < rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {rho}")
        inv = 1.0 / rho
        if abs(inv - round(inv)) < NEAR_INTEGER_TOL:
            raise ConfigError(f"1/rho = {inv} is an integer; the frequency xi = 1/rho is degenerate")
        object.__setattr__(self, "rho", rho)

    @property
    def n_growing(self) -> int:
        """Number of positive growing frequencies, the integer part of 1/rho."""
        return int(np.floor(1.0 / self.rho))


# -- multipliers --------------------------------------------------------------


def g0(xi, p: DispersionParams):
    """Flat Dirichlet-Neumann multiplier ratio(rho |xi|) |xi|."""
    a = np.abs(np.asarray(xi, dtype=float))
    return bessel.ratio(p.rho * a) * a


def curvature_multiplier(xi, p: DispersionParams):
    """Linearized mean curvature H'[0] = xi^2 - 1/rho^2."""
    xi = np.asarray(xi, dtype=float)
    return xi * xi - 1.0 / p.rho**2


def growing_mask(xi, p: DispersionParams):
    a = np.abs(np.asarray(xi, dtype=float))
    return (a >= 1.0) & (p.rho * a < 1.0)


def dispersive_mask(xi, p: DispersionParams):
    a = np.abs(np.asarray(xi, dtype=float))
    return (a == 0.0) | (p.rho * a > 1.0)


def lambda_g(xi, p: DispersionParams):
    """Growth rate sqrt(rho^-3 ratio(rho|xi|) rho|xi| (1 - (rho xi)^2)) on the growing band, else 0."""
    k = p.rho * np.abs(np.asarray(xi, dtype=float))
    val = np.sqrt(np.clip(bessel.ratio(k) * k * (1.0 - k * k), 0.0, None) / p.rho**3)
    out = np.where(growing_mask(xi, p), val, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def lambda_d(xi, p: DispersionParams):
    """Dispersive frequency, the same expression with (rho xi)^2 - 1, on the dispersive band."""
    k = p.rho * np.abs(np.asarray(xi, dtype=float))
    val = np.sqrt(np.clip(bessel.ratio(k) * k * (k * k - 1.0), 0.0, None) / p.rho**3)
    out = np.where(dispersive_mask(xi, p), val, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def rayleigh_growth(k):
    """ratio(k) k (1 - k^2), the reduced growth function of the wavenumber k = rho xi."""
    k = np.asarray(k, dtype=float)
    return bessel.ratio(np.abs(k)) * k * (1.0 - k * k)


def most_unstable_wavenumber(tol: float = 1e-10) -> float:
    """Maximizer of ratio(k) k (1 - k^2) over (0, 1), by golden-section search."""
    res = optimize.minimize_scalar(
        lambda k: -rayleigh_growth(k), bracket=(0.2, 0.6, 0.95), method="golden", tol=tol
    )
    return float(res.x)


def extreme_rates(p: DispersionParams) -> tuple[float, float]:
    """(mu, lam): smallest and largest growth rate over the integer growing frequencies."""
    xi = np.arange(1, p.n_growing + 1)
    rates = lambda_g(xi, p)
    return float(np.min(rates)), float(np.max(rates))


# -- spectral split -----------------------------------------------------------


def _mirror(c: np.ndarray) -> np.ndarray:
    """c(-xi) in FFT order along the last axis."""
    n = c.shape[-1]
    return c[..., (-np.arange(n)) % n]


def real_part_coeffs(c: np.ndarray) -> np.ndarray:
    """Spectrum of Re z from the spectrum of z."""
    return 0.5 * (c + np.conj(_mirror(c)))


def imag_part_coeffs(c: np.ndarray) -> np.ndarray:
    """Spectrum of Im z from the spectrum of z."""
    return (c - np.conj(_mirror(c))) / 2j


@dataclass(frozen=True)
class SpectralSplit:
    """Growing/dispersive classification of the retained frequencies of a grid."""

    grid: FourierGrid
    params: DispersionParams

    def __post_init__(self):
        if self.grid.k_max <= 1.0 / self.params.rho:
            raise ConfigError("grid too coarse: no dispersive frequency above 1/rho is retained")

    @cached_property
    def growing(self) -> np.ndarray:
        return growing_mask(self.grid.xi, self.params) & self.grid.retained

    @cached_property
    def dispersive(self) -> np.ndarray:
        return dispersive_mask(self.grid.xi, self.params) & self.grid.retained

    @cached_property
    def growing_set(self) -> frozenset:
        return frozenset(int(x) for x in self.grid.xi[self.growing])

    @cached_property
    def dispersive_set(self) -> frozenset:
        return frozenset(int(x) for x in self.grid.xi[self.dispersive])

    @cached_property
    def rate_g(self) -> np.ndarray:
        return np.where(self.growing, lambda_g(self.grid.xi, self.params), 0.0)

    @cached_property
    def rate_d(self) -> np.ndarray:
        return np.where(self.dispersive, lambda_d(self.grid.xi, self.params), 0.0)

    def pi_g(self, c):
        return np.where(self.growing, c, 0.0)

    def pi_d(self, c):
        return np.where(self.dispersive, c, 0.0)

    def pi_u(self, c):
        """Unstable part: Re of the growing component (a real field)."""
        return np.where(self.growing, real_part_coeffs(c), 0.0)

    def pi_s(self, c):
        """Stable part: i Im of the growing component."""
        return np.where(self.growing, 1j * imag_part_coeffs(c), 0.0)


# -- state and complex coordinate ---------------------------------------------


@dataclass(frozen=True)
class JetState:
    """Interface deformation eta and potential trace psi (zero real mean)."""

    eta: RealField
    psi: RealField
    params: DispersionParams = field(default=None)

    def __post_init__(self):
        if self.eta.grid != self.psi.grid:
            raise ConfigError("eta and psi live on different grids")
        psi = self.psi.values - np.mean(self.psi.values)
        object.__setattr__(self, "psi", RealField(self.psi.grid, psi))
        if self.params is not None and np.min(self.params.rho + self.eta.values) <= 0:
            raise DomainError("rho + eta must stay positive")

    @property
    def grid(self) -> FourierGrid:
        return self.eta.grid

    @classmethod
    def from_arrays(cls, grid, eta, psi, params=None):
        return cls(RealField(grid, eta), RealField(grid, psi), params)

    @classmethod
    def zero(cls, grid, params=None):
        z = np.zeros(grid.n_modes)
        return cls(RealField(grid, z), RealField(grid, z), params)


@dataclass(frozen=True)
class ComplexCoordinate:
    """Multipliers of the linear complex coordinate on one grid."""

    grid: FourierGrid
    params: DispersionParams

    @cached_property
    def split(self) -> SpectralSplit:
        return SpectralSplit(self.grid, self.params)

    @cached_property
    def a(self):
        """sqrt(1/rho^2 - xi^2) on the growing band."""
        xi = self.grid.xi.astype(float)
        return np.where(self.split.growing, np.sqrt(np.abs(1.0 / self.params.rho**2 - xi * xi)), 0.0)

    @cached_property
    def b(self):
        """sqrt(xi^2 - 1/rho^2) on the dispersive band away from 0."""
        xi = self.grid.xi.astype(float)
        m = self.split.dispersive & (xi != 0)
        return np.where(m, np.sqrt(np.abs(xi * xi - 1.0 / self.params.rho**2)), 0.0)

    @cached_property
    def g(self):
        """sqrt(G0)."""
        return np.where(self.grid.retained, np.sqrt(g0(self.grid.xi, self.params)), 0.0)

    def forward(self, eta_c, psi_c):
        """Spectra of (eta, psi) -> spectrum of z."""
        sp = self.split
        x_g = self.a * eta_c + self.g * psi_c
        y_g = self.a * eta_c - self.g * psi_c
        z = np.where(sp.growing, x_g + 1j * y_g, 0.0)
        z = z + np.where(sp.dispersive, 1j * self.b * eta_c + self.g * psi_c, 0.0)
        z[..., 0] = 1j * eta_c[..., 0]
        return z

    def inverse(self, z):
        """Spectrum of z -> spectra of (eta, psi); psi has zero mean."""
        sp = self.split
        x = real_part_coeffs(z)
        y = imag_part_coeffs(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            eta_g = (x + y) / (2.0 * self.a)
            psi_g = (x - y) / (2.0 * self.g)
            eta_d = y / self.b
            psi_d = x / self.g
        d_nz = sp.dispersive & (self.grid.xi != 0)
        eta = np.where(sp.growing, eta_g, 0.0) + np.where(d_nz, eta_d, 0.0)
        psi = np.where(sp.growing, psi_g, 0.0) + np.where(d_nz, psi_d, 0.0)
        eta[..., 0] = y[..., 0]
        psi[..., 0] = 0.0
        return eta, psi


def to_complex(state: JetState, p: DispersionParams) -> Spectrum:
    """Complex coordinate z of a state."""
    cc = ComplexCoordinate(state.grid, p)
    eta_c = spectral.fft(state.eta.values)
    psi_c = spectral.fft(state.psi.values)
    return Spectrum(state.grid, cc.forward(eta_c, psi_c))


def from_complex(z: Spectrum, p: DispersionParams) -> JetState:
    """Inverse of :func:`to_complex` on the retained frequencies."""
    cc = ComplexCoordinate(z.grid, p)
    eta_c, psi_c = cc.inverse(z.coeffs)
    eta = spectral.ifft(eta_c).real
    psi = spectral.ifft(psi_c).real
    return JetState.from_arrays(z.grid, eta, psi, p)


def linear_flow_coeffs(z: np.ndarray, t: float, split: SpectralSplit) -> np.ndarray:
    """Exact linear evolution of a coefficient array over time t."""
    x = real_part_coeffs(z)
    y = imag_part_coeffs(z)
    lam = split.rate_g
    grow = np.exp(t * lam) * x + 1j * np.exp(-t * lam) * y
    out = np.where(split.growing, grow, 0.0)
    out = out + np.where(split.dispersive, np.exp(1j * t * split.rate_d) * z, 0.0)
    return out


def linear_flow(z0: Spectrum, t: float, p: DispersionParams) -> Spectrum:
    """z(t) = e^{t Lg} Re Pi_g z0 + i e^{-t Lg} Im Pi_g z0 + e^{i t Ld} Pi_d z0."""
    split = SpectralSplit(z0.grid, p)
    return Spectrum(z0.grid, linear_flow_coeffs(z0.coeffs, t, split))
