"""Fourier representation of 2*pi-periodic fields.

Coefficients are normalized so that a field f with samples f(x_j) satisfies

    f(x) = sum_xi c(xi) e^(i xi x),    c = fft(f) / n,

and are stored in numpy FFT order. The retained frequencies are
|xi| <= n/2 - 1: every derivative or multiplier zeroes the Nyquist mode.
Norms use the normalized measure dx / (2 pi), so ||e^(ix)||_{L^2} = 1.

Littlewood-Paley blocks are built from a profile theta that equals 1 on
|t| <= 1 and vanishes for |t| >= 2 (``smooth``), or the indicator of |t| <= 1
(``sharp``, the default). With phi(t) = theta(t) - theta(2t),

    Delta_0 = theta(D),  Delta_j = phi(2^-j D) (j >= 1),  S_j = theta(2^-j D),

so phi is supported in 1/2 <= |t| <= 2 and phi(1) = 1 for both profiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class FourierGrid:
    """Uniform collocation grid on [0, 2 pi)."""

    n_modes: int
    dealias_fraction: Fraction | float = Fraction(2, 3)

    def __post_init__(self):
        n = self.n_modes
        if not isinstance(n, (int, np.integer)) or n < 4 or n & (n - 1):
            raise ConfigError(f"n_modes must be a power of two >= 4, got {n!r}")
        if not 0 < float(self.dealias_fraction) <= 1:
            raise ConfigError("dealias_fraction must lie in (0, 1]")

    @cached_property
    def x(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_modes) / self.n_modes

    @cached_property
    def xi(self) -> np.ndarray:
        """Integer frequencies in FFT order (the Nyquist slot carries +n/2)."""
        xi = np.fft.fftfreq(self.n_modes, 1.0 / self.n_modes).round().astype(int)
        xi[self.n_modes // 2] = self.n_modes // 2
        return xi

    @property
    def k_max(self) -> int:
        return self.n_modes // 2 - 1

    @cached_property
    def retained(self) -> np.ndarray:
        return np.abs(self.xi) <= self.k_max

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return np.abs(self.xi) <= float(self.dealias_fraction) * self.n_modes / 2

    @property
    def k_dealias(self) -> int:
        return int(np.max(np.abs(self.xi[self.dealias_mask])))

    def index(self, xi: int) -> int:
        """FFT slot of the integer frequency xi."""
        if abs(xi) > self.k_max:
            raise ConfigError(f"frequency {xi} outside the retained range")
        return xi % self.n_modes


@dataclass(frozen=True)
class RealField:
    """Real samples of a periodic field at the collocation points."""

    grid: FourierGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_modes,):
            raise ConfigError(f"expected {self.grid.n_modes} samples, got shape {v.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Spectrum:
    """Normalized Fourier coefficients in FFT order."""

    grid: FourierGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n_modes,):
            raise ConfigError(f"expected {self.grid.n_modes} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def coeff(self, xi: int) -> complex:
        return complex(self.coeffs[self.grid.index(xi)])

    def values(self) -> np.ndarray:
        """Complex samples at the collocation points."""
        return ifft(self.coeffs)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        c = self.coeffs
        mirror = np.conj(c[(-np.arange(c.size)) % c.size])
        return bool(np.max(np.abs(c - mirror), initial=0.0) <= tol * max(1.0, np.max(np.abs(c))))


# -- raw array helpers (last axis is x or xi) ---------------------------------


def fft(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values)
    return np.fft.fft(v, axis=-1) / v.shape[-1]


def ifft(coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs)
    return np.fft.ifft(c, axis=-1) * c.shape[-1]


def rfft(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.fft.rfft(v, axis=-1) / v.shape[-1]


def irfft(coeffs: np.ndarray, n: int) -> np.ndarray:
    return np.fft.irfft(np.asarray(coeffs) * n, n=n, axis=-1)


def diff(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Spectral x-derivative of real samples along the last axis (Nyquist zeroed)."""
    v = np.asarray(values, dtype=float)
    n = v.shape[-1]
    k = np.arange(n // 2 + 1)
    mult = (1j * k) ** order
    mult[-1] = 0.0
    return np.fft.irfft(np.fft.rfft(v, axis=-1) * mult, n=n, axis=-1)


def diff_complex(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Spectral x-derivative of complex samples along the last axis."""
    v = np.asarray(values, dtype=complex)
    n = v.shape[-1]
    xi = np.fft.fftfreq(n, 1.0 / n)
    mult = (1j * xi) ** order
    mult[n // 2] = 0.0
    return np.fft.ifft(np.fft.fft(v, axis=-1) * mult, axis=-1)


def dealias_values(values: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Apply the 2/3 rule to real samples."""
    c = fft(values)
    c[..., ~grid.dealias_mask] = 0.0
    out = ifft(c)
    return out.real if np.isrealobj(values) else out


def project_real(values: np.ndarray) -> np.ndarray:
    """Zero the Nyquist mode of real samples."""
    v = np.asarray(values, dtype=float)
    c = np.fft.rfft(v, axis=-1)
    c[..., -1] = 0.0
    return np.fft.irfft(c, n=v.shape[-1], axis=-1)


# -- field-level operations ---------------------------------------------------


def to_spectrum(f: RealField, grid: FourierGrid | None = None) -> Spectrum:
    """Exact discrete Fourier transform of a real field."""
    if grid is not None and grid != f.grid:
        raise ConfigError("grid mismatch between field and requested spectrum")
    return Spectrum(f.grid, fft(f.values))


def from_spectrum(s: Spectrum, tol: float = 1e-10) -> RealField:
    """Inverse transform; the spectrum must be Hermitian up to ``tol``."""
    v = s.values()
    scale = max(1.0, float(np.max(np.abs(v), initial=0.0)))
    if np.max(np.abs(v.imag), initial=0.0) > tol * scale:
        raise NumericError("spectrum is not Hermitian; the field would be complex")
    return RealField(s.grid, v.real)


def multiplier_values(m: Callable[[np.ndarray], np.ndarray] | np.ndarray, grid: FourierGrid):
    """Evaluate a multiplier on the grid frequencies; Nyquist slot set to zero."""
    xi = grid.xi
    vals = np.asarray(m(xi) if callable(m) else m, dtype=complex)
    if vals.shape != xi.shape:
        vals = np.broadcast_to(vals, xi.shape).astype(complex)
    bad = grid.retained & ~np.isfinite(vals)
    if np.any(bad):
        raise NumericError(f"multiplier is not finite at xi={int(xi[bad][0])}")
    vals = np.where(grid.retained, vals, 0.0)
    return vals


def apply_multiplier(m, s: Spectrum) -> Spectrum:
    """Multiply each retained coefficient by m(xi)."""
    return Spectrum(s.grid, multiplier_values(m, s.grid) * s.coeffs)


def sobolev_norm(u: Spectrum | np.ndarray, s: float, grid: FourierGrid | None = None) -> float:
    """(sum_xi (1 + xi^2)^s |c(xi)|^2)^(1/2) over the retained frequencies."""
    if isinstance(u, Spectrum):
        grid, c = u.grid, u.coeffs
    else:
        c = np.asarray(u)
    xi = grid.xi
    w = np.where(grid.retained, (1.0 + xi.astype(float) ** 2) ** s, 0.0)
    return float(np.sqrt(np.sum(w * np.abs(c) ** 2, axis=-1)))


def sobolev_norm_values(values: np.ndarray, s: float, grid: FourierGrid) -> float:
    return sobolev_norm(fft(values), s, grid)


# -- Littlewood-Paley ---------------------------------------------------------


def _smoothstep(s: np.ndarray) -> np.ndarray:
    """C-infinity transition: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class LittlewoodPaley:
    """Dyadic partition of unity on the integer frequencies.

    ``profile="sharp"`` uses theta = indicator of |t| <= 1, which gives the cutoff
    bounds chi = 1 on |zeta| <= |xi'|/8 and chi = 0 on |zeta| >= |xi'|/2 exactly.
    ``profile="smooth"`` uses theta(t) = smoothstep(2 - |t|); its cutoff obeys the
    weaker inner bound chi = 1 on |zeta| <= |xi'|/16.
    """

    profile: str = "sharp"

    def __post_init__(self):
        if self.profile not in ("sharp", "smooth"):
            raise ConfigError(f"unknown Littlewood-Paley profile {self.profile!r}")

    def theta(self, t) -> np.ndarray:
        a = np.abs(np.asarray(t, dtype=float))
        if self.profile == "sharp":
            return (a <= 1.0).astype(float)
        return _smoothstep(2.0 - a)

    def phi(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.theta(t) - self.theta(2.0 * t)

    def block_multiplier(self, j: int, xi) -> np.ndarray:
        """Symbol of Delta_j."""
        xi = np.asarray(xi, dtype=float)
        if j < 0:
            return np.zeros_like(xi)
        if j == 0:
            return self.theta(xi)
        return self.phi(xi / 2.0**j)

    def partial_multiplier(self, j: int, xi) -> np.ndarray:
        """Symbol of S_j = sum_{l <= j} Delta_l (zero for j <= -1)."""
        xi = np.asarray(xi, dtype=float)
        if j < 0:
            return np.zeros_like(xi)
        return self.theta(xi / 2.0**j)

    def j_max(self, grid: FourierGrid) -> int:
        """Largest block index that can be nonzero on the retained frequencies."""
        j = 0
        while 2.0 ** (j - 1) < grid.k_max:
            j += 1
        return j

    def chi(self, zeta, xi_prime, j_stop: int | None = None) -> np.ndarray:
        """Paradifferential cutoff chi(zeta, xi') = sum_j S_{j-3}(zeta) Delta_j(xi')."""
        zeta = np.asarray(zeta, dtype=float)
        xp = np.asarray(xi_prime, dtype=float)
        zeta, xp = np.broadcast_arrays(zeta, xp)
        if j_stop is None:
            top = float(np.max(np.abs(xp), initial=1.0))
            j_stop = int(np.ceil(np.log2(max(top, 1.0)))) + 2
        out = np.zeros(zeta.shape)
        for j in range(3, j_stop + 1):
            out += self.partial_multiplier(j - 3, zeta) * self.block_multiplier(j, xp)
        return out


DEFAULT_LP = LittlewoodPaley()


@dataclass(frozen=True)
class LPDecomposition:
    """Blocks Delta_j u for j = 0..j_max."""

    lp: LittlewoodPaley
    blocks: list = field(default_factory=list)

    @property
    def j_max(self) -> int:
        return len(self.blocks) - 1

    def reconstruct(self) -> Spectrum:
        grid = self.blocks[0].grid
        return Spectrum(grid, np.sum([b.coeffs for b in self.blocks], axis=0))


def lp_block(u: Spectrum, j: int, lp: LittlewoodPaley = DEFAULT_LP) -> Spectrum:
    """Delta_j u (zero spectrum for j < 0 or beyond the grid)."""
    m = lp.block_multiplier(j, u.grid.xi) * u.grid.retained
    return Spectrum(u.grid, m * u.coeffs)


def partial_sum(u: Spectrum, j: int, lp: LittlewoodPaley = DEFAULT_LP) -> Spectrum:
    """S_j u; S_j = 0 for j <= -1."""
    m = lp.partial_multiplier(j, u.grid.xi) * u.grid.retained
    return Spectrum(u.grid, m * u.coeffs)


def lp_decompose(u: Spectrum, lp: LittlewoodPaley = DEFAULT_LP) -> LPDecomposition:
    return LPDecomposition(lp, [lp_block(u, j, lp) for j in range(lp.j_max(u.grid) + 1)])


def retain(s: Spectrum) -> Spectrum:
    """Zero everything outside the retained frequencies."""
    return Spectrum(s.grid, np.where(s.grid.retained, s.coeffs, 0.0))


def dealias(s: Spectrum) -> Spectrum:
    return Spectrum(s.grid, np.where(s.grid.dealias_mask, s.coeffs, 0.0))


def field_from_function(grid: FourierGrid, fn: Callable[[np.ndarray], np.ndarray]) -> RealField:
    return RealField(grid, fn(grid.x))
