"""Linear paradifferential propagator along a background trajectory.

The propagator advances

    dv/dt = i Pi_d T_gamma(t) v + Pi_d f(t)

on the dispersive range, where gamma(t) is the extended symbol evaluated on a
stored background u(t). One step of size d is the symmetric splitting

    exact flat phase e^{i Lambda_d d/2}
    implicit midpoint on V(t) = i Pi_d (T_gamma(t) - Lambda_d)
    exact flat phase e^{i Lambda_d d/2}

The operator V is assembled at the background samples and interpolated
linearly in t. The step is time-symmetric, so running backwards over the
same step grid inverts a forward run up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import spectral
from .errors import ConfigError
from .linear import SpectralSplit, imag_part_coeffs, real_part_coeffs
from .paradiff import ExtendedSystem
from .spectral import FourierGrid, Spectrum


@dataclass(frozen=True)
class BackgroundTrajectory:
    """Time samples of the background in the complex unknown.

    Attributes
    ----------
    grid : FourierGrid
    times : ndarray, shape (K,)
        Strictly increasing.
    states : ndarray, shape (K, n_modes)
        Spectra u(t_k).
    """

    grid: FourierGrid
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=complex)
        if t.ndim != 1 or s.shape != (t.size, self.grid.n_modes):
            raise ConfigError("states must have shape (len(times), n_modes)")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ConfigError("background times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    @classmethod
    def constant(cls, u: Spectrum, t0: float, t1: float) -> "BackgroundTrajectory":
        lo, hi = min(t0, t1), max(t0, t1)
        return cls(u.grid, np.array([lo, hi]), np.vstack([u.coeffs, u.coeffs]))

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def interpolate(self, t: float) -> Spectrum:
        """Linear interpolation of the coefficients."""
        k, w = _locate(self.times, t)
        return Spectrum(self.grid, (1 - w) * self.states[k] + w * self.states[k + 1])


def _locate(times: np.ndarray, t: float) -> tuple[int, float]:
    if times.size == 1:
        return 0, 0.0
    k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
    w = (t - times[k]) / (times[k + 1] - times[k])
    return k, float(w)


class DispersiveGenerator:
    """Variable part V(t) = i Pi_d (T_gamma(u(t)) - Lambda_d) on the dispersive range.

    Parameters
    ----------
    ext : ExtendedSystem
    bg : BackgroundTrajectory
    symbols : list, optional
        Precomputed extended symbols at the background samples.
    """

    def __init__(self, ext: ExtendedSystem, bg: BackgroundTrajectory, symbols=None):
        if bg.grid != ext.grid:
            raise ConfigError("background and extended system live on different grids")
        self.ext = ext
        self.bg = bg
        self.idx = np.flatnonzero(ext.pi_d)
        self.rate = ext.lam_d[self.idx]
        if symbols is None:
            symbols = [ext.symbol(Spectrum(bg.grid, s)) for s in bg.states]
        sub = np.ix_(self.idx, self.idx)
        flat = np.diag(self.rate)
        self.mats = np.array([1j * (sym.matrix()[sub] - flat) for sym in symbols])
        self._zero = not np.any(self.mats)

    @classmethod
    def flat(cls, ext: ExtendedSystem, t0: float = 0.0, t1: float = 1.0) -> "DispersiveGenerator":
        z = Spectrum(ext.grid, np.zeros(ext.grid.n_modes, dtype=complex))
        return cls(ext, BackgroundTrajectory.constant(z, t0, t1))

    def at(self, t: float) -> np.ndarray:
        lo, hi = self.bg.span
        if t < lo - 1e-12 * max(1.0, abs(lo)) or t > hi + 1e-12 * max(1.0, abs(hi)):
            raise ConfigError(f"time {t} outside the background span [{lo}, {hi}]")
        k, w = _locate(self.bg.times, t)
        if self.mats.shape[0] == 1:
            return self.mats[0]
        return (1 - w) * self.mats[k] + w * self.mats[k + 1]


@dataclass
class PropagatorRun:
    """Record of one propagation: endpoints, step and the L2 norm after each step."""

    t0: float
    t1: float
    dt_lin: float
    norms: list = field(default_factory=list)


def propagate(gen: DispersiveGenerator, t0: float, t1: float, h: Spectrum,
              forcing: Callable[[float], np.ndarray] | None = None,
              dt_lin: float = 0.025, record: PropagatorRun | None = None) -> Spectrum:
    """v(t1) for dv/dt = i Pi_d T_gamma v + Pi_d forcing(t), v(t0) = Pi_d h.

    Parameters
    ----------
    gen : DispersiveGenerator
    t0, t1 : float
        Either order; backward runs use the same scheme with a negative step.
    h : Spectrum
    forcing : callable, optional
        Maps t to a coefficient array; only its dispersive part is used.
    dt_lin : float
        Largest step; the interval is split into equal steps.
    record : PropagatorRun, optional
        Receives the norm after each step.
    """
    if dt_lin <= 0:
        raise ConfigError("dt_lin must be positive")
    idx = gen.idx
    v = h.coeffs[idx].astype(complex)
    n_steps = max(1, int(np.ceil(abs(t1 - t0) / dt_lin - 1e-9)))
    d = (t1 - t0) / n_steps if t1 != t0 else 0.0
    half = np.exp(0.5j * d * gen.rate)
    eye = np.eye(idx.size)
    if record is not None:
        record.t0, record.t1, record.dt_lin = t0, t1, abs(d)
    if t1 == t0:
        n_steps = 0
    for k in range(n_steps):
        ta = t0 + k * d
        tm = ta + 0.5 * d
        v = half * v
        # implicit midpoint in the frame rotated to the middle of the step
        rhs = v
        m = None if gen._zero else gen.at(tm)
        if m is not None:
            rhs = v + 0.5 * d * (m @ v)
        if forcing is not None:
            rhs = rhs + d * forcing(tm)[idx]
        v = rhs if m is None else np.linalg.solve(eye - 0.5 * d * m, rhs)
        v = half * v
        if record is not None:
            record.norms.append(float(np.linalg.norm(v)))
    out = np.zeros(h.grid.n_modes, dtype=complex)
    out[idx] = v
    return Spectrum(h.grid, out)


def selfadjoint_defect(ext: ExtendedSystem, u: Spectrum, v: Spectrum) -> float:
    """||(T_gamma - T_gamma^*) v|| / ||v|| with the adjoint taken as the conjugate transpose."""
    keep = np.flatnonzero(ext.grid.retained)
    m = ext.symbol(u).matrix()[np.ix_(keep, keep)]
    x = v.coeffs[keep]
    nv = np.linalg.norm(x)
    if nv == 0:
        return 0.0
    return float(np.linalg.norm((m - m.conj().T) @ x) / nv)


# -- twisted Duhamel formula -----------------------------------------------------


def hyperbolic_flow(c: np.ndarray, t: float, split: SpectralSplit) -> np.ndarray:
    """e^{t Lambda_g} on the unstable part plus e^{-t Lambda_g} on the stable part."""
    lam = split.rate_g
    x = np.where(split.growing, real_part_coeffs(c), 0.0)
    y = np.where(split.growing, imag_part_coeffs(c), 0.0)
    return np.exp(t * lam) * x + 1j * np.exp(-t * lam) * y


def duhamel_residual(ext: ExtendedSystem, times: np.ndarray, states: np.ndarray,
                     dt_lin: float | None = None, s: float | None = None) -> float:
    """sup_t ||u(t) - Duhamel(t)||_{H^s} for a sampled solution of the extended equation.

    The hyperbolic part uses the exact exponentials with trapezoid quadrature of
    the remainder, the dispersive part the propagator along the trajectory itself.
    """
    grid = ext.grid
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=complex)
    s = ext.s0 if s is None else s
    if not np.any(states):
        return 0.0
    split = SpectralSplit(grid, ext.params)
    bg = BackgroundTrajectory(grid, times, states)
    evals = [ext.evaluate(Spectrum(grid, u)) for u in states]
    rem = np.array([r.coeffs for r, _ in evals])
    gen = DispersiveGenerator(ext, bg, [sym for _, sym in evals])
    dt = np.diff(times)
    dt_lin = 0.25 * float(np.min(dt)) if dt_lin is None else dt_lin
    pd_mask = ext.pi_d
    u0 = states[0]
    hyp_int = np.zeros(grid.n_modes, dtype=complex)
    disp = np.where(pd_mask, u0, 0.0)
    worst = 0.0
    for k in range(1, times.size):
        d = dt[k - 1]
        # hyperbolic integral: J_k = e^{d L} J_{k-1} + d/2 (e^{d L} R_{k-1} + R_k)
        hyp_int = hyperbolic_flow(hyp_int + 0.5 * d * rem[k - 1], d, split) \
            + 0.5 * d * hyperbolic_flow(rem[k], 0.0, split)
        disp = propagate(gen, times[k - 1], times[k],
                         Spectrum(grid, disp + 0.5 * d * np.where(pd_mask, rem[k - 1], 0.0)),
                         dt_lin=dt_lin).coeffs + 0.5 * d * np.where(pd_mask, rem[k], 0.0)
        rhs = hyperbolic_flow(u0, times[k] - times[0], split) + hyp_int + disp
        err = spectral.sobolev_norm(Spectrum(grid, states[k] - rhs), s)
        worst = max(worst, err)
    return float(worst)
