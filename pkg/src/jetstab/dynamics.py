"""Nonlinear evolution of the jet.

The unknowns are the surface deformation eta and the surface potential psi.
The right-hand side is

    eta_t = G[eta] psi,
    psi_t = -psi_x^2 / 2 + (psi_x eta_x + G[eta] psi)^2 / (2 (1 + eta_x^2))
            - H[eta] + 1 / rho,

with the real mean of psi_t projected out. Time stepping is a Lawson
(integrating factor) RK4: the flat linearization is propagated exactly, mode by
mode, and only the remainder is sampled by the Runge-Kutta stages. The flat
part of the discrete elliptic solver is subtracted inside the remainder so the
radial discretization error does not perturb the linear rates (see
:class:`~jetstab.dno.DNOSolver` with ``flat_correction``).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linear, spectral
from .dno import DNOSolver
from .errors import ConfigError, DomainError
from .linear import DispersionParams, JetState, g0
from .spectral import FourierGrid, RealField

# RK4 stability interval on the real axis is about 2.78
STABILITY_CONSTANT = 2.5


def mean_curvature(eta: RealField, p: DispersionParams) -> RealField:
    """H[eta] = -eta_xx / (1 + eta_x^2)^(3/2) + 1 / ((rho + eta) sqrt(1 + eta_x^2))."""
    r = p.rho + eta.values
    if np.min(r) <= 0:
        raise DomainError("rho + eta vanishes: pinch-off")
    ex = spectral.diff(eta.values)
    exx = spectral.diff(eta.values, 2)
    q = 1.0 + ex * ex
    h = -exx / q**1.5 + 1.0 / (r * np.sqrt(q))
    return RealField(eta.grid, spectral.dealias_values(h, eta.grid))


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping parameters.

    Parameters
    ----------
    dt : float
        Step size. The linear part is exact, so dt is limited by accuracy and by
        ``dt * max Lambda_g <= STABILITY_CONSTANT`` for the remainder.
    t_end : float
        Final time; negative values integrate backward.
    snapshot_stride : int
        Record every ``snapshot_stride`` steps.
    n_y : int
        Radial nodes of the elliptic solver.
    dno_method : {"auto", "direct", "gmres"}
    threshold : float, optional
        Pinch-off threshold for rho + eta, default rho / 4.
    norm_index : float
        Sobolev index of the recorded norm diagnostic.
    """

    dt: float
    t_end: float
    snapshot_stride: int = 1
    scheme: str = "lawson_rk4"
    n_y: int = 64
    dno_method: str = "auto"
    threshold: float | None = None
    norm_index: float = 2.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.scheme != "lawson_rk4":
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.snapshot_stride < 1:
            raise ConfigError("snapshot_stride must be at least 1")
        if not math.isfinite(self.t_end):
            raise ConfigError("t_end must be finite")

    @property
    def n_steps(self) -> int:
        return int(round(abs(self.t_end) / self.dt))

    def check_stability(self, p: DispersionParams):
        lam = linear.extreme_rates(p)[1]
        if self.dt * lam > STABILITY_CONSTANT:
            raise ConfigError(
                f"dt * max growth rate = {self.dt * lam:.3f} exceeds {STABILITY_CONSTANT}"
            )


@dataclass(frozen=True)
class TrajectorySample:
    """State at time t with diagnostics (delta_eta, h_s_norm, flux)."""

    t: float
    state: JetState
    diagnostics: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    """Time-ordered samples and the termination status (ok, pinch_off, diverged)."""

    samples: list
    status: str = "ok"

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])


class JetSystem:
    """Right-hand side and exact linear flow on a fixed grid.

    Parameters
    ----------
    grid : FourierGrid
    params : DispersionParams
    n_y : int
        Radial nodes of the elliptic solver.
    dno_method : str
    threshold : float, optional
    """

    def __init__(self, grid: FourierGrid, params: DispersionParams, n_y: int = 64,
                 dno_method: str = "auto", threshold: float | None = None,
                 flat_correction: bool = True):
        self.grid = grid
        self.params = params
        self.n_y = n_y
        self.dno = DNOSolver(grid, params, n_y, dno_method, threshold, flat_correction)
        xi = grid.xi.astype(float)
        keep = grid.retained
        self._g0 = np.where(keep, g0(xi, params), 0.0)
        self._m = np.where(keep, 1.0 / params.rho**2 - xi * xi, 0.0)
        # linear part subtracted from the rhs inside the Lawson remainder
        self._g_lin = self._g0 if flat_correction else self.dno._flat_discrete()
        self._dealias = grid.dealias_mask & keep

    # -- right-hand side ----------------------------------------------------

    def solve(self, eta: np.ndarray, psi: np.ndarray):
        return self.dno.solve(eta, psi)

    def rhs_values(self, eta: np.ndarray, psi: np.ndarray):
        """(eta_t, psi_t, G) as arrays of samples.

        The linear part acts on every retained mode; only the nonlinear part is
        dealiased, matching the vector field advanced by the Lawson scheme.
        """
        res = self.solve(eta, psi)
        g = res.g.values
        ex = spectral.diff(eta)
        px = spectral.diff(psi)
        exx = spectral.diff(eta, 2)
        q = 1.0 + ex * ex
        r = self.params.rho + eta
        dpsi = (-0.5 * px * px + (px * ex + g) ** 2 / (2.0 * q)
                + (exx / q - 1.0 / r) / np.sqrt(q) + 1.0 / self.params.rho)
        ec, pc = spectral.fft(eta), spectral.fft(psi)
        le = self._g_lin * pc
        lp = self._m * ec
        deta = le + self._filter(spectral.fft(g) - le)
        dpsi_c = lp + self._filter(spectral.fft(dpsi) - lp)
        dpsi_c[0] = 0.0
        return spectral.ifft(deta).real, spectral.ifft(dpsi_c).real, g

    def _filter(self, c):
        return np.where(self._dealias, c, 0.0)

    def remainder(self, ec, pc):
        """Nonlinear remainder in coefficient form: full rhs minus the flat linear part."""
        # the linear part below acts on the same real fields, so anti-Hermitian
        # round-off is never fed to the explicit stages
        eta = spectral.ifft(ec).real
        psi = spectral.ifft(pc).real
        ec, pc = spectral.fft(eta), spectral.fft(psi)
        de, dp, g = self.rhs_values(eta, psi)
        ne = self._filter(spectral.fft(de) - self._g_lin * pc)
        npc = self._filter(spectral.fft(dp) - self._m * ec)
        npc[0] = 0.0
        return ne, npc, g

    def exp_coeffs(self, t: float):
        """Entries (c11, c12, c21, c22) of exp(t [[0, G0], [1/rho^2 - xi^2, 0]]) per mode."""
        prod = self._g0 * self._m
        w = np.sqrt(np.abs(prod))
        wt = w * t
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(prod > 0, np.sinh(wt), np.sin(wt)) / np.where(w > 0, w, 1.0)
        sinc = np.where(w > 0, sinc, t)
        c = np.where(prod > 0, np.cosh(wt), np.cos(wt))
        c = np.where(w > 0, c, 1.0)
        return c, self._g0 * sinc, self._m * sinc, c

    def linear_step(self, ec, pc, t, cache=None):
        c11, c12, c21, c22 = self.exp_coeffs(t) if cache is None else cache
        return c11 * ec + c12 * pc, c21 * ec + c22 * pc


def rhs(state: JetState, n_y: int = 64, dno_method: str = "auto",
        flat_correction: bool = True) -> tuple[RealField, RealField]:
    """(d eta / dt, d psi / dt) of the jet system; the psi equation has zero mean."""
    p = state.params
    if p is None:
        raise ConfigError("state carries no DispersionParams")
    sys_ = JetSystem(state.grid, p, n_y=n_y, dno_method=dno_method,
                     flat_correction=flat_correction)
    de, dp, _ = sys_.rhs_values(state.eta.values, state.psi.values)
    return RealField(state.grid, de), RealField(state.grid, dp)


def _hermitian(c):
    return spectral.fft(spectral.ifft(c).real)


class LawsonRK4:
    """Integrating-factor RK4 for u' = L u + N(u) with L the flat linearization."""

    def __init__(self, system: JetSystem, dt: float):
        self.system = system
        self.dt = dt
        self._half = system.exp_coeffs(dt / 2)
        self._full = system.exp_coeffs(dt)

    def step(self, ec, pc, k1=None):
        """One step from coefficients (ec, pc); returns new coefficients and G at the start."""
        s, h = self.system, self.dt
        lin = s.linear_step
        if k1 is None:
            k1 = s.remainder(ec, pc)
        a1, b1, g = k1
        e2, p2 = lin(ec + 0.5 * h * a1, pc + 0.5 * h * b1, None, self._half)
        a2, b2, _ = s.remainder(e2, p2)
        eh, ph = lin(ec, pc, None, self._half)
        a3, b3, _ = s.remainder(eh + 0.5 * h * a2, ph + 0.5 * h * b2)
        ef, pf = lin(ec, pc, None, self._full)
        e3h, p3h = lin(a3, b3, None, self._half)
        a4, b4, _ = s.remainder(ef + h * e3h, pf + h * p3h)
        e1f, p1f = lin(a1, b1, None, self._full)
        e23, p23 = lin(a2 + a3, b2 + b3, None, self._half)
        en = ef + h / 6.0 * (e1f + 2.0 * e23 + a4)
        pn = pf + h / 6.0 * (p1f + 2.0 * p23 + b4)
        pn[0] = 0.0
        return _hermitian(en), _hermitian(pn), g


def _diagnostics(state: JetState, g: np.ndarray, s_index: float) -> dict:
    eta, psi = state.eta.values, state.psi.values
    grid = state.grid
    hs = math.sqrt(spectral.sobolev_norm_values(eta, s_index, grid) ** 2
                   + spectral.sobolev_norm_values(psi, s_index, grid) ** 2)
    rho = state.params.rho
    return {
        "delta_eta": float(np.max(eta) - np.min(eta)),
        "h_s_norm": hs,
        "flux": float(np.mean((rho + eta) * g)),
    }


def step(state: JetState, cfg: IntegratorConfig, system: JetSystem | None = None) -> JetState:
    """Advance one step of size sign(t_end) * dt."""
    p = state.params
    system = system or JetSystem(state.grid, p, cfg.n_y, cfg.dno_method, cfg.threshold)
    h = math.copysign(cfg.dt, cfg.t_end) if cfg.t_end else cfg.dt
    ec, pc, _ = LawsonRK4(system, h).step(spectral.fft(state.eta.values),
                                          spectral.fft(state.psi.values))
    return JetState.from_arrays(state.grid, spectral.ifft(ec).real, spectral.ifft(pc).real, p)


def simulate(state0: JetState, cfg: IntegratorConfig, stop=None,
             system: JetSystem | None = None) -> Trajectory:
    """Integrate from ``state0`` to ``cfg.t_end``.

    Parameters
    ----------
    stop : callable, optional
        ``stop(sample) -> bool``; integration ends after the first sample for
        which it returns True.

    Returns
    -------
    Trajectory
        Samples every ``snapshot_stride`` steps, always including the first and
        the last computed state. Pinch-off or non-finite values end the run with
        status ``pinch_off`` or ``diverged``.
    """
    p = state0.params
    if p is None:
        raise ConfigError("state carries no DispersionParams")
    cfg.check_stability(p)
    grid = state0.grid
    system = system or JetSystem(grid, p, cfg.n_y, cfg.dno_method, cfg.threshold)
    h = math.copysign(cfg.dt, cfg.t_end) if cfg.t_end else cfg.dt
    stepper = LawsonRK4(system, h)
    ec = spectral.fft(state0.eta.values)
    pc = spectral.fft(state0.psi.values)
    pc[0] = 0.0
    samples = []
    status = "ok"
    n = cfg.n_steps
    for i in range(n + 1):
        state = JetState.from_arrays(grid, spectral.ifft(ec).real, spectral.ifft(pc).real, p)
        try:
            k1 = system.remainder(ec, pc)
        except DomainError:
            status = "pinch_off"
            break
        record = i % cfg.snapshot_stride == 0 or i == n
        if record:
            sample = TrajectorySample(i * h, state, _diagnostics(state, k1[2], cfg.norm_index))
            samples.append(sample)
            if stop is not None and stop(sample):
                break
        if i == n:
            break
        try:
            ec, pc, _ = stepper.step(ec, pc, k1)
        except DomainError:
            # an intermediate stage left the domain; keep the last valid state
            if not record:
                samples.append(TrajectorySample(i * h, state,
                                                _diagnostics(state, k1[2], cfg.norm_index)))
            status = "pinch_off"
            break
        if not (np.all(np.isfinite(ec)) and np.all(np.isfinite(pc))):
            status = "diverged"
            break
    return Trajectory(samples, status)


# -- growth-rate harness ------------------------------------------------------


@dataclass(frozen=True)
class GrowthRow:
    """One line of a growth scan."""

    xi: int
    k: float
    omega_measured: float
    omega_rayleigh: float
    flagged: bool = False
    n_fit: int = 0


def seed_state(grid: FourierGrid, p: DispersionParams, xi0: int, amplitude: float) -> JetState:
    """eta = amplitude cos(xi0 x); on the growing band psi is put on the unstable eigenvector."""
    x = grid.x
    if linear.growing_mask(xi0, p):
        eta_c = spectral.fft(amplitude * np.cos(xi0 * x))
        cc = linear.ComplexCoordinate(grid, p)
        # Re z = a eta + g psi with Im z = 0 forces psi = (a / g) eta
        z = 2.0 * linear.real_part_coeffs(cc.forward(eta_c, np.zeros_like(eta_c)))
        z = np.where(cc.split.growing, z, 0.0)
        return linear.from_complex(spectral.Spectrum(grid, z), p)
    return JetState.from_arrays(grid, amplitude * np.cos(xi0 * x), np.zeros(grid.n_modes), p)


def fit_growth(times, delta, lower, upper):
    """Least-squares slope of log(delta) over the samples with lower <= delta <= upper."""
    times = np.asarray(times)
    delta = np.asarray(delta)
    sel = (delta >= lower) & (delta <= upper)
    if np.count_nonzero(sel) < 3:
        return None, int(np.count_nonzero(sel))
    slope = np.polyfit(times[sel], np.log(delta[sel]), 1)[0]
    return float(slope), int(np.count_nonzero(sel))


def growth_run(p: DispersionParams, xi0: int, amplitude: float = 1e-6, n_modes: int = 128,
               n_y: int = 96, dt: float = 0.1, t_end: float | None = None,
               window: tuple[float, float] = (10.0, 1e-2), dno_method: str = "auto") -> GrowthRow:
    """Seed one mode, evolve, and fit the exponential growth of delta_eta."""
    grid = FourierGrid(n_modes)
    lam = linear.lambda_g(xi0, p)
    lower, upper = window[0] * amplitude, window[1]
    if t_end is None:
        rate = lam if lam > 0 else linear.extreme_rates(p)[0]
        t_end = 1.2 * math.log(upper / amplitude) / rate + 2.0
    cfg = IntegratorConfig(dt=dt, t_end=t_end, n_y=n_y, dno_method=dno_method)
    traj = simulate(seed_state(grid, p, xi0, amplitude), cfg,
                    stop=lambda s: s.diagnostics["delta_eta"] > upper)
    delta = [s.diagnostics["delta_eta"] for s in traj]
    omega, nfit = fit_growth(traj.times, delta, lower, upper)
    if omega is None:
        # an unstable mode without a fit window is flagged rather than silently zero
        return GrowthRow(xi0, p.rho * xi0, 0.0, lam, flagged=lam > 0, n_fit=nfit)
    return GrowthRow(xi0, p.rho * xi0, omega, lam, n_fit=nfit)


def growth_scan(p: DispersionParams, modes, amplitude: float = 1e-6, workers: int = 1,
                **kw) -> list[GrowthRow]:
    """Run :func:`growth_run` for each mode; rows keep the order of ``modes``."""
    modes = [int(m) for m in modes]
    if workers <= 1:
        return [growth_run(p, m, amplitude, **kw) for m in modes]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda m: growth_run(p, m, amplitude, **kw), modes))
