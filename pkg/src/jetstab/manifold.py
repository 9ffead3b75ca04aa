"""Lyapunov-Perron solvers for the hyperbolic manifolds and the center set.

All integral equations are written in the diagonalized complex unknown u and
use the extended system of :mod:`jetstab.paradiff`: hyperbolic directions are
integrated with the exact exponentials of Lambda_g, dispersive directions with
the paradifferential propagator along the current iterate.

For a stable solution on t in [0, T] (direction +1; the unstable case is the
same with time reversed, direction -1) the fixed-point map is

    Pi_s u(t) = e^{-t Lg} f + int_0^t e^{-(t - s) Lg} Pi_s R(s) ds
    Pi_u u(t) = -int_t^T e^{(t - s) Lg} Pi_u R(s) ds
    Pi_d u(t) = -int_t^T F(u; t, s) Pi_d R(s) ds

with R = R_Ext(u) and trapezoid quadrature on the sample grid. The tails
beyond T are dropped and bounded a posteriori.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .dynamics import LawsonRK4
from .errors import ConfigError, ConvergenceError, DomainError, SizeError
from .linear import SpectralSplit, extreme_rates, imag_part_coeffs, real_part_coeffs
from .paradiff import ExtendedSystem
from .propagator import BackgroundTrajectory, DispersiveGenerator, propagate
from .spectral import Spectrum

MIN_HORIZON_RATE = 10.0
DIVERGENCE_STREAK = 5


@dataclass(frozen=True)
class ManifoldConfig:
    """Discretization and iteration controls.

    Parameters
    ----------
    horizon : float
        Truncation time T; T * mu must be at least 10.
    quad_dt : float
        Sample spacing of the trajectory and of the quadrature.
    weight : float, optional
        Exponent a of the weighted sup norm, 0 <= a <= mu; defaults to mu / 2.
    picard_damping : float
        theta in u <- (1 - theta) u + theta * map(u).
    tol : float
        Stopping threshold on sup_t ||map(u)(t) - u(t)||_L2.
    max_iter : int
    dt_lin : float, optional
        Propagator step; defaults to quad_dt / 4.
    """

    horizon: float = 12.0
    quad_dt: float = 0.2
    weight: float | None = None
    picard_damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 30
    dt_lin: float | None = None

    def __post_init__(self):
        if self.horizon <= 0 or self.quad_dt <= 0:
            raise ConfigError("horizon and quad_dt must be positive")
        if not 0 < self.picard_damping <= 1:
            raise ConfigError("picard_damping must lie in (0, 1]")
        n = self.horizon / self.quad_dt
        if abs(n - round(n)) > 1e-9:
            raise ConfigError("horizon must be an integer multiple of quad_dt")

    def check(self, params) -> tuple[float, float]:
        """Validate against the growth rates; returns (mu, lambda)."""
        mu, lam = extreme_rates(params)
        if self.weight is not None and not 0 <= self.weight <= mu:
            raise ConfigError(f"weight {self.weight} outside [0, mu={mu:.4g}]")
        if self.horizon * mu < MIN_HORIZON_RATE:
            raise ConfigError(f"horizon * mu = {self.horizon * mu:.3g} below {MIN_HORIZON_RATE}")
        return mu, lam

    def resolved_weight(self, params) -> float:
        return extreme_rates(params)[0] / 2.0 if self.weight is None else self.weight

    @property
    def samples(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, int(round(self.horizon / self.quad_dt)) + 1)

    @property
    def lin_step(self) -> float:
        return self.quad_dt / 4.0 if self.dt_lin is None else self.dt_lin


@dataclass
class StableSolution:
    """Converged (or last) iterate of the stable or unstable integral equation.

    Attributes
    ----------
    f : Spectrum
        Hyperbolic base point.
    times : ndarray
        Sample times t = direction * s, s in [0, T].
    states : ndarray, shape (K, n_modes)
    residual : float
    fitted_decay : float
        Least-squares rate of log ||u(t)||_L2 against |t|.
    iterations : int
    history : list of float
        Fixed-point residual per iteration.
    direction : int
        +1 for the stable manifold, -1 for the unstable one.
    tail_bound : float
        Estimate of the dropped integrals beyond the horizon.
    """

    f: Spectrum
    times: np.ndarray
    states: np.ndarray
    residual: float
    fitted_decay: float
    iterations: int
    history: list = field(default_factory=list)
    direction: int = 1
    tail_bound: float = 0.0

    @property
    def point(self) -> Spectrum:
        """The manifold point u(0)."""
        return Spectrum(self.f.grid, self.states[0])


def _norms(states: np.ndarray) -> np.ndarray:
    return np.linalg.norm(states, axis=1)


def fit_decay(times: np.ndarray, states: np.ndarray) -> float:
    """-slope of log ||u(t)|| against |t| by least squares; nan for the zero trajectory."""
    n = _norms(states)
    ok = n > 0
    if np.count_nonzero(ok) < 2:
        return float("nan")
    slope = np.polyfit(np.abs(times[ok]), np.log(n[ok]), 1)[0]
    return float(-slope)


class LyapunovPerron:
    """Fixed-point machinery shared by the stable, unstable and center solvers.

    Parameters
    ----------
    ext : ExtendedSystem
    cfg : ManifoldConfig
    """

    def __init__(self, ext: ExtendedSystem, cfg: ManifoldConfig):
        self.ext = ext
        self.cfg = cfg
        self.grid = ext.grid
        self.split = SpectralSplit(ext.grid, ext.params)
        self.rate = self.split.rate_g

    # projections onto the growing band
    def pi_s(self, c):
        return np.where(self.split.growing, 1j * imag_part_coeffs(c), 0.0)

    def pi_u(self, c):
        return np.where(self.split.growing, real_part_coeffs(c), 0.0)

    def decay(self, c, s):
        """e^{-s Lambda_g} on growing-band coefficients."""
        return np.exp(-s * self.rate) * c

    def evaluate(self, states: np.ndarray):
        out = [self.ext.evaluate(Spectrum(self.grid, u)) for u in states]
        return np.array([r.coeffs for r, _ in out]), [sym for _, sym in out]

    def lp_map(self, states: np.ndarray, f: Spectrum, direction: int = 1,
               evaluated=None) -> np.ndarray:
        """One application of the integral map to a sampled trajectory.

        Parameters
        ----------
        states : ndarray, shape (K, n_modes)
            u at t_k = direction * s_k.
        f : Spectrum
            Base point in the subspace decaying along ``direction``.
        direction : {1, -1}
        evaluated : tuple, optional
            Precomputed ``(remainders, symbols)`` at the samples.
        """
        if direction not in (1, -1):
            raise ConfigError("direction must be +1 or -1")
        s = self.cfg.samples
        if states.shape[0] != s.size:
            raise ConfigError("trajectory does not match the configured sample grid")
        rem, syms = self.evaluate(states) if evaluated is None else evaluated
        dec, grow = (self.pi_s, self.pi_u) if direction == 1 else (self.pi_u, self.pi_s)
        d = direction
        h = self.cfg.quad_dt
        k_n = s.size
        out = np.zeros_like(states)

        # decaying component: forward recursion from the base point
        acc = np.zeros(self.grid.n_modes, dtype=complex)
        base = dec(f.coeffs)
        r_dec = np.array([dec(r) for r in rem])
        out[0] += base
        for k in range(1, k_n):
            acc = self.decay(acc + 0.5 * h * r_dec[k - 1], h) + 0.5 * h * r_dec[k]
            out[k] += self.decay(base, s[k]) + d * acc

        # growing component: backward recursion from the horizon
        r_gr = np.array([grow(r) for r in rem])
        acc = np.zeros(self.grid.n_modes, dtype=complex)
        out[-1] += 0.0
        for k in range(k_n - 2, -1, -1):
            acc = self.decay(acc + 0.5 * h * r_gr[k + 1], h) + 0.5 * h * r_gr[k]
            out[k] += -d * acc

        # dispersive component through the propagator along the iterate
        if np.any(states):
            t = d * s
            order = np.argsort(t)
            bg = BackgroundTrajectory(self.grid, t[order], states[order])
            gen = DispersiveGenerator(self.ext, bg, [syms[i] for i in order])
            pd_mask = self.ext.pi_d
            r_d = np.where(pd_mask[None, :], rem, 0.0)
            acc = np.zeros(self.grid.n_modes, dtype=complex)
            for k in range(k_n - 2, -1, -1):
                acc = propagate(gen, t[k + 1], t[k], Spectrum(self.grid, acc + 0.5 * h * r_d[k + 1]),
                                dt_lin=self.cfg.lin_step).coeffs + 0.5 * h * r_d[k]
                out[k] += -d * acc
        return np.where(self.grid.retained[None, :], out, 0.0)

    def tail_bound(self, rem_last: np.ndarray, mu: float) -> float:
        """Size of the dropped integrals beyond T, assuming R decays at least like e^{-2 mu t}."""
        return float(np.linalg.norm(rem_last) / (2.0 * mu))

    def solve(self, f: Spectrum, direction: int = 1, initial: np.ndarray | None = None
              ) -> StableSolution:
        """Damped Picard iteration from the linear trajectory e^{-t Lambda_g} f.

        Raises
        ------
        SizeError
            If the residual grows for five consecutive iterations.
        ConvergenceError
            If ``max_iter`` is reached.
        """
        mu, _ = self.cfg.check(self.ext.params)
        s = self.cfg.samples
        dec = self.pi_s if direction == 1 else self.pi_u
        if np.linalg.norm(f.coeffs - dec(f.coeffs)) > 1e-12 * max(1.0, np.linalg.norm(f.coeffs)):
            raise ConfigError("base point does not lie in the decaying hyperbolic subspace")
        if initial is None:
            states = np.array([self.decay(dec(f.coeffs), sk) for sk in s])
        else:
            states = np.array(initial, dtype=complex)
        theta = self.cfg.picard_damping
        history: list[float] = []
        streak = 0
        rem = None
        for it in range(1, self.cfg.max_iter + 1):
            evaluated = self.evaluate(states)
            rem = evaluated[0]
            new = self.lp_map(states, f, direction, evaluated)
            res = float(np.max(_norms(new - states)))
            history.append(res)
            if len(history) > 1 and res > history[-2]:
                streak += 1
                if streak >= DIVERGENCE_STREAK:
                    raise SizeError(
                        f"Picard iteration diverges (residual {res:.3e}); reduce ||f|| = "
                        f"{np.linalg.norm(f.coeffs):.3e}", res, it)
            else:
                streak = 0
            states = (1 - theta) * states + theta * new
            if res < self.cfg.tol:
                t = direction * s
                return StableSolution(f, t, states, res, fit_decay(t, states), it, history,
                                      direction, self.tail_bound(rem[-1], mu))
        raise ConvergenceError("Picard iteration did not reach tolerance", history[-1],
                               self.cfg.max_iter)


def solve_stable(f: Spectrum, ext: ExtendedSystem, cfg: ManifoldConfig) -> StableSolution:
    """Trajectory on the stable manifold with stable component f at t = 0."""
    return LyapunovPerron(ext, cfg).solve(f, 1)


def solve_unstable(f: Spectrum, ext: ExtendedSystem, cfg: ManifoldConfig) -> StableSolution:
    """Trajectory on the unstable manifold, decaying as t -> -infinity."""
    return LyapunovPerron(ext, cfg).solve(f, -1)


# -- nonlinear flow in the complex unknown --------------------------------------------


@dataclass
class FlowResult:
    """Samples of a nonlinear run mapped to the complex unknown."""

    times: np.ndarray
    states: np.ndarray
    fields: list
    status: str = "ok"


class ExtendedFlow:
    """Nonlinear evolution of the extended system inside its cutoff ball.

    Where ||u||_{H^s0} <= 2 eps0 the cutoff equals 1 and the extended system
    coincides with the truncated jet system, which is advanced with the Lawson
    scheme on (eta, psi). A run stops with status ``"escaped"`` once u leaves
    that ball and with ``"pinch_off"`` if the radius degenerates.

    Parameters
    ----------
    ext : ExtendedSystem
    dt : float
        Lawson step; sample spacings must be integer multiples of it.
    """

    def __init__(self, ext: ExtendedSystem, dt: float = 0.05):
        self.ext = ext
        self.dt = dt
        self.system = ext.system
        self._steppers: dict[float, LawsonRK4] = {}

    def _stepper(self, h: float) -> LawsonRK4:
        key = round(h, 14)
        if key not in self._steppers:
            self._steppers[key] = LawsonRK4(self.system, h)
        return self._steppers[key]

    def in_ball(self, u: Spectrum) -> bool:
        return spectral.sobolev_norm(u, self.ext.s0) <= 2.0 * self.ext.eps0

    def run(self, u0: Spectrum, times: np.ndarray, start=None) -> FlowResult:
        """Sample the solution from u0 at ``times`` (monotone, starting at 0, either sign)."""
        times = np.asarray(times, dtype=float)
        if times[0] != 0.0:
            raise ConfigError("sample times must start at 0")
        dmap = self.ext.dmap
        eta, psi = dmap.inverse(u0) if start is None else start
        ec, pc = spectral.fft(eta.values), spectral.fft(psi.values)
        states = [u0.coeffs.copy()]
        fields = [(eta, psi)]
        status = "ok" if self.in_ball(u0) else "escaped"
        grid = u0.grid
        for k in range(1, times.size if status == "ok" else 0):
            span = times[k] - times[k - 1]
            n = max(1, int(round(abs(span) / self.dt)))
            stepper = self._stepper(span / n)
            try:
                for _ in range(n):
                    ec, pc, _ = stepper.step(ec, pc)
                eta_v, psi_v = spectral.ifft(ec).real, spectral.ifft(pc).real
                if not (np.all(np.isfinite(eta_v)) and np.all(np.isfinite(psi_v))):
                    status = "diverged"
                    break
                u = dmap.forward(eta_v, psi_v)
            except DomainError:
                status = "pinch_off"
                break
            except SizeError:
                status = "escaped"
                break
            states.append(u.coeffs)
            fields.append((spectral.RealField(grid, eta_v), spectral.RealField(grid, psi_v)))
            if not self.in_ball(u):
                status = "escaped"
                break
        n_done = len(states)
        return FlowResult(times[:n_done], np.array(states), fields, status)


@dataclass
class DecayReport:
    """Weighted norms of a manifold trajectory and its replay deviation."""

    poly_weighted_sup: float
    exp_weighted_sup: float
    replay_deviation: float
    replay_status: str


def verify_decay_equivalence(sol: StableSolution, flow: ExtendedFlow, weight: float = 0.0
                             ) -> DecayReport:
    """Weighted sups of the trajectory and the deviation of a PDE replay from u(0).

    The replay integrates the nonlinear system from the manifold point over the
    sample grid and reports sup_t ||u_replay(t) - u(t)||_L2.
    """
    t = sol.times
    n = _norms(sol.states)
    poly = float(np.max((1.0 + t * t) ** 1.5 * n))
    expo = float(np.max(np.exp(weight * np.abs(t)) * n))
    if not np.any(sol.states):
        return DecayReport(poly, expo, 0.0, "ok")
    res = flow.run(sol.point, t)
    k = res.states.shape[0]
    dev = float(np.max(_norms(res.states - sol.states[:k])))
    return DecayReport(poly, expo, dev, res.status)


# -- center set ----------------------------------------------------------------------


@dataclass
class CenterSeed:
    """Hyperbolic correction g for a dispersive datum f.

    Attributes
    ----------
    f, g : Spectrum
    cone_ratio : float
        ||g|| / ||f||^2 (L2 norms of the coefficients).
    converged : bool
    iterations : int
    residual : float
    history : list of float
    status : str
        Status of the last nonlinear run (``"ok"`` or ``"escaped"``, ...).
    """

    f: Spectrum
    g: Spectrum
    cone_ratio: float
    converged: bool
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    status: str = "ok"


def center_map(g: np.ndarray, f: Spectrum, lp: LyapunovPerron, flow: ExtendedFlow,
               horizon: float) -> tuple[np.ndarray, str]:
    """The map g -> int_{-T}^0 e^{s Lg} Pi_s R ds - int_0^T e^{-s Lg} Pi_u R ds along the flow from g + f."""
    h = lp.cfg.quad_dt
    m = int(round(horizon / h))
    s = np.linspace(0.0, horizon, m + 1)
    u0 = Spectrum(f.grid, g + f.coeffs)
    ext = lp.ext
    out = np.zeros(f.grid.n_modes, dtype=complex)
    status = "ok"
    start = None
    for sign, proj in ((1.0, lp.pi_u), (-1.0, lp.pi_s)):
        run = flow.run(u0, sign * s, start)
        start = run.fields[0]
        if run.status != "ok":
            status = run.status
            break
        vals = []
        for k in range(run.states.shape[0]):
            r, _ = ext.evaluate(Spectrum(f.grid, run.states[k]), run.fields[k])
            vals.append(lp.decay(proj(r.coeffs), s[k]))
        vals = np.array(vals)
        integral = h * (vals.sum(axis=0) - 0.5 * (vals[0] + vals[-1]))
        out += -sign * integral
    return out, status


def solve_center(f: Spectrum, ext: ExtendedSystem, cfg: ManifoldConfig, horizon: float = 5.0,
                 flow: ExtendedFlow | None = None) -> CenterSeed:
    """Damped Picard iteration on the finite-dimensional hyperbolic correction g.

    Existence is only guaranteed by a topological argument, so non-convergence
    is reported through ``converged = False`` rather than raised.
    """
    lp = LyapunovPerron(ext, cfg)
    flow = flow or ExtendedFlow(ext)
    fd = np.where(ext.pi_d, f.coeffs, 0.0)
    if np.linalg.norm(f.coeffs - fd) > 1e-12 * max(1.0, np.linalg.norm(f.coeffs)):
        raise ConfigError("f must lie in the dispersive subspace")
    g = np.zeros(f.grid.n_modes, dtype=complex)
    fn = float(np.linalg.norm(fd))
    if fn == 0.0:
        return CenterSeed(f, Spectrum(f.grid, g), 0.0, True, 0, 0.0)
    theta = cfg.picard_damping
    history: list[float] = []
    status = "ok"
    streak = 0
    for it in range(1, cfg.max_iter + 1):
        new, status = center_map(g, f, lp, flow, horizon)
        if status != "ok":
            break
        res = float(np.linalg.norm(new - g))
        history.append(res)
        streak = streak + 1 if len(history) > 1 and res > history[-2] else 0
        g = (1 - theta) * g + theta * new
        if res < cfg.tol * max(1.0, fn):
            gn = float(np.linalg.norm(g))
            return CenterSeed(f, Spectrum(f.grid, g), gn / fn**2, True, it, res, history, status)
        if streak >= DIVERGENCE_STREAK:
            break
    gn = float(np.linalg.norm(g))
    res = history[-1] if history else math.inf
    return CenterSeed(f, Spectrum(f.grid, g), gn / fn**2, False, len(history), res, history, status)


def certified_horizon(seed: CenterSeed, flow: ExtendedFlow, amplification: float, t_max: float,
                      step: float = 0.25) -> float:
    """Largest T <= t_max with ||u(t)||_{H^s0} <= A ||u(0)||_{H^s0} for |t| <= T."""
    u0 = Spectrum(seed.f.grid, seed.f.coeffs + seed.g.coeffs)
    s0 = flow.ext.s0
    bound = amplification * spectral.sobolev_norm(u0, s0)
    m = max(1, int(math.ceil(t_max / step)))
    s = np.linspace(0.0, m * step, m + 1)
    best = math.inf
    start = None
    for sign in (1.0, -1.0):
        run = flow.run(u0, sign * s, start)
        start = run.fields[0]
        norms = np.array([spectral.sobolev_norm(Spectrum(u0.grid, c), s0) for c in run.states])
        bad = np.flatnonzero(norms > bound)
        if bad.size:
            best = min(best, s[bad[0] - 1] if bad[0] > 0 else 0.0)
        elif run.status != "ok":
            best = min(best, s[run.states.shape[0] - 1])
    return float(min(best, t_max))


def escape_time(u0: Spectrum, flow: ExtendedFlow, t_max: float, step: float = 0.25) -> float:
    """First sample time at which the forward run leaves the 2 eps0 ball (inf if never)."""
    m = max(1, int(math.ceil(t_max / step)))
    run = flow.run(u0, np.linspace(0.0, m * step, m + 1))
    if run.status == "escaped":
        return float(run.times[-1])
    return math.inf
