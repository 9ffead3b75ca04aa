"""Dirichlet-Neumann operator of the jet.

With r = y (rho + eta(x)) the fluid region {0 <= r < rho + eta} becomes the
strip 0 <= y < 1 and the axisymmetric Laplace equation for the potential
Phi(y, x) reads

    alpha Phi_yy + beta Phi_xy + Phi_xx + c Phi_y = 0,
    alpha = (1 + y^2 eta_x^2) / R^2,   beta = -2 y eta_x / R,
    c = 1 / (y R^2) - y R d_x(eta_x / R^2),          R = rho + eta,

with Phi = psi at y = 1 and Phi_y = 0 on the axis. The operator is then

    G[eta] psi = ((1 + eta_x^2) / R) Phi_y - eta_x Phi_x   at y = 1.

The radial grid is cell-centered, y_k = (k - 1/2) h with h = 1 / (K - 1/2), so
the last node sits on the surface and the axis lies halfway between the first
node and an even-reflected ghost node. Central differences in y and spectral
differences in x give a second-order scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import spectral
from .errors import ConfigError, ConvergenceError, DomainError
from .linear import DispersionParams, g0
from .spectral import FourierGrid, RealField

DIRECT_MAX_UNKNOWNS = 64 * 64


def dno_flat(psi: RealField, p: DispersionParams) -> RealField:
    """G[0] psi, the multiplier ratio(rho |xi|) |xi|."""
    c = spectral.fft(psi.values) * np.where(psi.grid.retained, g0(psi.grid.xi, p), 0.0)
    return RealField(psi.grid, spectral.ifft(c).real)


@dataclass(frozen=True)
class RadialGrid:
    """Cell-centered nodes y_1 < ... < y_K = 1."""

    n_y: int

    def __post_init__(self):
        if self.n_y < 4:
            raise ConfigError(f"n_y must be at least 4, got {self.n_y}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_y - 0.5)

    @cached_property
    def y(self) -> np.ndarray:
        return (np.arange(1, self.n_y + 1) - 0.5) * self.h


def _thomas(lower, diag, upper, rhs):
    """Batched tridiagonal solve along axis 0; the first lower and last upper are ignored."""
    m = diag.shape[0]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for k in range(1, m):
        den = diag[k] - lower[k] * cp[k - 1]
        cp[k] = upper[k] / den
        dp[k] = (rhs[k] - lower[k] * dp[k - 1]) / den
    out = np.empty_like(dp)
    out[-1] = dp[-1]
    for k in range(m - 2, -1, -1):
        out[k] = dp[k] - cp[k] * out[k + 1]
    return out


def _mode_bands(alpha, beta, c, xi, h):
    """Tridiagonal bands in y of the x-frozen operator for every frequency.

    alpha, beta, c have shape (K-1,); xi has shape (n,). Returns arrays of
    shape (K-1, n) for the unknowns y_1 .. y_{K-1}, with the ghost reflection
    folded into the first row. ``upper[-1]`` multiplies the surface value.
    """
    a = alpha[:, None]
    bx = (1j * xi)[None, :] * beta[:, None]
    cc = c[:, None]
    lower = a / h**2 - (cc + bx) / (2 * h) + 0j * xi[None, :]
    upper = a / h**2 + (cc + bx) / (2 * h) + 0j * xi[None, :]
    diag = -2.0 * a / h**2 - (xi.astype(float) ** 2)[None, :] + 0j
    diag = diag.copy()
    diag[0] = diag[0] + lower[0]
    return lower, diag, upper


def flat_discrete_multiplier(grid: FourierGrid, p: DispersionParams, n_y: int) -> np.ndarray:
    """Symbol of the discrete solver at eta = 0, one value per FFT slot.

    At the flat state the scheme decouples by frequency, so each mode is an
    exact tridiagonal solve. The Nyquist slot is zeroed.
    """
    ry = RadialGrid(n_y)
    h, y = ry.h, ry.y
    yi = y[:-1]
    xi = grid.xi.astype(float)
    alpha = np.full_like(yi, 1.0 / p.rho**2)
    c = 1.0 / (yi * p.rho**2)
    lower, diag, upper = _mode_bands(alpha, np.zeros_like(yi), c, xi, h)
    rhs = np.zeros_like(diag)
    rhs[-1] = -upper[-1]
    phi = _thomas(lower, diag, upper, rhs)
    full = np.vstack([phi, np.ones((1, xi.size))])
    dphi = (3.0 * full[-1] - 4.0 * full[-2] + full[-3]) / (2.0 * h)
    out = (dphi / p.rho).real
    return np.where(grid.retained, out, 0.0)


@dataclass(frozen=True)
class DNOResult:
    """Neumann datum together with the fields derived from it.

    Attributes
    ----------
    g : RealField
        G[eta] psi.
    phi : ndarray, shape (n_y, n_modes)
        Potential on the flattened strip; the last row is psi.
    b, v : RealField
        Vertical and horizontal velocity traces,
        B = (eta_x psi_x + G) / (1 + eta_x^2) and V = psi_x - B eta_x.
    residual : float
        Scaled l2 residual of the discrete equation.
    iterations : int
        Krylov iterations (0 for the direct path).
    """

    g: RealField
    phi: np.ndarray
    b: RealField
    v: RealField
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class FlattenedEllipticProblem:
    """Elliptic problem on the flattened strip for a given surface.

    Parameters
    ----------
    eta, psi : RealField
        Surface deformation and Dirichlet data on a shared grid.
    params : DispersionParams
    n_y : int
        Number of radial nodes.
    threshold : float, optional
        Smallest admissible rho + eta; defaults to rho / 4.
    method : {"auto", "direct", "gmres"}
    tol : float
        Relative tolerance of the Krylov path.
    """

    eta: RealField
    psi: RealField
    params: DispersionParams
    n_y: int = 64
    threshold: float | None = None
    method: str = "auto"
    tol: float = 1e-12
    max_iter: int = 400

    def __post_init__(self):
        if self.eta.grid != self.psi.grid:
            raise ConfigError("eta and psi live on different grids")
        if self.method not in ("auto", "direct", "gmres"):
            raise ConfigError(f"unknown method {self.method!r}")
        c = self.params.rho / 4.0 if self.threshold is None else self.threshold
        rmin = float(np.min(self.params.rho + self.eta.values))
        if rmin < c:
            raise DomainError(f"min(rho + eta) = {rmin:.3e} below threshold {c:.3e} (pinch-off)")

    @property
    def grid(self) -> FourierGrid:
        return self.eta.grid

    @cached_property
    def radial(self) -> RadialGrid:
        return RadialGrid(self.n_y)

    @cached_property
    def _surface(self):
        eta = self.eta.values
        r = self.params.rho + eta
        ex = spectral.diff(eta)
        exx = spectral.diff(eta, 2)
        return r, ex, exx

    @cached_property
    def coefficients(self):
        """(alpha, beta, c) on the interior nodes, each of shape (n_y - 1, n_modes)."""
        r, ex, exx = self._surface
        y = self.radial.y[:-1, None]
        alpha = (1.0 + y * y * ex * ex) / (r * r)
        beta = -2.0 * y * ex / r
        c = 1.0 / (y * r * r) - y * exx / r + 2.0 * y * ex * ex / (r * r)
        return alpha, beta, c

    # -- operator -----------------------------------------------------------

    def _apply(self, u, top):
        """Discrete operator on interior values u (K-1, n) with surface row ``top``."""
        h = self.radial.h
        alpha, beta, c = self.coefficients
        full = np.vstack([u[:1], u, top[None, :]])
        phi_yy = (full[2:] - 2.0 * full[1:-1] + full[:-2]) / h**2
        phi_y = (full[2:] - full[:-2]) / (2.0 * h)
        return alpha * phi_yy + beta * spectral.diff(phi_y) + spectral.diff(u, 2) + c * phi_y

    @cached_property
    def _preconditioner_bands(self):
        alpha, beta, c = self.coefficients
        return _mode_bands(alpha.mean(1), beta.mean(1), c.mean(1), self.grid.xi, self.radial.h)

    def _precondition(self, r):
        lower, diag, upper = self._preconditioner_bands
        shape = (self.n_y - 1, self.grid.n_modes)
        rc = np.fft.fft(r.reshape(shape), axis=1)
        sol = _thomas(lower, diag, upper, rc)
        return np.fft.ifft(sol, axis=1).real.ravel()

    def _solve_gmres(self, rhs, x0=None):
        shape = rhs.shape
        m = rhs.size
        zero = np.zeros(self.grid.n_modes)
        op = LinearOperator((m, m), matvec=lambda v: self._apply(v.reshape(shape), zero).ravel())
        pc = LinearOperator((m, m), matvec=self._precondition)
        count = [0]

        def cb(_):
            count[0] += 1

        b = rhs.ravel()
        guess = self._precondition(b) if x0 is None else x0.ravel()
        sol, info = gmres(
            op, b, x0=guess, rtol=self.tol, atol=0.0, restart=60, maxiter=self.max_iter,
            M=pc, callback=cb, callback_type="pr_norm",
        )
        u = sol.reshape(shape)
        if info != 0:
            res = np.linalg.norm(op.matvec(sol) - b) / max(np.linalg.norm(b), 1e-300)
            raise ConvergenceError(
                f"GMRES did not converge (info={info}, relative residual {res:.2e})",
                residual=float(res), iterations=count[0],
            )
        return u, count[0]

    def _solve_direct(self, rhs):
        n = self.grid.n_modes
        h = self.radial.h
        alpha, beta, c = self.coefficients
        eye = np.eye(n)
        d1 = spectral.diff(eye).T
        d2 = spectral.diff(eye, 2).T
        m = self.n_y - 1
        x_prev = None
        y_prev = None
        xs, ys = [], []
        for k in range(m):
            lo = np.diag(alpha[k] / h**2 - c[k] / (2 * h)) - beta[k][:, None] * d1 / (2 * h)
            up = np.diag(alpha[k] / h**2 + c[k] / (2 * h)) + beta[k][:, None] * d1 / (2 * h)
            di = np.diag(-2.0 * alpha[k] / h**2) + d2
            if k == 0:
                di = di + lo
                mk = di
                rk = rhs[k]
            else:
                mk = di - lo @ x_prev
                rk = rhs[k] - lo @ y_prev
            if k < m - 1:
                sol = np.linalg.solve(mk, np.column_stack([up, rk]))
                x_prev, y_prev = sol[:, :-1], sol[:, -1]
            else:
                x_prev, y_prev = None, np.linalg.solve(mk, rk)
            xs.append(x_prev)
            ys.append(y_prev)
        u = np.empty((m, n))
        u[-1] = ys[-1]
        for k in range(m - 2, -1, -1):
            u[k] = ys[k] - xs[k] @ u[k + 1]
        return u

    def _use_direct(self) -> bool:
        if self.method == "direct":
            return True
        if self.method == "gmres":
            return False
        return self.grid.n_modes * self.n_y <= DIRECT_MAX_UNKNOWNS and self.grid.n_modes <= 64

    def solve(self, x0=None) -> DNOResult:
        grid = self.grid
        psi = self.psi.values
        n, m = grid.n_modes, self.n_y - 1
        if not np.any(psi):
            z = RealField(grid, np.zeros(n))
            return DNOResult(z, np.zeros((self.n_y, n)), z, z)
        rhs = -self._apply(np.zeros((m, n)), psi)
        if self._use_direct():
            u, its = self._solve_direct(rhs), 0
        else:
            u, its = self._solve_gmres(rhs, x0)
        res = self._apply(u, psi)
        scale = max(np.linalg.norm(rhs), 1e-300)
        residual = float(np.linalg.norm(res) / scale)
        phi = np.vstack([u, psi[None, :]])
        return self._trace(phi, residual, its)

    def _trace(self, phi, residual, its) -> DNOResult:
        h = self.radial.h
        r, ex, _ = self._surface
        phi_y = (3.0 * phi[-1] - 4.0 * phi[-2] + phi[-3]) / (2.0 * h)
        g = (1.0 + ex * ex) / r * phi_y - ex * spectral.diff(phi[-1])
        return _with_traces(self.eta, self.psi, g, phi, residual, its)


def _with_traces(eta: RealField, psi: RealField, g, phi, residual=0.0, its=0) -> DNOResult:
    """Assemble a result with B and V derived from G."""
    grid = eta.grid
    ex = spectral.diff(eta.values)
    px = spectral.diff(psi.values)
    b = (ex * px + g) / (1.0 + ex * ex)
    v = px - b * ex
    return DNOResult(RealField(grid, g), phi, RealField(grid, b), RealField(grid, v), residual, its)


class DNOSolver:
    """Reusable solver for one grid and resolution.

    Parameters
    ----------
    grid : FourierGrid
    params : DispersionParams
    n_y : int
    method : {"auto", "direct", "gmres"}
    threshold : float, optional
    flat_correction : bool
        If True, the flat part of the discrete operator is swapped for the exact
        multiplier: G = G_h[eta] psi - G_h[0] psi + G[0] psi. The linearization at
        eta = 0 is then exact while the nonlinear part keeps the radial error.
    """

    def __init__(self, grid: FourierGrid, params: DispersionParams, n_y: int = 64,
                 method: str = "auto", threshold: float | None = None,
                 flat_correction: bool = False):
        self.grid = grid
        self.params = params
        self.n_y = n_y
        self.method = method
        self.threshold = threshold
        self.flat_correction = flat_correction
        if flat_correction:
            exact = np.where(grid.retained, g0(grid.xi, params), 0.0)
            self._correction = exact - flat_discrete_multiplier(grid, params, n_y)

    def _flat_discrete(self) -> np.ndarray:
        return flat_discrete_multiplier(self.grid, self.params, self.n_y)

    def solve(self, eta, psi) -> DNOResult:
        eta = eta if isinstance(eta, RealField) else RealField(self.grid, eta)
        psi = psi if isinstance(psi, RealField) else RealField(self.grid, psi)
        res = FlattenedEllipticProblem(
            eta, psi, self.params, n_y=self.n_y, threshold=self.threshold, method=self.method
        ).solve()
        if not self.flat_correction:
            return res
        g = res.g.values + spectral.ifft(self._correction * spectral.fft(psi.values)).real
        return _with_traces(eta, psi, g, res.phi, res.residual, res.iterations)


def solve_dno(problem: FlattenedEllipticProblem, x0=None) -> DNOResult:
    """Solve the flattened problem and evaluate the trace formula."""
    return problem.solve(x0)


def dno(eta: RealField, psi: RealField, p: DispersionParams, n_y: int = 64, **kw) -> DNOResult:
    """Convenience wrapper building the problem and solving it."""
    return FlattenedEllipticProblem(eta, psi, p, n_y=n_y, **kw).solve()


def quadratic_part(eta: RealField, psi: RealField, p: DispersionParams) -> RealField:
    """Bilinear part of G[eta] psi: -G0(B0 eta) - d_x(V0 eta) - B0 eta / rho.

    B0 = G0 psi and V0 = psi_x. The result is dealiased.
    """
    grid = eta.grid
    b0 = dno_flat(psi, p).values
    v0 = spectral.diff(psi.values)
    be = b0 * eta.values
    out = -dno_flat(RealField(grid, be), p).values - spectral.diff(v0 * eta.values) - be / p.rho
    return RealField(grid, spectral.dealias_values(out, grid))


def shape_derivative(
    eta: RealField, psi: RealField, delta_eta: RealField, p: DispersionParams, n_y: int = 64, **kw
) -> RealField:
    """d_eta G[eta] psi . delta_eta = -G[eta](B d) - d_x(V d) - B d / (rho + eta)."""
    grid = eta.grid
    base = dno(eta, psi, p, n_y=n_y, **kw)
    bd = base.b.values * delta_eta.values
    inner = dno(eta, RealField(grid, bd), p, n_y=n_y, **kw).g.values
    out = -inner - spectral.diff(base.v.values * delta_eta.values) - bd / (p.rho + eta.values)
    return RealField(grid, out)


def boundary_flux(result: DNOResult, eta: RealField, p: DispersionParams) -> float:
    """Mean of (rho + eta) G[eta] psi over the circle, i.e. the integral against dx / (2 pi)."""
    return float(np.mean((p.rho + eta.values) * result.g.values))


# -- consistency checks ------------------------------------------------------------


@dataclass(frozen=True)
class FlatCheck:
    """Richardson extrapolation of the flat solve against the exact multiplier."""

    n_y: tuple
    errors: tuple
    order: float
    extrapolated_error: float


def flat_consistency(psi: RealField, p: DispersionParams, n_ys=(500, 1000, 2000),
                     max_mode: int = 32) -> FlatCheck:
    """Solve at eta = 0 on three radial grids and extrapolate in h = 1 / (K - 1/2).

    The extrapolation eliminates the h^2 and h^3 terms. Errors are relative L2
    over the modes |xi| <= max_mode.
    """
    if len(n_ys) != 3:
        raise ConfigError("three radial resolutions are required")
    grid = psi.grid
    keep = grid.retained & (np.abs(grid.xi) <= max_mode)
    psi_c = np.where(keep, spectral.fft(psi.values), 0.0)
    psi = RealField(grid, spectral.ifft(psi_c).real)
    eta = RealField(grid, np.zeros(grid.n_modes))
    exact = np.where(keep, g0(grid.xi, p), 0.0) * psi_c
    scale = np.linalg.norm(exact)
    if scale == 0:
        raise ConfigError("psi has no content in the checked band")
    vals = np.array([spectral.fft(FlattenedEllipticProblem(eta, psi, p, n_y=k).solve().g.values)
                     for k in n_ys])
    errs = [float(np.linalg.norm(v - exact) / scale) for v in vals]
    h = 1.0 / (np.asarray(n_ys, dtype=float) - 0.5)
    design = np.vstack([np.ones(3), h**2, h**3]).T
    limit = np.linalg.solve(design, vals)[0]
    order = float(np.log(errs[1] / errs[2]) / np.log(h[1] / h[2]))
    return FlatCheck(tuple(n_ys), tuple(errs), order,
                     float(np.linalg.norm(limit - exact) / scale))


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def expansion_slope(eta: RealField, psi: RealField, p: DispersionParams,
                    eps=(1e-2, 5e-3, 2.5e-3, 1.25e-3), n_y: int = 400) -> tuple[float, list]:
    """Log-log slope of ||G[e eta](e psi) - e G0 psi - e^2 quadratic_part|| against e.

    The flat part of the discrete operator is replaced by the exact multiplier so
    the residual is cubic up to the radial error of the nonlinear part.
    """
    solver = DNOSolver(eta.grid, p, n_y, flat_correction=True)
    grid = eta.grid
    errs = []
    for e in eps:
        ee, pe = RealField(grid, e * eta.values), RealField(grid, e * psi.values)
        g = solver.solve(ee, pe).g.values
        lin = dno_flat(pe, p).values
        quad = quadratic_part(ee, pe, p).values
        errs.append(float(np.linalg.norm(g - lin - quad)))
    return _slope(eps, errs), errs


def shape_derivative_slope(eta: RealField, psi: RealField, direction: RealField,
                           p: DispersionParams, steps=(0.08, 0.04, 0.02, 0.01),
                           n_y: int = 400) -> tuple[float, list]:
    """Slope of the central-difference error of :func:`shape_derivative` against the step.

    The formula and the discrete operator differ at O(h^2) in the radial step, so
    n_y must be large enough for that mismatch to sit below the smallest
    difference-quotient error.
    """
    grid = eta.grid
    exact = shape_derivative(eta, psi, direction, p, n_y=n_y).values
    errs = []
    for d in steps:
        gp = dno(RealField(grid, eta.values + d * direction.values), psi, p, n_y=n_y).g.values
        gm = dno(RealField(grid, eta.values - d * direction.values), psi, p, n_y=n_y).g.values
        errs.append(float(np.linalg.norm((gp - gm) / (2 * d) - exact)))
    return _slope(steps, errs), errs
