"""Paradifferential calculus on the periodic grid and the symbols of the jet.

Quantization follows the double-sum definition

    (T_a u)^(xi) = sum_{xi'} chi(xi - xi', xi') a^(xi - xi', xi') u^(xi'),

where a^(zeta, xi') is the x-Fourier coefficient of a(., xi') and chi is the
cutoff built from the Littlewood-Paley profile. Because chi vanishes for
|zeta| >= |xi'|/2 the output of a retained input never wraps around, so the
operator is stored as an exact matrix on the retained frequencies.

Three symbol containers share that quantization:

* :class:`SeparableSymbol`, a sum of terms c(x) m(xi) plus an optional exact
  Fourier multiplier applied without the cutoff;
* :class:`PluriHomogeneousSymbol`, the special case with profiles |xi|^s and
  i sgn(xi) |xi|^s, which supports symbolic composition and adjoints;
* :class:`TwoTermSymbol`, a principal and a sub-principal part sampled on the
  full (x, xi) lattice, with the two-term composition rule used for the
  diagonalization symbols.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from math import factorial

import numpy as np

from . import bessel, spectral
from .dno import DNOSolver
from .errors import ConfigError, DomainError, SizeError
from .linear import (
    DispersionParams,
    dispersive_mask,
    growing_mask,
    imag_part_coeffs,
    lambda_d,
    lambda_g,
    real_part_coeffs,
)
from .spectral import DEFAULT_LP, FourierGrid, LittlewoodPaley, RealField, Spectrum

S0_DEFAULT = 5.5


# -- cutoff and quantization --------------------------------------------------


@lru_cache(maxsize=8)
def cutoff_matrix(grid: FourierGrid, lp: LittlewoodPaley = DEFAULT_LP) -> np.ndarray:
    """chi(xi_i - xi_j, xi_j) for output slot i and input slot j, zero off the retained set."""
    xi = grid.xi.astype(float)
    chi = lp.chi(xi[:, None] - xi[None, :], xi[None, :])
    keep = grid.retained
    chi = chi * keep[:, None] * keep[None, :]
    chi.setflags(write=False)
    return chi


def _cutoff_columns(grid: FourierGrid, cols: np.ndarray, lp: LittlewoodPaley) -> np.ndarray:
    xi = grid.xi.astype(float)
    chi = lp.chi(xi[:, None] - xi[None, cols], xi[None, cols])
    return chi * grid.retained[:, None] * grid.retained[None, cols]


def _gather(shat: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """shat[(i - j) mod n, k] for every output slot i, where column k of shat belongs to j = cols[k]."""
    n = shat.shape[0]
    rows = (np.arange(n)[:, None] - cols[None, :]) % n
    return shat[rows, np.arange(cols.size)[None, :]]


class Symbol:
    """Common quantization interface.

    Subclasses provide :meth:`x_fourier`, the x-Fourier coefficients of the
    gridded part at the requested xi slots, and may carry an exact multiplier.
    """

    grid: FourierGrid
    multiplier: np.ndarray | None = None

    def x_fourier(self, cols: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values(self) -> np.ndarray:
        """Samples on the (x, xi) lattice, xi in FFT order, multiplier included."""
        cols = np.arange(self.grid.n_modes)
        out = spectral.ifft(self.x_fourier(cols).T).T
        if self.multiplier is not None:
            out = out + self.multiplier[None, :]
        return out

    def cutoff_part(self, lp: LittlewoodPaley = DEFAULT_LP) -> np.ndarray:
        """Dense matrix of the gridded part, the exact multiplier left out."""
        cols = np.arange(self.grid.n_modes)
        return cutoff_matrix(self.grid, lp) * _gather(self.x_fourier(cols), cols)

    def matrix(self, lp: LittlewoodPaley = DEFAULT_LP) -> np.ndarray:
        """Dense matrix of T_a acting on coefficient vectors in FFT order."""
        grid = self.grid
        m = self.cutoff_part(lp)
        if self.multiplier is not None:
            m = m + np.diag(np.where(grid.retained, self.multiplier, 0.0))
        return m

    def apply(self, u: Spectrum, lp: LittlewoodPaley = DEFAULT_LP) -> Spectrum:
        """T_a u. Sparse inputs are handled column by column."""
        return paradiff_apply(self, u, lp)


def paradiff_apply(a: Symbol, u: Spectrum, lp: LittlewoodPaley = DEFAULT_LP) -> Spectrum:
    """T_a u by the double sum over the retained frequencies."""
    grid = a.grid
    if u.grid != grid:
        raise ConfigError("symbol and spectrum live on different grids")
    c = np.where(grid.retained, u.coeffs, 0.0)
    cols = np.flatnonzero(c)
    if cols.size <= grid.n_modes // 8:
        block = _cutoff_columns(grid, cols, lp) * _gather(a.x_fourier(cols), cols)
        out = block @ c[cols]
    else:
        out = a.cutoff_part(lp) @ c
    if a.multiplier is not None:
        out = out + np.where(grid.retained, a.multiplier, 0.0) * c
    return Spectrum(grid, out)


def _as_values(grid: FourierGrid, f) -> np.ndarray:
    if isinstance(f, RealField):
        return f.values.astype(complex)
    arr = np.asarray(f, dtype=complex)
    if arr.ndim == 0:
        return np.full(grid.n_modes, complex(arr))
    return arr


@dataclass(frozen=True)
class SeparableSymbol(Symbol):
    """a(x, xi) = sum_k c_k(x) m_k(xi) + multiplier(xi).

    Parameters
    ----------
    grid : FourierGrid
    terms : tuple of (coefficient samples, profile over FFT slots)
    multiplier : ndarray, optional
        Applied exactly, with no cutoff.
    """

    grid: FourierGrid
    terms: tuple = ()
    multiplier: np.ndarray | None = None

    def x_fourier(self, cols):
        n = self.grid.n_modes
        out = np.zeros((n, cols.size), dtype=complex)
        for coef, prof in self.terms:
            out += spectral.fft(coef)[:, None] * np.asarray(prof)[None, cols]
        return out

    def scaled(self, s: float) -> "SeparableSymbol":
        mult = None if self.multiplier is None else s * self.multiplier
        return SeparableSymbol(self.grid, tuple((s * c, m) for c, m in self.terms), mult)


@dataclass(frozen=True)
class GriddedSymbol(Symbol):
    """Arbitrary symbol sampled on the (x, xi) lattice, shape (n_x, n_xi)."""

    grid: FourierGrid
    samples: np.ndarray
    multiplier: np.ndarray | None = None

    def x_fourier(self, cols):
        return spectral.fft(self.samples[:, cols].T).T


# -- pluri-homogeneous symbols -------------------------------------------------


def homogeneous_profile(xi, order: float, odd: bool) -> np.ndarray:
    """|xi|^s, or i sgn(xi) |xi|^s, with |xi| < 1/2 replaced by 1/2."""
    xi = np.asarray(xi, dtype=float)
    mag = np.maximum(np.abs(xi), 0.5) ** order
    if odd:
        return 1j * np.sign(xi) * mag
    return mag + 0j


@dataclass(frozen=True)
class PluriHomogeneousSymbol(Symbol):
    """sum_j c_even_j(x) |xi|^(m-j) + c_odd_j(x) i sgn(xi) |xi|^(m-j), plus an exact multiplier.

    Parameters
    ----------
    grid : FourierGrid
    top_order : float
        The order m.
    terms : tuple of (order, c_even, c_odd)
        Orders m - j with complex coefficient samples.
    multiplier : ndarray, optional
        x-independent part applied exactly; it does not take part in the
        symbolic calculus.
    """

    grid: FourierGrid
    top_order: float
    terms: tuple = ()
    multiplier: np.ndarray | None = None

    @classmethod
    def from_terms(cls, grid, top_order, terms, multiplier=None) -> "PluriHomogeneousSymbol":
        merged: dict[float, list] = {}
        for order, ce, co in terms:
            ce = _as_values(grid, ce)
            co = _as_values(grid, co)
            key = round(float(order) * 2) / 2
            if key in merged:
                merged[key][0] = merged[key][0] + ce
                merged[key][1] = merged[key][1] + co
            else:
                merged[key] = [ce, co]
        items = tuple((k, v[0], v[1]) for k, v in sorted(merged.items(), reverse=True))
        return cls(grid, float(top_order), items, multiplier)

    def index(self, order: float) -> float:
        """Distance j = m - order from the top order."""
        return self.top_order - order

    def as_separable(self) -> SeparableSymbol:
        xi = self.grid.xi
        terms = []
        for order, ce, co in self.terms:
            terms.append((ce, homogeneous_profile(xi, order, False)))
            terms.append((co, homogeneous_profile(xi, order, True)))
        return SeparableSymbol(self.grid, tuple(terms), self.multiplier)

    def x_fourier(self, cols):
        return self.as_separable().x_fourier(cols)

    def coefficient(self, order: float) -> tuple[np.ndarray, np.ndarray]:
        for o, ce, co in self.terms:
            if abs(o - order) < 1e-12:
                return ce, co
        z = np.zeros(self.grid.n_modes, dtype=complex)
        return z, z

    # symbolic operations on the pluri part

    def dxi(self) -> "PluriHomogeneousSymbol":
        """d/dxi, term by term: |xi|^s -> s i sgn |xi|^(s-1) / i, i sgn |xi|^s -> i s |xi|^(s-1)."""
        out = [(o - 1.0, 1j * o * co, -1j * o * ce) for o, ce, co in self.terms]
        return PluriHomogeneousSymbol.from_terms(self.grid, self.top_order - 1.0, out)

    def dx(self) -> "PluriHomogeneousSymbol":
        out = [(o, spectral.diff_complex(ce), spectral.diff_complex(co)) for o, ce, co in self.terms]
        return PluriHomogeneousSymbol.from_terms(self.grid, self.top_order, out)

    def conj(self) -> "PluriHomogeneousSymbol":
        # conj(i sgn) = -i sgn
        out = [(o, np.conj(ce), -np.conj(co)) for o, ce, co in self.terms]
        mult = None if self.multiplier is None else np.conj(self.multiplier)
        return PluriHomogeneousSymbol.from_terms(self.grid, self.top_order, out, mult)


def _term_product(ta, tb):
    oa, ae, ao = ta
    ob, be, bo = tb
    # (i sgn)^2 = -1 away from xi = 0
    return oa + ob, ae * be - ao * bo, ae * bo + ao * be


def _require_pure(*syms):
    for s in syms:
        if s.multiplier is not None:
            raise ConfigError("symbolic calculus acts on the pluri-homogeneous part only")


def compose_symbols(a: PluriHomogeneousSymbol, b: PluriHomogeneousSymbol, r: float
                    ) -> PluriHomogeneousSymbol:
    """a #_r b = sum_{alpha} (1 / (i^alpha alpha!)) d_xi^alpha a d_x^alpha b, keeping j + k + alpha < r."""
    if r <= 0:
        raise ConfigError("r must be positive")
    _require_pure(a, b)
    grid = a.grid
    out = []
    da, db = a, b
    alpha = 0
    while alpha < r:
        coef = 1.0 / (1j**alpha * factorial(alpha))
        for ta in da.terms:
            j = a.index(ta[0] + alpha)
            for tb in db.terms:
                k = b.index(tb[0])
                if j + k + alpha >= r:
                    continue
                o, e, d = _term_product(ta, tb)
                out.append((o, coef * e, coef * d))
        da, db = da.dxi(), db.dx()
        alpha += 1
    return PluriHomogeneousSymbol.from_terms(grid, a.top_order + b.top_order, out)


def adjoint_symbol(a: PluriHomogeneousSymbol, r: float) -> PluriHomogeneousSymbol:
    """a^{*;r} = sum_{alpha} (1 / (i^alpha alpha!)) d_xi^alpha d_x^alpha conj(a), keeping j + alpha < r."""
    if r <= 0:
        raise ConfigError("r must be positive")
    base = a.conj()
    mult = base.multiplier
    base = replace(base, multiplier=None)
    out = []
    d = base
    alpha = 0
    while alpha < r:
        coef = 1.0 / (1j**alpha * factorial(alpha))
        for o, ce, co in d.terms:
            if a.index(o + alpha) + alpha < r:
                out.append((o, coef * ce, coef * co))
        d = d.dxi().dx()
        alpha += 1
    return PluriHomogeneousSymbol.from_terms(a.grid, a.top_order, out, mult)


# -- paraproducts ---------------------------------------------------------------


def _spectrum(grid: FourierGrid, u) -> Spectrum:
    if isinstance(u, Spectrum):
        return spectral.retain(u)
    if isinstance(u, RealField):
        return spectral.retain(spectral.to_spectrum(u))
    return spectral.retain(Spectrum(grid, spectral.fft(np.asarray(u))))


def _blocks(s: Spectrum, lp: LittlewoodPaley) -> list[np.ndarray]:
    return [spectral.ifft(spectral.lp_block(s, j, lp).coeffs) for j in range(lp.j_max(s.grid) + 1)]


def paraproduct(a, u, lp: LittlewoodPaley = DEFAULT_LP) -> Spectrum:
    """T_a u = sum_j (S_{j-3} a) (Delta_j u), products taken on the grid."""
    grid = u.grid if isinstance(u, (Spectrum, RealField)) else a.grid
    sa, su = _spectrum(grid, a), _spectrum(grid, u)
    bu = _blocks(su, lp)
    out = np.zeros(grid.n_modes, dtype=complex)
    for j in range(3, len(bu)):
        low = spectral.ifft(spectral.partial_sum(sa, j - 3, lp).coeffs)
        out += low * bu[j]
    return Spectrum(grid, spectral.fft(out))


def remainder_pm(a, u, lp: LittlewoodPaley = DEFAULT_LP) -> Spectrum:
    """R(a, u) = sum_{|j - k| < 3} (Delta_j a) (Delta_k u)."""
    grid = u.grid if isinstance(u, (Spectrum, RealField)) else a.grid
    ba = _blocks(_spectrum(grid, a), lp)
    bu = _blocks(_spectrum(grid, u), lp)
    out = np.zeros(grid.n_modes, dtype=complex)
    for j, x in enumerate(ba):
        for k in range(max(0, j - 2), min(len(bu), j + 3)):
            out += x * bu[k]
    return Spectrum(grid, spectral.fft(out))


def paraproduct_values(a: np.ndarray, u: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """T_a u for real samples, returned as real samples."""
    return spectral.ifft(paraproduct(RealField(grid, a), RealField(grid, u)).coeffs).real


# -- jet symbols ---------------------------------------------------------------


def lambda_principal(xi, p: DispersionParams) -> np.ndarray:
    """ratio(rho |xi|) |xi|, the symbol of the flat operator."""
    a = np.abs(np.asarray(xi, dtype=float))
    return bessel.ratio(p.rho * a) * a


def lambda_principal_dxi(xi, p: DispersionParams) -> np.ndarray:
    """Exact xi-derivative of :func:`lambda_principal`."""
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    k = p.rho * a
    return np.sign(xi) * (k * bessel.ratio_prime(k) + bessel.ratio(k))


def _surface(eta, p: DispersionParams):
    e = eta.values if isinstance(eta, RealField) else np.asarray(eta, dtype=float)
    r = p.rho + e
    if np.min(r) <= 0:
        raise DomainError("rho + eta must stay positive")
    return e, r, spectral.diff(e), spectral.diff(e, 2)


def symbol_lambda(eta, p: DispersionParams, order_count: int = 2) -> PluriHomogeneousSymbol:
    """Symbol of the paralinearized Dirichlet-Neumann operator.

    The principal part ratio(rho |xi|) |xi| is stored as an exact multiplier.
    The order zero part eta / (2 rho R) - (eta_x / (2 R)) i sgn(xi) is kept
    when ``order_count >= 2``.
    """
    grid = eta.grid
    e, r, ex, _ = _surface(eta, p)
    mult = np.where(grid.retained, lambda_principal(grid.xi, p), 0.0) + 0j
    terms = []
    if order_count >= 2:
        terms.append((0.0, e / (2 * p.rho * r), -ex / (2 * r)))
    elif order_count != 1:
        raise ConfigError("order_count must be 1 or 2")
    return PluriHomogeneousSymbol.from_terms(grid, 1.0, terms, mult)


def _h_coefficients(eta, p):
    _, r, ex, exx = _surface(eta, p)
    q = 1.0 + ex * ex
    h2 = q**-1.5
    h1 = (3 * r * exx - q) / (r * q**2.5) * ex
    h0 = -1.0 / (r * r * np.sqrt(q)) + 1.0 / p.rho**2
    return h2, h1, h0


def symbol_h(eta, p: DispersionParams) -> PluriHomogeneousSymbol:
    """Symbol of the paralinearized mean curvature, fully quantized."""
    h2, h1, h0 = _h_coefficients(eta, p)
    z = np.zeros_like(h2)
    return PluriHomogeneousSymbol.from_terms(
        eta.grid, 2.0, [(2.0, h2, z), (1.0, z, h1), (0.0, h0, z)]
    )


def curvature_residual(eta: RealField, p: DispersionParams) -> np.ndarray:
    """H[eta] - (1/rho + T_h eta - eta/rho^2 - (d_x^2 + T_{|xi|^2}) eta), as samples."""
    from .dynamics import mean_curvature

    grid = eta.grid
    s = spectral.to_spectrum(eta)
    th = symbol_h(eta, p).apply(s)
    flat = PluriHomogeneousSymbol.from_terms(grid, 2.0, [(2.0, 1.0, 0.0)]).apply(s)
    xi = grid.xi.astype(float)
    smooth = -xi * xi * s.coeffs + flat.coeffs
    lin = th.coeffs - s.coeffs / p.rho**2 - smooth
    return mean_curvature(eta, p).values - 1.0 / p.rho - spectral.ifft(lin).real


# -- good unknown --------------------------------------------------------------


def good_unknown(eta: RealField, psi: RealField, solver: DNOSolver) -> tuple[RealField, RealField]:
    """(eta, w) with w = psi - T_B eta."""
    res = solver.solve(eta, psi)
    w = psi.values - paraproduct_values(res.b.values, eta.values, eta.grid)
    return eta, RealField(eta.grid, w)


def good_unknown_inverse(eta: RealField, w: RealField, solver: DNOSolver, tol: float = 1e-12,
                         damping: float = 1.0, max_iter: int = 100) -> RealField:
    """psi with psi - T_{B(eta, psi)} eta = w, by damped fixed-point iteration.

    Raises
    ------
    SizeError
        If the iteration stops contracting.
    """
    grid = eta.grid
    psi = w.values.copy()
    scale = max(np.max(np.abs(w.values)), np.max(np.abs(eta.values)), 1e-300)
    prev = np.inf
    growth = 0
    for it in range(1, max_iter + 1):
        b = solver.solve(eta, RealField(grid, psi)).b.values
        target = w.values + paraproduct_values(b, eta.values, grid)
        step = target - psi
        err = np.max(np.abs(step))
        psi = psi + damping * step
        if err <= tol * scale:
            return RealField(grid, psi)
        growth = growth + 1 if err >= prev else 0
        if growth >= 3 or not np.isfinite(err):
            raise SizeError("good-unknown inversion does not contract", err, it)
        prev = err
    raise SizeError("good-unknown inversion did not reach tolerance", err, max_iter)


# -- two-term symbols and diagonalization ---------------------------------------


def _dx_lattice(a: np.ndarray) -> np.ndarray:
    return spectral.diff_complex(a.T).T


@dataclass(frozen=True)
class TwoTermSymbol:
    """Principal part, sub-principal part and the xi-derivative of the principal part.

    All arrays have shape (n_x, n_xi) with xi in FFT order.
    """

    grid: FourierGrid
    principal: np.ndarray
    sub: np.ndarray
    dxi_principal: np.ndarray

    def sharp(self, other: "TwoTermSymbol") -> "TwoTermSymbol":
        """a1 b1 + (a0 b1 + a1 b0 + (1/i) d_xi a1 d_x b1)."""
        a1, a0, da = self.principal, self.sub, self.dxi_principal
        b1, b0, db = other.principal, other.sub, other.dxi_principal
        sub = a0 * b1 + a1 * b0 - 1j * da * _dx_lattice(b1)
        return TwoTermSymbol(self.grid, a1 * b1, sub, da * b1 + a1 * db)

    def adjoint(self) -> "TwoTermSymbol":
        """conj a1 + (conj a0 + (1/i) d_x d_xi conj a1)."""
        ca = np.conj(self.dxi_principal)
        sub = np.conj(self.sub) - 1j * _dx_lattice(ca)
        return TwoTermSymbol(self.grid, np.conj(self.principal), sub, ca)

    def __sub__(self, other: "TwoTermSymbol") -> "TwoTermSymbol":
        return TwoTermSymbol(self.grid, self.principal - other.principal, self.sub - other.sub,
                             self.dxi_principal - other.dxi_principal)

    def quantized(self) -> GriddedSymbol:
        return GriddedSymbol(self.grid, self.principal + self.sub)


@dataclass(frozen=True)
class DiagSymbols:
    """Symbols p, q, gamma of the diagonalization together with the lambda and h pieces."""

    p: TwoTermSymbol
    q: TwoTermSymbol
    gamma: TwoTermSymbol
    lam: TwoTermSymbol
    lam_inv: TwoTermSymbol
    h_shift: TwoTermSymbol
    high: np.ndarray
    n_cut: int

    def identity_residuals(self) -> dict:
        """Coefficient-wise residuals of the symbol relations on the high band.

        ``gamma_p_defect`` is the exact contribution of the real part of the
        order zero lambda symbol, -gamma1^2 q1 Re(lambda0) / lambda1^2, which the
        relation gamma # p = q # (h - rho^-2) does not absorb.
        """
        m = self.high
        r1 = self.p.sharp(self.lam) - self.gamma.sharp(self.q)
        r2 = self.gamma.sharp(self.p) - self.q.sharp(self.h_shift)
        g1, q1, l1 = self.gamma.principal, self.q.principal, self.lam.principal
        with np.errstate(divide="ignore", invalid="ignore"):
            defect = np.where(m, -g1 * g1 * q1 * self.lam.sub.real / l1**2, 0.0)
        ga = self.gamma - self.gamma.adjoint()

        def mx(a):
            return float(np.max(np.abs(np.where(m, a, 0.0))))

        return {
            "p_lambda_principal": mx(r1.principal),
            "p_lambda_sub": mx(r1.sub),
            "gamma_p_principal": mx(r2.principal),
            "gamma_p_sub": mx(r2.sub),
            "gamma_p_sub_minus_defect": mx(r2.sub - defect),
            "gamma_p_defect": mx(defect),
            "gamma_selfadjoint_principal": mx(ga.principal),
            "gamma_selfadjoint_sub": mx(ga.sub),
        }


def default_cut(p: DispersionParams) -> int:
    """High-frequency threshold: max(8, ceil(3 / rho))."""
    return int(max(8, np.ceil(3.0 / p.rho)))


def diag_symbols(eta: RealField, p: DispersionParams, n_cut: int | None = None) -> DiagSymbols:
    """p, q, gamma on the band |xi| >= n_cut.

    gamma1 = sqrt((xi^2 E - rho^-2) lambda1), gamma0 = -(i/2) d_x d_xi gamma1,
    q1 = sqrt(R lambda1), q0 = 0 and p = (gamma # q) # lambda_inv, where
    E = (1 + eta_x^2)^(-3/2) and lambda_inv = 1/lambda1 - lambda0/lambda1^2.
    """
    grid = eta.grid
    n_cut = default_cut(p) if n_cut is None else int(n_cut)
    if n_cut <= 1.0 / p.rho:
        raise ConfigError(f"n_cut={n_cut} must exceed 1/rho={1.0 / p.rho:.4g}")
    e, r, ex, _ = _surface(eta, p)
    xi = grid.xi.astype(float)[None, :]
    high = np.broadcast_to((np.abs(xi) >= n_cut) & grid.retained[None, :], (grid.n_modes, grid.n_modes))
    ind = high.astype(float)
    lam1 = np.broadcast_to(lambda_principal(xi, p), high.shape)
    dlam1 = np.broadcast_to(lambda_principal_dxi(xi, p), high.shape)
    big_e = ((1.0 + ex * ex) ** -1.5)[:, None]
    f = xi * xi * big_e - 1.0 / p.rho**2
    if np.any(f[high] <= 0):
        raise DomainError("gamma radicand is not positive on the high band; raise n_cut")
    fs = np.where(high, f, 1.0)
    ls = np.where(high, lam1, 1.0)
    g1 = np.sqrt(fs * ls) * ind
    dg1 = (2 * xi * big_e * ls + fs * dlam1) / (2 * np.sqrt(fs * ls)) * ind
    g0_ = -0.5j * _dx_lattice(dg1)
    gamma = TwoTermSymbol(grid, g1 + 0j, g0_, dg1 + 0j)

    rr = r[:, None]
    q1 = np.sqrt(rr * ls) * ind
    dq1 = rr * dlam1 / (2 * np.sqrt(rr * ls)) * ind
    zero = np.zeros(high.shape, dtype=complex)
    q = TwoTermSymbol(grid, q1 + 0j, zero, dq1 + 0j)

    l0 = (e / (2 * p.rho * r))[:, None] - 1j * (ex / (2 * r))[:, None] * dlam1
    lam = TwoTermSymbol(grid, lam1 + 0j, l0 * ind, dlam1 + 0j)
    lam_inv = TwoTermSymbol(grid, ind / ls + 0j, -l0 / ls**2 * ind, -dlam1 / ls**2 * ind + 0j)
    p_sym = gamma.sharp(q).sharp(lam_inv)

    h2, h1, _ = _h_coefficients(eta, p)
    h_shift = TwoTermSymbol(
        grid,
        (xi * xi * h2[:, None] - 1.0 / p.rho**2) + 0j,
        1j * xi * h1[:, None] + 0j,
        2 * xi * h2[:, None] + 0j,
    )
    return DiagSymbols(p_sym, q, gamma, lam, lam_inv, h_shift, np.asarray(high), n_cut)


# -- complex unknown -----------------------------------------------------------


@dataclass(frozen=True)
class _Bands:
    grow: np.ndarray
    mid: np.ndarray
    high: np.ndarray
    a: np.ndarray
    b: np.ndarray
    g: np.ndarray


def _bands(grid: FourierGrid, p: DispersionParams, n_cut: int) -> _Bands:
    xi = grid.xi.astype(float)
    keep = grid.retained
    ax = np.abs(xi)
    grow = growing_mask(xi, p) & keep
    high = (ax >= n_cut) & keep
    mid = dispersive_mask(xi, p) & keep & ~high & (ax > 0)
    a = np.sqrt(np.clip(1.0 / p.rho**2 - xi * xi, 0.0, None))
    b = np.sqrt(np.clip(xi * xi - 1.0 / p.rho**2, 0.0, None))
    g = np.sqrt(lambda_principal(xi, p))
    return _Bands(grow, mid, high, a, b, g)


def _band_operators(eta: RealField, p: DispersionParams, n_cut: int, bands: _Bands):
    """Block matrix [[X_w, X_eta], [Y_w, Y_eta]] mapping (w, eta) coefficients to (X, Y)."""
    ds = diag_symbols(eta, p, n_cut)
    hi = bands.high.astype(float)
    mq = ds.q.quantized().matrix() * hi[None, :]
    mp = ds.p.quantized().matrix() * hi[None, :]
    g = np.where(bands.grow | bands.mid, bands.g, 0.0)
    a = np.where(bands.grow, bands.a, 0.0)
    ye = a + np.where(bands.mid, bands.b, 0.0)
    ye[0] = 1.0
    yw = np.where(bands.grow, -bands.g, 0.0)
    return np.block([[np.diag(g) + mq, np.diag(a)], [np.diag(yw), np.diag(ye) + mp]])


def complex_diag(eta: RealField, w: RealField, p: DispersionParams, n_cut: int | None = None
                 ) -> Spectrum:
    """Diagonalized complex unknown u = X + iY.

    Growing band: X = a eta + sqrt(lambda1) w, Y = a eta - sqrt(lambda1) w with
    a = sqrt(rho^-2 - xi^2). Intermediate band: X = sqrt(lambda1) w, Y = b eta
    with b = sqrt(xi^2 - rho^-2). Zero mode: Y = mean(eta). High band
    |xi| >= n_cut: X = T_q w, Y = T_p eta.
    """
    grid = eta.grid
    n = grid.n_modes
    n_cut = default_cut(p) if n_cut is None else int(n_cut)
    bands = _bands(grid, p, n_cut)
    ec = np.where(grid.retained, spectral.fft(eta.values), 0.0)
    wc = np.where(grid.retained, spectral.fft(w.values), 0.0)
    wc[0] = 0.0
    xy = _band_operators(eta, p, n_cut, bands) @ np.concatenate([wc, ec])
    x = spectral.fft(spectral.ifft(xy[:n]).real)
    y = spectral.fft(spectral.ifft(xy[n:]).real)
    return Spectrum(grid, np.where(grid.retained, x + 1j * y, 0.0))


def complex_diag_inverse(u: Spectrum, p: DispersionParams, n_cut: int | None = None,
                         tol: float = 1e-13, max_iter: int = 60, damping: float = 1.0
                         ) -> tuple[RealField, RealField]:
    """(eta, w) from u by fixed-point iteration on the eta dependence of p and q.

    Each step freezes the symbols at the current eta and solves the banded
    linear system exactly.

    Raises
    ------
    SizeError
        If the iteration stops contracting.
    """
    grid = u.grid
    n = grid.n_modes
    n_cut = default_cut(p) if n_cut is None else int(n_cut)
    bands = _bands(grid, p, n_cut)
    keep = grid.retained
    rhs = np.concatenate([np.where(keep, real_part_coeffs(u.coeffs), 0.0),
                          np.where(keep, imag_part_coeffs(u.coeffs), 0.0)])
    w_idx = np.flatnonzero(keep & (grid.xi != 0))
    idx = np.concatenate([w_idx, n + np.flatnonzero(keep)])

    def solve(eta_vals):
        m = _band_operators(RealField(grid, eta_vals), p, n_cut, bands)
        sol = np.zeros(2 * n, dtype=complex)
        sol[idx] = np.linalg.solve(m[np.ix_(idx, idx)], rhs[idx])
        return spectral.ifft(sol[n:]).real, spectral.ifft(sol[:n]).real

    eta = np.zeros(n)
    scale = max(float(np.max(np.abs(u.coeffs), initial=0.0)), 1e-300)
    prev = np.inf
    growth = 0
    err = np.inf
    for it in range(1, max_iter + 1):
        new_eta, w = solve(eta)
        err = float(np.max(np.abs(new_eta - eta)))
        eta = eta + damping * (new_eta - eta)
        if err <= tol * scale:
            break
        growth = growth + 1 if err >= prev else 0
        if growth >= 3 or not np.isfinite(err):
            raise SizeError("complex-unknown inversion does not contract", err, it)
        prev = err
    else:
        raise SizeError("complex-unknown inversion did not reach tolerance", err, max_iter)
    if damping != 1.0:
        _, w = solve(eta)
    return RealField(grid, eta), RealField(grid, w)


# -- full change of unknowns -----------------------------------------------------


class DiagonalMap:
    """(eta, psi) <-> u through the good unknown and the diagonalized complex unknown.

    Parameters
    ----------
    grid : FourierGrid
    params : DispersionParams
    n_y : int
        Radial resolution of the Dirichlet-Neumann solves.
    n_cut : int, optional
        High-frequency threshold; defaults to :func:`default_cut`.
    dno_method : str
    """

    def __init__(self, grid: FourierGrid, params: DispersionParams, n_y: int = 24,
                 n_cut: int | None = None, dno_method: str = "auto"):
        self.grid = grid
        self.params = params
        self.n_cut = default_cut(params) if n_cut is None else int(n_cut)
        self.solver = DNOSolver(grid, params, n_y, dno_method, flat_correction=True)

    def forward(self, eta, psi) -> Spectrum:
        eta = eta if isinstance(eta, RealField) else RealField(self.grid, eta)
        psi = psi if isinstance(psi, RealField) else RealField(self.grid, psi)
        _, w = good_unknown(eta, psi, self.solver)
        return complex_diag(eta, w, self.params, self.n_cut)

    def inverse(self, u: Spectrum, tol: float = 1e-12) -> tuple[RealField, RealField]:
        eta, w = complex_diag_inverse(u, self.params, self.n_cut, tol=tol * 0.1)
        psi = good_unknown_inverse(eta, w, self.solver, tol=tol)
        return eta, psi


# -- extended system -----------------------------------------------------------


def kappa(s) -> np.ndarray:
    """Smooth even bump: 1 on |s| <= 2, 0 on |s| >= 4."""
    return spectral._smoothstep((4.0 - np.abs(np.asarray(s, dtype=float))) / 2.0)


@dataclass(frozen=True)
class ExtendedPieces:
    """Cut-off factors and the real-space fields entering the extended symbol."""

    kappa_s: float
    kappa_4: float
    b_ext: np.ndarray
    v: np.ndarray
    eta: RealField | None
    psi: RealField | None


def _conj_mirror(c: np.ndarray) -> np.ndarray:
    n = c.size
    return np.conj(c[(-np.arange(n)) % n])


class ExtendedSystem:
    """Extended symbol gamma_Ext and remainder R_Ext in the complex unknown.

    gamma_Ext = kappa_s ((1 + b_Ext) Lambda_d - (3i/4) d_x b_Ext sgn(xi) |xi|^(1/2) - V xi)

    is assembled as a separable symbol: the flat part kappa_s Lambda_d(xi) is
    an exact multiplier, the terms b_Ext Lambda_d, -(3i/4) d_x b_Ext sgn |xi|^(1/2)
    and -V xi go through the cutoff quantization. The remainder is defined as
    the residual of the extended equation,

        R_Ext(u) = kappa_s (du/dt - Lambda_g conj(u) - i Pi_d T_gamma_Ext u),

    with du/dt the exact time derivative of the change of unknowns along the
    nonlinear flow, evaluated by a central difference. The flow is the
    dealiased one, so modes above the dealiasing limit carry no dynamics.

    Parameters
    ----------
    dmap : DiagonalMap
    eps0 : float
        Scale of the cutoff ball.
    s0 : float
        Sobolev index of the outer cutoff norm.
    """

    def __init__(self, dmap: DiagonalMap, eps0: float, s0: float = S0_DEFAULT):
        from .dynamics import JetSystem

        self.dmap = dmap
        self.eps0 = float(eps0)
        self.s0 = float(s0)
        grid, p = dmap.grid, dmap.params
        self.grid = grid
        self.params = p
        self.system = JetSystem(grid, p, n_y=dmap.solver.n_y, dno_method=dmap.solver.method)
        xi = grid.xi
        keep = grid.retained
        self.lam_d = np.where(keep, lambda_d(xi, p), 0.0)
        self.lam_g = np.where(keep, lambda_g(xi, p), 0.0)
        self.pi_d = keep & dispersive_mask(xi, p)
        self.half = homogeneous_profile(xi, 0.5, True) / 1j
        self.xi_profile = xi.astype(float) + 0j

    def pieces(self, u: Spectrum, state: tuple | None = None) -> ExtendedPieces:
        """Cutoff factors and fields at u; ``state = (eta, psi)`` skips the inversion."""
        k4 = float(kappa(spectral.sobolev_norm(u, 4.0) / self.eps0))
        ks = float(kappa(spectral.sobolev_norm(u, self.s0) / self.eps0))
        n = self.grid.n_modes
        if ks == 0.0 and k4 == 0.0:
            z = np.zeros(n)
            return ExtendedPieces(ks, k4, z, z, None, None)
        eta, psi = self.dmap.inverse(u) if state is None else state
        ex = spectral.diff(eta.values)
        b = (1.0 + ex * ex) ** -0.75 - 1.0
        v = self.dmap.solver.solve(eta, psi).v.values
        return ExtendedPieces(ks, k4, k4 * b, v, eta, psi)

    def symbol(self, u: Spectrum, pieces: ExtendedPieces | None = None) -> SeparableSymbol:
        """gamma_Ext at the state u."""
        pc = self.pieces(u) if pieces is None else pieces
        ks = pc.kappa_s
        bx = spectral.diff(pc.b_ext)
        terms = (
            (ks * pc.b_ext + 0j, self.lam_d + 0j),
            (-0.75j * ks * bx, self.half),
            (-ks * pc.v + 0j, self.xi_profile),
        )
        return SeparableSymbol(self.grid, terms, ks * self.lam_d + 0j)

    def rhs_u(self, eta: RealField, psi: RealField, delta: float | None = None) -> Spectrum:
        """du/dt along the nonlinear flow by a central difference of the change of unknowns."""
        de, dp, _ = self.system.rhs_values(eta.values, psi.values)
        size = max(np.max(np.abs(eta.values)), np.max(np.abs(psi.values)))
        speed = max(np.max(np.abs(de)), np.max(np.abs(dp)), 1e-300)
        h = delta if delta is not None else 1e-3 * max(size, 1e-300) / speed
        up = self.dmap.forward(eta.values + h * de, psi.values + h * dp)
        um = self.dmap.forward(eta.values - h * de, psi.values - h * dp)
        return Spectrum(self.grid, (up.coeffs - um.coeffs) / (2 * h))

    def linear_part(self, u: Spectrum) -> np.ndarray:
        return self.lam_g * _conj_mirror(u.coeffs) + 1j * self.lam_d * u.coeffs

    def evaluate(self, u: Spectrum, state: tuple | None = None
                 ) -> tuple[Spectrum, SeparableSymbol]:
        """(R_Ext(u), gamma_Ext(u)) sharing one inversion of the change of unknowns.

        ``state = (eta, psi)``, when known, must be the preimage of u.
        """
        pc = self.pieces(u, state)
        sym = self.symbol(u, pc)
        if pc.kappa_s == 0.0:
            return Spectrum(self.grid, np.zeros(self.grid.n_modes, dtype=complex)), sym
        du = self.rhs_u(pc.eta, pc.psi).coeffs
        tg = sym.apply(u).coeffs
        out = du - self.lam_g * _conj_mirror(u.coeffs) - 1j * np.where(self.pi_d, tg, 0.0)
        return Spectrum(self.grid, pc.kappa_s * np.where(self.grid.retained, out, 0.0)), sym

    def remainder(self, u: Spectrum) -> Spectrum:
        """R_Ext(u); identically zero outside the cutoff ball."""
        return self.evaluate(u)[0]

    def field(self, u: Spectrum) -> Spectrum:
        """Right side of the extended equation, Lambda_g conj(u) + i Pi_d T_gamma u + R_Ext."""
        pc = self.pieces(u)
        tg = self.symbol(u, pc).apply(u).coeffs
        out = self.lam_g * _conj_mirror(u.coeffs) + 1j * np.where(self.pi_d, tg, 0.0)
        if pc.kappa_s != 0.0:
            du = self.rhs_u(pc.eta, pc.psi).coeffs
            out = out + pc.kappa_s * (du - out)
        return Spectrum(self.grid, np.where(self.grid.retained, out, 0.0))


def extended_symbol(u: Spectrum, eps0: float, dmap: DiagonalMap, s0: float = S0_DEFAULT
                    ) -> SeparableSymbol:
    return ExtendedSystem(dmap, eps0, s0).symbol(u)


def extended_remainder(u: Spectrum, eps0: float, dmap: DiagonalMap, s0: float = S0_DEFAULT
                       ) -> Spectrum:
    return ExtendedSystem(dmap, eps0, s0).remainder(u)


# -- property checks ---------------------------------------------------------------


def lambda_residual(eta: RealField, psi: RealField, p: DispersionParams, solver: DNOSolver
                    ) -> np.ndarray:
    """G[eta] psi - (T_lambda w - d_x(T_V eta) - T_{B/(rho+eta)} eta) at the collocation points."""
    grid = eta.grid
    r = solver.solve(eta, psi)
    w = psi.values - paraproduct_values(r.b.values, eta.values, grid)
    lam = symbol_lambda(eta, p)
    tl = spectral.ifft(lam.apply(spectral.to_spectrum(RealField(grid, w))).coeffs).real
    tv = spectral.diff(paraproduct_values(r.v.values, eta.values, grid))
    tb = paraproduct_values(r.b.values / (p.rho + eta.values), eta.values, grid)
    return r.g.values - (tl - tv - tb)


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def order_gain_slope(grid: FourierGrid, first: tuple, second: tuple, r: int,
                     freqs=(32, 64, 128, 256, 512)) -> float:
    """Growth exponent in N of ||(T_a T_b - T_{a#_r b}) e^{iNx}||.

    ``first`` and ``second`` are ``(order, coefficient values)`` pairs of
    single-term pluri-homogeneous symbols.
    """
    a = PluriHomogeneousSymbol.from_terms(grid, first[0], [(first[0], first[1], 0)])
    b = PluriHomogeneousSymbol.from_terms(grid, second[0], [(second[0], second[1], 0)])
    ab = compose_symbols(a, b, r)
    norms = []
    for n in freqs:
        c = np.zeros(grid.n_modes, dtype=complex)
        c[grid.index(n)] = 1.0
        u = Spectrum(grid, c)
        norms.append(float(np.linalg.norm(a.apply(b.apply(u)).coeffs - ab.apply(u).coeffs)))
    if min(norms) == 0.0:
        return float("-inf")
    return _loglog_slope(freqs, norms)


def _trig(grid: FourierGrid, amp: float, terms) -> np.ndarray:
    x = grid.x
    return amp * sum(c * (np.cos(k * x) if kind == "c" else np.sin(k * x)) for c, k, kind in terms)


def property_report(p: DispersionParams, n_modes: int = 64, seed: int = 0) -> dict:
    """Identity residuals and remainder slopes of the paradifferential layer.

    Keys: product_identity, constant_identity, cutoff_bounds, order_gain_slope,
    order_gain_expected, lambda_slope, curvature_slope.
    """
    rng = np.random.default_rng(seed)
    g = FourierGrid(n_modes)

    def rnd():
        return Spectrum(g, np.where(g.retained, spectral.fft(rng.standard_normal(n_modes)), 0.0))

    a, u = rnd(), rnd()
    prod = spectral.fft(spectral.ifft(a.coeffs) * spectral.ifft(u.coeffs))
    split = paraproduct(a, u).coeffs + paraproduct(u, a).coeffs + remainder_pm(a, u).coeffs
    c = PluriHomogeneousSymbol.from_terms(g, 0, [(0, 2.5, 0)])
    const = c.apply(u).coeffs - 2.5 * (u.coeffs - spectral.partial_sum(u, 2).coeffs)

    chi = cutoff_matrix(g, DEFAULT_LP)
    xi = g.xi
    zeta = xi[:, None] - xi[None, :]
    xp = np.broadcast_to(xi[None, :], zeta.shape)
    keep = g.retained[:, None] & g.retained[None, :]
    inner = keep & (np.abs(zeta) <= np.abs(xp) / 8) & (np.abs(xp) >= 5)
    outer = keep & (np.abs(zeta) >= np.abs(xp) / 2)
    bounds = bool(np.all(chi[inner] == 1.0) and np.all(chi[outer] == 0.0))

    big = FourierGrid(2048)
    gain = order_gain_slope(big, (0.5, np.cos(big.x)), (1.0, np.sin(big.x)), 2)

    eps = (0.04, 0.02, 0.01, 0.005)
    solver = DNOSolver(g, p, n_y=200)
    eta_terms = ((1.0, 1, "c"), (0.5, 2, "s"), (0.2, 5, "c"))
    psi_terms = ((1.0, 1, "s"), (-0.3, 3, "c"), (0.1, 7, "s"))
    lam_res, h_res = [], []
    for e in eps:
        eta = RealField(g, _trig(g, e, eta_terms))
        psi = RealField(g, _trig(g, e, psi_terms))
        lam_res.append(float(np.sqrt(np.mean(lambda_residual(eta, psi, p, solver) ** 2))))
        h_res.append(float(np.sqrt(np.mean(curvature_residual(eta, p) ** 2))))
    return {
        "product_identity": float(np.max(np.abs(prod - split))),
        "constant_identity": float(np.max(np.abs(const))),
        "cutoff_bounds": bounds,
        "order_gain_slope": gain,
        "order_gain_expected": -0.5,
        "lambda_slope": _loglog_slope(eps, lam_res),
        "curvature_slope": _loglog_slope(eps, h_res),
    }
