import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetstab import linear, paradiff as pd, spectral
from jetstab.errors import ConfigError
from jetstab.linear import DispersionParams
from jetstab.spectral import FourierGrid, RealField, Spectrum

from conftest import random_spectrum


@pytest.fixture(scope="module")
def big():
    return FourierGrid(2048)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_product_splits_into_paraproducts(seed):
    g = FourierGrid(64)
    rng = np.random.default_rng(seed)
    a, u = random_spectrum(g, rng), random_spectrum(g, rng)
    prod = spectral.fft(spectral.ifft(a.coeffs) * spectral.ifft(u.coeffs))
    split = pd.paraproduct(a, u).coeffs + pd.paraproduct(u, a).coeffs + pd.remainder_pm(a, u).coeffs
    assert np.max(np.abs(prod - split)) < 1e-12


def test_constant_symbol_identity(rng):
    g = FourierGrid(128)
    u = random_spectrum(g, rng)
    c = pd.PluriHomogeneousSymbol.from_terms(g, 0, [(0, 2.5, 0)])
    expect = 2.5 * (u.coeffs - spectral.partial_sum(u, 2).coeffs)
    assert np.array_equal(c.apply(u).coeffs, expect)


def test_cutoff_matrix_bounds():
    g = FourierGrid(128)
    chi = pd.cutoff_matrix(g, spectral.DEFAULT_LP)
    xi = g.xi
    zeta = xi[:, None] - xi[None, :]
    xp = np.broadcast_to(xi[None, :], zeta.shape)
    keep = g.retained[:, None] & g.retained[None, :]
    assert np.all(chi[keep & (np.abs(zeta) <= np.abs(xp) / 8) & (np.abs(xp) >= 5)] == 1)
    assert np.all(chi[keep & (np.abs(zeta) >= np.abs(xp) / 2)] == 0)


def test_function_symbol_quantizes_to_paraproduct(rng):
    g = FourierGrid(64)
    a = spectral.dealias(random_spectrum(g, rng))
    u = spectral.dealias(random_spectrum(g, rng))
    sym = pd.SeparableSymbol(g, ((spectral.ifft(a.coeffs), np.ones(64)),))
    assert np.max(np.abs(sym.apply(u).coeffs - pd.paraproduct(a, u).coeffs)) < 1e-15


def test_dense_and_column_paths_agree(rng):
    g = FourierGrid(64)
    x = g.x
    sym = pd.PluriHomogeneousSymbol.from_terms(g, 1.0, [(1.0, np.cos(x), 0), (0.0, np.sin(2 * x), 0)])
    u = random_spectrum(g, rng)
    sparse = np.zeros(64, dtype=complex)
    sparse[g.index(20)] = 1.0
    for v in (u, Spectrum(g, sparse)):
        assert np.max(np.abs(sym.matrix() @ v.coeffs - sym.apply(v).coeffs)) < 1e-13


def test_order_gain_same_order_pair(big):
    slope = pd.order_gain_slope(big, (0.5, np.cos(big.x)), (1.0, np.sin(big.x)), 2)
    assert slope == pytest.approx(-0.5, abs=0.3)


def test_order_gain_first_order_expansion(big):
    slope = pd.order_gain_slope(big, (1.0, np.cos(big.x)), (0.5, np.sin(big.x)), 1)
    assert slope == pytest.approx(0.5, abs=0.3)


def test_terminating_expansion_is_exact(big):
    # d_xi^2 |xi| = 0, so the r = 2 composition of |xi| with anything is exact
    a = pd.PluriHomogeneousSymbol.from_terms(big, 1.0, [(1.0, np.cos(big.x), 0)])
    b = pd.PluriHomogeneousSymbol.from_terms(big, 0.5, [(0.5, np.sin(big.x), 0)])
    ab = pd.compose_symbols(a, b, 2)
    for n in (64, 512):
        c = np.zeros(big.n_modes, dtype=complex)
        c[n] = 1
        u = Spectrum(big, c)
        assert np.linalg.norm(a.apply(b.apply(u)).coeffs - ab.apply(u).coeffs) < 1e-12


def test_adjoint_symbol_orders():
    g = FourierGrid(1024)
    x = g.x
    a = pd.PluriHomogeneousSymbol.from_terms(g, 1.0, [(1.0, np.cos(x) + 1j * np.sin(2 * x), 0)])
    mh = a.matrix().conj().T
    first, second = pd.adjoint_symbol(a, 1), pd.adjoint_symbol(a, 2)
    e1, e2 = [], []
    freqs = (16, 32, 64, 128, 256)
    for n in freqs:
        c = np.zeros(1024, dtype=complex)
        c[n] = 1
        u = Spectrum(g, c)
        e1.append(np.linalg.norm(mh @ c - first.apply(u).coeffs))
        e2.append(np.linalg.norm(mh @ c - second.apply(u).coeffs))
    assert np.polyfit(np.log(freqs), np.log(e1), 1)[0] == pytest.approx(0.0, abs=0.3)
    assert max(e2) < 1e-12


def test_compose_rejects_bad_order():
    g = FourierGrid(32)
    a = pd.PluriHomogeneousSymbol.from_terms(g, 1.0, [(1.0, np.cos(g.x), 0)])
    with pytest.raises(ConfigError):
        pd.compose_symbols(a, a, 0)


def test_lambda_symbol_at_flat_state(p051):
    g = FourierGrid(64)
    lam = pd.symbol_lambda(RealField(g, np.zeros(64)), p051)
    u = random_spectrum(g, np.random.default_rng(5))
    out = lam.apply(u).coeffs
    high = g.retained & (np.abs(g.xi) >= 8)
    expect = linear.g0(g.xi, p051) * u.coeffs
    assert np.max(np.abs(np.where(high, out - expect, 0))) < 1e-12


def test_paralinearization_remainders_quadratic():
    rep = pd.property_report(DispersionParams(0.51))
    assert rep["lambda_slope"] == pytest.approx(2.0, abs=0.15)
    assert rep["curvature_slope"] == pytest.approx(2.0, abs=0.15)
    assert rep["cutoff_bounds"]


def test_diagonalization_identities(p051):
    g = FourierGrid(64)
    eta = RealField(g, 1e-2 * (np.cos(g.x) + 0.3 * np.sin(3 * g.x)))
    res = pd.diag_symbols(eta, p051).identity_residuals()
    for key in ("p_lambda_principal", "p_lambda_sub", "gamma_p_principal",
                "gamma_p_sub_minus_defect", "gamma_selfadjoint_principal", "gamma_selfadjoint_sub"):
        assert res[key] < 1e-10, key
    assert res["gamma_p_defect"] > 1.0


def test_gamma_reduces_to_dispersion_when_flat(p051):
    g = FourierGrid(64)
    ds = pd.diag_symbols(RealField(g, np.zeros(64)), p051)
    diff = np.where(ds.high, ds.gamma.principal - linear.lambda_d(g.xi, p051)[None, :], 0)
    assert np.max(np.abs(diff)) < 1e-12


def test_complex_diag_roundtrip(p051):
    g = FourierGrid(64)
    x = g.x
    eta = RealField(g, 1e-2 * (np.cos(x) + 0.3 * np.sin(3 * x)))
    w = RealField(g, 1e-2 * np.sin(2 * x) + 2e-3 * np.cos(13 * x))
    u = pd.complex_diag(eta, w, p051)
    e2, w2 = pd.complex_diag_inverse(u, p051)
    assert np.max(np.abs(e2.values - eta.values)) < 1e-14
    assert np.max(np.abs(w2.values - w.values)) < 1e-14


def test_complex_diag_linearization(p051):
    # small data: the linear coordinate below the cut, sqrt(rho) times it on the high band
    g = FourierGrid(64)
    rng = np.random.default_rng(3)
    e = random_spectrum(g, rng)
    w = random_spectrum(g, rng)
    w.coeffs[0] = 0.0
    eps = 1e-7
    ev, wv = spectral.ifft(e.coeffs).real, spectral.ifft(w.coeffs).real
    u = pd.complex_diag(RealField(g, eps * ev), RealField(g, eps * wv), p051).coeffs / eps
    z = linear.ComplexCoordinate(g, p051).forward(e.coeffs, w.coeffs)
    high = g.retained & (np.abs(g.xi) >= pd.default_cut(p051))
    low = g.retained & ~high
    assert np.max(np.abs(u[low] - z[low])) < 1e-6
    assert np.max(np.abs(u[high] - np.sqrt(p051.rho) * z[high])) < 1e-5
    assert np.max(np.abs(u[high] - z[high])) > 0.1


def test_diagonal_map_roundtrip(p051):
    g = FourierGrid(32)
    x = g.x
    dm = pd.DiagonalMap(g, p051, n_y=16)
    eta = RealField(g, 1e-3 * (np.cos(x) + 0.4 * np.sin(2 * x)))
    psi = RealField(g, 1e-3 * (np.sin(x) - 0.3 * np.cos(3 * x)))
    e2, p2 = dm.inverse(dm.forward(eta, psi))
    assert np.max(np.abs(e2.values - eta.values)) < 1e-13
    assert np.max(np.abs(p2.values - psi.values)) < 1e-13


def test_kappa_profile():
    s = np.array([0.0, 1.0, 2.0, -2.0, 3.0, 4.0, 5.0])
    k = pd.kappa(s)
    assert k[:4].tolist() == [1.0, 1.0, 1.0, 1.0]
    assert 0 < k[4] < 1
    assert k[5] == 0.0 and k[6] == 0.0
    t = np.linspace(2, 4, 50)
    assert np.all(np.diff(pd.kappa(t)) <= 0)


@pytest.fixture(scope="module")
def ext():
    g = FourierGrid(32)
    dm = pd.DiagonalMap(g, DispersionParams(0.51), n_y=24)
    return pd.ExtendedSystem(dm, eps0=1e3)


def _base(ext):
    g = ext.grid
    x = g.x
    eta = RealField(g, 1e-3 * (np.cos(x) + 0.4 * np.sin(2 * x) + 0.1 * np.cos(9 * x)))
    psi = RealField(g, 1e-3 * (np.sin(x) - 0.3 * np.cos(3 * x) + 0.2 * np.sin(10 * x)))
    return ext.dmap.forward(eta, psi)


def test_extended_remainder_vanishes_at_zero(ext):
    z = Spectrum(ext.grid, np.zeros(32, dtype=complex))
    assert not np.any(ext.remainder(z).coeffs)


def test_extended_symbol_flat_part(ext):
    z = Spectrum(ext.grid, np.zeros(32, dtype=complex))
    sym = ext.symbol(z)
    u = random_spectrum(ext.grid, np.random.default_rng(1))
    assert np.max(np.abs(sym.apply(u).coeffs - ext.lam_d * u.coeffs)) < 1e-13


def test_extended_remainder_quadratic(ext):
    base = _base(ext)
    scales = np.array([1.0, 0.5, 0.25, 0.125])
    norms = [np.linalg.norm(ext.remainder(Spectrum(ext.grid, s * base.coeffs)).coeffs) for s in scales]
    assert np.polyfit(np.log(scales), np.log(norms), 1)[0] == pytest.approx(2.0, abs=0.15)


def test_extended_system_switches_off_outside_ball(ext):
    base = _base(ext)
    far = pd.ExtendedSystem(ext.dmap, eps0=1e-6)
    assert not np.any(far.remainder(base).coeffs)
    # the cutoff multiplies the whole dispersive symbol, so only Lambda_g conj(u) survives
    hyper = np.where(far.pi_d, 0.0, far.linear_part(base))
    assert np.max(np.abs(far.field(base).coeffs - hyper)) < 1e-18
