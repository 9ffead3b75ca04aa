import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetstab import spectral
from jetstab.errors import ConfigError
from jetstab.spectral import FourierGrid, LittlewoodPaley, RealField, Spectrum

from conftest import random_spectrum


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        FourierGrid(48)


def test_frequencies_and_retained_band():
    g = FourierGrid(16)
    assert g.xi[:4].tolist() == [0, 1, 2, 3]
    assert g.xi[-1] == -1
    assert g.k_max == 7
    assert not g.retained[8]


def test_fft_normalization_of_cosine():
    g = FourierGrid(32)
    c = spectral.fft(np.cos(3 * g.x))
    assert c[3] == pytest.approx(0.5)
    assert c[-3] == pytest.approx(0.5)
    assert np.sum(np.abs(c)) == pytest.approx(1.0)


def test_fft_roundtrip(rng):
    v = rng.standard_normal(64)
    assert np.allclose(spectral.ifft(spectral.fft(v)).real, v, atol=1e-14)


def test_diff_of_trig_polynomial():
    g = FourierGrid(64)
    x = g.x
    v = np.sin(2 * x) + 0.5 * np.cos(7 * x)
    exact = 2 * np.cos(2 * x) - 3.5 * np.sin(7 * x)
    assert np.max(np.abs(spectral.diff(v) - exact)) < 1e-12
    assert np.max(np.abs(spectral.diff(v, 2) + 4 * np.sin(2 * x) + 24.5 * np.cos(7 * x))) < 1e-11


def test_sobolev_norm_of_single_mode():
    g = FourierGrid(32)
    s = spectral.to_spectrum(RealField(g, np.cos(4 * g.x)))
    # two coefficients of size 1/2 weighted by (1 + 16)^s
    assert spectral.sobolev_norm(s, 1.5) == pytest.approx(np.sqrt(2 * 0.25 * 17.0**1.5))


def test_dealias_removes_high_band():
    g = FourierGrid(32)
    v = np.cos(3 * g.x) + np.cos(14 * g.x)
    out = spectral.dealias_values(v, g)
    assert np.allclose(out, np.cos(3 * g.x), atol=1e-14)


def test_partition_of_unity():
    lp = LittlewoodPaley()
    xi = np.arange(-200, 201)
    total = sum(lp.block_multiplier(j, xi) for j in range(0, 12))
    assert np.allclose(total, 1.0, atol=1e-15)


def test_blocks_supported_on_annuli():
    lp = LittlewoodPaley()
    xi = np.arange(0, 300)
    for j in range(1, 8):
        m = lp.block_multiplier(j, xi)
        assert np.all(m[(xi < 2 ** (j - 1)) | (xi > 2 ** (j + 1))] == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_lp_reconstruction(seed):
    g = FourierGrid(64)
    u = random_spectrum(g, np.random.default_rng(seed))
    rec = spectral.lp_decompose(u).reconstruct()
    assert np.max(np.abs(rec.coeffs - u.coeffs)) < 1e-15


def test_partial_sums_nest():
    g = FourierGrid(128)
    u = random_spectrum(g, np.random.default_rng(3))
    s3 = spectral.partial_sum(u, 3)
    s4 = spectral.partial_sum(u, 4)
    d4 = spectral.lp_block(u, 4)
    assert np.max(np.abs(s4.coeffs - s3.coeffs - d4.coeffs)) < 1e-15
    assert not np.any(spectral.partial_sum(u, -1).coeffs)


def test_chi_lattice_bounds():
    lp = LittlewoodPaley()
    xp = np.arange(-60, 61)
    zeta = np.arange(-60, 61)
    Z, X = np.meshgrid(zeta, xp, indexing="ij")
    chi = lp.chi(Z, X)
    inner = (np.abs(Z) <= np.abs(X) / 8) & (np.abs(X) >= 5)
    outer = np.abs(Z) >= np.abs(X) / 2
    assert np.all(chi[inner] == 1)
    assert np.all(chi[outer] == 0)
    # the only lattice failures of the inner bound sit at zeta = 0 with |xi'| <= 4
    bad = (np.abs(Z) <= np.abs(X) / 8) & (chi != 1)
    assert np.all(Z[bad] == 0) and np.all(np.abs(X[bad]) <= 4)


def test_spectrum_hermitian_check(rng):
    g = FourierGrid(16)
    u = random_spectrum(g, rng)
    assert u.is_hermitian()
    c = u.coeffs.copy()
    c[2] += 1j
    assert not Spectrum(g, c).is_hermitian()
