import numpy as np
import pytest

from jetstab import paradiff as pd
from jetstab import propagator as pr
from jetstab.errors import ConfigError
from jetstab.linear import DispersionParams, linear_flow
from jetstab.manifold import ExtendedFlow
from jetstab.spectral import FourierGrid, RealField, Spectrum

TIMES = np.linspace(0.0, 3.0, 13)


@pytest.fixture(scope="module")
def setup():
    g = FourierGrid(32)
    p = DispersionParams(0.51)
    x = g.x
    dm = pd.DiagonalMap(g, p, n_y=24)
    ext = pd.ExtendedSystem(dm, eps0=1e3)
    rng = np.random.default_rng(1)
    h = Spectrum(g, np.where(g.retained, rng.standard_normal(32) + 1j * rng.standard_normal(32), 0)
                 * np.exp(-0.2 * np.abs(g.xi)))
    eta = np.cos(x) + 0.4 * np.sin(2 * x) + 0.3 * np.cos(5 * x)
    psi = np.sin(x) - 0.3 * np.cos(3 * x) + 0.2 * np.sin(6 * x)
    base = dm.forward(1e-3 * eta, 1e-3 * psi).coeffs / 1e-3
    return g, p, ext, h, base


def background(setup, size):
    g, p, _, _, base = setup
    states = np.array([linear_flow(Spectrum(g, size * base), t, p).coeffs for t in TIMES])
    return pr.BackgroundTrajectory(g, TIMES, states)


def test_flat_propagator_is_exact_phase(setup):
    _, _, ext, h, _ = setup
    v = pr.propagate(pr.DispersiveGenerator.flat(ext, 0, 3), 0, 3, h)
    hd = np.where(ext.pi_d, h.coeffs, 0)
    assert abs(np.linalg.norm(v.coeffs) - np.linalg.norm(hd)) < 1e-10
    assert np.max(np.abs(v.coeffs - np.exp(3j * ext.lam_d) * hd)) < 1e-12


def test_transition_and_reversal(setup):
    _, _, ext, h, _ = setup
    gen = pr.DispersiveGenerator(ext, background(setup, 1e-3))
    hd = np.where(ext.pi_d, h.coeffs, 0)
    a = pr.propagate(gen, 0, 1.7, h)
    assert np.max(np.abs(pr.propagate(gen, 1.7, 0, a).coeffs - hd)) < 1e-8
    # composition over aligned step grids
    mid = pr.propagate(gen, 0, 1.5, h)
    two = pr.propagate(gen, 1.5, 3.0, mid)
    one = pr.propagate(gen, 0, 3.0, h)
    assert np.max(np.abs(two.coeffs - one.coeffs)) < 1e-8


def test_drift_linear_in_background(setup):
    _, _, ext, h, _ = setup
    hd = np.linalg.norm(np.where(ext.pi_d, h.coeffs, 0))
    sizes = [1e-3, 5e-4, 2.5e-4, 1.25e-4]
    drift = []
    for e in sizes:
        v = pr.propagate(pr.DispersiveGenerator(ext, background(setup, e)), 0, 3, h)
        drift.append(abs(np.linalg.norm(v.coeffs) - hd))
    assert np.polyfit(np.log(sizes), np.log(drift), 1)[0] == pytest.approx(1.0, abs=0.2)


def test_selfadjoint_defect_linear(setup):
    g, _, ext, h, base = setup
    sizes = [4e-3, 2e-3, 1e-3, 5e-4]
    d = [pr.selfadjoint_defect(ext, Spectrum(g, e * base), h) for e in sizes]
    assert np.polyfit(np.log(sizes), np.log(d), 1)[0] == pytest.approx(1.0, abs=0.2)
    assert pr.selfadjoint_defect(ext, Spectrum(g, 0 * base), h) < 1e-14


def test_range_check(setup):
    _, _, ext, h, _ = setup
    gen = pr.DispersiveGenerator(ext, background(setup, 1e-3))
    with pytest.raises(ConfigError):
        pr.propagate(gen, 0, 4.0, h)


def test_background_validation(setup):
    g = setup[0]
    with pytest.raises(ConfigError):
        pr.BackgroundTrajectory(g, np.array([0.0, 0.0]), np.zeros((2, 32)))


def test_duhamel_residual_refines(setup):
    g, p, ext, _, _ = setup
    x = g.x
    eta = RealField(g, 1e-3 * (np.cos(x) + 0.4 * np.sin(2 * x) + 0.1 * np.cos(5 * x)))
    psi = RealField(g, 1e-3 * (np.sin(x) - 0.3 * np.cos(3 * x) + 0.2 * np.sin(4 * x)))
    u0 = ext.dmap.forward(eta, psi)
    run = ExtendedFlow(ext, 0.025).run(u0, np.linspace(0, 2.0, 81), (eta, psi))
    assert run.status == "ok"
    spacing = [0.2, 0.1, 0.05]
    errs = [pr.duhamel_residual(ext, run.times[::k], run.states[::k]) for k in (8, 4, 2)]
    assert np.polyfit(np.log(spacing), np.log(errs), 1)[0] >= 2.0
