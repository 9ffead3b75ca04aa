import numpy as np
import pytest

from jetstab import manifold as mf
from jetstab import paradiff as pd
from jetstab import spectral
from jetstab.errors import ConfigError, SizeError
from jetstab.linear import DispersionParams, extreme_rates
from jetstab.spectral import FourierGrid, Spectrum


@pytest.fixture(scope="module")
def ext():
    g = FourierGrid(32)
    dm = pd.DiagonalMap(g, DispersionParams(0.51), n_y=24)
    return pd.ExtendedSystem(dm, eps0=1e3)


def hyperbolic(g, size, stable=True):
    c = np.zeros(g.n_modes, dtype=complex)
    c[1] = c[-1] = (1j if stable else 1.0) * size / np.sqrt(2)
    return Spectrum(g, c)


def test_config_checks():
    p = DispersionParams(0.51)
    mu, _ = extreme_rates(p)
    with pytest.raises(ConfigError):
        mf.ManifoldConfig(horizon=6.0).check(p)
    with pytest.raises(ConfigError):
        mf.ManifoldConfig(weight=2 * mu).check(p)
    with pytest.raises(ConfigError):
        mf.ManifoldConfig(horizon=12.0, quad_dt=0.7)
    with pytest.raises(ConfigError):
        mf.ManifoldConfig(picard_damping=0.0)
    assert mf.ManifoldConfig().resolved_weight(p) == pytest.approx(mu / 2)


def test_map_at_zero_trajectory_is_linear_decay(ext):
    cfg = mf.ManifoldConfig()
    lp = mf.LyapunovPerron(ext, cfg)
    f = hyperbolic(ext.grid, 1e-3)
    zero = np.zeros((cfg.samples.size, 32), dtype=complex)
    out = lp.lp_map(zero, f)
    mu = extreme_rates(ext.params)[0]
    expect = np.exp(-mu * cfg.samples)[:, None] * f.coeffs[None, :]
    assert np.max(np.abs(out - expect)) < 1e-18


def test_base_point_must_decay(ext):
    with pytest.raises(ConfigError):
        mf.solve_stable(hyperbolic(ext.grid, 1e-3, stable=False), ext, mf.ManifoldConfig())


def test_stable_solution(ext):
    cfg = mf.ManifoldConfig(picard_damping=1.0, tol=1e-13)
    f = hyperbolic(ext.grid, 2.5e-4)
    sol = mf.solve_stable(f, ext, cfg)
    mu, lam = extreme_rates(ext.params)
    assert sol.residual < 1e-13
    assert sol.fitted_decay == pytest.approx(mu, rel=0.05)
    lp = mf.LyapunovPerron(ext, cfg)
    # the stable component at t = 0 is exactly the base point
    assert np.max(np.abs(lp.pi_s(sol.point.coeffs) - f.coeffs)) < 1e-15
    assert sol.tail_bound < 1e-10


def test_unstable_solution_runs_backward(ext):
    cfg = mf.ManifoldConfig(picard_damping=1.0, tol=1e-13)
    sol = mf.solve_unstable(hyperbolic(ext.grid, 2.5e-4, stable=False), ext, cfg)
    assert sol.times[-1] == -cfg.horizon
    assert sol.fitted_decay == pytest.approx(extreme_rates(ext.params)[0], rel=0.05)


def test_divergence_reported(ext, monkeypatch):
    cfg = mf.ManifoldConfig()
    lp = mf.LyapunovPerron(ext, cfg)
    monkeypatch.setattr(lp, "evaluate", lambda states: (np.zeros_like(states), None))
    monkeypatch.setattr(lp, "lp_map", lambda states, f, d, ev: 3.0 * states + 1e-3)
    with pytest.raises(SizeError):
        lp.solve(hyperbolic(ext.grid, 1e-3))


def test_flow_escapes_small_ball(ext):
    far = pd.ExtendedSystem(ext.dmap, eps0=1e-5)
    u0 = ext.dmap.forward(1e-3 * np.cos(ext.grid.x), np.zeros(32))
    run = mf.ExtendedFlow(far).run(u0, np.linspace(0, 1, 5))
    assert run.status == "escaped"
    assert run.states.shape[0] == 1


def test_flow_reproduces_linear_dynamics(ext):
    g = ext.grid
    u0 = Spectrum(g, hyperbolic(g, 1e-9).coeffs)
    run = mf.ExtendedFlow(ext, 0.05).run(u0, np.array([0.0, 1.0]))
    mu = extreme_rates(ext.params)[0]
    assert np.max(np.abs(run.states[1] - np.exp(-mu) * u0.coeffs)) < 1e-6 * 1e-9


def test_center_requires_dispersive_datum(ext):
    with pytest.raises(ConfigError):
        mf.solve_center(hyperbolic(ext.grid, 1e-3), ext, mf.ManifoldConfig())


def test_center_short_window():
    g = FourierGrid(32)
    dm = pd.DiagonalMap(g, DispersionParams(0.51), n_y=24)
    c = np.zeros(32, dtype=complex)
    c[2] = c[-2] = 5e-4
    c[3], c[-3] = 3e-4j, -3e-4j
    f = Spectrum(g, c)
    ext = pd.ExtendedSystem(dm, eps0=spectral.sobolev_norm(f, 5.5))
    cfg = mf.ManifoldConfig(quad_dt=0.2, picard_damping=1.0, tol=1e-12)
    seed = mf.solve_center(f, ext, cfg, horizon=2.0)
    assert seed.converged and seed.status == "ok"
    assert np.all(np.where(ext.pi_d, seed.g.coeffs, 0) == 0)
    assert 0 < seed.cone_ratio < 10
