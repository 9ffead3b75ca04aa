import numpy as np
import pytest

from jetstab import dynamics, linear, spectral
from jetstab.dynamics import IntegratorConfig, JetSystem, LawsonRK4
from jetstab.errors import ConfigError
from jetstab.linear import DispersionParams, JetState
from jetstab.spectral import FourierGrid


def test_config_validation(p051):
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_end=1.0, snapshot_stride=0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=10.0, t_end=1.0).check_stability(p051)


def test_zero_state_is_stationary(p051):
    g = FourierGrid(16)
    traj = dynamics.simulate(JetState.zero(g, p051), IntegratorConfig(dt=0.1, t_end=0.5, n_y=8))
    assert traj.status == "ok"
    assert not np.any(traj[-1].state.eta.values)


def test_exp_coeffs_group_property(p051):
    s = JetSystem(FourierGrid(16), p051, n_y=8)
    a, b, c = s.exp_coeffs(0.3), s.exp_coeffs(0.5), s.exp_coeffs(0.8)
    # 2x2 product per mode
    p11 = b[0] * a[0] + b[1] * a[2]
    p12 = b[0] * a[1] + b[1] * a[3]
    assert np.allclose(p11, c[0], rtol=1e-13, atol=1e-14)
    assert np.allclose(p12, c[1], rtol=1e-13, atol=1e-14)


def test_small_amplitude_follows_linear_flow(p051):
    g = FourierGrid(32)
    amp = 1e-9
    s0 = dynamics.seed_state(g, p051, 3, amp)
    sys_ = JetSystem(g, p051, n_y=16)
    traj = dynamics.simulate(s0, IntegratorConfig(dt=0.1, t_end=1.0, n_y=16), system=sys_)
    c11, c12, c21, c22 = sys_.exp_coeffs(1.0)
    e0 = spectral.fft(s0.eta.values)
    p0 = spectral.fft(s0.psi.values)
    expect = spectral.ifft(c11 * e0 + c12 * p0).real
    assert np.max(np.abs(traj[-1].state.eta.values - expect)) < 1e-6 * amp


def test_forward_backward_returns(p051):
    g = FourierGrid(32)
    x = g.x
    s0 = JetState.from_arrays(g, 1e-3 * np.cos(2 * x), 1e-3 * np.sin(3 * x), p051)
    sys_ = JetSystem(g, p051, n_y=16)
    fwd = dynamics.simulate(s0, IntegratorConfig(dt=0.05, t_end=0.5, n_y=16), system=sys_)
    back = dynamics.simulate(fwd[-1].state, IntegratorConfig(dt=0.05, t_end=-0.5, n_y=16), system=sys_)
    assert np.max(np.abs(back[-1].state.eta.values - s0.eta.values)) < 1e-9


def test_time_refinement_is_fourth_order(p051):
    g = FourierGrid(32)
    x = g.x
    s0 = JetState.from_arrays(g, 0.02 * np.cos(2 * x), 0.02 * np.sin(3 * x), p051)
    sys_ = JetSystem(g, p051, n_y=16)
    ends = []
    for dt in (0.2, 0.1, 0.05):
        tr = dynamics.simulate(s0, IntegratorConfig(dt=dt, t_end=1.0, n_y=16), system=sys_)
        ends.append(tr[-1].state.eta.values)
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert np.log2(ratio) > 3.5


def test_volume_flux_small(p051):
    g = FourierGrid(32)
    x = g.x
    s0 = JetState.from_arrays(g, 0.02 * np.cos(2 * x), 0.02 * np.sin(3 * x), p051)
    tr = dynamics.simulate(s0, IntegratorConfig(dt=0.1, t_end=1.0, n_y=64))
    flux = np.array([s.diagnostics["flux"] for s in tr])
    assert np.max(np.abs(flux)) < 1e-7


def test_growth_run_recovers_rate(p051):
    row = dynamics.growth_run(p051, 1, 1e-6, n_modes=32, n_y=24, dt=0.1)
    assert not row.flagged
    assert row.omega_measured == pytest.approx(row.omega_rayleigh, rel=1e-3)


def test_dispersive_mode_reports_zero(p051):
    row = dynamics.growth_run(p051, 3, 1e-6, n_modes=32, n_y=24, dt=0.1)
    assert row.omega_measured == 0.0
    assert row.omega_rayleigh == 0.0


def test_scan_threads_identical():
    p = DispersionParams(0.34)
    a = dynamics.growth_scan(p, [2, 3], n_modes=32, n_y=16, dt=0.1, workers=1)
    b = dynamics.growth_scan(p, [2, 3], n_modes=32, n_y=16, dt=0.1, workers=2)
    assert a == b


def test_pinch_off_status():
    p = DispersionParams(0.51)
    g = FourierGrid(32)
    s0 = dynamics.seed_state(g, p, 1, 0.2)
    tr = dynamics.simulate(s0, IntegratorConfig(dt=0.1, t_end=30.0, n_y=16, snapshot_stride=10))
    assert tr.status == "pinch_off"
    assert linear.lambda_g(1, p) > 0
