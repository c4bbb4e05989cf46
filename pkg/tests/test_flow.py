import numpy as np
import pytest

from halfflow import flow as fl
from halfflow.initial import constant, great_circle, perturbed_constant
from halfflow.spectral import CircleGrid, Field, half_energy, heat_semigroup


def test_constant_data_is_stationary():
    g = CircleGrid(32)
    tr = fl.run_flow(constant(g, 3), fl.FlowConfig(dt=0.01, t_end=0.2, snapshot_stride=5))
    assert tr.status == "completed"
    for s in tr.states:
        assert np.array_equal(s.u.values, constant(g, 3).values)
        assert s.energy == 0.0


def test_linear_step_is_exact_semigroup():
    # the exponential integrator reproduces e^{-t(-Delta)^{1/2}} exactly when N = 0
    g = CircleGrid(64)
    u = Field(g, np.stack([np.cos(g.nodes), np.sin(3 * g.nodes)], axis=1))
    v = u
    for _ in range(10):
        v = fl.exp_euler_step(v, 0.05, reproject_after=False, nonlinear=False)
    assert np.allclose(v.values, heat_semigroup(u, 0.5).values, atol=1e-14)


def test_phi_weight_limits():
    g = CircleGrid(16)
    w = fl._phi_weight(g, 0.1)
    assert w[0] == 0.1
    assert w[1] == pytest.approx((1 - np.exp(-0.1)) / 1.0)


def test_energy_decreases_and_sphere_kept():
    g = CircleGrid(64)
    tr = fl.run_flow(perturbed_constant(g, 0.15, 1, 3),
                     fl.FlowConfig(dt=0.01, t_end=1.0, snapshot_stride=10))
    assert tr.status == "completed"
    assert np.all(np.diff(tr.step_energy) <= 1e-12)
    assert max(s.sphere_drift for s in tr.states) < 1e-13
    assert len(tr.states) == 11
    assert tr.times[-1] == pytest.approx(1.0)


def test_linear_energy_identity_oracle():
    # for d_t u + (-Delta)^{1/2} u = 0 the dissipation is pi sum |k| |u_k|^2 (1 - e^{-2|k|T})
    g = CircleGrid(64)
    u0 = perturbed_constant(g, 0.15, 0, 3)
    cfg = fl.FlowConfig(dt=1e-3, t_end=1.0, snapshot_stride=1, reproject=False, nonlinear=False,
                        scan_radii=())
    tr = fl.run_flow(u0, cfg)
    uh = np.fft.fft(u0.values, axis=0) / g.M
    k = np.abs(g.k)[:, None]
    E_T = np.pi * np.sum(k * np.abs(uh) ** 2 * np.exp(-2 * k))
    assert tr.final().energy == pytest.approx(E_T, rel=1e-10)
    assert fl.energy_identity_residual(tr) < 1e-6


def test_energy_identity_first_order():
    g = CircleGrid(64)
    u0 = perturbed_constant(g, 0.15, 0, 3)
    res = [fl.energy_identity_residual(
        fl.run_flow(u0, fl.FlowConfig(dt=dt, t_end=0.5, snapshot_stride=1)))
        for dt in (2e-3, 1e-3)]
    assert res[0] / res[1] > 1.8


def test_picard_slab_converges_to_unprojected_scheme():
    g = CircleGrid(64)
    u0 = perturbed_constant(g, 0.05, 2, 3)
    cfg = fl.FlowConfig(dt=0.01)
    res = fl.picard_slab(u0, 0.1, cfg)
    assert res.status == "converged"
    assert res.iterations <= 20
    assert all(r < 1 for r in res.ratios)
    v = u0
    for _ in range(10):
        v = fl.exp_euler_step(v, 0.01, reproject_after=False)
    assert np.max(np.abs(res.trajectory[-1] - v.values)) < 1e-9
    assert fl.picard_residual(res, cfg, g) < 1e-8


def test_picard_ratio_grows_with_slab_length():
    g = CircleGrid(64)
    u0 = perturbed_constant(g, 0.05, 0, 3)
    cfg = fl.FlowConfig(dt=0.01)
    r = [max(fl.picard_slab(u0, T, cfg).ratios) for T in (0.1, 0.4, 1.6)]
    assert r[0] < r[1] < r[2] < 1


def test_slab_mode_runs():
    g = CircleGrid(32)
    u0 = perturbed_constant(g, 0.1, 0, 3)
    tr = fl.run_flow(u0, fl.FlowConfig(dt=0.01, t_end=0.2, slab_length=0.05, snapshot_stride=5))
    assert tr.status == "completed"
    assert tr.final().energy < tr.states[0].energy


def test_rotation_equivariance_and_determinism():
    g = CircleGrid(64)
    u0 = perturbed_constant(g, 0.15, 3, 3)
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))
    cfg = fl.FlowConfig(dt=0.01, t_end=0.3, snapshot_stride=30)
    a = fl.run_flow(u0, cfg).final().u.values
    b = fl.run_flow(Field(g, u0.values @ Q.T), cfg).final().u.values
    assert np.max(np.abs(a @ Q.T - b)) < 1e-12
    assert np.array_equal(a, fl.run_flow(u0, cfg).final().u.values)


def test_translation_equivariance():
    g = CircleGrid(64)
    u0 = perturbed_constant(g, 0.15, 4, 3)
    cfg = fl.FlowConfig(dt=0.01, t_end=0.3, snapshot_stride=30)
    a = fl.run_flow(u0, cfg).final().u.values
    b = fl.run_flow(Field(g, np.roll(u0.values, 7, axis=0)), cfg).final().u.values
    assert np.max(np.abs(np.roll(a, 7, axis=0) - b)) < 1e-12


def test_great_circle_is_stationary():
    g = CircleGrid(128)
    u0 = great_circle(g, 1, 3)
    lap = fl.rhs(u0).values
    assert np.allclose(lap, u0.values, atol=1e-12)   # (-Delta)^{1/2} of gc1 is itself
    tr = fl.run_flow(u0, fl.FlowConfig(dt=1e-2, t_end=0.5))
    assert np.max(np.abs(tr.final().u.values - u0.values)) < 1e-12


def test_bubble_data_halts_on_concentration():
    from halfflow.initial import bubble_pullback
    g = CircleGrid(256)
    tr = fl.run_flow(bubble_pullback(g, 0.02, 1.0, 3), fl.FlowConfig(dt=1e-3, t_end=0.1))
    assert tr.status == "concentration_detected"
    assert len(tr.states) == 1


def test_validation_errors():
    with pytest.raises(ValueError):
        fl.FlowConfig(dt=0.0)
    with pytest.raises(ValueError):
        fl.FlowConfig(snapshot_stride=0)
    with pytest.raises(ValueError):
        fl.ThresholdConfig(eps1=-1.0)
    g = CircleGrid(16)
    with pytest.raises(fl.ReprojectionError):
        fl.reproject(Field(g, np.zeros((16, 3))))
    with pytest.raises(ValueError):
        fl.exp_euler_step(constant(g), -0.1)
    tr = fl.run_flow(constant(g), fl.FlowConfig(dt=0.1, t_end=0.1, snapshot_stride=5))
    assert len(tr.states) == 2
