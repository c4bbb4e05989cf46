import numpy as np
import pytest

from halfflow import variational as va
from halfflow.initial import constant, great_circle, perturbed_constant
from halfflow.spectral import CircleGrid, Field, half_energy


@pytest.fixture(scope="module")
def u0():
    return perturbed_constant(CircleGrid(32), 0.15, 0, 3)


@pytest.fixture(scope="module")
def minimizer(u0):
    return va.minimize(u0, 0.1)


def test_time_weights_exact():
    t = np.linspace(0, 2.0, 11)
    W, w, tail = va._time_weights(t, 3.0)
    assert W.sum() == pytest.approx((1 - np.exp(-6.0)) / 3.0, rel=1e-14)
    assert w.sum() == pytest.approx(1.0 / 3.0, rel=1e-14)
    assert tail == pytest.approx(np.exp(-6.0) / 3.0)
    # hat weights integrate linear functions exactly
    assert np.sum(w[:-1] * t[:-1]) + (w[-1] - tail) * t[-1] == pytest.approx(
        (1 - np.exp(-6.0) * (1 + 6.0)) / 9.0, rel=1e-12)


def test_sobolev_energy_relates_to_half_energy(u0):
    # (1/2) int int |u(x)-u(y)|^2/|x-y|^2 = 2 pi E_{1/2}
    assert va.sobolev_energy(u0) == pytest.approx(2 * np.pi * half_energy(u0), rel=1e-10)


def test_spatial_gradient_matches_finite_differences(u0):
    g = u0.grid
    rng = np.random.default_rng(0)
    d = rng.standard_normal(u0.values.shape)
    for p in (2.0, 3.0):
        _, grad = va.spatial_energy(u0.values, g, 0.5, p)
        e = 1e-6
        fp = va.spatial_energy(u0.values + e * d, g, 0.5, p)[0]
        fm = va.spatial_energy(u0.values - e * d, g, 0.5, p)[0]
        assert (fp - fm) / (2 * e) == pytest.approx(np.sum(grad * d), rel=1e-6)


def test_static_field_energy_is_two_eps_E(u0):
    for eps in (0.05, 0.2):
        U = va.static_field(u0, 10 * eps, 40)
        parts = va.energy_parts(U, eps)
        assert parts.kinetic == 0.0
        assert va.energy_eps(U, eps) == pytest.approx(2 * eps * va.sobolev_energy(u0), rel=1e-12)
        assert va.energy_eps(U, eps, include_tail=False) < va.energy_eps(U, eps)


def test_minimizer_properties(u0, minimizer):
    U = minimizer
    assert np.array_equal(U.values[0], u0.values)
    assert np.all(np.diff(U.history) < 0)
    assert np.max(np.abs(np.linalg.norm(U.values, axis=-1) - 1)) < 1e-13
    assert U.history[-1] <= 2 * 0.1 * va.sobolev_energy(u0) * (1 + 1e-3)


def test_el_residual_small_only_for_minimizer(u0, minimizer):
    r_min = va.el_residual(minimizer, 0.1)
    r_static = va.el_residual(va.static_field(u0, 1.0, 40), 0.1)
    assert r_min < 1e-6
    assert r_static > 1e3 * r_min


def test_linear_decay_rate_of_minimizer():
    # a small mode-k perturbation of a constant decays at
    # mu = (1 - sqrt(1 + 8 pi eps |k|))/(2 eps) (linearized Euler-Lagrange equation)
    g = CircleGrid(16)
    eps, k, a = 0.1, 1, 1e-3
    x = g.nodes
    vals = np.stack([a * np.cos(k * x), 0 * x, np.ones_like(x)], axis=1)
    u0 = Field(g, vals / np.linalg.norm(vals, axis=1, keepdims=True))
    U = va.minimize(u0, eps, Mt=80, T_factor=4, rtol=1e-14)
    amp = np.abs(np.fft.fft(U.values[:, :, 0], axis=1)[:, k]) * 2 / g.M
    mu = (1 - np.sqrt(1 + 8 * np.pi * eps * k)) / (2 * eps)
    j = 20
    fitted = np.log(amp[j] / amp[0]) / U.times[j]
    assert fitted == pytest.approx(mu, rel=0.05)


def test_time_rescale_roundtrip(minimizer):
    V = va.time_rescale(minimizer, 0.1)
    assert V.frame == "v"
    assert V.times[-1] == pytest.approx(minimizer.times[-1] / 0.1)
    back = va.time_rescale(V, 0.1, "to_u")
    assert np.allclose(back.times, minimizer.times)
    with pytest.raises(ValueError):
        va.time_rescale(V, 0.1, "to_v")
    with pytest.raises(ValueError):
        va.time_rescale(minimizer, 0.1, "sideways")


def test_ire_diagnostics(minimizer):
    d = va.diagnostics_ire(minimizer, 0.1)
    assert np.all(d.I >= 0) and np.all(d.R >= 0)
    assert np.all(np.diff(d.E) <= 1e-12)
    assert va.monotonicity_check(minimizer, 0.1) <= 0.1


def test_monotonicity_fails_for_non_minimizer(minimizer):
    # reparametrize the minimizer in time: same path, wrong speed
    W = minimizer.copy()
    t = W.times
    W.values = np.array([W.values[min(int(round(2 * m)), len(t) - 1)] for m in range(len(t))])
    assert va.monotonicity_check(W, 0.1) > 0.1


def test_constant_data_gives_zero_energy():
    U = va.minimize(constant(CircleGrid(16)), 0.1)
    assert U.history == [0.0]


def test_sweep(u0):
    sw = va.epsilon_sweep(u0, [0.2, 0.1, 0.05, 0.02])
    assert len(sw.dtv_sq) == 4
    assert 0.7 <= sw.slope <= 1.3
    assert all(np.isfinite(sw.window_R))
    with pytest.raises(ValueError):
        va.epsilon_sweep(u0, [0.2, 0.1, 0.05])
    with pytest.raises(ValueError):
        va.epsilon_sweep(u0, [0.2, 0.1, 0.05, 0.025])


def test_p_validation(u0):
    with pytest.raises(ValueError):
        va.minimize(u0, 0.1, p=1.5)
