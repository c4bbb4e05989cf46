import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfflow.spectral import (
    CircleGrid, Field, LineGrid, apply_multiplier, fourier_mode, frac_laplacian,
    from_spectral, half_energy, half_shift, heat_semigroup, l2_norm, poisson_kernel,
    pv_half_laplacian, sobolev_norm, spectral_eval, to_spectral,
)


def random_trig(grid, K, seed):
    rng = np.random.default_rng(seed)
    x = grid.nodes
    a, b = rng.standard_normal(K + 1), rng.standard_normal(K + 1)
    return sum(a[k] * np.cos(k * x) + b[k] * np.sin(k * x) for k in range(K + 1))


def test_grid_validation():
    with pytest.raises(ValueError):
        CircleGrid(7)
    with pytest.raises(ValueError):
        CircleGrid(4)
    with pytest.raises(ValueError):
        LineGrid(-1.0, 64)
    g = CircleGrid(16)
    assert g.h == pytest.approx(2 * np.pi / 16)
    assert np.allclose(g.dist, 2 * np.abs(np.sin(g.offsets / 2)))


@pytest.mark.parametrize("t", [0.05, 0.5, 2.0])
def test_poisson_kernel_closed_form(t):
    x = np.linspace(-np.pi, np.pi, 101)
    exact = np.sinh(t) / (2 * np.pi * (np.cosh(t) - np.cos(x)))
    assert np.max(np.abs(poisson_kernel(t, x) - exact)) < 1e-8


def test_poisson_kernel_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        poisson_kernel(0.0, 0.0)


def test_heat_semigroup_is_poisson_convolution():
    # e^{-t(-Delta)^{1/2}} u = P_t * u; quadrature of the convolution is spectrally exact
    g = CircleGrid(128)
    u = random_trig(g, 6, 0)
    t = 0.3
    P = poisson_kernel(t, g.nodes[:, None] - g.nodes[None, :])
    conv = g.h * P @ u
    assert np.max(np.abs(heat_semigroup(Field(g, u), t).values - conv)) < 1e-8


@settings(max_examples=25, deadline=None)
@given(k=st.integers(-32, 32), s=st.sampled_from([0.25, 0.5, 0.75, 1.0]))
def test_multiplier_on_modes(k, s):
    g = CircleGrid(128)
    e = fourier_mode(g, k).values
    out = frac_laplacian(Field(g, e), s).values
    # round-off in the other modes is amplified by the largest symbol value
    assert np.max(np.abs(out - abs(k) ** (2 * s) * e)) < 1e-13 * (g.M / 2) ** (2 * s)


def test_frac_laplacian_s1_is_minus_second_derivative():
    g = CircleGrid(64)
    x = g.nodes
    u = Field(g, np.sin(2 * x) + 0.3 * np.cos(5 * x))
    assert np.allclose(frac_laplacian(u, 1.0).values, 4 * np.sin(2 * x) + 7.5 * np.cos(5 * x))
    with pytest.raises(ValueError):
        frac_laplacian(u, 1.5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pv_matches_multiplier_bandlimited(seed):
    g = CircleGrid(128)
    u = Field(g, random_trig(g, 20, seed))
    assert np.max(np.abs(pv_half_laplacian(u).values - frac_laplacian(u, 0.5).values)) < 1e-10


def test_pv_refinement_oracle_analytic_data():
    # exp(cos x) is not band-limited; a fine-grid multiplier is the reference
    fine, coarse = CircleGrid(8192), CircleGrid(256)
    ref = frac_laplacian(Field(fine, np.exp(np.cos(fine.nodes))), 0.5).values[::32]
    got = pv_half_laplacian(Field(coarse, np.exp(np.cos(coarse.nodes)))).values
    assert np.max(np.abs(got - ref)) < 1e-10


def test_half_shift_exact_and_adjoint():
    g = CircleGrid(64)
    x = g.nodes
    u = np.cos(3 * x) + np.sin(7 * x)
    sh = half_shift(u)
    y = x + g.h / 2
    assert np.allclose(sh, np.cos(3 * y) + np.sin(7 * y), atol=1e-13)
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(64), rng.standard_normal(64)
    assert np.dot(half_shift(a), b) == pytest.approx(np.dot(a, half_shift(b, sign=-1)))


def test_spectral_eval_interpolates():
    g = CircleGrid(32)
    u = Field(g, np.cos(3 * g.nodes) + 0.2 * np.sin(5 * g.nodes) + 0.1 * np.cos(16 * g.nodes))
    assert np.allclose(spectral_eval(u, g.nodes), u.values, atol=1e-13)
    v = Field(g, np.cos(3 * g.nodes))
    xs = np.linspace(0, 1, 7)
    assert np.allclose(spectral_eval(v, xs), np.cos(3 * xs), atol=1e-13)


def test_spectral_roundtrip_and_apply_multiplier_keeps_complex():
    g = CircleGrid(32)
    u = Field(g, random_trig(g, 5, 3))
    assert np.allclose(from_spectral(to_spectral(u)).values, u.values)
    z = np.exp(1j * g.nodes)
    assert np.iscomplexobj(apply_multiplier(z, np.ones(32)))


def test_norms_on_single_modes():
    g = CircleGrid(64)
    u = Field(g, np.cos(4 * g.nodes))
    assert sobolev_norm(u, 0.5) ** 2 == pytest.approx(np.pi * 4)
    assert sobolev_norm(u, 0.5, homogeneous=False) ** 2 == pytest.approx(np.pi * np.sqrt(17))
    assert sobolev_norm(u, -0.5) ** 2 == pytest.approx(np.pi / 4)
    assert sobolev_norm(Field(g, np.ones(64)), 0.5) == 0.0
    assert l2_norm(u) ** 2 == pytest.approx(np.pi)
    # E(cos kx) = (1/2) int |(-Delta)^{1/4} cos kx|^2 = pi k / 2
    assert half_energy(u) == pytest.approx(2 * np.pi)
