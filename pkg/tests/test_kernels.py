import os
import subprocess
import sys

import numpy as np
import pytest

from halfflow import _kernels as kern
from halfflow.spectral import CircleGrid, half_shift

pytestmark = pytest.mark.skipif(kern.numba_impl is None, reason="numba unavailable")


@pytest.fixture(scope="module")
def data():
    g = CircleGrid(48)
    rng = np.random.default_rng(11)
    u = rng.standard_normal((48, 3))
    v = rng.standard_normal((48, 3))
    w = rng.standard_normal((48, 3))
    return g, u, v, w


def both(name, *args):
    return getattr(kern.numpy_impl, name)(*args), getattr(kern.numba_impl, name)(*args)


def close(a, b):
    if isinstance(a, tuple):
        return all(close(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_pair_kernels_agree(data):
    g, u, v, w = data
    ut = half_shift(u)
    wts = g.h / g.dist**2
    for name in ("pair_sq_sum", "pair_diff_sum", "pair_kernel"):
        assert close(*both(name, u, ut, wts))


def test_row_col_and_remainder_agree(data):
    g, u, v, w = data
    F = np.random.default_rng(0).standard_normal((48, 48, 2))
    assert close(*both("row_col_sums", F, g.h**2 / g.dist**1.5))
    args = (u, half_shift(u), v, half_shift(v), w, half_shift(w), g.h / g.dist**2)
    assert close(*both("remainder", *args))


def test_masked_and_power_sums_agree(data):
    g, u, _, _ = data
    ut = half_shift(u)
    xm = (np.arange(48) < 20).astype(float)
    ym = (np.arange(48) > 10).astype(float)
    assert close(*both("masked_sq_sum", u, ut, g.h**2 / g.dist**2, xm, ym))
    for p in (2.0, 3.0):
        assert close(*both("power_div_sums", u, ut, g.h**2 / g.dist ** (0.5 * p + 1), p))


def test_line_sums_agree():
    x = np.linspace(-5, 5, 64)
    v = np.stack([np.tanh(x), 1 / np.cosh(x)], axis=1)
    assert close(*both("line_pair_sums", v, x))


def test_backend_selection(monkeypatch):
    assert kern.select_backend("numpy") is kern.numpy_impl
    assert kern.select_backend("numba") is kern.numba_impl
    monkeypatch.setenv("HALFFLOW_BACKEND", "numpy")
    assert kern.select_backend() is kern.numpy_impl
    with pytest.raises(ValueError):
        kern.select_backend("fortran")


def test_numpy_backend_end_to_end_matches():
    code = ("from halfflow.initial import perturbed_constant;"
            "from halfflow.spectral import CircleGrid;"
            "from halfflow.fraccalc import sq_grad_density;"
            "import numpy as np;"
            "u = perturbed_constant(CircleGrid(64), 0.2, 0, 3);"
            "print(repr(float(sq_grad_density(u).values.sum())))")
    outs = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, HALFFLOW_BACKEND=backend)
        outs[backend] = float(subprocess.run([sys.executable, "-c", code], env=env,
                                             capture_output=True, text=True,
                                             check=True).stdout)
    assert outs["numpy"] == pytest.approx(outs["numba"], rel=1e-13)


def test_threaded_numba_agrees(data):
    g, u, _, _ = data
    par = kern._build_numba(2)
    ut = half_shift(u)
    wts = g.h / g.dist**2
    assert np.allclose(par.pair_sq_sum(u, ut, wts), kern.numpy_impl.pair_sq_sum(u, ut, wts))
