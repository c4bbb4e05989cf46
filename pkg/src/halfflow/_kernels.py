"""O(M^2) pair-sum kernels over (node, half-offset node) pairs.

Every kernel works on a field ``u`` of shape (M, n) sampled at the nodes
x_i and its half-shifted copy ``ut`` sampled at x_j + h/2.  The pair (i, m)
couples x_i with y = x_i + (m + 1/2) h, whose sample is ``ut[(i + m) % M]``.

Two interchangeable backends exist: numba ``@njit`` kernels and a chunked
pure-numpy path.  ``HALFFLOW_BACKEND=numpy`` forces the fallback;
``HALFFLOW_THREADS`` sets the numba worker count (default 1).
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_CHUNK = 256


# --------------------------------------------------------------------------
# pure numpy path
# --------------------------------------------------------------------------

def _np_rows(M, start, stop):
    i = np.arange(start, stop)[:, None]
    return (i + np.arange(M)[None, :]) % M


def _np_pair_sq_sum(u, ut, w):
    M = u.shape[0]
    out = np.empty(M)
    for s in range(0, M, _CHUNK):
        e = min(s + _CHUNK, M)
        diff = u[s:e, None, :] - ut[_np_rows(M, s, e)]
        out[s:e] = (np.einsum("imc,imc->im", diff, diff) * w[None, :]).sum(axis=1)
    return out


def _np_pair_diff_sum(u, ut, w):
    M, n = u.shape
    out = np.empty((M, n))
    for s in range(0, M, _CHUNK):
        e = min(s + _CHUNK, M)
        diff = u[s:e, None, :] - ut[_np_rows(M, s, e)]
        out[s:e] = np.einsum("imc,m->ic", diff, w)
    return out


def _np_pair_kernel(u, ut, w):
    M = u.shape[0]
    return (u[:, None, :] - ut[_np_rows(M, 0, M)]) * w[None, :, None]


def _np_row_col_sums(F, c):
    M = F.shape[0]
    a = np.einsum("imc,m->ic", F, c)
    # b[j] = sum_m F[(j - m) % M, m] c[m]
    rows = (np.arange(M)[:, None] - np.arange(M)[None, :]) % M
    b = np.einsum("jmc,m->jc", F[rows, np.arange(M)[None, :]], c)
    return a, b


def _np_remainder(u, ut, v, vt, w, wt, wts):
    M = u.shape[0]
    out = np.empty(u.shape)
    for s in range(0, M, _CHUNK):
        e = min(s + _CHUNK, M)
        idx = _np_rows(M, s, e)
        du = u[s:e, None, :] - ut[idx]
        dv = v[s:e, None, :] - vt[idx]
        dw = w[s:e, None, :] - wt[idx]
        inner = np.einsum("imk,imk->im", dv, dw) * wts[None, :]
        out[s:e] = 0.5 * np.einsum("ima,im->ia", du, inner)
    return out


def _np_masked_sq_sum(u, ut, w, xmask, ymask):
    M = u.shape[0]
    total = 0.0
    for s in range(0, M, _CHUNK):
        e = min(s + _CHUNK, M)
        idx = _np_rows(M, s, e)
        diff = u[s:e, None, :] - ut[idx]
        sq = np.einsum("imc,imc->im", diff, diff) * w[None, :] * ymask[idx]
        total += float((sq.sum(axis=1) * xmask[s:e]).sum())
    return total


def _np_power_div_sums(u, ut, w, p):
    M, n = u.shape
    a = np.zeros((M, n))
    b = np.zeros((M, n))
    energy = 0.0
    for s in range(0, M, _CHUNK):
        e = min(s + _CHUNK, M)
        idx = _np_rows(M, s, e)
        diff = u[s:e, None, :] - ut[idx]
        mag = np.sqrt(np.einsum("imc,imc->im", diff, diff))
        energy += float((mag**p * w[None, :]).sum())
        if p == 2.0:
            scale = np.ones_like(mag)
        else:
            scale = np.where(mag > 0.0, mag ** (p - 2.0), 0.0)
        G = diff * (scale * w[None, :])[:, :, None]
        a[s:e] = G.sum(axis=1)
        np.add.at(b, idx.ravel(), G.reshape(-1, n))
    return a, b, energy


def _np_line_pair_sums(v, x):
    M, n = v.shape
    pv = np.empty((M, n))
    sq = np.empty(M)
    for s in range(0, M, _CHUNK):
        e = min(s + _CHUNK, M)
        dx = x[s:e, None] - x[None, :]
        rows = np.arange(s, e)
        dx[rows - s, rows] = np.inf
        inv = 1.0 / (dx * dx)
        diff = v[s:e, None, :] - v[None, :, :]
        pv[s:e] = np.einsum("ijc,ij->ic", diff, inv)
        sq[s:e] = np.einsum("ijc,ijc,ij->i", diff, diff, inv)
    return pv, sq


numpy_impl = SimpleNamespace(
    name="numpy",
    pair_sq_sum=_np_pair_sq_sum,
    pair_diff_sum=_np_pair_diff_sum,
    pair_kernel=_np_pair_kernel,
    row_col_sums=_np_row_col_sums,
    remainder=_np_remainder,
    masked_sq_sum=_np_masked_sq_sum,
    power_div_sums=_np_power_div_sums,
    line_pair_sums=_np_line_pair_sums,
)


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

def _py_pair_sq_sum(u, ut, w):
    M, n = u.shape
    out = np.empty(M)
    for i in prange(M):
        acc = 0.0
        for m in range(M):
            j = (i + m) % M
            sq = 0.0
            for c in range(n):
                d = u[i, c] - ut[j, c]
                sq += d * d
            acc += sq * w[m]
        out[i] = acc
    return out


def _py_pair_diff_sum(u, ut, w):
    M, n = u.shape
    out = np.empty((M, n))
    for i in prange(M):
        for c in range(n):
            acc = 0.0
            for m in range(M):
                acc += (u[i, c] - ut[(i + m) % M, c]) * w[m]
            out[i, c] = acc
    return out


def _py_pair_kernel(u, ut, w):
    M, n = u.shape
    out = np.empty((M, M, n))
    for i in prange(M):
        for m in range(M):
            j = (i + m) % M
            for c in range(n):
                out[i, m, c] = (u[i, c] - ut[j, c]) * w[m]
    return out


def _py_row_col_sums(F, c):
    M = F.shape[0]
    n = F.shape[2]
    a = np.zeros((M, n))
    b = np.zeros((M, n))
    for i in prange(M):
        for m in range(M):
            for k in range(n):
                a[i, k] += F[i, m, k] * c[m]
    for j in prange(M):
        for m in range(M):
            i = (j - m) % M
            for k in range(n):
                b[j, k] += F[i, m, k] * c[m]
    return a, b


def _py_remainder(u, ut, v, vt, w, wt, wts):
    M, n = u.shape
    out = np.zeros((M, n))
    for i in prange(M):
        for m in range(M):
            j = (i + m) % M
            inner = 0.0
            for k in range(n):
                inner += (v[i, k] - vt[j, k]) * (w[i, k] - wt[j, k])
            inner *= wts[m]
            for a in range(n):
                out[i, a] += 0.5 * (u[i, a] - ut[j, a]) * inner
    return out


def _py_masked_sq_sum(u, ut, w, xmask, ymask):
    M, n = u.shape
    rows = np.zeros(M)
    for i in prange(M):
        if xmask[i] == 0.0:
            continue
        acc = 0.0
        for m in range(M):
            j = (i + m) % M
            if ymask[j] == 0.0:
                continue
            sq = 0.0
            for c in range(n):
                d = u[i, c] - ut[j, c]
                sq += d * d
            acc += sq * w[m] * ymask[j]
        rows[i] = acc * xmask[i]
    total = 0.0
    for i in range(M):
        total += rows[i]
    return total


def _py_power_div_sums(u, ut, w, p):
    M, n = u.shape
    a = np.zeros((M, n))
    b = np.zeros((M, n))
    rows = np.zeros(M)
    diff = np.empty(n)
    for i in range(M):
        acc = 0.0
        for m in range(M):
            j = (i + m) % M
            sq = 0.0
            for c in range(n):
                diff[c] = u[i, c] - ut[j, c]
                sq += diff[c] * diff[c]
            mag = np.sqrt(sq)
            acc += mag**p * w[m]
            if p == 2.0:
                scale = w[m]
            elif mag > 0.0:
                scale = mag ** (p - 2.0) * w[m]
            else:
                scale = 0.0
            for c in range(n):
                g = diff[c] * scale
                a[i, c] += g
                b[j, c] += g
        rows[i] = acc
    energy = 0.0
    for i in range(M):
        energy += rows[i]
    return a, b, energy


def _py_line_pair_sums(v, x):
    M, n = v.shape
    pv = np.zeros((M, n))
    sq = np.zeros(M)
    for i in prange(M):
        for j in range(M):
            if j == i:
                continue
            dx = x[i] - x[j]
            inv = 1.0 / (dx * dx)
            acc = 0.0
            for c in range(n):
                d = v[i, c] - v[j, c]
                pv[i, c] += d * inv
                acc += d * d
            sq[i] += acc * inv
    return pv, sq


def _build_numba(threads):
    import numba

    parallel = threads > 1
    if parallel:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))

    def jit(fn, par=parallel):
        return numba.njit(fn, cache=True, parallel=par, fastmath=False)

    return SimpleNamespace(
        name="numba",
        pair_sq_sum=jit(_py_pair_sq_sum),
        pair_diff_sum=jit(_py_pair_diff_sum),
        pair_kernel=jit(_py_pair_kernel),
        row_col_sums=jit(_py_row_col_sums),
        remainder=jit(_py_remainder),
        masked_sq_sum=jit(_py_masked_sq_sum),
        # scatter into b[j] is not race-free, keep it serial
        power_div_sums=jit(_py_power_div_sums, par=False),
        line_pair_sums=jit(_py_line_pair_sums),
    )


def _threads():
    try:
        return max(1, int(os.environ.get("HALFFLOW_THREADS", "1")))
    except ValueError:
        return 1


try:
    from numba import prange
    numba_impl = _build_numba(_threads())
except ImportError:  # pragma: no cover - numba is a declared dependency
    prange = range
    numba_impl = None


def select_backend(name=None):
    """Return the kernel namespace for ``name`` ("numba" or "numpy")."""
    name = (name or os.environ.get("HALFFLOW_BACKEND", "numba")).lower()
    if name == "numpy" or numba_impl is None:
        return numpy_impl
    if name != "numba":
        raise ValueError(f"unknown HALFFLOW_BACKEND {name!r}")
    return numba_impl


K = select_backend()
