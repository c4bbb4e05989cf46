"""epsilon-weighted space-time energies and their constrained minimizers.

    E_eps(u) = int_0^inf int_{S^1} e^{-t/eps} ( eps |d_t u|^2
                 + (2/p) int_{S^1} |u(t,x) - u(t,y)|^p / |x-y|^{sp} dy/|x-y| ) dx dt

Discretization
--------------
* Time nodes t_m = m dt, m = 0..Mt, horizon T_max = Mt dt; u is piecewise
  linear in time and frozen at u(T_max) afterwards (static tail).
* Kinetic term: forward differences, the weight e^{-t/eps} integrated
  exactly over each interval.
* Spatial term: half-offset pair quadrature per slice, integrated in time
  against the exact integrals of e^{-t/eps} times the hat functions; the tail
  weight eps e^{-T_max/eps} is added to the last slice.  A static field
  therefore has energy exactly 2 eps E_{s,p}(u0) with
  E_{s,p} = (1/p) int int |d_s u|^p dy dx / |x-y|.

Minimization is a projected, preconditioned gradient method: the search
direction is P H^{-1} P g, where P projects on the tangent spaces of the
sphere and H is the exact Hessian of the unconstrained p = 2 energy (block
tridiagonal in time, diagonal in spatial Fourier modes).  Steps are halved
until the energy decreases and the iterate is renormalized to the sphere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import K
from .spectral import Field, CircleGrid, _circle, half_shift

log = logging.getLogger(__name__)


@dataclass
class SpaceTimeField:
    """Samples values[m] = u(times[m]) on a shared CircleGrid.

    ``frame`` is "u" for the physical time variable and "v" for the
    rescaled variable s = t/eps.
    """

    grid: CircleGrid
    times: np.ndarray
    values: np.ndarray                     # (Mt + 1, M, n)
    frame: str = "u"
    history: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def Mt(self) -> int:
        return len(self.times) - 1

    def slice(self, m) -> Field:
        return Field(self.grid, self.values[m])

    def copy(self) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times.copy(), self.values.copy(),
                              self.frame, list(self.history))


def static_field(u0: Field, T_max: float, Mt: int) -> SpaceTimeField:
    grid = _circle(u0)
    times = np.linspace(0.0, T_max, Mt + 1)
    vals = np.repeat(u0.as2d()[None].astype(float), Mt + 1, axis=0)
    return SpaceTimeField(grid, times, vals)


# --------------------------------------------------------------------------
# weights and the spatial term
# --------------------------------------------------------------------------

def _time_weights(times, rate):
    """Exact integrals of e^{-rate t}: per interval (W) and per hat function (w).

    The last hat weight includes the static tail int_{T_max}^inf e^{-rate t}.
    Returns (W, w, tail).
    """
    t = np.asarray(times, dtype=float)
    dt = np.diff(t)
    e0 = np.exp(-rate * t[:-1])
    z = rate * dt
    W = e0 * (-np.expm1(-z)) / rate
    # int over [t_m, t_m+dt] of e^{-rate t} (t - t_m)/dt  and  (t_m+dt - t)/dt
    # with phi1-type expressions that stay accurate for small z
    em = np.exp(-z)
    a = np.where(z > 1e-6, (1.0 - em - z * em) / np.where(z > 0, z * z, 1.0), 0.5 - z / 3.0)
    b = np.where(z > 1e-6, (z - 1.0 + em) / np.where(z > 0, z * z, 1.0), 0.5 - z / 6.0)
    right = e0 * dt * a        # weight for the node at t_{m+1}
    left = e0 * dt * b         # weight for the node at t_m
    w = np.zeros(len(t))
    w[:-1] += left
    w[1:] += right
    tail = math.exp(-rate * t[-1]) / rate
    w[-1] += tail
    return W, w, tail


def _pair_weights(grid, s, p):
    return grid.h**2 / grid.dist ** (s * p + 1.0)


def spatial_energy(u: np.ndarray, grid: CircleGrid, s: float = 0.5, p: float = 2.0):
    """((2/p) int int |d_s u|^p dy dx/|x-y|, gradient) for one time slice."""
    u = np.ascontiguousarray(u, dtype=float)
    a, b, G = K.power_div_sums(u, half_shift(u), _pair_weights(grid, s, p), float(p))
    grad = 2.0 * (a - half_shift(b, sign=-1))
    return (2.0 / p) * G, grad


def sobolev_energy(u0: Field, s: float = 0.5, p: float = 2.0) -> float:
    """E_{s,p}(u0) = (1/p) int int |u0(x) - u0(y)|^p / |x-y|^{1+sp}."""
    grid = _circle(u0)
    return 0.5 * spatial_energy(u0.as2d(), grid, s, p)[0]


# --------------------------------------------------------------------------
# energy
# --------------------------------------------------------------------------

@dataclass
class EnergyParts:
    kinetic: float
    spatial: float
    tail: float            # spatial energy of the static tail (included in spatial)

    @property
    def total(self) -> float:
        return self.kinetic + self.spatial


def _energy_and_grad(U: SpaceTimeField, eps, s, p, want_grad=True):
    grid, vals, t = U.grid, U.values, U.times
    rate = 1.0 / eps if U.frame == "u" else 1.0
    kin_coef = eps if U.frame == "u" else 1.0
    sp_coef = 1.0 if U.frame == "u" else eps
    W, w, tail = _time_weights(t, rate)
    dt = np.diff(t)
    diffs = vals[1:] - vals[:-1]
    kin_terms = kin_coef * W / dt**2 * grid.h * np.sum(diffs**2, axis=(1, 2))
    G = np.empty(len(t))
    grads = np.empty_like(vals) if want_grad else None
    for m in range(len(t)):
        G[m], g = spatial_energy(vals[m], grid, s, p)
        if want_grad:
            grads[m] = sp_coef * w[m] * g
    parts = EnergyParts(float(np.sum(kin_terms)), float(sp_coef * np.sum(w * G)),
                        float(sp_coef * tail * G[-1]))
    if not want_grad:
        return parts, None
    c = 2.0 * kin_coef * grid.h * W / dt**2
    flux = c[:, None, None] * diffs
    grads[1:] += flux
    grads[:-1] -= flux
    grads[0] = 0.0
    return parts, grads


def energy_parts(U: SpaceTimeField, eps: float, s: float = 0.5, p: float = 2.0) -> EnergyParts:
    if p < 2:
        raise ValueError("p must be >= 2")
    return _energy_and_grad(U, eps, s, p, want_grad=False)[0]


def energy_eps(U: SpaceTimeField, eps: float, s: float = 0.5, p: float = 2.0,
               include_tail: bool = True) -> float:
    """E_eps(U) in the u-frame, or the rescaled J_eps(V) when U.frame == "v"."""
    parts = energy_parts(U, eps, s, p)
    return parts.total if include_tail else parts.total - parts.tail


# --------------------------------------------------------------------------
# minimization
# --------------------------------------------------------------------------

def _tangent(vals, g):
    return g - np.sum(g * vals, axis=-1, keepdims=True) * vals


def _symbol(grid, s, p):
    """Fourier symbol of the linear map u -> gradient of the p = 2 spatial term."""
    delta = np.zeros((grid.M, 1))
    delta[0, 0] = 1.0
    _, g = spatial_energy(delta, grid, s, 2.0)
    return np.fft.fft(g[:, 0]).real


def _precondition(U, eps, s, p, g):
    """Solve H d = g slice-tridiagonally for every spatial mode (slices 1..Mt)."""
    grid, t = U.grid, U.times
    rate = 1.0 / eps if U.frame == "u" else 1.0
    kin_coef = eps if U.frame == "u" else 1.0
    sp_coef = 1.0 if U.frame == "u" else eps
    W, w, _ = _time_weights(t, rate)
    dt = np.diff(t)
    c = 2.0 * kin_coef * grid.h * W / dt**2                     # (Mt,)
    sig = _symbol(grid, s, p)                                   # (M,)
    Mt = len(t) - 1
    # unknowns m = 1..Mt
    diag = np.empty((Mt, grid.M))
    for j, m in enumerate(range(1, Mt + 1)):
        kin = c[m - 1] + (c[m] if m < Mt else 0.0)
        diag[j] = kin + sp_coef * w[m] * sig
    off = -c[1:Mt]                                              # couples j and j+1
    rhs = np.fft.fft(g[1:], axis=1)                              # (Mt, M, n)
    # Thomas algorithm vectorized over modes and components
    cp = np.zeros((Mt, grid.M))
    dp = np.zeros(rhs.shape, dtype=complex)
    cp[0] = off[0] / diag[0] if Mt > 1 else 0.0
    dp[0] = rhs[0] / diag[0][:, None]
    for j in range(1, Mt):
        den = diag[j] - off[j - 1] * cp[j - 1]
        if j < Mt - 1:
            cp[j] = off[j] / den
        dp[j] = (rhs[j] - off[j - 1] * dp[j - 1]) / den[:, None]
    x = np.empty_like(dp)
    x[-1] = dp[-1]
    for j in range(Mt - 2, -1, -1):
        x[j] = dp[j] - cp[j][:, None] * x[j + 1]
    out = np.zeros_like(g)
    out[1:] = np.fft.ifft(x, axis=1).real
    return out


def _normalize(vals):
    return vals / np.linalg.norm(vals, axis=-1, keepdims=True)


class MinimizationError(RuntimeError):
    pass


def minimize(u0: Field, eps: float, s: float = 0.5, p: float = 2.0, iters: int = 200,
             T_factor: float = 10.0, Mt: int = 40, rtol: float = 1e-8,
             max_halvings: int = 40) -> SpaceTimeField:
    """Projected preconditioned gradient descent from the static field U(t) = u0.

    Returns the final SpaceTimeField; ``history`` holds the energy after
    every accepted iteration (monotone nonincreasing by construction).
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    U = static_field(u0, T_factor * eps, Mt)
    U.values[1:] = _normalize(U.values[1:])
    parts, grad = _energy_and_grad(U, eps, s, p)
    E = parts.total
    U.history = [E]
    if E == 0.0:
        return U
    for it in range(iters):
        g = _tangent(U.values, grad)
        g[0] = 0.0
        d = _tangent(U.values, _precondition(U, eps, s, p, g))
        d[0] = 0.0
        slope = float(np.sum(g * d))
        if slope <= 0:
            d, slope = g, float(np.sum(g * g))
        if slope == 0.0:
            break
        alpha, accepted = 1.0, False
        for _ in range(max_halvings):
            trial = U.values - alpha * d
            trial[1:] = _normalize(trial[1:])
            trial[0] = U.values[0]
            V = SpaceTimeField(U.grid, U.times, trial, U.frame)
            parts_new, grad_new = _energy_and_grad(V, eps, s, p)
            if parts_new.total < E:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            log.info("minimize: line search exhausted after %d iterations", it)
            break
        rel = (E - parts_new.total) / max(E, 1e-300)
        U.values, E, grad = trial, parts_new.total, grad_new
        U.history.append(E)
        if rel < rtol:
            break
    if U.history[-1] > U.history[0]:
        raise MinimizationError("energy increased during minimization")
    return U


# --------------------------------------------------------------------------
# Euler-Lagrange residual, rescaling, I/R/E
# --------------------------------------------------------------------------

def el_residual(U: SpaceTimeField, eps: float, div_scale: float = 1.0) -> float:
    """Space-time L^2 norm of the tangential part of the Euler-Lagrange operator

        -eps d_t^2 u + d_t u + div_{1/2}(d_{1/2} u)

    on interior slices.  The time derivatives use the exponentially fitted
    differences that the discrete energy induces (they reduce to the usual
    centered stencils as dt/eps -> 0); div_{1/2} d_{1/2} u is the duality
    divergence, i.e. 2 pi (-Delta)^{1/2} u on band-limited data.
    """
    grid = U.grid
    rate = 1.0 / eps if U.frame == "u" else 1.0
    kin_coef = eps if U.frame == "u" else 1.0
    sp_coef = 1.0 if U.frame == "u" else eps
    W, w, _ = _time_weights(U.times, rate)
    dt = np.diff(U.times)
    vals = U.values
    total = 0.0
    for m in range(1, U.Mt):
        _, g = spatial_energy(vals[m], grid, 0.5, 2.0)
        div = div_scale * g / (2.0 * grid.h)
        kin = kin_coef * (W[m - 1] * (vals[m] - vals[m - 1]) / dt[m - 1] ** 2
                          - W[m] * (vals[m + 1] - vals[m]) / dt[m] ** 2) / w[m]
        r = _tangent(vals[m], kin + sp_coef * div)
        total += 0.5 * (dt[m - 1] + dt[m]) * grid.h * float(np.sum(r * r))
    return math.sqrt(total)


def time_rescale(U: SpaceTimeField, eps: float, direction: str = "to_v") -> SpaceTimeField:
    """Relabel time: v(s) = u(eps s) ("to_v") or back ("to_u")."""
    if direction == "to_v":
        if U.frame != "u":
            raise ValueError("field is not in the u-frame")
        return SpaceTimeField(U.grid, U.times / eps, U.values.copy(), "v", list(U.history))
    if direction == "to_u":
        if U.frame != "v":
            raise ValueError("field is not in the v-frame")
        return SpaceTimeField(U.grid, U.times * eps, U.values.copy(), "u", list(U.history))
    raise ValueError("direction must be 'to_v' or 'to_u'")


@dataclass
class IREDiagnostics:
    s: np.ndarray
    I: np.ndarray
    R: np.ndarray
    E: np.ndarray


def diagnostics_ire(U: SpaceTimeField, eps: float) -> IREDiagnostics:
    """I(s) = ||d_s v||^2, R(s) = eps int |d_{1/2}v|^2 dx, E(s) = e^s int_s^inf e^{-r}(I + R) dr.

    d_s v by centered differences (one-sided at the ends).  E is accumulated
    backwards with exact exponential weights for piecewise-linear I + R and
    the static tail (I = 0, R frozen) added analytically.
    """
    V = time_rescale(U, eps) if U.frame == "u" else U
    grid, s, vals = V.grid, V.times, V.values
    dv = np.gradient(vals, s, axis=0, edge_order=1)
    I = grid.h * np.sum(dv**2, axis=(1, 2))
    R = np.array([eps * spatial_energy(vals[m], grid, 0.5, 2.0)[0] for m in range(len(s))])
    f = I + R
    ds = np.diff(s)
    z = ds
    em = np.exp(-z)
    a = (1.0 - em - z * em) / (z * z)          # weight of the right node, relative to e^{-s_m} ds
    b = (z - 1.0 + em) / (z * z)
    # J_m = int_{s_m}^{inf} e^{-(r - s_m)} f(r) dr, computed backward
    E = np.empty(len(s))
    E[-1] = R[-1]                               # static tail: I = 0, R frozen
    for m in range(len(s) - 2, -1, -1):
        E[m] = ds[m] * (b[m] * f[m] + a[m] * f[m + 1]) + em[m] * E[m + 1]
    return IREDiagnostics(s, I, R, E)


def monotonicity_check(U: SpaceTimeField, eps: float) -> float:
    """max over interior nodes of |E' + 2I| / (max I + 1e-12), E' centered."""
    d = diagnostics_ire(U, eps)
    if len(d.s) < 3:
        return 0.0
    dE = (d.E[2:] - d.E[:-2]) / (d.s[2:] - d.s[:-2])
    return float(np.max(np.abs(dE + 2.0 * d.I[1:-1])) / (np.max(d.I) + 1e-12))


def window_spatial_integrals(U: SpaceTimeField, eps: float, window: float = 1.0) -> float:
    """max_t int_t^{t+window} int |d_{1/2}u|^2 dx dt in the u-frame (static tail beyond T_max)."""
    W = time_rescale(U, eps, "to_u") if U.frame == "v" else U
    t = W.times
    G = np.array([spatial_energy(W.values[m], W.grid, 0.5, 2.0)[0] for m in range(len(t))])
    # piecewise-linear G, constant after t[-1]
    fine = np.linspace(0.0, t[-1] + window, 20 * len(t) + 1)
    Gf = np.interp(fine, t, G)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (Gf[1:] + Gf[:-1]) * np.diff(fine))])
    best = 0.0
    for t0 in np.concatenate([t, [t[-1]]]):
        hi = np.interp(t0 + window, fine, cum) if t0 + window <= fine[-1] else \
            cum[-1] + (t0 + window - fine[-1]) * G[-1]
        lo = np.interp(t0, fine, cum)
        best = max(best, hi - lo)
    return float(best)


@dataclass
class SweepTable:
    eps: list
    dtv_sq: list
    window_R: list
    energies: list
    slope: float | None


def epsilon_sweep(u0: Field, eps_list, s: float = 0.5, p: float = 2.0, **kw) -> SweepTable:
    """Minimize for each eps; fit the log-log slope of int |d_s v|^2 against eps."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4 or max(eps_list) / min(eps_list) < 10.0 - 1e-9:
        raise ValueError("need >= 4 values of eps spanning at least one decade")
    dtv, win, ens = [], [], []
    for eps in eps_list:
        U = minimize(u0, eps, s, p, **kw)
        V = time_rescale(U, eps)
        diffs = np.diff(V.values, axis=0)
        ds = np.diff(V.times)
        dtv.append(float(np.sum(V.grid.h * np.sum(diffs**2, axis=(1, 2)) / ds)))
        win.append(window_spatial_integrals(U, eps))
        ens.append(U.history[-1])
    slope = None
    if all(d > 0 for d in dtv):
        slope = float(np.polyfit(np.log(eps_list), np.log(dtv), 1)[0])
    return SweepTable(eps_list, dtv, win, ens, slope)
