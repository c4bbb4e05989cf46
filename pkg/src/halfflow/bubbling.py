"""Concentration diagnostics, rescaling to the line and gluing continuation.

Local energy.  E_R(x) = 1/2 int_{B_R(x)} |(-Delta)^{1/4} u|^2 uses chordal
balls, i.e. arcs of half-width a = 2 arcsin(R/2) (the whole circle once
R >= 2).  The density q = |(-Delta)^{1/4} u|^2 is integrated by exact
cell overlap: node i carries the cell [x_i - h/2, x_i + h/2] and contributes
q_i times the length of its intersection with the arc.  This is monotone in
R and sums to the half-energy on the full circle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import K
from .flow import FlowConfig, FlowTrace, reproject, run_flow
from .fraccalc import C_HALF_EXACT, C_PV_EXACT, gagliardo_local
from .spectral import (
    TWO_PI,
    CircleGrid,
    Field,
    LineGrid,
    _circle,
    apply_multiplier,
    half_energy,
    spectral_eval,
)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# local energies
# --------------------------------------------------------------------------

def quarter_density(u: Field) -> Field:
    """|(-Delta)^{1/4} u|^2 pointwise (summed over components)."""
    grid = _circle(u)
    w = apply_multiplier(u.as2d(), np.sqrt(np.abs(grid.k)))
    return Field(grid, np.sum(w * w, axis=1))


def arc_halfwidth(R: float) -> float:
    return np.pi if R >= 2.0 else 2.0 * math.asin(R / 2.0)


def _overlap(d, h, a):
    """Length of [d - h/2, d + h/2] inside [-a, a], counting 2*pi images."""
    tot = np.zeros_like(d)
    for shift in (-TWO_PI, 0.0, TWO_PI):
        lo = np.maximum(d + shift - 0.5 * h, -a)
        hi = np.minimum(d + shift + 0.5 * h, a)
        tot += np.maximum(hi - lo, 0.0)
    return tot


def _wrap(d):
    return (d + np.pi) % TWO_PI - np.pi


def local_energy(u: Field, x0: float, R: float, q: np.ndarray | None = None) -> float:
    """E_R(u; x0) = 1/2 int over the chordal ball B_R(x0) of q."""
    grid = _circle(u)
    if R <= 0:
        raise ValueError("R must be positive")
    q = quarter_density(u).values if q is None else q
    a = arc_halfwidth(R)
    if a >= np.pi:
        return 0.5 * grid.h * float(np.sum(q))
    w = _overlap(_wrap(grid.nodes - x0), grid.h, a)
    return 0.5 * float(np.sum(w * q))


def local_energy_profile(u: Field, R: float, q: np.ndarray | None = None) -> np.ndarray:
    """E_R(u; x_j) at every node x_j (a circular correlation)."""
    grid = _circle(u)
    q = quarter_density(u).values if q is None else q
    a = arc_halfwidth(R)
    if a >= np.pi:
        return np.full(grid.M, 0.5 * grid.h * float(np.sum(q)))
    w = _overlap(_wrap(grid.nodes), grid.h, a)
    nz = np.nonzero(w)[0]
    out = np.zeros(grid.M)
    # direct sum over the few offsets inside the arc keeps this exact and
    # equivariant under grid rotations
    for l in nz:
        out += w[l] * np.roll(q, -l)
    return 0.5 * out


@dataclass
class ConcentrationReport:
    radii: list
    times: np.ndarray
    energies: np.ndarray                   # (snapshots, radii, M)
    eps_of_R: np.ndarray
    flagged_points: list                   # (t, x, R)
    peaks: list                            # (t, R, x_peak, E_peak)
    eps1: float
    struwe_ratio: float | None = None
    h1_ratio: float | None = None

    def as_dict(self) -> dict:
        return {
            "radii": [float(r) for r in self.radii],
            "eps1": self.eps1,
            "eps_of_R": [float(e) for e in self.eps_of_R],
            "flagged_points": [{"t": t, "x": x, "R": R} for t, x, R in self.flagged_points],
            "peaks": [{"t": t, "R": R, "x": x, "E_R": e} for t, R, x, e in self.peaks],
            "struwe_ratio": self.struwe_ratio,
            "h1_ratio": self.h1_ratio,
        }


def _states(trace):
    if isinstance(trace, FlowTrace):
        return [(s.t, s.u) for s in trace.states]
    return list(trace)


def concentration_scan(trace, radii, eps1: float = 0.05) -> ConcentrationReport:
    """Tabulate E_R over snapshots x nodes x radii and flag E_R >= eps1.

    ``trace`` is a FlowTrace or any sequence of (t, Field) pairs.
    """
    states = _states(trace)
    if not states:
        raise ValueError("empty trace")
    radii = list(radii)
    grid = states[0][1].grid
    E = np.zeros((len(states), len(radii), grid.M))
    flagged, peaks = [], []
    for a, (t, u) in enumerate(states):
        q = quarter_density(u).values
        for b, R in enumerate(radii):
            prof = local_energy_profile(u, R, q)
            E[a, b] = prof
            j = int(np.argmax(prof))
            peaks.append((float(t), float(R), float(grid.nodes[j]), float(prof[j])))
            for i in np.nonzero(prof >= eps1)[0]:
                flagged.append((float(t), float(grid.nodes[i]), float(R)))
    eps = E.max(axis=(0, 2)) if E.size else np.zeros(len(radii))
    return ConcentrationReport(radii, np.array([t for t, _ in states]), E, eps,
                               flagged, peaks, eps1)


# --------------------------------------------------------------------------
# inequality reports
# --------------------------------------------------------------------------

def _trapz(y, t):
    y, t = np.asarray(y), np.asarray(t)
    if len(t) < 2:
        return 0.0
    return float(0.5 * np.sum((y[1:] + y[:-1]) * np.diff(t)))


def struwe_l4_report(trace, R: float) -> float:
    """LHS / RHS of the improved L^4 estimate.

    LHS = int int |(-Delta)^{1/4}u|^4,
    RHS = sup_{t,x} E_R * (int int |(-Delta)^{1/2}u|^2 + R^-2 int int |(-Delta)^{1/4}u|^2).
    0/0 is reported as 0 and c/0 as inf.
    """
    states = _states(trace)
    if len(states) < 2:
        raise ValueError("need at least two snapshots")
    if not 0 < R < 0.5:
        raise ValueError("R must lie in (0, 1/2)")
    t = [s for s, _ in states]
    l4, h1, l2, sup = [], [], [], 0.0
    for _, u in states:
        g = u.grid
        q = quarter_density(u).values
        l4.append(g.h * np.sum(q * q))
        l2.append(g.h * np.sum(q))
        half = apply_multiplier(u.as2d(), np.abs(g.k))
        h1.append(g.h * np.sum(half * half))
        sup = max(sup, float(np.max(local_energy_profile(u, R, q))))
    lhs = _trapz(l4, t)
    rhs_ = sup * (_trapz(h1, t) + _trapz(l2, t) / R**2)
    if rhs_ == 0.0:
        return 0.0 if lhs == 0.0 else math.inf
    return lhs / rhs_


def h1_bound_report(trace, R: float) -> float:
    """int int |d_x u|^2 / (E(u0) (1 + T/R^2)); 0 when E(u0) = 0."""
    states = _states(trace)
    if len(states) < 2:
        raise ValueError("need at least two snapshots")
    t = [s for s, _ in states]
    E0 = half_energy(states[0][1])
    if E0 == 0.0:
        return 0.0
    dens = []
    for _, u in states:
        g = u.grid
        ux = apply_multiplier(u.as2d().astype(complex), 1j * g.k).real
        dens.append(g.h * np.sum(ux * ux))
    T = t[-1] - t[0]
    return _trapz(dens, t) / (E0 * (1.0 + T / R**2))


# --------------------------------------------------------------------------
# Gagliardo lower bound and rescaling
# --------------------------------------------------------------------------

def prop1_check(u: Field, x0: float, R: float, N: int):
    """(E_R(u; x0), Gagliardo energy of u on B_{2^N R}(x0) x B_{2^N R}(x0))."""
    big = (2.0**N) * R
    if big >= np.pi:
        raise ValueError("2^N R must be below pi")
    return local_energy(u, x0, R), gagliardo_local(u, (x0, big), (x0, big))


class PhiR:
    """Odd C^1 map R -> (-pi, pi): slope R^2 on |x| <= 2^N/R, arctan beyond."""

    profile = "arctan"

    def __init__(self, R: float, N: int):
        if not (R > 0 and R * 2.0**N < np.pi / 2):
            raise ValueError("need R > 0 and R 2^N < pi/2")
        self.R, self.N = float(R), int(N)
        self.X = 2.0**N / R
        self.Y = R * 2.0**N
        self.A = 2.0 * (np.pi - self.Y) / np.pi

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        core = self.R**2 * x
        outer = np.sign(x) * (self.Y + self.A * np.arctan((ax - self.X) * self.R**2 / self.A))
        return np.where(ax <= self.X, core, outer)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        z = (np.abs(x) - self.X) * self.R**2 / self.A
        return np.where(np.abs(x) <= self.X, self.R**2, self.R**2 / (1.0 + z * z))

    def describe(self) -> dict:
        return {"R": self.R, "N": self.N, "profile": self.profile,
                "core_halfwidth": self.X, "amplitude": self.A}


def build_phi_R(R: float, N: int) -> PhiR:
    return PhiR(R, N)


@dataclass
class BubbleExtract:
    t_n: float
    x_n: float
    R_n: float
    gamma: float
    line_field: Field
    residual_l2: float
    bubble_energy: float
    phi: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"t_n": self.t_n, "x_n": self.x_n, "R_n": self.R_n, "gamma": self.gamma,
                "L": self.line_field.grid.L, "M": self.line_field.grid.M,
                "residual_l2": self.residual_l2, "bubble_energy": self.bubble_energy,
                "phi_R": self.phi}


def _field_at(states, t):
    times = np.array([s for s, _ in states])
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(f"time {t} outside the trace range [{times[0]}, {times[-1]}]")
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = min(max(j, 0), len(times) - 1)
    if j == len(times) - 1 or abs(times[j] - t) < 1e-14:
        return states[j][1]
    a, b = states[j][1], states[j + 1][1]
    w = (t - times[j]) / (times[j + 1] - times[j])
    return Field(a.grid, (1.0 - w) * a.as2d() + w * b.as2d())


def line_gagliardo(v: Field) -> float:
    """int int_{[-L,L]^2} |v(x) - v(y)|^2/|x - y|^2, diagonal cells filled by |v'|^2."""
    grid = v.grid
    vals = np.ascontiguousarray(v.as2d(), dtype=float)
    _, sq = K.line_pair_sums(vals, grid.nodes)
    dv = _fd_derivatives(vals, grid.h)[0]
    return float(grid.h**2 * np.sum(sq + np.sum(dv * dv, axis=1)))


def rescale_extract(trace, t_n: float, x_n: float, R_n: float, gamma: float,
                    line: LineGrid, N: int) -> BubbleExtract:
    """Sample u_n(0, x) = u(t_n, x_n + phi_{R_n}(x)) on the line grid."""
    states = _states(trace)
    if t_n - gamma * R_n**2 < states[0][0] - 1e-12:
        raise ValueError("look-back window starts before the trace")
    u = _field_at(states, t_n)
    phi = build_phi_R(R_n, N)
    vals = spectral_eval(u, x_n + phi(line.nodes))
    vals = vals / np.linalg.norm(vals, axis=1, keepdims=True)
    v = Field(line, vals)
    return BubbleExtract(float(t_n), float(x_n), float(R_n), float(gamma), v,
                         bubble_residual(v, sphere_tol=1e-3), line_gagliardo(v),
                         phi.describe())


# --------------------------------------------------------------------------
# half-harmonic residual on the line
# --------------------------------------------------------------------------

def _fd_derivatives(v, h):
    """Fourth-order first and second differences (one-sided near the ends)."""
    M = v.shape[0]
    d1 = np.zeros_like(v)
    d2 = np.zeros_like(v)
    i = np.arange(2, M - 2)
    d1[i] = (v[i - 2] - 8 * v[i - 1] + 8 * v[i + 1] - v[i + 2]) / (12 * h)
    d2[i] = (-v[i - 2] + 16 * v[i - 1] - 30 * v[i] + 16 * v[i + 1] - v[i + 2]) / (12 * h * h)
    f = v[0:5]
    d1[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d1[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d2[0] = (35 * f[0] - 104 * f[1] + 114 * f[2] - 56 * f[3] + 11 * f[4]) / (12 * h * h)
    d2[1] = (11 * f[0] - 20 * f[1] + 6 * f[2] + 4 * f[3] - f[4]) / (12 * h * h)
    # mirrored stencils at the right end (first derivative flips sign)
    f = v[M - 5:M][::-1]
    d1[M - 1] = -(-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d1[M - 2] = -(-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d2[M - 1] = (35 * f[0] - 104 * f[1] + 114 * f[2] - 56 * f[3] + 11 * f[4]) / (12 * h * h)
    d2[M - 2] = (11 * f[0] - 20 * f[1] + 6 * f[2] + 4 * f[3] - f[4]) / (12 * h * h)
    return d1, d2


def line_operators(v: Field):
    """((-Delta)^{1/2} v, |d_{1/2} v|^2) on a LineGrid.

    The double integrals over the cells [x_0 - h/2, x_{M-1} + h/2] use the
    punctured rectangle rule; the diagonal cell is filled from the local
    Taylor expansion (-v''/2 for the principal value, |v'|^2 for the
    Gagliardo density).  Outside the grid v is frozen at its end values, which
    makes the tail integrals elementary.
    """
    grid = v.grid
    if not isinstance(grid, LineGrid):
        raise TypeError("expected a LineGrid field")
    x = grid.nodes
    h = grid.h
    vals = np.ascontiguousarray(v.as2d(), dtype=float)
    pv, sq = K.line_pair_sums(vals, x)
    d1, d2 = _fd_derivatives(vals, h)
    pv = h * pv - 0.5 * h * d2
    sq = h * sq + h * np.sum(d1 * d1, axis=1)
    left, right = x[0] - 0.5 * h, x[-1] + 0.5 * h
    vl, vr = vals[0], vals[-1]
    dr = (vals - vr)
    dl = (vals - vl)
    pv += dr / (right - x)[:, None] + dl / (x - left)[:, None]
    sq += np.sum(dr * dr, axis=1) / (right - x) + np.sum(dl * dl, axis=1) / (x - left)
    return C_PV_EXACT * pv, sq


def bubble_residual(v: Field, C: float = C_HALF_EXACT, sphere_tol: float = 1e-8) -> float:
    """L^2 norm on [-L/2, L/2] of (-Delta)^{1/2} v - C v |d_{1/2} v|^2."""
    if not isinstance(v.grid, LineGrid):
        raise TypeError("expected a LineGrid field")
    drift = v.sphere_drift()
    if drift > sphere_tol:
        raise ValueError(f"line field is off the sphere by {drift:.3g}")
    lap, sq = line_operators(v)
    r = lap - C * v.as2d() * sq[:, None]
    inner = np.abs(v.grid.nodes) <= 0.5 * v.grid.L
    return float(np.sqrt(v.grid.h * np.sum(r[inner] ** 2)))


def stereographic_bubble(line: LineGrid, n: int = 3) -> Field:
    """x -> ((1 - x^2)/(1 + x^2), 2x/(1 + x^2), 0)."""
    x = line.nodes
    vals = np.zeros((line.M, n))
    vals[:, 0] = (1 - x**2) / (1 + x**2)
    vals[:, 1] = 2 * x / (1 + x**2)
    return Field(line, vals)


# --------------------------------------------------------------------------
# gluing
# --------------------------------------------------------------------------

def max_restarts(E0: float, eps0: float) -> int:
    """Restart budget floor(E0/eps0): each singular time costs at least eps0."""
    return int(math.floor(E0 / eps0 + 1e-12))


def glue_continue(trace: FlowTrace, cfg: FlowConfig, runner=run_flow) -> FlowTrace:
    """Restart the flow past concentration times and concatenate the traces.

    The last snapshot serves as the restart datum (it is reprojected first).
    The energy drop across every junction is recorded and must be >= 0
    (up to 1e-12 round-off).  At most floor(E(u0)/eps0) restarts are allowed;
    a further concentration halts with status ``restart_limit``.
    """
    if trace.status != "concentration_detected":
        return trace
    eps0 = cfg.thresholds.eps0
    E0 = trace.states[0].energy
    budget = max_restarts(E0, eps0)
    out = FlowTrace(list(trace.states), trace.status, trace.message,
                    trace.step_t.copy(), trace.step_energy.copy(), trace.calibration,
                    list(trace.junctions))
    restarts = 0
    while out.status == "concentration_detected":
        if restarts >= budget:
            out.status = "restart_limit"
            out.message = (f"restart budget floor(E0/eps0) = {budget} exhausted "
                           f"(E0={E0:.6g}, eps0={eps0:.6g})")
            log.warning("glue_continue: %s", out.message)
            break
        last = out.states[-1]
        t0 = last.t
        remaining = cfg.t_end - t0
        if remaining <= 0.5 * cfg.dt:
            out.status = "completed"
            break
        u_new = reproject(last.u)
        sub_cfg = FlowConfig(**{**cfg.__dict__, "t_end": remaining})
        sub = runner(u_new, sub_cfg)
        restarts += 1
        drop = last.energy - sub.states[0].energy
        if drop < -1e-12:
            raise RuntimeError(f"energy increased across a junction by {-drop:.3g}")
        out.junctions.append({"t": t0, "energy_before": last.energy,
                              "energy_after": sub.states[0].energy, "drop": drop})
        for s in sub.states[1:]:
            s.t += t0
            out.states.append(s)
        out.step_t = np.concatenate([out.step_t, sub.step_t[1:] + t0])
        out.step_energy = np.concatenate([out.step_energy, sub.step_energy[1:]])
        out.status, out.message = sub.status, sub.message
        # a restart that halts immediately makes no progress in time
        if len(sub.states) == 1 and sub.status == "concentration_detected":
            continue
    out.message = out.message or f"{restarts} restart(s)"
    return out
