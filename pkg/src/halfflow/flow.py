"""Time integration of the half-harmonic gradient flow

    d_t u + (-Delta)^{1/2} u = C u |d_{1/2} u|^2,      u : S^1 -> S^{n-1},

by exponential Euler (exact linear part in Fourier space), an optional
Picard slab solver, sphere reprojection and energy bookkeeping.  The scale
C of the nonlinearity comes from the calibration record; it makes the
degree-one map stationary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fraccalc import Calibration, calibration_for, sq_grad_density
from .spectral import Field, _circle, apply_multiplier, half_energy, sobolev_norm

log = logging.getLogger(__name__)


@dataclass
class ThresholdConfig:
    eps1: float = 0.05
    eps0: float = 0.5
    sphere_tol: float = 1e-8
    picard_tol: float = 1e-8
    quad_tol: float = 1e-6

    def __post_init__(self):
        for name in ("eps1", "eps0", "sphere_tol", "picard_tol", "quad_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FlowConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    picard_max_iters: int = 20
    picard_tol: float = 1e-8
    reproject: bool = True
    slab_length: float | None = None     # set to use Picard slabs
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    scan_radii: tuple = (0.02, 0.05, 0.1)
    snapshot_stride: int = 10
    nonlinear: bool = True
    calibration: Calibration | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")


@dataclass
class FlowState:
    t: float
    u: Field
    energy: float
    dtu_l2: float
    sphere_drift: float
    max_u: float


@dataclass
class FlowTrace:
    states: list
    status: str = "completed"
    message: str = ""
    # per-step series (every accepted step, not only snapshots)
    step_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_energy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    calibration: dict | None = None
    junctions: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def grid(self):
        return self.states[0].u.grid

    def final(self) -> FlowState:
        return self.states[-1]


class ReprojectionError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# single-step pieces
# --------------------------------------------------------------------------

def _scale(u: Field, cal: Calibration | None) -> float:
    cal = cal or calibration_for(u.grid)
    return cal.residuals.get("nonlinear_scale", cal.C_half)


def rhs(u: Field, calibration: Calibration | None = None) -> Field:
    """C u(x) |d_{1/2}u|^2(x) with C from the calibration record."""
    _circle(u)
    C = _scale(u, calibration)
    return Field(u.grid, C * u.as2d() * sq_grad_density(u).values[:, None])


def reproject(u: Field) -> Field:
    """Pointwise normalization u / |u|."""
    v = u.as2d()
    r = np.linalg.norm(v, axis=1)
    if np.min(r) <= 1e-6:
        raise ReprojectionError("field passes near the origin; time step too large?")
    return Field(u.grid, v / r[:, None])


def _phi_weight(grid, dt):
    """dt * phi_1(-dt |k|) = (1 - e^{-dt|k|}) / |k| with the k = 0 limit dt."""
    k = np.abs(grid.k)
    safe = np.where(k > 0, k, 1.0)
    return np.where(k > 0, -np.expm1(-dt * k) / safe, dt)


def exp_euler_step(u: Field, dt: float, calibration: Calibration | None = None,
                   reproject_after: bool = True, nonlinear: bool = True) -> Field:
    """u+ = e^{-dt|k|} u + dt phi_1(-dt|k|) N(u), then optional reprojection."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = _circle(u)
    v = u.as2d()
    out = apply_multiplier(v, np.exp(-dt * np.abs(grid.k)))
    if nonlinear:
        out = out + apply_multiplier(rhs(u, calibration).values, _phi_weight(grid, dt))
    new = Field(grid, out)
    return reproject(new) if reproject_after else new


# --------------------------------------------------------------------------
# Picard slab solver
# --------------------------------------------------------------------------

@dataclass
class PicardResult:
    trajectory: np.ndarray          # (steps + 1, M, n)
    times: np.ndarray
    ratios: list
    diffs: list
    iterations: int
    status: str                     # converged | no_contraction


def _h1(vals, grid):
    return sobolev_norm(Field(grid, vals), 1.0, homogeneous=False)


def picard_slab(u0: Field, T_slab: float, cfg: FlowConfig) -> PicardResult:
    """Fixed-point iteration of the Duhamel map on a time slab.

    Iterate m+1 solves d_t v + (-Delta)^{1/2} v = N(v^m) with v(0) = u0 by
    the exponential integrator on the slab's time grid, so each sweep costs
    one nonlinearity evaluation per time level.  The distance between
    iterates is the sup over the slab of the H^1 norm.
    """
    grid = _circle(u0)
    steps = max(1, int(round(T_slab / cfg.dt)))
    dt = T_slab / steps
    decay = np.exp(-dt * np.abs(grid.k))
    phi = _phi_weight(grid, dt)
    cal = cfg.calibration or calibration_for(grid)
    v0 = u0.as2d().astype(float)
    cur = np.repeat(v0[None], steps + 1, axis=0)
    diffs, ratios = [], []
    status = "no_contraction"
    it = 0
    for it in range(1, cfg.picard_max_iters + 1):
        nl = np.array([rhs(Field(grid, cur[j]), cal).values for j in range(steps)])
        # linear forcing terms for every level at once, then the recurrence
        forced = apply_multiplier(nl.transpose(1, 0, 2), phi).transpose(1, 0, 2)
        nxt = np.empty_like(cur)
        nxt[0] = v0
        for j in range(steps):
            nxt[j + 1] = apply_multiplier(nxt[j], decay) + forced[j]
        d = max(_h1(nxt[j] - cur[j], grid) for j in range(steps + 1))
        if diffs and diffs[-1] > 0:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        cur = nxt
        if d <= cfg.picard_tol:
            status = "converged"
            break
    if status != "converged":
        log.warning("picard_slab: no convergence in %d iterations (T_slab=%g)", it, T_slab)
    return PicardResult(cur, dt * np.arange(steps + 1), ratios, diffs, it, status)


def picard_residual(res: PicardResult, cfg: FlowConfig, grid) -> float:
    """max over the slab of the H^1 defect of one exponential-Euler step."""
    cal = cfg.calibration or calibration_for(grid)
    dt = res.times[1] - res.times[0]
    worst = 0.0
    for j in range(len(res.times) - 1):
        step = exp_euler_step(Field(grid, res.trajectory[j]), dt, cal, reproject_after=False)
        worst = max(worst, _h1(step.values - res.trajectory[j + 1], grid))
    return worst


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def _state(t, u, prev, dt):
    vals = u.as2d()
    dtu = 0.0 if prev is None else float(np.sqrt(u.grid.h * np.sum((vals - prev) ** 2)) / dt)
    r = np.linalg.norm(vals, axis=1)
    return FlowState(t, u, half_energy(u), dtu, float(np.max(np.abs(r - 1.0))),
                     float(np.max(r)))


def _concentrated(u: Field, radii, eps1) -> bool:
    from .bubbling import local_energy_profile

    if not radii:
        return False
    return all(np.max(local_energy_profile(u, R)) >= eps1 for R in radii)


def run_flow(u0: Field, cfg: FlowConfig) -> FlowTrace:
    """Integrate from u0 to cfg.t_end with exponential Euler (or Picard slabs).

    Snapshots are recorded every ``snapshot_stride`` steps and at the end.
    The run halts early with status ``concentration_detected`` when the
    local energy reaches eps1 at every scan radius, or ``diverged`` when the
    state blows up (non-finite values, max|u| > 10, or a one-step energy
    rise above 10%).
    """
    grid = _circle(u0)
    cal = cfg.calibration or calibration_for(grid)
    u = reproject(u0) if cfg.reproject else u0
    steps = int(round(cfg.t_end / cfg.dt))
    dt = cfg.dt
    states = [_state(0.0, u, None, dt)]
    step_t, step_e = [0.0], [states[0].energy]
    trace = FlowTrace(states, calibration=cal.as_dict())
    eps1 = cfg.thresholds.eps1

    if _concentrated(u, cfg.scan_radii, eps1):
        trace.status = "concentration_detected"
        trace.message = "concentration at t=0"
    else:
        slab_steps = None
        if cfg.slab_length:
            slab_steps = max(1, int(round(cfg.slab_length / dt)))
        n = 0
        while n < steps:
            prev = u.as2d()
            try:
                if slab_steps:
                    m = min(slab_steps, steps - n)
                    res = picard_slab(u, m * dt, cfg)
                    if res.status != "converged":
                        trace.status, trace.message = "diverged", "picard slab did not contract"
                        break
                    new_vals = list(res.trajectory[1:])
                else:
                    new_vals = [exp_euler_step(u, dt, cal, False, cfg.nonlinear).values]
            except ValueError as exc:          # non-finite samples
                trace.status, trace.message = "diverged", str(exc)
                break
            halted = False
            for vals in new_vals:
                n += 1
                if not np.all(np.isfinite(vals)):
                    trace.status, trace.message = "diverged", f"non-finite values at step {n}"
                    halted = True
                    break
                try:
                    cand = Field(grid, vals)
                    cand = reproject(cand) if cfg.reproject else cand
                except (ValueError, ReprojectionError) as exc:
                    trace.status, trace.message = "diverged", str(exc)
                    halted = True
                    break
                E = half_energy(cand)
                if np.max(np.linalg.norm(cand.as2d(), axis=1)) > 10.0 or \
                        E > 1.1 * step_e[-1] + 1e-12:
                    trace.status = "diverged"
                    trace.message = f"blow-up guard tripped at step {n}"
                    halted = True
                    break
                u = cand
                step_t.append(n * dt)
                step_e.append(E)
                if n % cfg.snapshot_stride == 0 or n == steps:
                    states.append(_state(n * dt, u, prev, dt))
                    if _concentrated(u, cfg.scan_radii, eps1):
                        trace.status = "concentration_detected"
                        trace.message = f"concentration at t={n * dt:.6g}"
                        halted = True
                        break
                prev = u.as2d()
            if halted:
                break
        if trace.status == "diverged" and states[-1].t < step_t[-1]:
            states.append(_state(step_t[-1], u, None, dt))
    trace.step_t = np.array(step_t)
    trace.step_energy = np.array(step_e)
    return trace


def energy_identity_residual(trace: FlowTrace) -> float:
    """|int_0^T ||d_t u||^2 dt + E(T) - E(0)| from the recorded snapshots.

    d_t u is estimated by centered differences (one-sided at the ends) and
    integrated with the trapezoid rule.
    """
    if len(trace.states) < 2:
        raise ValueError("need at least two snapshots")
    t = trace.times
    U = np.array([s.u.as2d() for s in trace.states])
    h = trace.grid.h
    dU = np.gradient(U, t, axis=0, edge_order=1)
    sq = h * np.sum(dU**2, axis=(1, 2))
    diss = float(0.5 * np.sum((sq[1:] + sq[:-1]) * np.diff(t)))
    return abs(diss + trace.states[-1].energy - trace.states[0].energy)
