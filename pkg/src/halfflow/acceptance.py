"""Acceptance criteria with pinned tolerances.

Each ``criterion_XX`` returns a :class:`Result` with the measured values and
the tolerance it was judged against.  ``run_suite`` executes all of them and
renders a pass/fail table.

Reduced-resolution policy: with ``M_scale < 1`` every grid shrinks by that
factor; when the base resolution drops below 128 the refinement-sensitive
criteria (10, 11, 13) report ``skipped (under-resolved)`` instead of failing.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import bubbling as bb
from . import flow as fl
from . import fraccalc as fc
from . import initial as ini
from . import variational as va
from .spectral import (
    CircleGrid,
    Field,
    LineGrid,
    fourier_mode,
    frac_laplacian,
    half_energy,
    l2_norm,
    pv_half_laplacian,
    sobolev_norm,
)

REFINEMENT_SENSITIVE = {10, 11, 13}
UNDER_RESOLVED = "skipped (under-resolved)"


@dataclass
class Result:
    id: int
    name: str
    status: str                      # pass | fail | skipped (under-resolved)
    measured: dict = field(default_factory=dict)
    tolerance: str = ""
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def line(self) -> str:
        meas = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return (f"[{self.status.upper() if self.status in ('pass', 'fail') else self.status}] "
                f"{self.id:2d} {self.name}: {meas} | tol: {self.tolerance} | {self.seconds:.1f}s")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


@dataclass
class Settings:
    M_scale: float = 1.0
    fault: str = "none"             # "none" | "corrupt_C_half"

    def M(self, base: int) -> int:
        m = int(round(base * self.M_scale))
        return max(8, m + (m % 2))

    def under_resolved(self) -> bool:
        return self.M(128) < 128


def _calibration(grid, settings):
    cal = fc.calibration_for(grid)
    if settings.fault == "corrupt_C_half":
        res = dict(cal.residuals)
        res["nonlinear_scale"] = res["nonlinear_scale"] * 1.1
        cal = replace(cal, C_half=cal.C_half * 1.1, residuals=res)
    return cal


def _timed(fn):
    """Fill Result.seconds with the wall time of the whole criterion."""
    @functools.wraps(fn)
    def wrapper(settings):
        t0 = time.perf_counter()
        r = fn(settings)
        r.seconds = time.perf_counter() - t0
        return r
    return wrapper


def _status(ok):
    return "pass" if ok else "fail"


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

@_timed
def criterion_01(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(256))
    u = Field(g, np.cos(3 * g.nodes))
    ref = frac_laplacian(u, 0.5)
    pv = pv_half_laplacian(u, fc.C_PV_EXACT)
    err = float(np.linalg.norm(pv.values - ref.values) / np.linalg.norm(ref.values))
    dt = time.perf_counter() - t0
    return Result(1, "operator cross-validation", _status(err <= 1e-2 and dt < 1.0),
                  {"rel_err": err, "runtime_s": dt}, "rel_err <= 1e-2, runtime < 1 s")


@_timed
def criterion_02(st: Settings) -> Result:
    g = CircleGrid(st.M(256))
    worst = 0.0
    for s in (0.25, 0.5):
        for k in range(0, g.M // 4 + 1):
            e = fourier_mode(g, k).values
            out = frac_laplacian(Field(g, e), s).values
            worst = max(worst, float(np.max(np.abs(out - abs(k) ** (2 * s) * e))))
    return Result(2, "multiplier exactness", _status(worst <= 1e-12),
                  {"max_abs_err": worst}, "<= 1e-12 for k <= M/4, s in {1/4, 1/2}")


@_timed
def criterion_03(st: Settings) -> Result:
    g = CircleGrid(st.M(256))
    dens = fc.sq_grad_density(ini.great_circle(g, 1, 3)).values
    err = float(np.max(np.abs(dens - 2 * np.pi)))
    return Result(3, "chordal identity", _status(err <= 1e-10), {"max_abs_err": err},
                  "|density - 2 pi| <= 1e-10 at every node")


@_timed
def criterion_04(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(512))
    cal = _calibration(g, st)
    u0 = ini.great_circle(g, 1, 3)
    lap = frac_laplacian(u0, 0.5).values
    stat = float(np.linalg.norm(fl.rhs(u0, cal).values - lap) / np.linalg.norm(lap))
    cfg = fl.FlowConfig(dt=1e-3, t_end=1.0, snapshot_stride=10, calibration=cal)
    tr = fl.run_flow(u0, cfg)
    drift = max(l2_norm(Field(g, s.u.values - u0.values)) for s in tr.states)
    ok = stat <= 1e-2 and drift <= 1e-2 and tr.status == "completed"
    return Result(4, "calibration consistency / stationarity", _status(ok),
                  {"rhs_rel_err": stat, "sup_drift_L2": drift, "status": tr.status},
                  "rhs rel err <= 1e-2; drift <= 1e-2 up to t=1 (dt=1e-3)",
                  time.perf_counter() - t0)


@_timed
def criterion_05(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(128))
    worst_inc, worst_final, maxE0 = -np.inf, 0.0, 0.0
    statuses = set()
    for seed in range(20):
        u0 = ini.perturbed_constant(g, 0.15, seed, 3)
        tr = fl.run_flow(u0, fl.FlowConfig(dt=0.01, t_end=20.0, snapshot_stride=100))
        e = tr.step_energy
        statuses.add(tr.status)
        maxE0 = max(maxE0, e[0])
        worst_inc = max(worst_inc, float(np.max(np.diff(e))))
        worst_final = max(worst_final, tr.states[-1].energy / e[0])
    dt = time.perf_counter() - t0
    ok = (maxE0 <= 0.1 and worst_inc <= 1e-8 and worst_final <= 1e-3 and dt < 120
          and statuses == {"completed"})
    return Result(5, "energy monotonicity", _status(ok),
                  {"max_E0": maxE0, "max_step_increase": worst_inc,
                   "max_E(20)/E0": worst_final, "runtime_s": dt},
                  "E0 <= 0.1; increase <= 1e-8/step; E(20) <= 1e-3 E0; < 120 s", dt)


@_timed
def criterion_06(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(128))
    u0 = ini.perturbed_constant(g, 0.15, 0, 3)
    res = []
    for dt in (1e-3, 5e-4):
        tr = fl.run_flow(u0, fl.FlowConfig(dt=dt, t_end=1.0, snapshot_stride=1))
        res.append(fl.energy_identity_residual(tr))
    E0 = half_energy(u0)
    ratio = res[0] / res[1] if res[1] > 0 else math.inf
    ok = res[0] <= 1e-2 * E0 and ratio >= 1.8
    return Result(6, "energy identity", _status(ok),
                  {"residual/E0": res[0] / E0, "halving_ratio": ratio},
                  "residual <= 1e-2 E0 at dt=1e-3; ratio >= 1.8 when dt halves",
                  time.perf_counter() - t0)


@_timed
def criterion_07(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(128))
    u0 = ini.perturbed_constant(g, 0.05, 0, 3)
    cfg = fl.FlowConfig(dt=0.01, picard_max_iters=20, picard_tol=1e-8)
    runs = {T: fl.picard_slab(u0, T, cfg) for T in (0.1, 0.4, 1.6)}
    first = runs[0.1]
    maxr = [max(runs[T].ratios) if runs[T].ratios else 0.0 for T in (0.1, 0.4, 1.6)]
    ok = (half_energy(u0) <= 1e-2 and first.status == "converged" and first.iterations <= 20
          and first.diffs[-1] <= 1e-8 and all(r < 1 for r in first.ratios)
          and maxr[0] < maxr[1] < maxr[2])
    return Result(7, "Picard contraction", _status(ok),
                  {"E0": half_energy(u0), "iters(T=0.1)": first.iterations,
                   "final_diff": first.diffs[-1], "max_ratio_by_T": maxr},
                  "T=0.1: <= 20 iters to 1e-8, ratios < 1; max ratio increasing in T",
                  time.perf_counter() - t0)


@_timed
def criterion_08(st: Settings) -> Result:
    g = CircleGrid(st.M(256))
    u = ini.great_circle(g, 1, 3)
    worst = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            Om = fc.shatah_current(u, i, j)
            for k in range(1, 17):
                for phi in (np.cos(k * g.nodes), np.sin(k * g.nodes)):
                    phi = Field(g, phi)
                    val = abs(float(fc.frac_div_pair(Om, phi)))
                    worst = max(worst, val / sobolev_norm(phi, 0.5, homogeneous=False))
    return Result(8, "conservation laws", _status(worst <= 1e-3),
                  {"max_pairing/||phi||_H1/2": worst}, "<= 1e-3 for modes k <= 16")


def _divfree_sample(g):
    u = ini.bandlimited_noise(g, 0.8, 4, 3, 3)
    Om, _ = fc.divfree_correction(fc.shatah_current(u, 0, 1), g.h / 8)
    return Om


@_timed
def criterion_09(st: Settings) -> Result:
    g = CircleGrid(st.M(256))
    Om = _divfree_sample(g)
    dists, defects = [], []
    for d in (0.5, 0.25, 0.1):
        Fc, _ = fc.divfree_correction(Om, d)
        defects.append(fc.divergence_defect(Fc))
        dists.append(fc.l2od_norm(Fc - Om))
    ok = max(defects) <= 1e-6 and dists[0] > dists[1] > dists[2]
    return Result(9, "divergence-free correction", _status(ok),
                  {"max_defect": max(defects), "dist_by_delta": dists},
                  "defect <= 1e-6; distance decreasing over delta = 0.5, 0.25, 0.1")


def random_kernel(grid, rng, P=3):
    """Smooth random two-point function sum c_pq cos(p x + q y + phase)."""
    x = grid.nodes[:, None]
    y = x + grid.offsets[None, :]
    F = np.zeros((grid.M, grid.M))
    for p in range(-P, P + 1):
        for q in range(-P, P + 1):
            c = rng.standard_normal() / (1 + p * p + q * q)
            ph = rng.uniform(0, 2 * np.pi)
            F += c * np.cos(p * x + q * y + ph)
    return fc.OffDiagKernel(grid, F)


def random_bandlimited(grid, rng, K=8):
    x = grid.nodes
    a, b = rng.standard_normal(K), rng.standard_normal(K)
    return Field(grid, sum((a[k - 1] * np.cos(k * x) + b[k - 1] * np.sin(k * x)) / k
                           for k in range(1, K + 1)))


def wente_ensemble(M, samples=100, delta=0.25, seed=1000, P=3, K=8):
    g = CircleGrid(M)
    ratios = []
    for i in range(samples):
        rng = np.random.default_rng(seed + i)
        F = random_kernel(g, rng, P)
        gg = random_bandlimited(g, rng, K)
        Fc, _ = fc.divfree_correction(F, delta)
        ratios.append(fc.wente_check(Fc, gg))
    return np.array(ratios)


@_timed
def criterion_10(st: Settings) -> Result:
    t0 = time.perf_counter()
    if st.under_resolved():
        return Result(10, "Wente bound", UNDER_RESOLVED, {}, "max ratio stable within 20%")
    a = wente_ensemble(st.M(256)).max()
    b = wente_ensemble(st.M(512)).max()
    change = abs(b - a) / a
    ok = np.isfinite(a) and np.isfinite(b) and change <= 0.2
    return Result(10, "Wente bound", _status(ok),
                  {"max_ratio_M": float(a), "max_ratio_2M": float(b), "rel_change": change},
                  "finite; change <= 20% for M -> 2M", time.perf_counter() - t0)


@_timed
def criterion_11(st: Settings) -> Result:
    t0 = time.perf_counter()
    if st.under_resolved():
        return Result(11, "bubble residual", UNDER_RESOLVED, {}, "<= 5e-2; monotone")
    res = []
    for L, M in ((25, 1024), (50, 2048), (100, 4096)):
        M = st.M(M)
        res.append(bb.bubble_residual(bb.stereographic_bubble(LineGrid(L, M))))
    ok = res[1] <= 5e-2 and res[0] > res[1] > res[2]
    return Result(11, "bubble residual", _status(ok), {"residuals": res},
                  "<= 5e-2 at (50, 2048); decreasing over the refinement triple",
                  time.perf_counter() - t0)


@_timed
def criterion_12(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(1024))
    x0 = np.pi
    radii = (0.02, 0.05, 0.1)
    lams = (0.5, 0.1, 0.02)
    snaps = [(float(i), ini.bubble_pullback(g, lam, x0, 3)) for i, lam in enumerate(lams)]
    rep = bb.concentration_scan(snaps, radii, eps1=0.05)
    worst_offset, all_flagged = 0.0, True
    for t, R, xp, e in rep.peaks:
        off = abs((xp - x0 + np.pi) % (2 * np.pi) - np.pi)
        worst_offset = max(worst_offset, off)
        all_flagged &= e >= rep.eps1
    gag = []
    for (t, u) in snaps:
        for R in radii:
            le, ga = bb.prop1_check(u, x0, R, 3)
            if le >= rep.eps1:
                gag.append(ga)
    mono = bool(np.all(np.diff(rep.energies.max(axis=2), axis=0) >= -1e-12))
    ok = all_flagged and worst_offset <= g.h + 1e-12 and len(gag) > 0 and min(gag) > 0
    return Result(12, "concentration pipeline", _status(ok),
                  {"all_flagged": bool(all_flagged), "max_peak_offset/h": worst_offset / g.h,
                   "delta_measured": min(gag) if gag else 0.0, "eps_R_monotone_in_lambda": mono},
                  "flag at center within one grid spacing for every radius; Gagliardo > 0",
                  time.perf_counter() - t0)


def _report_ratios(M):
    g = CircleGrid(M)
    out = []
    for seed in range(5):
        u0 = ini.perturbed_constant(g, 0.15, seed, 3)
        tr = fl.run_flow(u0, fl.FlowConfig(dt=0.01, t_end=1.0, snapshot_stride=5))
        for R in (0.1, 0.2, 0.4):
            out.append((bb.struwe_l4_report(tr, R), bb.h1_bound_report(tr, R)))
    return np.array(out)


@_timed
def criterion_13(st: Settings) -> Result:
    t0 = time.perf_counter()
    if st.under_resolved():
        return Result(13, "inequality reports", UNDER_RESOLVED, {}, "bounded; stable within 30%")
    a = _report_ratios(st.M(128))
    b = _report_ratios(st.M(256))
    change = float(np.max(np.abs(b - a) / np.abs(a)))
    ok = np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and change <= 0.3
    return Result(13, "inequality reports", _status(ok),
                  {"max_struwe": float(a[:, 0].max()), "max_h1": float(a[:, 1].max()),
                   "max_rel_change": change},
                  "ratios finite; stable within 30% under M -> 2M", time.perf_counter() - t0)


@_timed
def criterion_14(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(64))
    u0 = ini.perturbed_constant(g, 0.15, 0, 3)
    eps = 0.1
    U = va.minimize(u0, eps)
    bound = 2 * eps * va.sobolev_energy(u0)
    mono = va.monotonicity_check(U, eps)
    sweep = va.epsilon_sweep(u0, [0.2, 0.1, 0.05, 0.02])
    dt = time.perf_counter() - t0
    ok = (U.history[-1] <= bound * (1 + 1e-3) and mono <= 0.1 and sweep.slope is not None
          and abs(sweep.slope - 1.0) <= 0.3 and dt < 300)
    return Result(14, "variational bounds", _status(ok),
                  {"energy/bound": U.history[-1] / bound, "monotonicity": mono,
                   "sweep_slope": sweep.slope, "runtime_s": dt},
                  "energy <= 2 eps E (1+1e-3); monotonicity <= 0.1; slope 1.0 +- 0.3; < 300 s",
                  dt)


@_timed
def criterion_15(st: Settings) -> Result:
    t0 = time.perf_counter()
    g = CircleGrid(st.M(1024))
    u0 = ini.bubble_pullback(g, 0.02, np.pi, 3)
    cfg = fl.FlowConfig(dt=1e-3, t_end=0.05, snapshot_stride=10)
    tr = fl.run_flow(u0, cfg)
    glued = bb.glue_continue(tr, cfg)
    E0 = tr.states[0].energy
    restarts = len(glued.junctions)
    ceiling = math.ceil(E0 / cfg.thresholds.eps0)
    drops = [j["drop"] for j in glued.junctions]
    ok = (tr.status == "concentration_detected" and restarts <= ceiling
          and all(d >= -1e-12 for d in drops) and glued.status == "restart_limit")
    return Result(15, "gluing bookkeeping", _status(ok),
                  {"E0": E0, "restarts": restarts, "ceil(E0/eps0)": ceiling,
                   "min_drop": min(drops) if drops else 0.0, "final_status": glued.status},
                  "restarts <= ceil(E0/eps0); junction drop >= 0", time.perf_counter() - t0)


CRITERIA = [criterion_01, criterion_02, criterion_03, criterion_04, criterion_05,
            criterion_06, criterion_07, criterion_08, criterion_09, criterion_10,
            criterion_11, criterion_12, criterion_13, criterion_14, criterion_15]


def run_suite(settings: Settings | None = None, only=None, echo=print):
    settings = settings or Settings()
    results = []
    for fn in CRITERIA:
        cid = int(fn.__name__.split("_")[1])
        if only and cid not in only:
            continue
        r = fn(settings)
        results.append(r)
        if echo:
            echo(r.line())
    return results
