"""Library of sphere-valued initial data on the circle."""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

import numpy as np

from .spectral import CircleGrid, Field

KINDS = ("constant", "great_circle", "bubble_pullback", "bandlimited_noise",
         "perturbed_constant")


@dataclass
class InitialDataSpec:
    """``kind`` plus positional parameters, e.g. great_circle(k)."""

    kind: str
    n: int = 3
    params: tuple = field(default_factory=tuple)
    seed: int = 0

    @classmethod
    def parse(cls, text: str, n: int = 3, seed: int = 0) -> "InitialDataSpec":
        """Parse ``kind`` or ``kind(a, b, ...)`` with numeric arguments."""
        m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\((.*)\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse initial data {text!r}")
        kind, args = m.group(1), m.group(2)
        params = ()
        if args and args.strip():
            params = ast.literal_eval(f"({args},)")
            if not all(isinstance(p, (int, float)) for p in params):
                raise ValueError(f"non-numeric parameters in {text!r}")
        return cls(kind, n, tuple(params), seed)


def _check_n(n):
    if n not in (2, 3):
        raise ValueError("target dimension n must be 2 or 3")


def _embed(grid, cols, n):
    out = np.zeros((grid.M, n))
    for c, col in enumerate(cols):
        out[:, c] = col
    return out


def constant(grid: CircleGrid, n: int = 3) -> Field:
    _check_n(n)
    vals = np.zeros((grid.M, n))
    vals[:, -1] = 1.0
    return Field(grid, vals)


def great_circle(grid: CircleGrid, k: int = 1, n: int = 3) -> Field:
    """x -> (cos kx, sin kx, 0, ...)."""
    _check_n(n)
    x = grid.nodes
    return Field(grid, _embed(grid, [np.cos(k * x), np.sin(k * x)], n))


def bubble_angle(x, lam: float, x0: float = 0.0):
    """Angle of the bubble pulled back through the stereographic chart at x0.

    The chart sends x to xi = tan((x - x0)/2) / lam on the line; the inverse
    stereographic bubble there is e^{2i arctan xi}.
    """
    return 2.0 * np.arctan(np.tan(0.5 * (np.asarray(x) - x0)) / lam)


def bubble_pullback(grid: CircleGrid, lam: float, x0: float = 0.0, n: int = 3) -> Field:
    """Degree-one bubble of concentration scale ``lam`` centered at x0.

    It is a Moebius reparametrization of the great circle, hence half-harmonic
    with half-energy pi for every lam; roughly half of that energy sits in an
    arc of length ~lam around x0.
    """
    _check_n(n)
    if lam <= 0:
        raise ValueError("lam must be positive")
    th = bubble_angle(grid.nodes, lam, x0)
    vals = _embed(grid, [np.cos(th), np.sin(th)], n)
    vals /= np.linalg.norm(vals, axis=1, keepdims=True)
    return Field(grid, vals)


def bandlimited_noise(grid: CircleGrid, amplitude: float, max_mode: int = 4,
                      seed: int = 0, n: int = 3) -> Field:
    """Normalized tangent perturbation of the constant e_n.

    Each tangent component is a random trigonometric polynomial of degree
    ``max_mode`` (coefficients ~ N(0,1)/k) scaled to sup-norm ``amplitude``.
    """
    _check_n(n)
    rng = np.random.default_rng(seed)
    x = grid.nodes
    vals = np.zeros((grid.M, n))
    vals[:, -1] = 1.0
    for c in range(n - 1):
        a = rng.standard_normal(max_mode)
        b = rng.standard_normal(max_mode)
        p = sum((a[k - 1] * np.cos(k * x) + b[k - 1] * np.sin(k * x)) / k
                for k in range(1, max_mode + 1))
        vals[:, c] = amplitude * p / np.max(np.abs(p))
    vals /= np.linalg.norm(vals, axis=1, keepdims=True)
    return Field(grid, vals)


def perturbed_constant(grid: CircleGrid, amplitude: float = 0.1, seed: int = 0,
                       n: int = 3) -> Field:
    """Small smooth perturbation of a constant (three modes per component)."""
    return bandlimited_noise(grid, amplitude, 3, seed, n)


def make_initial(spec: InitialDataSpec, grid: CircleGrid) -> Field:
    p, n = spec.params, spec.n
    if spec.kind == "constant":
        return constant(grid, n)
    if spec.kind == "great_circle":
        return great_circle(grid, int(p[0]) if p else 1, n)
    if spec.kind == "bubble_pullback":
        lam = float(p[0]) if p else 0.1
        x0 = float(p[1]) if len(p) > 1 else 0.0
        return bubble_pullback(grid, lam, x0, n)
    if spec.kind == "bandlimited_noise":
        amp = float(p[0]) if p else 0.1
        mm = int(p[1]) if len(p) > 1 else 4
        seed = int(p[2]) if len(p) > 2 else spec.seed
        return bandlimited_noise(grid, amp, mm, seed, n)
    if spec.kind == "perturbed_constant":
        amp = float(p[0]) if p else 0.1
        seed = int(p[1]) if len(p) > 1 else spec.seed
        return perturbed_constant(grid, amp, seed, n)
    raise ValueError(f"unknown initial data kind {spec.kind!r}; expected one of {KINDS}")
