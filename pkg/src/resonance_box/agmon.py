"""Agmon distances in the degenerate metric ds^2 = max(0, V - E) dx^2."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .potential import Geometry, PotentialModel, eval_potential, forbidden_region

QUAD_TOL = 1e-10
_MAX_DEPTH = 60


def adaptive_simpson(f, a: float, b: float, tol: float = QUAD_TOL) -> float:
    """Adaptive Simpson rule with Richardson correction on each accepted panel.

    ``f`` must accept numpy arrays.  Panels are refined until the local
    error estimate falls below their share of ``tol``.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol)
    fa, fm, fb = f(np.array([a, 0.5 * (a + b), b]))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        flm, frm = f(np.array([0.5 * (a + m), 0.5 * (m + b)]))
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        if depth >= _MAX_DEPTH or abs(err) <= 15.0 * eps:
            total += left + right + err / 15.0
        else:
            stack.append((a, m, fa, flm, fm, left, 0.5 * eps, depth + 1))
            stack.append((m, b, fm, frm, fb, right, 0.5 * eps, depth + 1))
    return total


def _panels(model, E, a, b):
    """Forbidden subintervals of [a, b]; their ends are the kinks of the integrand."""
    return forbidden_region(model, E, (a, b), n_grid=max(2001, int(200 * (b - a)) + 1))


def agmon_distance(
    model: PotentialModel, E: float, a: float, b: float, tol: float = QUAD_TOL
) -> float:
    """Integral of sqrt(max(0, V - E)) over [a, b]."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(E)):
        raise DomainError("agmon_distance needs finite energy and endpoints")
    if a > b:
        raise DomainError(f"need a <= b, got {a}, {b}")
    if a == b:
        return 0.0

    def integrand(x):
        return np.sqrt(np.maximum(0.0, eval_potential(model, x) - E))

    panels = _panels(model, E, a, b)
    if not panels:
        return 0.0
    share = tol / len(panels)
    return float(sum(adaptive_simpson(integrand, lo, hi, share) for lo, hi in panels))


@dataclass(frozen=True)
class AgmonMetrics:
    """Agmon distances at E = v0 from the well bottom to the box edges.

    ``d_omega_minus``/``d_omega_plus`` use the Dirichlet points instead of
    the box edges, the other endpoint convention for the same quantity.
    """

    d_minus: float
    d_plus: float
    d_star: float
    d_omega_minus: float
    d_omega_plus: float

    @property
    def d_omega_star(self) -> float:
        return min(self.d_omega_minus, self.d_omega_plus)

    def for_side(self, side: str) -> float:
        return self.d_minus if side == "left" else self.d_plus


def agmon_summary(model: PotentialModel, geometry: Geometry) -> AgmonMetrics:
    if geometry.ell is None:
        raise DomainError("agmon_summary needs a geometry with a box size")
    v0, x0, ell = model.v0, model.x0, geometry.ell
    d_minus = agmon_distance(model, v0, -ell, x0)
    d_plus = agmon_distance(model, v0, x0, ell)
    return AgmonMetrics(
        d_minus=d_minus,
        d_plus=d_plus,
        d_star=min(d_minus, d_plus),
        d_omega_minus=agmon_distance(model, v0, geometry.omega_minus, x0),
        d_omega_plus=agmon_distance(model, v0, x0, geometry.omega_plus),
    )
