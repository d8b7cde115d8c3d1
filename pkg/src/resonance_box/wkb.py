"""One-turning-point WKB analysis of the exterior Dirichlet problems.

Between an exterior turning point ``x_t`` and the box edge the Dirichlet
condition gives ``int_{x_t}^{ell} sqrt(E - V) = (n + 3/4) pi hbar + O(hbar^2)``
(mirrored on the left).  The Airy functions behind the connection formula are
not evaluated; only the resulting condition is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .agmon import QUAD_TOL, adaptive_simpson
from .errors import DomainError, RegimeError, SearchError
from .potential import Geometry, PotentialModel, eval_potential, forbidden_region, turning_points

ENERGY_XTOL = 1e-12


def action_integral(
    model: PotentialModel, E: float, x_from: float, x_to: float, tol: float = QUAD_TOL
) -> float:
    """Integral of sqrt(|V - E|) between ``x_from`` and ``x_to`` (order-independent, >= 0)."""
    if not all(math.isfinite(v) for v in (E, x_from, x_to)):
        raise DomainError("action_integral needs finite arguments")
    a, b = sorted((float(x_from), float(x_to)))
    if a == b:
        return 0.0
    n_grid = max(2001, int(200 * (b - a)) + 1)
    cuts = {a, b}
    for lo, hi in forbidden_region(model, E, (a, b), n_grid=n_grid):
        cuts.update((lo, hi))
    edges = sorted(c for c in cuts if a <= c <= b)

    def integrand(x):
        return np.sqrt(np.abs(eval_potential(model, x) - E))

    share = tol / max(len(edges) - 1, 1)
    return float(sum(adaptive_simpson(integrand, lo, hi, share) for lo, hi in zip(edges, edges[1:])))


def _side_level(model: PotentialModel, side: str) -> float:
    if side == "left":
        return model.v_minus
    if side == "right":
        return model.v_plus
    raise DomainError(f"side must be 'left' or 'right', got {side!r}")


def exterior_turning_point(model: PotentialModel, geometry: Geometry, E: float, side: str) -> float:
    """The single zero of V - E beyond ``omega`` on ``side``; anything else is a regime error."""
    _side_level(model, side)
    omega = geometry.omega_plus if side == "right" else geometry.omega_minus
    window = 50.0 if geometry.ell is None else max(50.0, 2.0 * geometry.ell)
    points = turning_points(model, E, side, omega, window=window, warn=False)
    if len(points) != 1:
        raise RegimeError(
            f"{len(points)} turning points at E={E!r} on the {side} side; WKB needs exactly one"
        )
    return points[0]


@dataclass(frozen=True)
class WkbContext:
    """Turning point and action at one energy on one exterior side."""

    model: PotentialModel
    side: str
    turning_point: float
    energy: float
    quantum_number: int = 0

    def action(self, x: float) -> float:
        """S(x): the action between ``x`` and the turning point."""
        return action_integral(self.model, self.energy, x, self.turning_point)

    def xi(self, x) -> np.ndarray:
        """Liouville variable ``sgn(x - x_t) (3 S(x) / 2)^(2/3)``."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array(
            [math.copysign((1.5 * self.action(v)) ** (2.0 / 3.0), v - self.turning_point) for v in xs]
        )
        return out if np.ndim(x) else out[0]


def wkb_context(
    model: PotentialModel, geometry: Geometry, E: float, side: str, n: int = 0
) -> WkbContext:
    return WkbContext(model, side, exterior_turning_point(model, geometry, E, side), float(E), n)


def quantization_residual(
    model: PotentialModel, geometry: Geometry, hbar: float, E: float, side: str, n: int
) -> float:
    """``int sqrt(E - V)`` from the turning point to the box edge minus ``(n + 3/4) pi hbar``.

    A turning point at or beyond the box edge leaves an empty integral.
    """
    if geometry.ell is None:
        raise DomainError("quantization_residual needs a box size")
    if n < 0:
        raise DomainError(f"quantum number must be >= 0, got {n}")
    x_t = exterior_turning_point(model, geometry, E, side)
    ell = float(geometry.ell)
    if side == "right":
        integral = action_integral(model, E, x_t, ell) if x_t < ell else 0.0
    else:
        integral = action_integral(model, E, -ell, x_t) if x_t > -ell else 0.0
    return integral - (n + 0.75) * math.pi * hbar


def wkb_window(model: PotentialModel, side: str) -> tuple[float, float]:
    """Energies ``(v_side, v0 + delta)`` where the one-turning-point picture applies."""
    return _side_level(model, side), model.v0 + model.default_delta


def predict_exterior_eigenvalue(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    side: str,
    n: int,
    window: tuple[float, float] | None = None,
) -> float:
    """Energy where the quantization residual of level ``n`` vanishes."""
    lo, hi = wkb_window(model, side) if window is None else window
    lo = lo + 1e-12 * max(1.0, abs(lo))

    def f(E):
        return quantization_residual(model, geometry, hbar, E, side, n)

    f_lo, f_hi = f(lo), f(hi)
    if not f_lo < 0 < f_hi:
        raise SearchError(
            f"level n={n} is outside the WKB window ({lo:.6g}, {hi:.6g}): "
            f"residuals {f_lo:.3e}, {f_hi:.3e}"
        )
    return float(brentq(f, lo, hi, xtol=ENERGY_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200))


def asymptotic_exterior_eigenvalue(
    model: PotentialModel, hbar: float, ell: float, side: str, m: int
) -> float:
    """Leading large-box term ``v_side + ((m + 3/4) pi hbar / ell)^2``."""
    if ell <= 0 or hbar <= 0 or m < 0:
        raise DomainError("need ell > 0, hbar > 0 and m >= 0")
    return _side_level(model, side) + ((m + 0.75) * math.pi * hbar / ell) ** 2


def numerical_exterior_eigenvalues(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    side: str,
    k: int,
    points_per_length: float | None = None,
) -> np.ndarray:
    """Lowest ``k`` exterior Dirichlet eigenvalues, Richardson-extrapolated on uniform grids.

    The default spacing is ``hbar / 30``.
    """
    from .eigensolve import extrapolated_eigenvalues

    _side_level(model, side)
    a, b = geometry.region(side)
    density = 30.0 / hbar if points_per_length is None else float(points_per_length)
    n = max(int(math.ceil((b - a) * density)), 4 * k)
    return extrapolated_eigenvalues(model, (a, b), hbar, k, n)
