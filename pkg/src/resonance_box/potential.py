"""Closed-form potential families and numerical hypothesis checks.

Every family is defined analytically together with its derivative, so that
the virial check and the WKB integrals never see interpolation noise.  All
families accept an additive ``offset`` (default 0) that shifts the whole
potential, including the asymptotic levels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DomainError, NumericalError

FAMILIES = (
    "constant",
    "infinite_well_zero",
    "gaussian_barrier",
    "two_gaussian_barriers",
    "lorentzian_barriers",
    "square_barriers",
)

HYPOTHESIS_WINDOW = (-50.0, 50.0)
HYPOTHESIS_POINTS = 10_000
TAIL_RANGE = (20.0, 200.0)
ROOT_XTOL = 1e-13


class TurningPointWarning(UserWarning):
    """Raised (as a warning) when an exterior side has zero or several turning points."""


def _gauss(x, b, p, w):
    return b * np.exp(-(((x - p) / w) ** 2))


def _gauss_prime(x, b, p, w):
    return -2.0 * (x - p) / w**2 * _gauss(x, b, p, w)


def _lorentz(x, b, p, w):
    return b / (1.0 + ((x - p) / w) ** 2)


def _lorentz_prime(x, b, p, w):
    s = (x - p) / w
    return -2.0 * b * s / (w * (1.0 + s * s) ** 2)


def _square(x, b, start, end):
    return np.where((x >= start) & (x <= end), b, 0.0)


def _values(kind: str, p: dict, x):
    if kind == "constant":
        return np.full(np.shape(x), p["value"]) + 0.0 * x
    if kind == "infinite_well_zero":
        return np.zeros(np.shape(x)) + 0.0 * x
    if kind == "gaussian_barrier":
        return _gauss(x, p["height"], p["center"], p["width"])
    if kind == "two_gaussian_barriers":
        return _gauss(x, p["b_minus"], p["p_minus"], p["w_minus"]) + _gauss(
            x, p["b_plus"], p["p_plus"], p["w_plus"]
        )
    if kind == "lorentzian_barriers":
        return _lorentz(x, p["b_minus"], p["p_minus"], p["w_minus"]) + _lorentz(
            x, p["b_plus"], p["p_plus"], p["w_plus"]
        )
    if kind == "square_barriers":
        inside = (x > p["left_end"]) & (x < p["right_start"])
        return (
            _square(x, p["b_minus"], p["left_start"], p["left_end"])
            + _square(x, p["b_plus"], p["right_start"], p["right_end"])
            + np.where(inside, p["floor"], 0.0)
        )
    raise DomainError(f"unknown potential family {kind!r}")


def _derivative(kind: str, p: dict, x):
    if kind in ("constant", "infinite_well_zero", "square_barriers"):
        # piecewise constant: derivative vanishes away from the jumps
        return np.zeros(np.shape(x)) + 0.0 * x
    if kind == "gaussian_barrier":
        return _gauss_prime(x, p["height"], p["center"], p["width"])
    if kind == "two_gaussian_barriers":
        return _gauss_prime(x, p["b_minus"], p["p_minus"], p["w_minus"]) + _gauss_prime(
            x, p["b_plus"], p["p_plus"], p["w_plus"]
        )
    if kind == "lorentzian_barriers":
        return _lorentz_prime(
            x, p["b_minus"], p["p_minus"], p["w_minus"]
        ) + _lorentz_prime(x, p["b_plus"], p["p_plus"], p["w_plus"])
    raise DomainError(f"unknown potential family {kind!r}")


_REQUIRED = {
    "constant": ("value",),
    "infinite_well_zero": (),
    "gaussian_barrier": ("height", "center", "width"),
    "two_gaussian_barriers": ("b_minus", "b_plus", "p_minus", "p_plus", "w_minus", "w_plus"),
    "lorentzian_barriers": ("b_minus", "b_plus", "p_minus", "p_plus", "w_minus", "w_plus"),
    "square_barriers": (
        "b_minus",
        "b_plus",
        "left_start",
        "left_end",
        "right_start",
        "right_end",
    ),
}
_OPTIONAL = {
    "square_barriers": {"floor": 0.0},
}
# claimed decay exponent of V - v_pm; Gaussian tails beat any power
_TAIL_EXPONENT = {
    "constant": 1.0,
    "infinite_well_zero": 1.0,
    "gaussian_barrier": 1.0,
    "two_gaussian_barriers": 1.0,
    "lorentzian_barriers": 2.0,
    "square_barriers": 1.0,
}


@dataclass(frozen=True)
class PotentialModel:
    """An analytic potential with its well data and asymptotic levels.

    Families without a well (a single barrier) carry ``nan`` for ``x0`` and
    ``v0``.
    """

    kind: str
    params: dict = field(compare=True)
    x0: float
    v0: float
    v_minus: float
    v_plus: float
    tail_exponent: float

    def __call__(self, x):
        return eval_potential(self, x)

    def derivative(self, x):
        return eval_potential_derivative(self, x)

    @property
    def v_exterior_max(self) -> float:
        return max(self.v_minus, self.v_plus)

    @property
    def default_delta(self) -> float:
        """Width of the energy window above ``v0`` used by the WKB analysis."""
        return 0.5 * (self.v0 - self.v_exterior_max)

    def barrier_tops(self) -> tuple[float, float]:
        """Maximum of V to the left and to the right of the well bottom."""
        lo, hi = HYPOTHESIS_WINDOW
        x = np.linspace(lo, hi, 200_001)
        v = eval_potential(self, x)
        x0 = self.x0 if math.isfinite(self.x0) else 0.0
        return float(v[x <= x0].max()), float(v[x >= x0].max())


def _locate_well(kind: str, p: dict) -> tuple[float, float]:
    offset = p.get("offset", 0.0)
    if kind == "constant":
        return 0.0, p["value"] + offset
    if kind == "infinite_well_zero":
        return 0.0, offset
    if kind == "square_barriers":
        return 0.5 * (p["left_end"] + p["right_start"]), p["floor"] + offset
    if kind == "gaussian_barrier":
        return math.nan, math.nan
    lo, hi = sorted((p["p_minus"], p["p_plus"]))

    def v(x):
        return float(_values(kind, p, x))

    def dv(x):
        return float(_derivative(kind, p, x))

    res = minimize_scalar(v, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    x0 = float(res.x)
    if not (lo < x0 < hi) or v(x0) >= min(v(lo), v(hi)):
        return math.nan, math.nan
    # polish on V' = 0
    step = 1e-3 * (hi - lo)
    a, b = max(lo, x0 - step), min(hi, x0 + step)
    if dv(a) < 0 < dv(b):
        x0 = brentq(dv, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return x0, v(x0) + offset


def make_potential(kind: str, **params) -> PotentialModel:
    """Build a :class:`PotentialModel`, computing ``x0`` and ``v0`` from the formula."""
    if kind not in FAMILIES:
        raise DomainError(f"unknown potential family {kind!r}; choose from {FAMILIES}")
    p = dict(_OPTIONAL.get(kind, {}))
    p.update({k: float(v) for k, v in params.items()})
    allowed = set(_REQUIRED[kind]) | set(_OPTIONAL.get(kind, {})) | {"offset"}
    unknown = set(p) - allowed
    if unknown:
        raise DomainError(f"unknown parameters for {kind}: {sorted(unknown)}")
    missing = [k for k in _REQUIRED[kind] if k not in p]
    if missing:
        raise DomainError(f"missing parameters for {kind}: {missing}")
    for key in ("width", "w_minus", "w_plus"):
        if key in p and p[key] <= 0:
            raise DomainError(f"{key} must be positive")
    p.setdefault("offset", 0.0)
    x0, v0 = _locate_well(kind, p)
    offset = p["offset"]
    level = p["value"] + offset if kind == "constant" else offset
    return PotentialModel(kind, p, x0, v0, level, level, _TAIL_EXPONENT[kind])


def canonical_model() -> PotentialModel:
    """Asymmetric two-Gaussian double barrier used by the default pipeline."""
    return make_potential("two_gaussian_barriers", **CANONICAL_PARAMS)


CANONICAL_PARAMS = {
    "b_minus": 2.5,
    "b_plus": 2.0,
    "p_minus": -0.9,
    "p_plus": 1.1,
    "w_minus": 0.7,
    "w_plus": 0.7,
}


def _check_x(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("potential evaluated at a non-finite point")
    return arr


def eval_potential(model: PotentialModel, x):
    """V(x) for a scalar or an array of points."""
    arr = _check_x(x)
    v = _values(model.kind, model.params, arr) + model.params.get("offset", 0.0)
    return float(v) if np.ndim(v) == 0 else v


def eval_potential_derivative(model: PotentialModel, x):
    """Analytic V'(x)."""
    arr = _check_x(x)
    dv = _derivative(model.kind, model.params, arr)
    return float(dv) if np.ndim(dv) == 0 else dv


def _bisect_root(g: Callable[[float], float], a: float, b: float, xtol: float) -> float:
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return a
    if gb == 0.0:
        return b
    if (ga > 0) == (gb > 0):
        raise NumericalError(
            f"no sign change of V - E on [{a!r}, {b!r}]: values {ga:.3e}, {gb:.3e}"
        )
    return brentq(g, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def _scan(model, E, lo, hi, n):
    x = np.linspace(lo, hi, n)
    return x, eval_potential(model, x) - E


def forbidden_region(
    model: PotentialModel,
    E: float,
    search_interval: tuple[float, float] = HYPOTHESIS_WINDOW,
    n_grid: int = 20_001,
    xtol: float = 1e-12,
) -> list[tuple[float, float]]:
    """Maximal subintervals of ``search_interval`` on which V > E.

    Sign changes of V - E on a scan grid are refined by bracketed root finding.
    Positive local minima of V - E are checked as well, so that two
    forbidden intervals touching at a point (the well bottom at E = v0) come
    back as two intervals sharing an endpoint.
    """
    if not math.isfinite(E):
        raise DomainError("energy must be finite")
    lo, hi = map(float, search_interval)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise DomainError(f"bad search interval {search_interval}")

    def g(t):
        return eval_potential(model, t) - E

    x, gx = _scan(model, E, lo, hi, n_grid)
    pos = gx > 0
    cuts = []  # (location, kind) with kind +1 entering, -1 leaving
    for i in np.flatnonzero(pos[1:] != pos[:-1]):
        root = _bisect_root(g, x[i], x[i + 1], xtol)
        cuts.append((root, 1 if pos[i + 1] else -1))
    touch_tol = 1e-12 * max(1.0, abs(E))
    interior = np.flatnonzero(
        pos[1:-1] & (gx[1:-1] <= gx[:-2]) & (gx[1:-1] <= gx[2:])
    ) + 1
    for i in interior:
        res = minimize_scalar(
            g, bounds=(x[i - 1], x[i + 1]), method="bounded", options={"xatol": 1e-13}
        )
        if res.fun > touch_tol:
            continue
        xm = float(res.x)
        if res.fun < -touch_tol:
            cuts.append((_bisect_root(g, x[i - 1], xm, xtol), -1))
            cuts.append((_bisect_root(g, xm, x[i + 1], xtol), 1))
        else:
            cuts.append((xm, -1))
            cuts.append((xm, 1))
    cuts.sort(key=lambda c: (c[0], c[1]))
    intervals = []
    start = lo if pos[0] else None
    for loc, kind in cuts:
        if kind < 0 and start is not None:
            intervals.append((start, loc))
            start = None
        elif kind > 0:
            start = loc
    if start is not None:
        intervals.append((start, hi))
    return intervals


def turning_points(
    model: PotentialModel,
    E: float,
    side: str,
    omega: float,
    window: float = HYPOTHESIS_WINDOW[1],
    n_grid: int = 20_001,
    warn: bool = True,
) -> list[float]:
    """Zeros of V - E in the exterior region on ``side`` of ``omega``.

    A count other than one triggers :class:`TurningPointWarning`.
    """
    if not math.isfinite(E):
        raise DomainError("energy must be finite")
    if side == "right":
        lo, hi = float(omega), float(window)
    elif side == "left":
        lo, hi = -float(window), float(omega)
    else:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")

    def g(t):
        return eval_potential(model, t) - E

    x, gx = _scan(model, E, lo, hi, n_grid)
    pos = gx > 0
    roots = [
        _bisect_root(g, x[i], x[i + 1], ROOT_XTOL)
        for i in np.flatnonzero(pos[1:] != pos[:-1])
    ]
    if warn and len(roots) != 1:
        warnings.warn(
            f"{len(roots)} turning points at E={E!r} on the {side} side; "
            "the one-turning-point WKB regime does not hold",
            TurningPointWarning,
            stacklevel=2,
        )
    return roots


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of the numerical hypothesis checks on a finite grid."""

    energy: float
    h1: bool
    h2: bool
    h4: bool
    h1_detail: str
    virial_margin: float
    virial_margin_minus: float
    virial_margin_plus: float
    tail_exponent_minus: float
    tail_exponent_plus: float
    h4_detail: str
    window: tuple[float, float]
    grid_points: int
    forbidden: list = field(default_factory=list)


def _tail_exponent(model: PotentialModel, sign: int, level: float) -> float:
    r = np.geomspace(TAIL_RANGE[0], TAIL_RANGE[1], 400)
    dv = np.abs(eval_potential(model, sign * r) - level)
    keep = dv > 0
    if keep.sum() < 2:
        return math.inf
    slope = np.polyfit(np.log(r[keep]), np.log(dv[keep]), 1)[0]
    return float(-slope)


def _virial_margin(model, omega, side, E, window, n):
    if side == "right":
        x = np.linspace(omega, window[1], n)[1:]
    else:
        x = np.linspace(window[0], omega, n)[:-1]
    v = eval_potential(model, x)
    allowed = v <= E
    if not allowed.any():
        return math.inf
    x = x[allowed]
    f = (x - omega) / x * (2.0 * (v[allowed] - E) + x * eval_potential_derivative(model, x))
    return float(-np.max(f))


def check_hypotheses(
    model: PotentialModel,
    geometry=None,
    E: float | None = None,
    window: tuple[float, float] = HYPOTHESIS_WINDOW,
    grid_points: int = HYPOTHESIS_POINTS,
) -> HypothesisReport:
    """Grid certificates for the well, non-trapping and tail-decay hypotheses.

    These are numerical checks on ``grid_points`` samples of ``window``, not
    proofs.  Failures are recorded in the report; nothing is raised.
    """
    E = model.v0 if E is None else float(E)
    v0 = model.v0
    notes = []
    h1 = True
    intervals: list = []
    if not math.isfinite(v0):
        h1 = False
        notes.append("no local minimum between barriers")
    else:
        if not model.v_exterior_max < v0:
            h1 = False
            notes.append("limsup of V at infinity is not below v0")
        intervals = forbidden_region(model, v0, window)
        if not intervals:
            h1 = False
            notes.append("J(v0) is empty")
        else:
            for (_, b), (c, _) in zip(intervals[:-1], intervals[1:]):
                if c - b > 1e-6:
                    h1 = False
                    notes.append(f"closure of J(v0) disconnected between {b:.6g} and {c:.6g}")
            starts = [a for a, _ in intervals]
            ends = [b for _, b in intervals]
            if not (min(starts) < model.x0 < max(ends)):
                h1 = False
                notes.append("well bottom not enclosed by J(v0)")

    if geometry is not None:
        om, op = geometry.omega_minus, geometry.omega_plus
    elif intervals:
        om, op = intervals[0][0], intervals[-1][1]
    else:
        om, op = -1.0, 1.0
    s_minus = _virial_margin(model, om, "left", E, window, grid_points)
    s_plus = _virial_margin(model, op, "right", E, window, grid_points)
    margin = min(s_minus, s_plus)
    h2 = bool(h1 and margin > 0)

    tail_m = _tail_exponent(model, -1, model.v_minus)
    tail_p = _tail_exponent(model, +1, model.v_plus)
    h4_notes = []
    h4 = True
    claimed = model.tail_exponent
    if min(tail_m, tail_p) < 0.95 * claimed:
        h4 = False
        h4_notes.append(f"tail decays slower than claimed exponent {claimed}")
    if not math.isfinite(v0) or not model.v_exterior_max < v0:
        h4 = False
        h4_notes.append("asymptotic levels not below v0")
    elif intervals:
        x = np.linspace(window[0], window[1], grid_points)
        outside = (x < intervals[0][0]) | (x > intervals[-1][1])
        if np.any(eval_potential(model, x[outside]) >= v0):
            h4 = False
            h4_notes.append("V reaches v0 outside the closure of J(v0)")
    return HypothesisReport(
        energy=E,
        h1=h1,
        h2=h2,
        h4=h4,
        h1_detail="; ".join(notes) or "ok",
        virial_margin=margin,
        virial_margin_minus=s_minus,
        virial_margin_plus=s_plus,
        tail_exponent_minus=tail_m,
        tail_exponent_plus=tail_p,
        h4_detail="; ".join(h4_notes) or "ok",
        window=tuple(window),
        grid_points=grid_points,
        forbidden=intervals,
    )


@dataclass(frozen=True)
class Geometry:
    """Supplementary Dirichlet points and box half-width.

    ``ell`` may be ``None`` for a template whose box size is chosen later.
    """

    omega_minus: float
    omega_plus: float
    ell: float | None = None

    def __post_init__(self):
        if not self.omega_minus < 0 < self.omega_plus:
            raise DomainError(
                f"need omega_minus < 0 < omega_plus, got {self.omega_minus}, {self.omega_plus}"
            )
        if self.ell is not None and not self.ell > max(-self.omega_minus, self.omega_plus):
            raise DomainError(
                f"ell={self.ell} must exceed |omega_minus| and omega_plus"
            )

    def with_ell(self, ell: float) -> Geometry:
        return Geometry(self.omega_minus, self.omega_plus, float(ell))

    @property
    def min_ell(self) -> float:
        return max(-self.omega_minus, self.omega_plus)

    def region(self, name: str) -> tuple[float, float]:
        """Interval of ``interior``, ``left``, ``right`` or ``box``."""
        if name == "interior":
            return (self.omega_minus, self.omega_plus)
        if self.ell is None:
            raise DomainError("geometry has no box size")
        if name == "left":
            return (-self.ell, self.omega_minus)
        if name == "right":
            return (self.omega_plus, self.ell)
        if name == "box":
            return (-self.ell, self.ell)
        raise DomainError(f"unknown region {name!r}")


def interior_in_forbidden_region(
    model: PotentialModel, geometry: Geometry, n_grid: int = 10_001
) -> bool:
    """Whether the closed interior region minus the well bottom lies in J(v0)."""
    x = np.linspace(geometry.omega_minus, geometry.omega_plus, n_grid)
    x = x[np.abs(x - model.x0) > 1e-6]
    return bool(np.all(eval_potential(model, x) > model.v0))


def omega_at_action_fraction(model: PotentialModel, fraction: float, side: str) -> float:
    """Point where the Agmon distance from the well bottom is ``fraction`` of the full barrier."""
    from .agmon import agmon_distance

    lo, hi = HYPOTHESIS_WINDOW
    if side == "right":
        full = agmon_distance(model, model.v0, model.x0, hi)
        end = forbidden_region(model, model.v0, (model.x0, hi))[-1][1]

        def g(w):
            return agmon_distance(model, model.v0, model.x0, w) - fraction * full

        return brentq(g, model.x0 + 1e-9, end, xtol=1e-12)
    full = agmon_distance(model, model.v0, lo, model.x0)
    start = forbidden_region(model, model.v0, (lo, model.x0))[0][0]

    def g(w):
        return agmon_distance(model, model.v0, w, model.x0) - fraction * full

    return brentq(g, start, model.x0 - 1e-9, xtol=1e-12)


def barrier_edge_geometry(model: PotentialModel, energy: float, inset: float = 1e-9) -> Geometry:
    """Dirichlet points at the outer ends of the barriers' forbidden region at ``energy``.

    With ``energy`` above ``v0`` the whole interior region lies in J(energy)
    apart from the classically allowed well.
    """
    lo, hi = HYPOTHESIS_WINDOW
    left = [iv for iv in forbidden_region(model, energy, (lo, model.x0)) if iv[1] < model.x0]
    right = [iv for iv in forbidden_region(model, energy, (model.x0, hi)) if iv[0] > model.x0]
    if not left or not right:
        raise DomainError(f"no barrier above E={energy} on both sides of x0")
    return Geometry(left[0][0] + inset, right[-1][1] - inset)


CANONICAL_OMEGA = (-1.27, 1.45)


def canonical_geometry(ell: float | None = None) -> Geometry:
    """Dirichlet points near 80% of the v0-barrier action on each side of the canonical well."""
    return Geometry(*CANONICAL_OMEGA, ell)


def family_parameters(kind: str) -> tuple[str, ...]:
    """Parameter names of a family in canonical order, ``offset`` last."""
    if kind not in FAMILIES:
        raise DomainError(f"unknown potential family {kind!r}; choose from {FAMILIES}")
    return _REQUIRED[kind] + tuple(_OPTIONAL.get(kind, {})) + ("offset",)


def required_parameters(kind: str) -> tuple[str, ...]:
    family_parameters(kind)
    return _REQUIRED[kind]
