"""hbar-scaling studies, the tunneling surrogate and the per-level resonance report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .agmon import agmon_summary
from .decoupled import (
    _lattice,
    box_operator,
    decoupled_spectra,
    interior_operator,
    isolation_delta,
)
from .eigensolve import (
    INVERSE_ITERATION_SEED,
    Lattice,
    boundary_derivative,
    eigenvalue_slice,
    eigenvalues_below,
    eigenvector,
    sturm_count,
)
from .errors import DomainError, RefinementError, SearchError, StudyError
from .potential import Geometry, PotentialModel
from .sweep import (
    DEFAULT_N_ELL,
    CrossingReport,
    classify_branches,
    detect_avoided_crossings,
    flat_branch,
    refine_gap,
    sweep_eigenvalues,
)

OBSERVABLES = ("gap_left", "gap_right", "t_bound")
T_BOUND_C = 1.0
DEFAULT_SPAN_PERIODS = 1.25
_ISOLATION_PROBES = 64


def exterior_period(model: PotentialModel, energy: float, hbar: float, side: str) -> float:
    """Box-size increment that moves one more exterior level below ``energy``."""
    level = model.v_minus if side == "left" else model.v_plus
    if energy <= level:
        raise DomainError(f"energy {energy} is not above the exterior level {level}")
    return math.pi * hbar / math.sqrt(energy - level)


def interior_level(model, geometry, hbar, interior_index, lattice=None) -> float:
    op = interior_operator(model, geometry, hbar, lattice)
    return float(eigenvalue_slice(op, interior_index, interior_index)[0])


def _isolation(model, geometry, hbar, e_d, lat, width=1.0, max_doublings=12) -> float:
    """Delta at ``e_d``, widening the energy window until a neighbour shows up."""
    for _ in range(max_doublings):
        delta = isolation_delta(decoupled_spectra(model, geometry, hbar, e_d + width, lat), e_d)
        if delta < width:
            return delta
        width *= 2.0
    return delta


def most_isolated_ell(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    interior_index: int,
    ell_start: float,
    lattice: Lattice | None = None,
    probes: int = _ISOLATION_PROBES,
) -> tuple[float, float]:
    """Box size in one exterior period after ``ell_start`` that maximizes Delta.

    Returns ``(ell, delta)``.
    """
    lat = _lattice(model, geometry, hbar, lattice)
    e_d = interior_level(model, geometry, hbar, interior_index, lat)
    period = max(exterior_period(model, e_d, hbar, s) for s in ("left", "right"))
    best = (math.nan, -1.0)
    for ell in np.linspace(ell_start, ell_start + period, probes, endpoint=False):
        delta = _isolation(model, geometry.with_ell(ell), hbar, e_d, lat)
        if delta > best[1]:
            best = (float(ell), float(delta))
    return best


@dataclass(frozen=True)
class TunnelingEstimate:
    """Bound ``c hbar^3/(4 r^2) (phi'(omega_-)^2 + phi'(omega_+)^2)`` with ``r = Delta/2``."""

    t_bound: float
    r: float
    delta: float
    phi_prime_minus: float
    phi_prime_plus: float
    energy: float
    ell: float


def tunneling_surrogate(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    interior_index: int = 0,
    lattice: Lattice | None = None,
    c: float = T_BOUND_C,
    ell_start: float | None = None,
    seed: int = INVERSE_ITERATION_SEED,
) -> TunnelingEstimate:
    """Tunneling bound from boundary derivatives of the interior eigenfunction.

    Delta is evaluated at ``geometry.ell``.  A template without a box size
    uses the most isolated box size within one exterior period after
    ``ell_start`` (default ``min_ell + 5``).
    """
    lat = _lattice(model, geometry, hbar, lattice)
    op = interior_operator(model, geometry, hbar, lat)
    e_d = float(eigenvalue_slice(op, interior_index, interior_index)[0])
    if geometry.ell is None:
        start = geometry.min_ell + 5.0 if ell_start is None else float(ell_start)
        ell, delta = most_isolated_ell(model, geometry, hbar, interior_index, start, lat)
    else:
        ell = float(geometry.ell)
        delta = _isolation(model, geometry, hbar, e_d, lat)
    if delta <= 0:
        raise DomainError(f"E^d={e_d!r} is degenerate at ell={ell}; Delta = 0")
    pair = eigenvector(op, e_d, seed=seed, index=interior_index)
    left = boundary_derivative(pair, op, "left")
    right = boundary_derivative(pair, op, "right")
    r = 0.5 * delta
    t = c * hbar**3 / (4.0 * r * r) * (left * left + right * right)
    return TunnelingEstimate(t, r, delta, left, right, e_d, ell)


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line ``y = slope*x + intercept``; returns ``(slope, intercept, R^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    (slope, intercept), *_ = np.linalg.lstsq(np.column_stack([x, np.ones_like(x)]), y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


@dataclass(frozen=True)
class ScalingStudy:
    """Fit of ``log(observable)`` against ``1/hbar``."""

    hbar_values: tuple[float, ...]
    observable: str
    values: tuple[float, ...]
    log_values: tuple[float, ...]
    fitted_slope: float
    intercept: float
    r_squared: float
    agmon_reference: float
    slope_ratio: float
    side: str
    crossings: tuple = field(default_factory=tuple)


def locate_crossing(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    interior_index: int,
    side: str,
    ell_min: float,
    n_ell: int = DEFAULT_N_ELL,
    span_periods: float = DEFAULT_SPAN_PERIODS,
    lattice: Lattice | None = None,
    **refine_options,
) -> CrossingReport:
    """Sweep ``span_periods`` exterior periods from ``ell_min`` and refine the first crossing on ``side``.

    ``refine_options`` (budget, rtol, delta_c, delta_n) go to :func:`refine_gap`.
    """
    lat = _lattice(model, geometry, hbar, lattice)
    e_d = interior_level(model, geometry, hbar, interior_index, lat)
    ell_max = ell_min + span_periods * exterior_period(model, e_d, hbar, side)
    k = sturm_count(box_operator(model, geometry.with_ell(ell_max), hbar, lat), e_d) + 3
    branches = classify_branches(
        sweep_eigenvalues(model, geometry, hbar, (ell_min, ell_max), n_ell, k, lat)
    )
    for cand in detect_avoided_crossings(branches):
        if cand.side == side and cand.interior_index == interior_index:
            return refine_gap(model, geometry, hbar, cand, lat, **refine_options)
    raise SearchError(
        f"no {side} crossing for interior level {interior_index} in ell [{ell_min}, {ell_max:.6g}]"
    )


def run_scaling_study(
    model: PotentialModel,
    geometry: Geometry,
    observable: str,
    hbar_list,
    interior_index: int = 0,
    side: str = "right",
    ell_min: float = 8.0,
    n_ell: int = DEFAULT_N_ELL,
    points_per_wavelength: float = 20.0,
    jobs: int | None = None,
    span_periods: float = DEFAULT_SPAN_PERIODS,
    seed: int = INVERSE_ITERATION_SEED,
    refine_options: dict | None = None,
) -> ScalingStudy:
    """Measure an exponentially small observable at several hbar and fit its rate.

    ``agmon_reference`` is ``d^alpha_{v0}`` for a gap and ``2 d*`` for the
    tunneling bound; ``slope_ratio = -slope / agmon_reference``.
    """
    from .decoupled import default_lattice

    if observable not in OBSERVABLES:
        raise DomainError(f"observable must be one of {OBSERVABLES}, got {observable!r}")
    hbars = sorted((float(h) for h in hbar_list), reverse=True)
    if len(hbars) < 4:
        raise DomainError(f"a scaling study needs at least 4 hbar values, got {len(hbars)}")
    if observable != "t_bound":
        side = observable.split("_")[1]

    def one(hb):
        lat = default_lattice(model, geometry, hb, points_per_wavelength=points_per_wavelength)
        try:
            if observable == "t_bound":
                est = tunneling_surrogate(
                    model, geometry, hb, interior_index, lat, ell_start=ell_min, seed=seed
                )
                return est.t_bound, None
            rep = locate_crossing(
                model, geometry, hb, interior_index, side, ell_min, n_ell,
                span_periods, lat, **(refine_options or {}),
            )
            return rep.gap, rep
        except (SearchError, RefinementError, DomainError):
            return None, None

    results = parallel_map(one, hbars, jobs)
    failing = [hb for hb, (v, _) in zip(hbars, results) if v is None or not v > 0]
    if failing:
        raise StudyError(f"{observable} could not be measured at hbar = {failing}", failing)
    values = [v for v, _ in results]
    logs = [math.log(v) for v in values]
    slope, intercept, r2 = linear_fit([1.0 / h for h in hbars], logs)
    metrics = agmon_summary(model, geometry.with_ell(max(ell_min, geometry.min_ell * 1.01)))
    if observable == "t_bound":
        reference = 2.0 * metrics.d_star
    else:
        reference = metrics.for_side(side)
    return ScalingStudy(
        hbar_values=tuple(hbars),
        observable=observable,
        values=tuple(values),
        log_values=tuple(logs),
        fitted_slope=slope,
        intercept=intercept,
        r_squared=r2,
        agmon_reference=reference,
        slope_ratio=-slope / reference,
        side=side,
        crossings=tuple(rep for _, rep in results if rep is not None),
    )


def stability_sequence(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    interior_index: int,
    ells,
    lattice: Lattice | None = None,
) -> np.ndarray:
    """Box eigenvalue closest to E^d at each box size in ``ells``."""
    lat = _lattice(model, geometry, hbar, lattice)
    e_d = interior_level(model, geometry, hbar, interior_index, lat)
    out = []
    for ell in ells:
        op = box_operator(model, geometry.with_ell(ell), hbar, lat)
        c = sturm_count(op, e_d)
        idx = [i for i in (c - 1, c) if 0 <= i < op.n]
        vals = eigenvalue_slice(op, min(idx), max(idx))
        out.append(vals[np.argmin(np.abs(vals - e_d))])
    return np.array(out)


@dataclass(frozen=True)
class ReportRow:
    """Resonance data for one interior level; ``width_order`` is (max gap)^2, an order estimate only."""

    interior_index: int
    e_decoupled: float
    e_resonance: float
    gap_left: float
    gap_right: float
    larger_gap_side: str
    t_bound: float
    d_minus: float
    d_plus: float
    width_order: float
    notes: str = ""


def regime_levels(model: PotentialModel, geometry: Geometry, hbar: float, lattice=None) -> np.ndarray:
    """Interior eigenvalues inside the window (v0, v0 + delta)."""
    if not math.isfinite(model.v0):
        return np.empty(0)
    lat = _lattice(model, geometry, hbar, lattice)
    op = interior_operator(model, geometry, hbar, lat)
    top = model.v0 + model.default_delta
    count = sturm_count(op, top)
    return eigenvalues_below(op, count) if count else np.empty(0)


def resonance_report(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    max_interior_levels: int,
    ell_range: tuple[float, float],
    n_ell: int = DEFAULT_N_ELL,
    lattice: Lattice | None = None,
    jobs: int | None = None,
) -> list[ReportRow]:
    """One row per interior level in the regime window, from a sweep over ``ell_range``."""
    levels = regime_levels(model, geometry, hbar, lattice)[:max_interior_levels]
    if levels.size == 0:
        return []
    lat = _lattice(model, geometry, hbar, lattice)
    k = sturm_count(box_operator(model, geometry.with_ell(ell_range[1]), hbar, lat), levels[-1]) + 3
    branches = classify_branches(
        sweep_eigenvalues(model, geometry, hbar, ell_range, n_ell, k, lat, jobs=jobs), jobs=jobs
    )
    candidates = detect_avoided_crossings(branches)
    metrics = agmon_summary(model, geometry.with_ell(ell_range[1]))
    rows = []
    for n, e_d in enumerate(levels):
        gaps = {"left": math.nan, "right": math.nan}
        notes = []
        for side in ("left", "right"):
            cand = next(
                (c for c in candidates if c.interior_index == n and c.side == side), None
            )
            if cand is None:
                notes.append(f"no {side} crossing in sweep")
                continue
            try:
                gaps[side] = refine_gap(model, geometry, hbar, cand, lat).gap
            except (RefinementError, SearchError) as exc:
                notes.append(f"{side}: {exc}")
        _, values = flat_branch(branches, n)
        e_res = _flat_value(branches, n, values)
        try:
            t = tunneling_surrogate(model, geometry, hbar, n, lat).t_bound
        except DomainError as exc:
            t = math.nan
            notes.append(str(exc))
        finite = {s: g for s, g in gaps.items() if math.isfinite(g)}
        larger = max(finite, key=finite.get) if finite else ""
        width = max(finite.values()) ** 2 if finite else math.nan
        rows.append(
            ReportRow(
                interior_index=n,
                e_decoupled=float(e_d),
                e_resonance=e_res,
                gap_left=gaps["left"],
                gap_right=gaps["right"],
                larger_gap_side=larger,
                t_bound=t,
                d_minus=metrics.d_minus,
                d_plus=metrics.d_plus,
                width_order=width,
                notes="; ".join(notes),
            )
        )
    return rows


def _flat_value(branches, n, values) -> float:
    """Flat-branch value at the point farthest, in energy, from every other slot."""
    if values.size == 0:
        return math.nan
    label = f"interior:{n}"
    mask = (branches.branch_labels == label) & (branches.classification == "interior_like")
    best, best_iso = math.nan, -1.0
    for j, i in zip(*np.nonzero(mask)):
        col = branches.energies[:, i]
        others = np.delete(col, j)
        iso = float(np.min(np.abs(others - col[j]))) if others.size else math.inf
        if iso > best_iso:
            best, best_iso = float(col[j]), iso
    return best

