"""Box-size sweeps: eigenvalue curves, branch tags, avoided crossings and gap refinement.

Sorted slots of H(ell) never cross, so a physical branch moves between slots
only through an avoided crossing.  Each slot is matched to the decoupled
eigenvalue of the same rank, which carries the diabatic label
(``interior:n``, ``left:m`` or ``right:m``) of the branch that occupies it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .agmon import agmon_distance, agmon_summary
from .decoupled import (
    DELTA_C,
    DELTA_N,
    _lattice,
    box_operator,
    exterior_operator,
    find_degeneracy_ell,
    interior_operator,
)
from .eigensolve import EIGENVALUE_RTOL, Lattice, eigenvalue_slice, eigenvalues_below
from .errors import DomainError, RefinementError, SearchError
from .potential import Geometry, PotentialModel

TAGS = ("interior_like", "exterior_left", "exterior_right", "mixed")
DEFAULT_N_ELL = 400
REFINE_BUDGET = 80
REFINE_RTOL = 1e-10
SLOPE_FRACTION = 0.1
MIX_FRACTION = 0.25
_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True, eq=False)
class BranchSet:
    """Lowest ``k`` eigenvalues of H(ell) over a grid of box sizes.

    ``energies[j, i]`` is the ``j``-th eigenvalue at ``ell_grid[i]``.
    ``branch_labels`` and ``classification`` have the same shape and are
    ``None`` until :func:`classify_branches` runs.
    """

    ell_grid: np.ndarray
    energies: np.ndarray
    model: PotentialModel
    geometry: Geometry
    hbar: float
    lattice: Lattice
    branch_labels: np.ndarray | None = None
    classification: np.ndarray | None = None
    interior_levels: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.energies.shape[0]

    def slopes(self) -> np.ndarray:
        if len(self.ell_grid) < 2:
            return np.zeros_like(self.energies)
        return np.gradient(self.energies, self.ell_grid, axis=1)

    def branch_tags(self) -> dict[str, str]:
        """Tag of every physical branch label seen in the sweep."""
        if self.branch_labels is None:
            raise DomainError("branches are not classified")
        out = {}
        for label in np.unique(self.branch_labels):
            family = label.split(":")[0]
            out[str(label)] = "interior_like" if family == "interior" else f"exterior_{family}"
        return out

    def rows(self):
        """``(ell, slot, energy, tag)`` in ell-major order."""
        for i, ell in enumerate(self.ell_grid):
            for j in range(self.k):
                tag = "" if self.classification is None else str(self.classification[j, i])
                yield float(ell), j, float(self.energies[j, i]), tag


def ell_grid(ell_range: tuple[float, float], n_ell: int, spacing: str = "uniform") -> np.ndarray:
    lo, hi = map(float, ell_range)
    if n_ell < 2:
        raise DomainError(f"need n_ell >= 2, got {n_ell}")
    if not 0 < lo < hi:
        raise DomainError(f"bad ell range ({lo}, {hi})")
    if spacing == "uniform":
        return np.linspace(lo, hi, n_ell)
    if spacing == "geometric":
        return np.geomspace(lo, hi, n_ell)
    raise DomainError(f"spacing must be 'uniform' or 'geometric', got {spacing!r}")


def sweep_eigenvalues(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    ell_range: tuple[float, float],
    n_ell: int = DEFAULT_N_ELL,
    k: int = 10,
    lattice: Lattice | None = None,
    spacing: str = "uniform",
    jobs: int | None = None,
) -> BranchSet:
    """The ``k`` lowest eigenvalues of H(ell) on an ell grid."""
    grid = ell_grid(ell_range, n_ell, spacing)
    if grid[0] <= geometry.min_ell:
        raise DomainError(
            f"ell_min={grid[0]} must exceed max(|omega_minus|, omega_plus)={geometry.min_ell}"
        )
    if k < 1:
        raise DomainError(f"need k >= 1, got {k}")
    lat = _lattice(model, geometry, hbar, lattice)

    def solve(ell):
        return eigenvalues_below(box_operator(model, geometry.with_ell(ell), hbar, lat), k)

    energies = np.column_stack(parallel_map(solve, grid, jobs))
    return BranchSet(grid, energies, model, geometry, float(hbar), lat)


def _decoupled_at(branches: BranchSet, ell: float, k: int):
    g = branches.geometry.with_ell(ell)
    m, hb, lat = branches.model, branches.hbar, branches.lattice
    left = eigenvalues_below(exterior_operator(m, g, hb, "left", lat), k)
    right = eigenvalues_below(exterior_operator(m, g, hb, "right", lat), k)
    return left, right


def classify_branches(
    branches: BranchSet,
    allowance: float | None = None,
    jobs: int | None = None,
) -> BranchSet:
    """Label every (slot, ell) point by its diabatic branch and tag it.

    A point is ``interior_like`` when it follows an interior level, lies within
    ``allowance`` of it and has ``|dE/dell|`` below a tenth of the local
    exterior slope.  ``allowance`` defaults to ``10*tol + exp(-d*/hbar)``.
    Exterior points must sit within a quarter of the neighbour spacing of
    their decoupled level; anything else is ``mixed``.
    """
    k = branches.k
    model, hb, geom, lat = branches.model, branches.hbar, branches.geometry, branches.lattice
    interior = eigenvalues_below(interior_operator(model, geom, hb, lat), min(k, _max_k(geom, lat)))
    ext = parallel_map(lambda ell: _decoupled_at(branches, ell, k), branches.ell_grid, jobs)
    left = np.column_stack([e[0] for e in ext])
    right = np.column_stack([e[1] for e in ext])
    if allowance is None:
        allowance = _default_allowance(branches)

    slopes = branches.slopes()
    n = len(branches.ell_grid)
    ext_slopes = [np.abs(np.gradient(f, branches.ell_grid, axis=1)) if n > 1 else np.zeros_like(f)
                  for f in (left, right)]
    labels = np.empty((k, n), dtype=object)
    tags = np.empty((k, n), dtype=object)
    fam_names = np.array(["interior"] * len(interior) + ["left"] * k + ["right"] * k)
    fam_index = np.concatenate([np.arange(len(interior)), np.arange(k), np.arange(k)])
    for i in range(n):
        values = np.concatenate([interior, left[:, i], right[:, i]])
        order = np.argsort(values, kind="stable")[:k]
        merged = values[order]
        ext_e = np.concatenate([left[:, i], right[:, i]])
        ext_s = np.concatenate([ext_slopes[0][:, i], ext_slopes[1][:, i]])
        for j in range(k):
            fam, idx = fam_names[order[j]], fam_index[order[j]]
            labels[j, i] = f"{fam}:{idx}"
            e = branches.energies[j, i]
            lower = merged[j] - merged[j - 1] if j > 0 else math.inf
            upper = merged[j + 1] - merged[j] if j + 1 < k else math.inf
            spacing = min(lower, upper)
            deviation = abs(e - merged[j])
            if fam == "interior":
                typical = ext_s[np.argmin(np.abs(ext_e - e))]
                flat = abs(slopes[j, i]) < SLOPE_FRACTION * typical
                tags[j, i] = "interior_like" if flat and deviation <= allowance else "mixed"
            elif deviation <= MIX_FRACTION * spacing:
                tags[j, i] = f"exterior_{fam}"
            else:
                tags[j, i] = "mixed"
    labels = labels.astype(str)
    tags = tags.astype(str)
    return BranchSet(
        branches.ell_grid,
        branches.energies,
        model,
        geom,
        hb,
        lat,
        branch_labels=labels,
        classification=tags,
        interior_levels=interior,
    )


def _max_k(geometry: Geometry, lattice: Lattice) -> int:
    return max(int((geometry.omega_plus - geometry.omega_minus) / lattice.h) - 1, 1)


def _default_allowance(branches: BranchSet) -> float:
    model = branches.model
    tol = 10 * EIGENVALUE_RTOL * max(1.0, float(np.max(np.abs(branches.energies))))
    if not math.isfinite(model.v0):
        return tol
    d_star = agmon_summary(model, branches.geometry.with_ell(branches.ell_grid[-1])).d_star
    return tol + math.exp(-d_star / branches.hbar)


@dataclass(frozen=True)
class CrossingCandidate:
    """Grid-level avoided crossing between slots ``slot`` and ``slot + 1``."""

    slot: int
    index: int
    bracket: tuple[float, float, float]
    side: str
    interior_index: int
    exterior_index: int
    grid_gap: float


def _family(label: str) -> tuple[str, int]:
    fam, idx = label.split(":")
    return fam, int(idx)


def detect_avoided_crossings(branches: BranchSet) -> list[CrossingCandidate]:
    """Local minima of adjacent gaps between an interior and an exterior branch."""
    if branches.branch_labels is None:
        raise DomainError("classify the branches before detecting crossings")
    e = branches.energies
    labels = branches.branch_labels
    grid = branches.ell_grid
    out = []
    for j in range(branches.k - 1):
        gap = e[j + 1] - e[j]
        for i in range(1, len(grid) - 1):
            if not (gap[i] <= gap[i - 1] and gap[i] <= gap[i + 1]):
                continue
            if gap[i] == gap[i - 1] and gap[i] == gap[i + 1]:
                continue
            seen = {_family(str(labels[s, c])) for s in (j, j + 1) for c in (i - 1, i, i + 1)}
            interior = {idx for fam, idx in seen if fam == "interior"}
            exterior = {(fam, idx) for fam, idx in seen if fam != "interior"}
            if len(interior) != 1 or len(exterior) != 1:
                continue
            (side, m), = exterior
            out.append(
                CrossingCandidate(
                    slot=j,
                    index=i,
                    bracket=(float(grid[i - 1]), float(grid[i]), float(grid[i + 1])),
                    side=side,
                    interior_index=interior.pop(),
                    exterior_index=m,
                    grid_gap=float(gap[i]),
                )
            )
    out.sort(key=lambda c: (c.interior_index, c.bracket[1], c.side))
    return out


def golden_section_minimize(f, a: float, mid: float, b: float, xtol: float, budget: int):
    """Golden-section search on a bracket ``a < mid < b`` with ``f(mid)`` below both ends.

    Returns ``(x, f(x), evaluations)``.  Raises :class:`RefinementError` if the
    bracket is not a valid minimum bracket or the budget runs out.
    """
    fa, fm, fb = f(a), f(mid), f(b)
    used = 3
    if not (fm <= fa and fm <= fb):
        raise RefinementError(
            f"bracket ({a}, {mid}, {b}) is not unimodal (f = {fa:.3e}, {fm:.3e}, {fb:.3e}); "
            "use a denser sweep"
        )
    x, fx = mid, fm
    while b - a > xtol:
        if used >= budget:
            raise RefinementError(f"golden-section budget of {budget} evaluations exhausted")
        # probe the larger of the two subintervals
        if x - a > b - x:
            u = x - _GOLDEN * (x - a)
        else:
            u = x + _GOLDEN * (b - x)
        fu = f(u)
        used += 1
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            x, fx = u, fu
        elif u < x:
            a = u
        else:
            b = u
    return x, fx, used


@dataclass(frozen=True)
class CrossingReport:
    """One refined avoided crossing."""

    ell_star: float
    center_energy: float
    gap: float
    side: str
    interior_index: int
    delta_isolation: float
    agmon_prediction: float
    ell0: float
    exterior_index: int
    bracket: tuple[float, float]
    evaluations: int
    flagged: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def width(self) -> float:
        """Width of the detection bracket in ell."""
        return self.bracket[1] - self.bracket[0]


def pair_gap_function(model, geometry, hbar, lattice, slot):
    """``ell -> (E_{slot+1} - E_slot, center)`` on the box operator."""

    def evaluate(ell):
        op = box_operator(model, geometry.with_ell(ell), hbar, lattice)
        lo, hi = eigenvalue_slice(op, slot, slot + 1)
        return hi - lo, 0.5 * (hi + lo)

    return evaluate


def _locate_degeneracy(model, geometry, hbar, lattice, cand, ell_star, width):
    lo_limit = geometry.min_ell * (1 + 1e-9)
    w = max(4.0 * width, 1e-6)
    for _ in range(12):
        lo, hi = max(ell_star - w, lo_limit), ell_star + w
        try:
            return find_degeneracy_ell(
                model, geometry, hbar, cand.interior_index, cand.side, (lo, hi),
                lattice, exterior_index=cand.exterior_index,
            )
        except SearchError:
            w *= 2.0
    raise SearchError(
        f"no decoupled degeneracy for {cand.side} branch {cand.exterior_index} near ell={ell_star}"
    )


def refine_gap(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    candidate: CrossingCandidate,
    lattice: Lattice | None = None,
    budget: int = REFINE_BUDGET,
    rtol: float = REFINE_RTOL,
    delta_c: float = DELTA_C,
    delta_n: float = DELTA_N,
) -> CrossingReport:
    """Minimize the adjacent gap over the candidate bracket by golden-section search."""
    lat = _lattice(model, geometry, hbar, lattice)
    gap_and_center = pair_gap_function(model, geometry, hbar, lat, candidate.slot)
    cache = {}

    def gap(ell):
        cache[ell] = gap_and_center(ell)
        return cache[ell][0]

    a, mid, b = candidate.bracket
    ell_star, g, used = golden_section_minimize(gap, a, mid, b, rtol * mid, budget)
    if not g > 0:
        raise RefinementError(f"non-positive gap {g:.3e} at ell={ell_star}; eigenvalues unresolved")
    center = cache[ell_star][1]
    deg = _locate_degeneracy(model, geometry, hbar, lat, candidate, ell_star, b - a)
    if candidate.side == "left":
        d_alpha = agmon_distance(model, model.v0, -ell_star, model.x0)
    else:
        d_alpha = agmon_distance(model, model.v0, model.x0, ell_star)
    threshold = delta_c * hbar**delta_n
    flagged = deg.isolation_other_side < threshold
    notes = ()
    if flagged:
        notes = (f"delta {deg.isolation_other_side:.3e} below c*hbar^N = {threshold:.3e}",)
    return CrossingReport(
        ell_star=float(ell_star),
        center_energy=float(center),
        gap=float(g),
        side=candidate.side,
        interior_index=candidate.interior_index,
        delta_isolation=float(deg.isolation_other_side),
        agmon_prediction=float(d_alpha),
        ell0=deg.ell0,
        exterior_index=candidate.exterior_index,
        bracket=(a, b),
        evaluations=used,
        flagged=flagged,
        notes=notes,
    )


def refine_all(
    branches: BranchSet,
    candidates: list[CrossingCandidate] | None = None,
    jobs: int | None = None,
    **kwargs,
) -> list[CrossingReport]:
    """Refine every detected crossing; distinct crossings run in parallel."""
    if candidates is None:
        candidates = detect_avoided_crossings(branches)

    def one(cand):
        return refine_gap(
            branches.model, branches.geometry, branches.hbar, cand, branches.lattice, **kwargs
        )

    return parallel_map(one, candidates, jobs)


def flat_branch(branches: BranchSet, interior_index: int) -> tuple[np.ndarray, np.ndarray]:
    """``(ell, energy)`` of points tagged interior_like for one interior level."""
    if branches.branch_labels is None:
        raise DomainError("branches are not classified")
    label = f"interior:{interior_index}"
    mask = (branches.branch_labels == label) & (branches.classification == "interior_like")
    slot, col = np.nonzero(mask)
    order = np.argsort(col)
    return branches.ell_grid[col[order]], branches.energies[slot[order], col[order]]
