"""Interior and exterior operators obtained by extra Dirichlet conditions at omega_pm.

All operators of a run live on one :class:`~resonance_box.eigensolve.Lattice`
anchored at ``omega_minus`` and containing ``omega_plus``, so the decoupled
operator is the full box operator with the two lattice rows at ``omega_pm``
deleted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .eigensolve import (
    EIGENVALUE_RTOL,
    Lattice,
    eigenvalue_slice,
    eigenvalues_below,
    make_lattice,
    sturm_count,
)
from .errors import DomainError, SearchError
from .potential import Geometry, PotentialModel

DELTA_C = 1.0
DELTA_N = 4
SIDES = ("left", "right")


def default_lattice(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    e_max: float | None = None,
    points_per_wavelength: float = 20.0,
) -> Lattice:
    """Lattice resolving energies up to ``e_max`` (default: the higher barrier top)."""
    if e_max is None:
        e_max = max(model.barrier_tops())
    v_min = min(model.v_minus, model.v_plus, model.v0 if math.isfinite(model.v0) else math.inf)
    return make_lattice(
        geometry.omega_minus, geometry.omega_plus, hbar, e_max, v_min, points_per_wavelength
    )


def _lattice(model, geometry, hbar, lattice):
    return lattice if lattice is not None else default_lattice(model, geometry, hbar)


def _solver_tol(value: float) -> float:
    return EIGENVALUE_RTOL * max(1.0, abs(value))


@dataclass(frozen=True)
class DecoupledSpectra:
    """Spectra of the interior operator and the two exterior operators at one ``ell``."""

    interior: np.ndarray
    exterior_left: np.ndarray
    exterior_right: np.ndarray
    ell: float

    def merged(self) -> tuple[np.ndarray, np.ndarray]:
        """All eigenvalues sorted ascending, with their family labels."""
        values = np.concatenate([self.interior, self.exterior_left, self.exterior_right])
        labels = np.array(
            ["interior"] * len(self.interior)
            + ["exterior_left"] * len(self.exterior_left)
            + ["exterior_right"] * len(self.exterior_right)
        )
        order = np.argsort(values, kind="stable")
        return values[order], labels[order]

    def family(self, side: str) -> np.ndarray:
        return self.exterior_left if side == "left" else self.exterior_right


def interior_operator(model, geometry, hbar, lattice=None):
    lat = _lattice(model, geometry, hbar, lattice)
    return lat.operator(model, geometry.region("interior"), hbar)


def exterior_operator(model, geometry, hbar, side, lattice=None):
    if side not in SIDES:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")
    lat = _lattice(model, geometry, hbar, lattice)
    return lat.operator(model, geometry.region(side), hbar)


def box_operator(model, geometry, hbar, lattice=None):
    lat = _lattice(model, geometry, hbar, lattice)
    return lat.operator(model, geometry.region("box"), hbar)


def interior_spectrum(
    model: PotentialModel, geometry: Geometry, hbar: float, k: int, lattice: Lattice | None = None
) -> np.ndarray:
    """The ``k`` lowest Dirichlet eigenvalues on (omega_minus, omega_plus)."""
    return eigenvalues_below(interior_operator(model, geometry, hbar, lattice), k)


def exterior_spectrum(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    side: str,
    k: int,
    lattice: Lattice | None = None,
) -> np.ndarray:
    """The ``k`` lowest Dirichlet eigenvalues on (-ell, omega_minus) or (omega_plus, ell)."""
    return eigenvalues_below(exterior_operator(model, geometry, hbar, side, lattice), k)


def spectrum_below(op, energy: float) -> np.ndarray:
    """All eigenvalues of ``op`` below ``energy``."""
    count = sturm_count(op, energy)
    return eigenvalues_below(op, count) if count else np.empty(0)


def decoupled_spectra(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    e_cut: float,
    lattice: Lattice | None = None,
) -> DecoupledSpectra:
    """Every decoupled eigenvalue below ``e_cut``."""
    lat = _lattice(model, geometry, hbar, lattice)
    return DecoupledSpectra(
        interior=spectrum_below(interior_operator(model, geometry, hbar, lat), e_cut),
        exterior_left=spectrum_below(exterior_operator(model, geometry, hbar, "left", lat), e_cut),
        exterior_right=spectrum_below(exterior_operator(model, geometry, hbar, "right", lat), e_cut),
        ell=float(geometry.ell),
    )


def isolation_delta(spectra: DecoupledSpectra, target: float, tol: float | None = None) -> float:
    """Distance from ``target`` to the rest of the merged decoupled spectrum.

    A target present twice (a double eigenvalue) has isolation 0.
    """
    values, _ = spectra.merged()
    tol = 10 * _solver_tol(target) if tol is None else tol
    hits = np.flatnonzero(np.abs(values - target) <= tol)
    if hits.size == 0:
        raise DomainError(f"{target!r} is not in the decoupled spectrum")
    if hits.size > 1:
        return 0.0
    rest = np.delete(values, hits[0])
    return float(np.min(np.abs(rest - target))) if rest.size else math.inf


def distance_to_spectrum(op, energy: float) -> float:
    """Distance from ``energy`` to the nearest eigenvalue of ``op``."""
    count = sturm_count(op, energy)
    idx = [i for i in (count - 1, count) if 0 <= i < op.n]
    if not idx:
        return math.inf
    vals = eigenvalue_slice(op, min(idx), max(idx))
    return float(np.min(np.abs(vals - energy)))


@dataclass(frozen=True)
class Degeneracy:
    """A box size at which an interior and an exterior eigenvalue coincide."""

    ell0: float
    energy: float
    side: str
    interior_index: int
    exterior_index: int
    mismatch: float
    isolation_other_side: float


def find_degeneracy_ell(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    interior_index: int,
    side: str,
    bracket: tuple[float, float],
    lattice: Lattice | None = None,
    energy_tol: float = 1e-10,
    exterior_index: int | None = None,
) -> Degeneracy:
    """Box size where an exterior eigenvalue on ``side`` equals an interior one.

    Exterior eigenvalues decrease strictly with ``ell``.  Unless
    ``exterior_index`` pins the branch, the first exterior branch that drops
    through the interior level inside ``bracket`` is used.
    """
    lat = _lattice(model, geometry, hbar, lattice)
    e_d = float(interior_spectrum(model, geometry, hbar, interior_index + 1, lat)[interior_index])
    lo, hi = map(float, bracket)

    def ext(ell):
        return exterior_operator(model, geometry.with_ell(ell), hbar, side, lat)

    c_lo, c_hi = sturm_count(ext(lo), e_d), sturm_count(ext(hi), e_d)
    m = c_lo if exterior_index is None else int(exterior_index)
    if not c_lo <= m < c_hi:
        raise SearchError(
            f"no exterior {side} eigenvalue"
            + ("" if exterior_index is None else f" with index {m}")
            + f" crosses E^d={e_d:.12g} for ell in [{lo}, {hi}]"
        )

    def f(ell):
        return float(eigenvalue_slice(ext(ell), m, m)[0]) - e_d

    # narrow by Sturm counts first so that f changes sign on the bracket
    a, b = lo, hi
    for _ in range(200):
        if f(a) > 0 > f(b):
            break
        mid = 0.5 * (a + b)
        if sturm_count(ext(mid), e_d) > m:
            b = mid
        else:
            a = mid
    ell0 = brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    mismatch = abs(f(ell0))
    other = "left" if side == "right" else "right"
    other_op = exterior_operator(model, geometry.with_ell(ell0), hbar, other, lat)
    if mismatch > energy_tol:
        raise SearchError(f"degeneracy located only to |E^e - E^d| = {mismatch:.3e}")
    return Degeneracy(
        ell0=float(ell0),
        energy=e_d,
        side=side,
        interior_index=interior_index,
        exterior_index=m,
        mismatch=mismatch,
        isolation_other_side=distance_to_spectrum(other_op, e_d),
    )


def interlacing_violations(
    full: np.ndarray, parts: np.ndarray, shift: int, tol: float
) -> list[tuple[int, str, float, float]]:
    """Violations of full[j] <= parts[j] <= full[j + shift] for j in range."""
    full = np.sort(np.asarray(full))
    parts = np.sort(np.asarray(parts))
    out = []
    for j in range(min(len(parts), len(full) - shift)):
        if parts[j] < full[j] - tol:
            out.append((j, "lower", float(full[j]), float(parts[j])))
        if parts[j] > full[j + shift] + tol:
            out.append((j, "upper", float(parts[j]), float(full[j + shift])))
    return out


def max_index_shift(full: np.ndarray, parts: np.ndarray, tol: float = 0.0) -> int:
    """Smallest s with parts[j] <= full[j + s] for every comparable j."""
    full = np.sort(np.asarray(full))
    parts = np.sort(np.asarray(parts))
    s = 0
    for j, value in enumerate(parts):
        while j + s < len(full) and value > full[j + s] + tol:
            s += 1
    return s


@dataclass(frozen=True)
class InterlacingReport:
    ell: float
    k: int
    violations_two_cut: list = field(default_factory=list)
    violations_one_cut: list = field(default_factory=list)
    shift_two_cut: int = 0
    shift_one_cut: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations_two_cut and not self.violations_one_cut


def interlacing_check(
    model: PotentialModel,
    geometry: Geometry,
    hbar: float,
    k: int,
    lattice: Lattice | None = None,
) -> InterlacingReport:
    """Compare the box spectrum with the spectra after one and two extra Dirichlet points.

    Two points may shift indices by at most two, a single point at
    ``omega_plus`` by at most one.
    """
    lat = _lattice(model, geometry, hbar, lattice)
    full = eigenvalues_below(box_operator(model, geometry, hbar, lat), k + 2)
    top = full[-1] * (1 + 1e-9) + 1e-9
    spectra = decoupled_spectra(model, geometry, hbar, top, lat)
    two_cut, _ = spectra.merged()
    left_block = lat.operator(model, (-geometry.ell, geometry.omega_plus), hbar)
    one_cut = np.sort(np.concatenate([spectrum_below(left_block, top), spectra.exterior_right]))
    tol = 10 * _solver_tol(top)
    return InterlacingReport(
        ell=float(geometry.ell),
        k=k,
        violations_two_cut=interlacing_violations(full, two_cut[:k], 2, tol),
        violations_one_cut=interlacing_violations(full, one_cut[:k], 1, tol),
        shift_two_cut=max_index_shift(full, two_cut[:k], tol),
        shift_one_cut=max_index_shift(full, one_cut[:k], tol),
    )
