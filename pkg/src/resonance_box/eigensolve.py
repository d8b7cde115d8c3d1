"""Symmetric tridiagonal discretization of -hbar^2 u'' + V u with Dirichlet ends.

Two builders are provided.  :func:`build_operator` is the plain uniform
three-point stencil on ``n`` interior points.  :func:`build_lattice_operator`
places nodes on a fixed lattice ``anchor + j*h`` and lets the two end cells
shrink or stretch, so that moving a box edge changes only the last row of the
matrix.  Non-uniform end cells are handled in finite-volume form
``K u = lambda M u`` (``M`` the dual cell widths) and symmetrized as
``M^-1/2 K M^-1/2``, which keeps the matrix symmetric tridiagonal.

Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numba
import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .errors import ConfigurationError, DomainError, NumericalError

if TYPE_CHECKING:
    from .potential import PotentialModel

EIGENVALUE_RTOL = 1e-12
INVERSE_ITERATION_SEED = 20240611
MAX_INVERSE_ITERATIONS = 5
# the residual test cannot see mixing with a near-degenerate neighbour, so a
# few sweeps always run to suppress it geometrically
MIN_INVERSE_ITERATIONS = 3
# end cells shorter than this fraction of h are merged into the boundary
_MIN_CELL_FRACTION = 1e-9


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    """Discretized ``-hbar^2 d^2/dx^2 + V`` on ``interval`` with Dirichlet ends.

    ``x`` holds the interior nodes and ``weights`` their dual cell widths
    (all equal to ``h`` on a uniform grid).  ``diag`` and ``offdiag`` are the
    entries of the symmetrized matrix.
    """

    interval: tuple[float, float]
    x: np.ndarray
    h: float
    hbar: float
    diag: np.ndarray
    offdiag: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return int(self.diag.shape[0])

    @property
    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        off = np.abs(self.offdiag)
        row = np.abs(self.diag).copy()
        row[:-1] += off
        row[1:] += off
        return float(row.max())

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diag)
            + np.diag(self.offdiag, 1)
            + np.diag(self.offdiag, -1)
        )


@dataclass(frozen=True, eq=False)
class EigenPair:
    """An eigenvalue with its eigenfunction sampled on the operator nodes.

    ``vector`` is normalized with the quadrature weights of the operator,
    ``sum(weights * vector**2) == 1``.
    """

    value: float
    vector: np.ndarray
    index: int
    residual: float


def resolution_spacing(
    hbar: float, e_max: float, v_min: float, points_per_wavelength: float = 20.0
) -> float:
    """Largest grid spacing resolving the local de Broglie wavelength.

    ``points_per_wavelength`` below 20 is rejected.
    """
    if points_per_wavelength < 20:
        raise ConfigurationError(
            f"points_per_wavelength={points_per_wavelength} is below the minimum of 20"
        )
    k_max = math.sqrt(max(e_max - v_min, 1.0))
    return 2.0 * math.pi * hbar / k_max / points_per_wavelength


def build_operator(
    model: PotentialModel,
    interval: tuple[float, float],
    hbar: float,
    n: int,
    e_max: float | None = None,
) -> TridiagonalOperator:
    """Uniform three-point stencil with ``n`` interior points.

    When ``e_max`` is given, the spacing must satisfy
    :func:`resolution_spacing` for energies up to ``e_max``.
    """
    from .potential import eval_potential

    a, b = float(interval[0]), float(interval[1])
    if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
        raise DomainError(f"degenerate interval ({a}, {b})")
    if hbar <= 0:
        raise DomainError(f"hbar must be positive, got {hbar}")
    if n < 3:
        raise ConfigurationError(f"need at least 3 interior points, got n={n}")
    h = (b - a) / (n + 1)
    x = a + h * np.arange(1, n + 1)
    v = eval_potential(model, x)
    if e_max is not None:
        h_max = resolution_spacing(hbar, e_max, float(np.min(v)))
        if h > h_max:
            required = int(math.ceil((b - a) / h_max)) - 1
            raise ConfigurationError(
                f"n={n} under-resolves energies up to {e_max}: need n >= {required}"
            )
    diag = 2.0 * hbar**2 / h**2 + v
    offdiag = np.full(n - 1, -(hbar**2) / h**2)
    return TridiagonalOperator((a, b), x, h, float(hbar), diag, offdiag, np.full(n, h))


def lattice_nodes(a: float, b: float, h: float, anchor: float) -> np.ndarray:
    """Lattice points ``anchor + j*h`` strictly inside ``(a, b)``."""
    j0 = math.floor((a - anchor) / h) - 1
    j1 = math.ceil((b - anchor) / h) + 1
    x = anchor + h * np.arange(j0, j1 + 1, dtype=float)
    min_cell = _MIN_CELL_FRACTION * h
    return x[(x > a + min_cell) & (x < b - min_cell)]


def build_lattice_operator(
    model: PotentialModel,
    interval: tuple[float, float],
    hbar: float,
    h: float,
    anchor: float,
) -> TridiagonalOperator:
    """Operator on the lattice ``anchor + j*h`` restricted to ``interval``.

    The first and last cells run from the boundary to the nearest lattice
    node and may be shorter or longer than ``h``.
    """
    from .potential import eval_potential

    a, b = float(interval[0]), float(interval[1])
    if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
        raise DomainError(f"degenerate interval ({a}, {b})")
    if hbar <= 0 or h <= 0:
        raise DomainError("hbar and h must be positive")
    x = lattice_nodes(a, b, h, anchor)
    if x.size < 3:
        raise ConfigurationError(
            f"interval ({a}, {b}) holds only {x.size} lattice points at h={h}"
        )
    cells = np.diff(np.concatenate(([a], x, [b])))
    weights = 0.5 * (cells[:-1] + cells[1:])
    diag = hbar**2 * (1.0 / cells[:-1] + 1.0 / cells[1:]) / weights
    diag = diag + eval_potential(model, x)
    offdiag = -(hbar**2) / (cells[1:-1] * np.sqrt(weights[:-1] * weights[1:]))
    return TridiagonalOperator((a, b), x, float(h), float(hbar), diag, offdiag, weights)


@numba.njit(cache=True, nogil=True)
def _sturm_count(diag, off2, lam, pivmin):
    n = diag.shape[0]
    count = 0
    q = diag[0] - lam
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0.0:
        count += 1
    for i in range(1, n):
        q = diag[i] - lam - off2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0.0:
            count += 1
    return count


@numba.njit(cache=True, nogil=True)
def _bisect_range(diag, off2, first, last, lower, upper, rtol, pivmin):
    m = last - first + 1
    lo = np.full(m, lower)
    hi = np.full(m, upper)
    for idx in range(m):
        while True:
            a = lo[idx]
            b = hi[idx]
            tol = rtol * max(1.0, abs(a), abs(b))
            if b - a <= tol:
                break
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            c = _sturm_count(diag, off2, mid, pivmin)
            for t in range(idx, m):
                if c > first + t:
                    if mid < hi[t]:
                        hi[t] = mid
                else:
                    if mid > lo[t]:
                        lo[t] = mid
    return 0.5 * (lo + hi)


def _pivmin(op: TridiagonalOperator) -> float:
    off2max = float(np.max(op.offdiag**2)) if op.offdiag.size else 0.0
    return np.finfo(float).tiny * max(1.0, off2max) * 1e4


def sturm_count(op: TridiagonalOperator, lam: float) -> int:
    """Number of eigenvalues of ``op`` strictly below ``lam``."""
    if not math.isfinite(lam):
        raise DomainError(f"non-finite shift {lam}")
    return int(_sturm_count(op.diag, op.offdiag**2, float(lam), _pivmin(op)))


def _gershgorin(op: TridiagonalOperator) -> tuple[float, float]:
    off = np.abs(op.offdiag)
    radius = np.zeros(op.n)
    radius[:-1] += off
    radius[1:] += off
    lower = float(np.min(op.diag - radius))
    upper = float(np.max(op.diag + radius))
    pad = 4 * np.finfo(float).eps * max(abs(lower), abs(upper), 1.0)
    return lower - pad, upper + pad


def eigenvalue_slice(
    op: TridiagonalOperator, first: int, last: int, rtol: float = EIGENVALUE_RTOL
) -> np.ndarray:
    """Eigenvalues with ascending indices ``first..last`` (inclusive, 0-based)."""
    if not 0 <= first <= last < op.n:
        raise DomainError(f"index range [{first}, {last}] outside 0..{op.n - 1}")
    lower, upper = _gershgorin(op)
    return _bisect_range(
        op.diag, op.offdiag**2, first, last, lower, upper, rtol, _pivmin(op)
    )


def eigenvalues_below(
    op: TridiagonalOperator, k: int, rtol: float = EIGENVALUE_RTOL
) -> np.ndarray:
    """The ``k`` lowest eigenvalues, ascending."""
    if k > op.n:
        raise DomainError(f"requested k={k} eigenvalues of an operator with n={op.n}")
    if k <= 0:
        return np.empty(0)
    return eigenvalue_slice(op, 0, k - 1, rtol)


def richardson(coarse, fine, h_coarse: float, h_fine: float, order: int = 2):
    """Eliminate the leading ``h**order`` error term from two resolutions."""
    r = (h_coarse / h_fine) ** order
    return (r * np.asarray(fine) - np.asarray(coarse)) / (r - 1.0)


def extrapolated_eigenvalues(
    model: PotentialModel,
    interval: tuple[float, float],
    hbar: float,
    k: int,
    n: int,
) -> np.ndarray:
    """Lowest ``k`` eigenvalues on uniform grids of n and 2n points, extrapolated."""
    coarse = build_operator(model, interval, hbar, n)
    fine = build_operator(model, interval, hbar, 2 * n)
    return richardson(
        eigenvalues_below(coarse, k), eigenvalues_below(fine, k), coarse.h, fine.h
    )


def sign_changes(vector: np.ndarray, rel_floor: float = 1e-10) -> int:
    """Sign changes of ``vector`` ignoring entries below ``rel_floor * max``."""
    v = np.asarray(vector)
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if scale == 0.0:
        return 0
    s = np.sign(v[np.abs(v) > rel_floor * scale])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def eigenvector(
    op: TridiagonalOperator,
    lam: float,
    seed: int = INVERSE_ITERATION_SEED,
    max_iter: int = MAX_INVERSE_ITERATIONS,
    index: int | None = None,
) -> EigenPair:
    """Inverse iteration at shift ``lam`` (which must be an accurate eigenvalue)."""
    n = op.n
    band = np.zeros((3, n))
    band[0, 1:] = op.offdiag
    band[2, :-1] = op.offdiag
    scale = max(float(np.max(np.abs(op.diag))), 1.0)
    shift = float(lam)
    y = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    y /= np.linalg.norm(y)
    tol = 1e-8 * scale
    residual = math.inf
    for it in range(max_iter):
        band[1] = op.diag - shift
        try:
            z = solve_banded((1, 1), band, y, check_finite=False)
        except LinAlgError:
            shift += 8 * np.finfo(float).eps * scale
            band[1] = op.diag - shift
            z = solve_banded((1, 1), band, y, check_finite=False)
        norm = np.linalg.norm(z)
        if not math.isfinite(norm) or norm == 0.0:
            shift += 8 * np.finfo(float).eps * scale
            continue
        y = z / norm
        ty = op.diag * y
        ty[:-1] += op.offdiag * y[1:]
        ty[1:] += op.offdiag * y[:-1]
        residual = float(np.linalg.norm(ty - lam * y))
        if residual <= tol and it + 1 >= min(MIN_INVERSE_ITERATIONS, max_iter):
            break
    else:
        raise NumericalError(
            f"inverse iteration at {lam!r} did not converge in {max_iter} steps "
            f"(residual {residual:.3e}); eigenvalues may be clustered"
        )
    u = y / np.sqrt(op.weights)
    big = np.flatnonzero(np.abs(u) > 1e-10 * np.max(np.abs(u)))
    if u[big[0]] < 0:
        u = -u
    if index is None:
        index = sturm_count(op, lam - 10 * EIGENVALUE_RTOL * max(1.0, abs(lam)))
    return EigenPair(float(lam), u, int(index), residual)


def boundary_derivative(pair: EigenPair, op: TridiagonalOperator, side: str) -> float:
    """One-sided second-order estimate of ``|u'|`` at a Dirichlet end.

    Uses the quadratic through the boundary zero and the two nearest nodes,
    which reduces to ``|4 u_1 - u_2| / (2 h)`` on a uniform grid.
    """
    u = pair.vector
    if side == "left":
        h0 = op.x[0] - op.interval[0]
        h1 = op.x[1] - op.x[0]
        u1, u2 = u[0], u[1]
    elif side == "right":
        h0 = op.interval[1] - op.x[-1]
        h1 = op.x[-1] - op.x[-2]
        u1, u2 = u[-1], u[-2]
    else:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")
    slope = u1 * (h0 + h1) / (h0 * h1) - u2 * h0 / (h1 * (h0 + h1))
    return float(abs(slope))


@dataclass(frozen=True)
class Lattice:
    """A fixed grid ``anchor + j*h`` shared by every operator of one run.

    Building the full, interior and exterior operators on one lattice makes
    the discrete decoupled operator an exact principal submatrix of the full
    one, and keeps the interior spectrum independent of the box size.
    """

    h: float
    anchor: float

    def operator(self, model: PotentialModel, interval, hbar: float) -> TridiagonalOperator:
        return build_lattice_operator(model, interval, hbar, self.h, self.anchor)


def make_lattice(
    omega_minus: float,
    omega_plus: float,
    hbar: float,
    e_max: float,
    v_min: float,
    points_per_wavelength: float = 20.0,
) -> Lattice:
    """Lattice anchored at ``omega_minus`` that also contains ``omega_plus``."""
    h_max = resolution_spacing(hbar, e_max, v_min, points_per_wavelength)
    cells = max(int(math.ceil((omega_plus - omega_minus) / h_max)), 4)
    return Lattice((omega_plus - omega_minus) / cells, float(omega_minus))
