import math

import numpy as np
import pytest

from resonance_box.eigensolve import TridiagonalOperator
from resonance_box.potential import canonical_geometry, canonical_model, make_potential


def dense_eigenvalues(op_or_diag, offdiag=None) -> np.ndarray:
    """Test-suite oracle: LAPACK dense symmetric eigenvalues."""
    if offdiag is None:
        return np.linalg.eigvalsh(op_or_diag.to_dense())
    d = np.asarray(op_or_diag, dtype=float)
    e = np.asarray(offdiag, dtype=float)
    return np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))


def charpoly_roots(diag, offdiag, lo, hi, n_scan=20001) -> np.ndarray:
    """Roots of det(T - x I) by scan and bisection on the determinant itself."""
    dense = np.diag(diag) + np.diag(offdiag, 1) + np.diag(offdiag, -1)
    eye = np.eye(len(diag))

    def p(x):
        return np.linalg.det(dense - x * eye)

    xs = np.linspace(lo, hi, n_scan)
    vals = np.array([p(x) for x in xs])
    roots = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb < 0:
            for _ in range(80):
                mid = 0.5 * (a + b)
                fm = p(mid)
                if fa * fm <= 0:
                    b = mid
                else:
                    a, fa = mid, fm
            roots.append(0.5 * (a + b))
    return np.array(roots)


def tridiagonal(diag, offdiag, h=1.0) -> TridiagonalOperator:
    d = np.asarray(diag, dtype=float)
    n = len(d)
    return TridiagonalOperator(
        interval=(0.0, (n + 1) * h),
        x=h * np.arange(1, n + 1),
        h=h,
        hbar=1.0,
        diag=d,
        offdiag=np.asarray(offdiag, dtype=float),
        weights=np.full(n, h),
    )


def random_tridiagonal(rng, n) -> TridiagonalOperator:
    return tridiagonal(rng.uniform(-5.0, 5.0, n), -rng.uniform(0.05, 3.0, n - 1))


def trapezoid_oracle(f, a, b, panels=10**6) -> float:
    x = np.linspace(a, b, panels + 1)
    y = f(x)
    return float((b - a) / panels * (y.sum() - 0.5 * (y[0] + y[-1])))


@pytest.fixture(scope="session")
def canonical():
    return canonical_model()


@pytest.fixture(scope="session")
def crossing_geometry():
    return canonical_geometry()


@pytest.fixture(scope="session")
def zero_model():
    return make_potential("constant", value=0.0)


@pytest.fixture(scope="session")
def symmetric_model():
    return make_potential(
        "two_gaussian_barriers",
        b_minus=2.5, b_plus=2.5, p_minus=-1.0, p_plus=1.0, w_minus=0.7, w_plus=0.7,
    )


@pytest.fixture(scope="session")
def gaussian_bump():
    return make_potential("gaussian_barrier", height=3.0, center=0.0, width=1.0)


E_BUMP = 3.0 / math.e


CANONICAL_HBAR = 0.1
CANONICAL_ELL_RANGE = (8.0, 8.6)
CANONICAL_N_ELL = 400
CANONICAL_K = 40


@pytest.fixture(scope="session")
def canonical_sweep(canonical, crossing_geometry):
    """Raw and classified canonical sweep, with wall-clock seconds for each stage."""
    import time

    from resonance_box.sweep import classify_branches, sweep_eigenvalues

    start = time.perf_counter()
    raw = sweep_eigenvalues(canonical, crossing_geometry, CANONICAL_HBAR, CANONICAL_ELL_RANGE,
                            CANONICAL_N_ELL, CANONICAL_K)
    mid = time.perf_counter()
    classified = classify_branches(raw)
    end = time.perf_counter()
    return {"raw": raw, "branches": classified, "sweep_seconds": mid - start,
            "classify_seconds": end - mid}


@pytest.fixture(scope="session")
def canonical_crossings(canonical_sweep):
    from resonance_box.sweep import detect_avoided_crossings, refine_all

    branches = canonical_sweep["branches"]
    candidates = detect_avoided_crossings(branches)
    return candidates, refine_all(branches, candidates)


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one acceptance verdict; the terminal summary lists them in order."""

    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_RESULTS[number] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
