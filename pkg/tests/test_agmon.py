import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E_BUMP, trapezoid_oracle
from resonance_box.agmon import adaptive_simpson, agmon_distance, agmon_summary
from resonance_box.potential import Geometry, canonical_geometry, canonical_model, eval_potential, make_potential

D_MINUS = 1.721713861457555
D_PLUS = 1.3934055380373742


def test_adaptive_simpson_polynomial_and_sqrt():
    assert adaptive_simpson(lambda x: x**3, 0.0, 2.0, 1e-12) == pytest.approx(4.0, abs=1e-12)
    assert adaptive_simpson(np.sqrt, 0.0, 1.0, 1e-10) == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_constant_integrand():
    m = make_potential("constant", value=4.0)
    assert agmon_distance(m, 0.0, 0.0, 2.0) == pytest.approx(4.0, abs=1e-12)


def test_energy_above_potential_gives_zero(canonical):
    assert agmon_distance(canonical, 3.0, -5.0, 5.0) == 0.0


def test_bump_against_trapezoid_oracle(gaussian_bump):
    def f(x):
        return np.sqrt(np.maximum(0.0, eval_potential(gaussian_bump, x) - E_BUMP))

    oracle = trapezoid_oracle(f, 0.0, 3.0)
    assert agmon_distance(gaussian_bump, E_BUMP, 0.0, 3.0) == pytest.approx(oracle, abs=1e-8)


def test_summary_symmetric(symmetric_model):
    m = agmon_summary(symmetric_model, Geometry(-1.2, 1.2, 8.0))
    assert m.d_minus == pytest.approx(m.d_plus, abs=1e-10)
    assert m.d_star == min(m.d_minus, m.d_plus)


def test_summary_canonical_frozen(canonical):
    m = agmon_summary(canonical, canonical_geometry(8.0))
    assert m.d_minus == pytest.approx(D_MINUS, abs=1e-9)
    assert m.d_plus == pytest.approx(D_PLUS, abs=1e-9)
    assert m.d_minus > m.d_plus
    assert m.d_star == m.d_plus
    assert 0 < m.d_omega_plus < m.d_plus and 0 < m.d_omega_minus < m.d_minus
    assert m.d_omega_star == min(m.d_omega_minus, m.d_omega_plus)
    assert m.for_side("left") == m.d_minus and m.for_side("right") == m.d_plus


def test_summary_independent_of_box_beyond_support(canonical):
    a = agmon_summary(canonical, canonical_geometry(8.0))
    b = agmon_summary(canonical, canonical_geometry(40.0))
    assert abs(a.d_minus - b.d_minus) < 1e-12
    assert abs(a.d_plus - b.d_plus) < 1e-12


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-4.0, 4.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.05, 0.6),
)
def test_additivity(a, gap1, gap2, E):
    m = make_potential("two_gaussian_barriers", b_minus=2.5, b_plus=2.0, p_minus=-0.9,
                       p_plus=1.1, w_minus=0.7, w_plus=0.7)
    b, c = a + gap1, a + gap1 + gap2
    total = agmon_distance(m, E, a, c)
    assert total == pytest.approx(agmon_distance(m, E, a, b) + agmon_distance(m, E, b, c), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.4), st.floats(0.0, 2.4))
def test_monotone_in_energy(e1, e2):
    canonical = canonical_model()
    lo, hi = sorted((e1, e2))
    assert agmon_distance(canonical, lo, -3, 3) >= agmon_distance(canonical, hi, -3, 3) - 1e-12


def test_scaling_by_doubled_metric():
    base = agmon_distance(make_potential("constant", value=3.0), 1.0, -1.0, 2.5)
    doubled = agmon_distance(make_potential("constant", value=5.0), 1.0, -1.0, 2.5)
    assert doubled == pytest.approx(math.sqrt(2) * base, abs=1e-10)
