import math

import numpy as np
import pytest

from resonance_box.agmon import agmon_summary
from resonance_box.decoupled import find_degeneracy_ell, interior_spectrum
from resonance_box.eigensolve import Lattice, richardson
from resonance_box.errors import DomainError, RefinementError
from resonance_box.potential import Geometry, make_potential
from resonance_box.sweep import (
    TAGS,
    CrossingCandidate,
    classify_branches,
    detect_avoided_crossings,
    ell_grid,
    flat_branch,
    golden_section_minimize,
    refine_gap,
    sweep_eigenvalues,
)

HBAR = 0.1
ZERO = make_potential("constant", value=0.0)

# frozen from the canonical sweep (hbar 0.1, ell in [8, 8.6], 400 points, k = 40)
GOLDEN_CROSSINGS = [
    # side, ell_star, gap, ell0
    ("left", 8.18223713680448, 2.3320669395587856e-08, 8.182489354944995),
    ("right", 8.3179278946323, 6.461642039212734e-07, 8.318970792674792),
    ("left", 8.54071576341612, 2.2738717020409638e-08, 8.54096790069959),
]


def test_ell_grid_spacings():
    u = ell_grid((2.0, 4.0), 5)
    np.testing.assert_allclose(u, [2.0, 2.5, 3.0, 3.5, 4.0])
    g = ell_grid((2.0, 8.0), 3, "geometric")
    np.testing.assert_allclose(g, [2.0, 4.0, 8.0])
    with pytest.raises(DomainError):
        ell_grid((2.0, 4.0), 1)
    with pytest.raises(DomainError):
        ell_grid((2.0, 4.0), 5, "random")


def test_sweep_rejects_small_box():
    with pytest.raises(DomainError):
        sweep_eigenvalues(ZERO, Geometry(-1.0, 1.0), 1.0, (0.9, 2.0), 4, 1, Lattice(0.01, -1.0))


def test_zero_potential_sweep_analytic():
    g = Geometry(-0.5, 0.5)
    coarse = sweep_eigenvalues(ZERO, g, 1.0, (1.0, 2.0), 11, 1, Lattice(0.005, -0.5))
    fine = sweep_eigenvalues(ZERO, g, 1.0, (1.0, 2.0), 11, 1, Lattice(0.0025, -0.5))
    values = richardson(coarse.energies[0], fine.energies[0], 0.005, 0.0025)
    np.testing.assert_allclose(values, (math.pi / (2 * coarse.ell_grid)) ** 2, rtol=1e-6)


def test_zero_potential_has_no_interior_like_or_crossings():
    g = Geometry(-0.5, 0.5)
    branches = classify_branches(sweep_eigenvalues(ZERO, g, 0.3, (1.5, 3.0), 60, 10, Lattice(0.01, -0.5)))
    assert "interior_like" not in set(branches.classification.ravel())
    assert detect_avoided_crossings(branches) == []


def test_canonical_sweep_shape_and_monotonicity(canonical_sweep):
    b = canonical_sweep["raw"]
    assert b.energies.shape == (40, 400)
    assert np.all(np.diff(b.energies, axis=0) > 0)
    assert np.all(np.diff(b.energies, axis=1) <= 1e-12)
    assert b.branch_labels is None
    rows = list(b.rows())
    assert len(rows) == 40 * 400 and rows[0][:2] == (8.0, 0)


def test_canonical_branch_variations(canonical_sweep, canonical):
    b = canonical_sweep["branches"]
    e_d = b.interior_levels[0]
    mask = b.branch_labels == "interior:0"
    vals = b.energies[mask]
    assert np.ptp(vals) < 1e-3 * canonical.v0
    crossing_labels = [
        lab for lab in np.unique(b.branch_labels)
        if not lab.startswith("interior")
        and b.energies[b.branch_labels == lab].min() < e_d < b.energies[b.branch_labels == lab].max()
    ]
    assert crossing_labels
    for lab in crossing_labels:
        assert np.ptp(b.energies[b.branch_labels == lab]) > 0.1 * canonical.v0


def test_classification_canonical(canonical_sweep):
    b = canonical_sweep["branches"]
    assert set(np.unique(b.classification)) <= set(TAGS)
    top = b.energies[-1].min()
    in_range = [n for n, e in enumerate(b.interior_levels) if e < top]
    flat_labels = set(b.branch_labels[b.classification == "interior_like"])
    assert flat_labels == {f"interior:{n}" for n in in_range}
    # exterior segments fall with ell
    slopes = b.slopes()
    ext = np.char.startswith(b.classification.astype(str), "exterior")
    assert np.all(slopes[ext] < 0)
    tags = b.branch_tags()
    assert tags["interior:0"] == "interior_like" and tags["left:0"] == "exterior_left"


def test_classify_requires_labels_for_detection(canonical_sweep):
    with pytest.raises(DomainError):
        detect_avoided_crossings(canonical_sweep["raw"])


def test_detected_crossings_canonical(canonical_crossings):
    candidates, _ = canonical_crossings
    assert [c.side for c in candidates] == [g[0] for g in GOLDEN_CROSSINGS]
    assert {c.interior_index for c in candidates} == {0}
    inside = [c.bracket[0] < g[3] < c.bracket[2] for c, g in zip(candidates, GOLDEN_CROSSINGS)]
    assert any(inside)
    for c, golden in zip(candidates, GOLDEN_CROSSINGS):
        assert abs(c.bracket[1] - golden[3]) <= c.bracket[2] - c.bracket[0]


def test_refined_crossings_frozen(canonical_crossings, canonical, crossing_geometry):
    _, reports = canonical_crossings
    agmon = agmon_summary(canonical, crossing_geometry.with_ell(8.6))
    for rep, (side, ell_star, gap, ell0) in zip(reports, GOLDEN_CROSSINGS):
        assert rep.side == side
        assert rep.gap > 0
        assert rep.gap == pytest.approx(gap, rel=1e-3)
        assert rep.ell_star == pytest.approx(ell_star, abs=1e-6)
        assert rep.ell0 == pytest.approx(ell0, abs=1e-9)
        assert rep.bracket[0] < rep.ell_star < rep.bracket[1]
        assert abs(rep.ell_star - rep.ell0) <= rep.width
        assert rep.agmon_prediction == pytest.approx(agmon.for_side(side), abs=1e-9)
        assert rep.delta_isolation >= HBAR**4 and not rep.flagged
        assert rep.evaluations <= 80
    right = next(r for r in reports if r.side == "right")
    assert all(right.gap > r.gap for r in reports if r.side == "left")


def test_degeneracy_inside_candidate_bracket(canonical_crossings, canonical, crossing_geometry):
    candidates, _ = canonical_crossings
    c = candidates[0]
    deg = find_degeneracy_ell(canonical, crossing_geometry, HBAR, 0, c.side, (8.1, 8.3))
    assert c.bracket[0] < deg.ell0 < c.bracket[2]


def test_flag_when_isolation_below_threshold(canonical_sweep, canonical_crossings):
    b = canonical_sweep["branches"]
    candidates, _ = canonical_crossings
    rep = refine_gap(b.model, b.geometry, b.hbar, candidates[1], b.lattice, delta_c=1e6)
    assert rep.flagged
    assert any("below c*hbar^N" in note for note in rep.notes)


def test_flat_branch_stability_away_from_crossings(canonical_sweep, canonical_crossings, canonical,
                                                   crossing_geometry):
    b = canonical_sweep["branches"]
    _, reports = canonical_crossings
    ells, values = flat_branch(b, 0)
    keep = np.ones(len(ells), dtype=bool)
    for rep in reports:
        width = rep.gap / 0.2  # hyperbolic width: gap over the exterior slope (~0.2 per unit ell)
        keep &= np.abs(ells - rep.ell_star) >= 5 * width
    d_star = agmon_summary(canonical, crossing_geometry.with_ell(8.6)).d_star
    bound = math.exp(-1.5 * d_star / HBAR) + 10 * 1e-12
    assert keep.sum() > 100
    assert np.ptp(values[keep]) <= bound
    e_d = interior_spectrum(canonical, crossing_geometry, HBAR, 1, b.lattice)[0]
    assert np.max(np.abs(values[keep] - e_d)) <= bound


def test_two_level_surrogate_gap():
    a, slope, c, g = 3.0, 2.0, 1.0, 1e-3

    def gap(ell):
        m = np.array([[c, g], [g, a - slope * ell]])
        lo, hi = np.linalg.eigvalsh(m)
        return hi - lo

    x, fx, used = golden_section_minimize(gap, 0.5, 0.9, 1.3, 1e-10, 200)
    assert fx == pytest.approx(2 * g, abs=1e-10)
    assert x == pytest.approx((a - c) / slope, abs=1e-6)


def test_golden_rejects_bad_bracket_and_budget():
    with pytest.raises(RefinementError, match="unimodal"):
        golden_section_minimize(lambda x: x, 0.0, 0.5, 1.0, 1e-10, 80)
    with pytest.raises(RefinementError, match="budget"):
        golden_section_minimize(lambda x: (x - 0.3) ** 2, 0.0, 0.5, 1.0, 1e-12, 10)


def test_refine_rejects_pileup(canonical_sweep, canonical_crossings):
    b = canonical_sweep["branches"]
    c = canonical_crossings[0][1]
    off = CrossingCandidate(c.slot, c.index, (c.bracket[0] - 0.1, c.bracket[0] - 0.09, c.bracket[0] - 0.08),
                            c.side, c.interior_index, c.exterior_index, c.grid_gap)
    with pytest.raises(RefinementError):
        refine_gap(b.model, b.geometry, b.hbar, off, b.lattice)
