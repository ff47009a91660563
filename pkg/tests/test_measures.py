import json

import numpy as np
import pytest

from foliated_dynamics.charts import N_COLUMNS
from foliated_dynamics.cocycle import PreconditionError, Representation, SkewState, liouville_state
from foliated_dynamics.hyperbolic import Frame, SpherePoint
from foliated_dynamics.measures import (
    COMPARE_DIMS,
    DEFAULT_GRID,
    AttractorSet,
    EmpiricalMeasure,
    GridMismatchError,
    GridSpec,
    birkhoff_empirical,
    bl_distance,
    classify_attractors,
    compare_time_reversal,
    invariance_defect,
    section_concentration,
    tv_distance,
    unstable_arc_empirical,
    visibility,
)
from foliated_dynamics.parallel import orbit_rng


def start(group, i=0, seed=5):
    return liouville_state(group, orbit_rng(seed, 1, i))


def atom(**cols):
    row = np.full(N_COLUMNS, 0.5)
    for k, v in cols.items():
        row[int(k[1:])] = v
    return EmpiricalMeasure(row[None, :], np.array([1.0]))


# -- construction ------------------------------------------------------------


def test_single_step_is_one_atom(genus2, inclusion):
    m = birkhoff_empirical(genus2, inclusion, start(genus2), T=0.05, dt=0.05)
    assert m.n_samples == 1 and m.total_mass == pytest.approx(1.0)
    assert np.count_nonzero(m.level(-1)) == 1


def test_mass_is_conserved(genus2, inclusion):
    m = birkhoff_empirical(genus2, inclusion, start(genus2), T=50, dt=0.05)
    for k in range(len(m.grid.levels)):
        assert m.level(k).sum() == pytest.approx(1.0, abs=1e-12)
    mixed = EmpiricalMeasure.mix([m, birkhoff_empirical(genus2, inclusion, start(genus2, 1), 20, 0.05)])
    assert mixed.total_mass == pytest.approx(1.0)


def test_birkhoff_rejects_bad_T(genus2, inclusion):
    with pytest.raises(PreconditionError):
        birkhoff_empirical(genus2, inclusion, start(genus2), T=0, dt=0.05)


def test_trivial_rep_fiber_marginal_is_an_atom(genus2):
    m = birkhoff_empirical(genus2, Representation.trivial(genus2), start(genus2), T=100, dt=0.05)
    fm = m.fiber_marginal()
    assert fm.max() == pytest.approx(1.0)


def test_arc_with_one_sample_is_the_orbit(genus2, inclusion):
    s = start(genus2)
    arc = unstable_arc_empirical(genus2, inclusion, s, arc_len=0.3, n_samples=1, T=30, dt=0.05)
    single = birkhoff_empirical(genus2, inclusion, s, T=30, dt=0.05)
    for k in range(3):
        assert np.array_equal(arc.level(k), single.level(k))


def test_short_arc_limit(genus2, inclusion):
    s = start(genus2, 2)
    arc = unstable_arc_empirical(genus2, inclusion, s, arc_len=1e-9, n_samples=4, T=10, dt=0.05)
    single = birkhoff_empirical(genus2, inclusion, s, T=10, dt=0.05)
    assert bl_distance(arc, single) < 0.01


def test_arc_preconditions(genus2, inclusion):
    with pytest.raises(PreconditionError):
        unstable_arc_empirical(genus2, inclusion, start(genus2), 0.0, 4, 10, 0.05)
    with pytest.raises(PreconditionError):
        unstable_arc_empirical(genus2, inclusion, start(genus2), 0.1, 0, 10, 0.05)


# -- distances ---------------------------------------------------------------


def test_bl_zero_and_symmetric(genus2, inclusion):
    a = birkhoff_empirical(genus2, inclusion, start(genus2), T=40, dt=0.05)
    b = birkhoff_empirical(genus2, inclusion, start(genus2, 1), T=40, dt=0.05)
    assert bl_distance(a, a) == 0.0
    assert bl_distance(a, b) == bl_distance(b, a)
    assert 0 < bl_distance(a, b) <= 1


def test_bl_hand_built_atoms():
    # directions 0.01 and 0.1 share a cell only on the 8-bin level
    assert bl_distance(atom(c2=0.01), atom(c2=0.1)) == pytest.approx(2 / 3)
    # 0.01 and 0.05 split only on the 32-bin level
    assert bl_distance(atom(c2=0.01), atom(c2=0.05)) == pytest.approx(1 / 3)
    assert bl_distance(atom(c0=0.1), atom(c0=0.9)) == pytest.approx(1.0)


def test_grid_mismatch():
    other = GridSpec(levels=((2, 2, 2, 2, 2),), weights=(1.0,))
    b = EmpiricalMeasure(np.full((1, N_COLUMNS), 0.5), np.array([1.0]), other)
    with pytest.raises(GridMismatchError):
        bl_distance(atom(), b)


def test_drop_samples_keeps_distances(genus2, inclusion):
    a = birkhoff_empirical(genus2, inclusion, start(genus2), T=40, dt=0.05)
    b = birkhoff_empirical(genus2, inclusion, start(genus2, 1), T=40, dt=0.05)
    d = bl_distance(a, b)
    a.drop_samples()
    assert a.samples is None and bl_distance(a, b) == d


# -- invariance --------------------------------------------------------------


def test_invariance_defect_end_segment_bound(genus2, inclusion):
    T = 5000.0
    m = birkhoff_empirical(genus2, inclusion, start(genus2), T=T, dt=0.05)
    assert invariance_defect(genus2, inclusion, m, s=5.0) <= 2 * 5.0 / T + 1e-9


def test_invariance_defect_periodic_orbit(genus2, inclusion):
    # the first generator translates along the imaginary axis through i
    ell = 2 * np.arccosh(1 + np.sqrt(2))
    p = SkewState(Frame(np.eye(2)), SpherePoint(np.array([1.0, 0.0])))
    m = birkhoff_empirical(genus2, inclusion, p, T=10 * ell, dt=ell / 100)
    assert invariance_defect(genus2, inclusion, m, s=ell) < 0.02


def test_invariance_defect_s_range(genus2, inclusion):
    m = birkhoff_empirical(genus2, inclusion, start(genus2), T=20, dt=0.05)
    with pytest.raises(PreconditionError):
        invariance_defect(genus2, inclusion, m, s=5.0)
    with pytest.raises(ValueError):
        invariance_defect(genus2, inclusion, EmpiricalMeasure.mix([m, m]), s=1.0)


# -- attractors and visibility -----------------------------------------------


def test_classify_identical():
    a = classify_attractors([atom(), atom(), atom()], eps=0.1)
    assert a.count == 1 and a.labels == [0, 0, 0]


def test_classify_two_atoms():
    a = classify_attractors([atom(c0=0.1), atom(c0=0.9), atom(c0=0.1)], eps=0.1)
    assert a.count == 2 and a.labels == [0, 1, 0]


def test_classify_empty_and_eps():
    with pytest.raises(ValueError):
        classify_attractors([], eps=0.1)
    with pytest.raises(PreconditionError):
        classify_attractors([atom()], eps=0.0)


def test_visibility_sums_to_one_and_is_permutation_invariant(genus2, inclusion):
    ms = [birkhoff_empirical(genus2, inclusion, start(genus2, i), T=20, dt=0.05) for i in range(2)]
    a = AttractorSet(ms, [0, 1], eps=1.0)
    b = AttractorSet(ms[::-1], [1, 0], eps=1.0)
    va = visibility(genus2, inclusion, a, 0.1 + 0.9j, N_dirs=16, T=20, dt=0.05, seed=1)
    vb = visibility(genus2, inclusion, b, 0.1 + 0.9j, N_dirs=16, T=20, dt=0.05, seed=1)
    assert va.f.sum() == pytest.approx(1.0) and va.unlabeled == 0
    assert np.array_equal(va.counts, vb.counts[::-1])


def test_visibility_reports_unlabeled(genus2, inclusion):
    a = AttractorSet([atom(c0=0.99, c1=0.99, c2=0.99)], [0], eps=0.01)
    v = visibility(genus2, inclusion, a, 1j, N_dirs=8, T=5, dt=0.05)
    assert v.unlabeled == 8 and v.unlabeled_fraction == 1.0 and v.f.sum() == 0


# -- forward and backward statistics -----------------------------------------


def test_compare_unitary_close(genus2):
    tv, _, _ = compare_time_reversal(genus2, Representation.unitary(genus2, seed=3), T=2000, dt=0.05, N=100, seed=1)
    assert tv < 0.05


def test_compare_fuchsian_asymmetric(genus2, inclusion):
    tv, plus, minus = compare_time_reversal(genus2, inclusion, T=200, dt=0.05, N=20, seed=1)
    assert tv > 0.9
    # the joint histogram separates them while the fiber marginals do not
    assert tv_distance(plus, minus, (8, 4), (3, 4)) < 0.3
    assert section_concentration(plus, "backward") > 0.95
    assert section_concentration(minus, "forward") > 0.95


def test_compare_requires_long_T(genus2, inclusion):
    with pytest.raises(PreconditionError):
        compare_time_reversal(genus2, inclusion, T=50, dt=0.05, N=2)


def test_compare_dims():
    assert int(np.prod(COMPARE_DIMS)) == 8**3


# -- exports -----------------------------------------------------------------


def test_json_export_single_atom():
    doc = json.loads(atom().to_json())
    assert len(doc["cells"]) == 1 and doc["cells"][0][1] == 1.0
    assert doc["gridspec"]["levels"] == [list(x) for x in DEFAULT_GRID.levels]


def test_csv_export(tmp_path):
    p = tmp_path / "m.csv"
    atom().to_csv(p)
    lines = p.read_text().strip().splitlines()
    assert lines[0].startswith("index,") and len(lines) == 2


def test_svg_single_filled_cell():
    svg = atom().fiber_svg()
    assert svg.startswith("<svg") and svg.count('class="cell"') == 1
