"""End-to-end acceptance runs at their stated sizes.

Every test prints one ``PASS`` or ``FAIL`` line (shown even under output
capture) before asserting.  Run with ``pytest tests/test_acceptance.py -v``.
"""

import itertools
import json
import os

import numpy as np
import pytest

from foliated_dynamics.cli import main
from foliated_dynamics.cocycle import Representation, evolve, liouville_state, transverse_lyapunov
from foliated_dynamics.curvature import build_invariant_bump, distortion_constant, psi_u, unstable_family
from foliated_dynamics.harmonic import BoundaryMeasure, brownian_lyapunov, candel_identity_residual
from foliated_dynamics.measures import (
    EmpiricalMeasure,
    birkhoff_empirical,
    bl_distance,
    classify_attractors,
    compare_time_reversal,
    invariance_defect,
    regular_set_fraction,
    section_concentration,
    unstable_arc_empirical,
    visibility,
)
from foliated_dynamics.parallel import STREAM_LIOUVILLE, orbit_rng
from foliated_dynamics.surface_group import preset, verify_group


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return emit


@pytest.fixture(scope="module")
def gibbs_runs(genus2, inclusion):
    """Fifty Liouville-random orbit measures at T = 5000."""
    ms = []
    for i in range(50):
        st = liouville_state(genus2, orbit_rng(500, STREAM_LIOUVILLE, i))
        ms.append(birkhoff_empirical(genus2, inclusion, st, 5000.0, 0.05).drop_samples())
    return ms


def test_criterion_01_fuchsian_exponent(genus2, inclusion, report):
    est = transverse_lyapunov(genus2, inclusion, seed=7, T=2000, dt=0.05, N=100)
    ok = abs(est.mean + 1) < 0.05 and est.ci95 < 0.05
    report(1, ok, f"mean={est.mean:.5f} ci95={est.ci95:.5f} (want -1.00 +/- 0.05)")
    assert ok


def test_criterion_02_exponent_equality(genus2, inclusion, report):
    geo = transverse_lyapunov(genus2, inclusion, seed=7, T=1000, dt=0.05, N=200)
    bro = brownian_lyapunov(genus2, inclusion, seed=7, T=1000, dt=1e-3, N=200)
    gap = abs(bro.mean - geo.mean)
    ok = gap < geo.ci95 + bro.ci95
    report(2, ok, f"geodesic={geo.mean:.5f}+/-{geo.ci95:.5f} brownian={bro.mean:.5f}+/-{bro.ci95:.5f} "
                  f"gap={gap:.5f}")
    assert ok


def test_criterion_03_unitary_null(genus2, report):
    rep = Representation.unitary(genus2, seed=3)
    s = liouville_state(genus2, orbit_rng(3, STREAM_LIOUVILLE, 0))
    per_step = []
    for _ in range(2000):
        s = evolve(genus2, rep, s, 0.05, 1)
        per_step.append(s.log_deriv)
    est = transverse_lyapunov(genus2, rep, seed=7, T=2000, dt=0.05, N=100)
    tv, _, _ = compare_time_reversal(genus2, rep, T=2000, dt=0.05, N=100, seed=1)
    ok = all(v == 0.0 for v in per_step) and all(v == 0.0 for v in est.values) and tv < 0.05
    report(3, ok, f"per-step log-derivative all zero={all(v == 0.0 for v in per_step)} "
                  f"exponent={est.mean} tv={tv:.4f} (want < 0.05)")
    assert ok


def test_criterion_04_north_south(genus2, inclusion, report):
    tv, plus, minus = compare_time_reversal(genus2, inclusion, T=2000, dt=0.05, N=100, seed=1)
    # the forward flow contracts the fiber onto the backward endpoint of the
    # reduced frame; the reversed flow onto the forward endpoint
    c_plus = section_concentration(plus, "backward", nearest=2)
    c_minus = section_concentration(minus, "forward", nearest=2)
    other = section_concentration(plus, "forward", nearest=2)
    ok = tv > 0.9 and c_plus >= 0.95 and c_minus >= 0.95
    report(4, ok, f"tv={tv:.4f} (want > 0.9) mu+ on attracting section={c_plus:.4f} "
                  f"mu- on repelling section={c_minus:.4f} mu+ on opposite section={other:.4f}")
    assert ok


def test_criterion_05_gibbs_uniqueness(genus2, inclusion, gibbs_runs, report):
    att = classify_attractors(gibbs_runs, eps=0.1)
    d = [bl_distance(a, b) for a, b in itertools.combinations(gibbs_runs, 2)]
    med = float(np.median(d))
    start = liouville_state(genus2, orbit_rng(500, STREAM_LIOUVILLE, 1000))
    arc = unstable_arc_empirical(genus2, inclusion, start, arc_len=1.0, n_samples=16, T=5000.0, dt=0.05)
    arc_bl = bl_distance(arc, EmpiricalMeasure.mix(gibbs_runs, keep_samples=False))
    ok = att.count == 1 and med < 0.05 and arc_bl < 0.05
    report(5, ok, f"attractors={att.count} (want 1) median pairwise BL={med:.4f} (want < 0.05) "
                  f"arc-vs-orbits BL={arc_bl:.4f} (want < 0.05)")
    assert ok


def test_criterion_06_invariance_defect(genus2, inclusion, gibbs_runs, report):
    defects = [invariance_defect(genus2, inclusion, m, 1.0) for m in gibbs_runs]
    bound = 2 / 5000 + 0.01
    ok = max(defects) <= bound
    report(6, ok, f"max defect={max(defects):.5f} bound={bound:.5f}")
    assert ok


def test_criterion_07_visibility(genus2, report):
    lines, ok = [], True
    for name in ("inclusion", "quasi_fuchsian"):
        rep = Representation.inclusion(genus2) if name == "inclusion" else Representation.quasi_fuchsian(genus2, 0)
        ms = []
        for i in range(20):
            st = liouville_state(genus2, orbit_rng(700, STREAM_LIOUVILLE, i))
            ms.append(birkhoff_empirical(genus2, rep, st, 2000.0, 0.05).drop_samples())
        att = classify_attractors(ms, eps=0.1)
        vx = visibility(genus2, rep, att, 1j, N_dirs=256, T=2000, dt=0.05, seed=1)
        vy = visibility(genus2, rep, att, 0.01 + 1j, N_dirs=256, T=2000, dt=0.05, seed=1)
        cont = float(np.max(np.abs(vx.f - vy.f)))
        good = att.count == 1 and vx.f[0] == 1.0 and vx.unlabeled_fraction < 0.05 and cont < 0.05
        ok &= good
        lines.append(f"{name}: attractors={att.count} f={np.round(vx.f, 3).tolist()[:4]} "
                     f"unlabeled={vx.unlabeled_fraction:.3f} continuity={cont:.3f}")
    report(7, ok, "; ".join(lines))
    assert ok


def test_criterion_08_psi_and_distortion(genus2, report):
    flat = build_invariant_bump(genus2, 0.0, word_radius=3)
    fam0 = unstable_family(flat, [0.05, 0.1, 0.2], history=400, seed=1)
    pairs0 = [fam0.pair(0, j) for j in (1, 2, 3)]
    psi0 = max(abs(psi_u(flat, p, 100).value - 1) for p in pairs0)
    diff0 = distortion_constant(flat, pairs0, 100).differences

    bumpy = build_invariant_bump(genus2, 0.05, word_radius=3)
    fam = unstable_family(bumpy, [0.05, 0.1, 0.2], history=400, seed=1)
    pairs = [fam.pair(0, j) for j in (1, 2, 3)]
    defect = max(psi_u(bumpy, p, 100).defect for p in pairs)
    c1 = distortion_constant(bumpy, pairs, 100).C
    c2 = distortion_constant(bumpy, pairs, 200).C
    ok = psi0 < 1e-6 and np.all(diff0 == 0) and defect < 1e-4 and abs(c1 - c2) <= 0.1 * c1
    report(8, ok, f"eps=0: max|psi-1|={psi0:.2e} max diff={diff0.max():.2e}; eps=0.05: defect={defect:.2e} "
                  f"C(100)={c1:.5f} C(200)={c2:.5f}")
    assert ok


def test_criterion_09_candel_identity(report):
    u = lambda x: np.real(x)  # noqa: E731
    cases = {"uniform": BoundaryMeasure.uniform(1024), "point": BoundaryMeasure.point(0.3)}
    ok, lines = True, []
    for name, h in cases.items():
        res = [candel_identity_residual(h, u, grid=n).residual for n in (128, 256, 512)]
        good = res[1] < 1e-3 and res[0] > res[1] > res[2]
        ok &= good
        lines.append(f"{name}: " + " ".join(f"{r:.2e}" for r in res))
    report(9, ok, "residual at 128/256/512: " + "; ".join(lines))
    assert ok


def test_criterion_10_projection_density(genus2, inclusion, report):
    st = liouville_state(genus2, orbit_rng(10, STREAM_LIOUVILLE, 0))
    m = birkhoff_empirical(genus2, inclusion, st, 1e4, 0.05)
    base = m.base_marginal(32, 32)
    empty = int((base == 0).sum())
    report(10, empty == 0, f"empty cells on 32x32 base grid: {empty}, min mass={base.min():.2e}")
    assert empty == 0


def test_criterion_11_regular_set(genus2, inclusion, report):
    fr = [regular_set_fraction(genus2, inclusion, seed=11, T=T, dt=0.05, N=50) for T in (500, 1000, 2000)]
    ok = fr[0] > fr[1] > fr[2]
    report(11, ok, f"fraction BL-close at T=500/1000/2000: {fr}")
    assert ok


def test_criterion_12_infrastructure(tmp_path, report, capsys):
    outs = []
    for threads in (1, 1, 4, 8):
        p = tmp_path / f"r{len(outs)}.json"
        code = main(["exponent", "--set", "params.T=200", "--set", "params.N=8", "--seed", "12",
                     "--threads", str(threads), "--set", "output.timing=false", "--out", str(p)])
        assert code == 0
        outs.append(p.read_bytes())
    capsys.readouterr()
    identical = all(o == outs[0] for o in outs)
    verified = all(verify_group(preset(n), 1e-8).passed for n in ("genus2", "punctured_torus"))
    ok = identical and verified
    report(12, ok, f"byte-identical across reruns and threads 1/4/8={identical} both presets verify={verified}")
    assert ok
