import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from qgraph.continuation import _newton, nearest_eigs
from qgraph.discretize import make_system
from qgraph.graphs import SymmetryOp, apply_symmetry, build_dumbbell
from qgraph.shooting import (LAM, SolutionTriple, complete_bifurcation_schedule, complete_candidates,
                             enumerate_complete, fd_oracle, find_standing_waves, hybrid_solutions_at,
                             hybrid_waves, lollipop_shot, materialize, orbit_size, richardson_power,
                             scan_shooting, shoot)

from conftest import dumbbell

L = 2.0


def _independent_f(q, lam, L):
    """Shooting function with an implicit integrator and a single jump helper."""
    rhs = lambda x, y: [y[1], -lam * y[0] - 2 * y[0] ** 3]
    run = lambda y0, a, b: solve_ivp(rhs, (a, b), y0, method="Radau", rtol=1e-11, atol=1e-12).y[:, -1]
    p, d = run([q, 0.0], 0.0, math.pi)
    p, d = run([p, 2 * d], -L, L)
    return run([p, 0.5 * d], -math.pi, 0.0)[1]


@pytest.mark.parametrize("q", [0.1, 0.45, 0.8, 1.2])
def test_shoot_against_independent_integrator(q):
    assert shoot(q, -1.0, L, dense=False).f == pytest.approx(_independent_f(q, -1.0, L), abs=1e-8)


def test_scan_agrees_with_adaptive_shots():
    qs = np.linspace(0.05, 1.3, 40)
    exact = np.array([shoot(q, -1.0, L, dense=False).f for q in qs])
    assert np.max(np.abs(scan_shooting(qs, -1.0, L) - exact)) < 1e-6


@given(st.floats(-5.0, -0.01))
def test_constant_is_a_root(lam):
    assert abs(shoot(math.sqrt(-lam / 2), lam, L, dense=False).f) <= 1e-10


def test_zero_is_a_root():
    r = shoot(0.0, -1.0, L)
    assert r.f == 0 and r.Q == 0


def test_vertex_jumps_are_imposed():
    r = shoot(0.6, -1.0, L)
    s1, s2, s3 = r.segments
    p1, d1, _ = s1(math.pi)
    p2, d2, _ = s2(-L)
    assert (p2, d2) == pytest.approx((p1, 2 * d1), abs=1e-14)
    p2, d2, _ = s2(L)
    p3, d3, _ = s3(-math.pi)
    assert (p3, d3) == pytest.approx((p2, 0.5 * d2), abs=1e-14)


def test_root_count_stable_under_refinement(shooting_roots):
    fine = find_standing_waves(-1.0, L, grid=4000)
    assert len(fine.roots) == len(shooting_roots.roots) == 45
    assert np.allclose([r.q for r in fine.roots], [r.q for r in shooting_roots.roots], atol=1e-10)
    assert not shooting_roots.gaps


def test_roots_are_refined(shooting_roots):
    qs = [r.q for r in shooting_roots.roots]
    assert qs == sorted(qs)
    assert all(abs(r.f) <= 1e-10 for r in shooting_roots.roots)
    assert any(abs(q - math.sqrt(0.5)) < 1e-10 for q in qs)


def test_roots_close_under_R2(shooting_roots):
    # the mirror image of a root starts from the value at the centre of e3
    roots = shooting_roots.roots
    qs = np.array([r.q for r in roots])
    # with phi -> -phi; images outside the scanned window cannot be checked
    checked = 0
    for r in roots:
        image = abs(float(r.segments[2](0.0)[0]))
        if not 1e-3 < image < 1.29:
            continue
        j = int(np.argmin(np.abs(qs - image)))
        assert abs(qs[j] - image) < 1e-7
        assert roots[j].Q == pytest.approx(r.Q, rel=1e-8)
        checked += 1
    assert checked >= len(roots) // 2


def test_incomplete_loop_energy_jump(shooting_roots):
    # phi2' = 2 phi1' at v1, so the energy can only increase into the bar
    for r in shooting_roots.roots:
        p, d, _ = r.segments[0](math.pi)
        e1 = 0.5 * d * d + 0.5 * (-1.0) * p * p + 0.5 * p ** 4
        p2, d2, _ = r.segments[1](-L)
        e2 = 0.5 * d2 * d2 + 0.5 * (-1.0) * p2 * p2 + 0.5 * p2 ** 4
        assert e1 <= e2 + 1e-12
        if abs(d) > 1e-6:
            assert e1 < e2


def test_shooting_roots_pass_oracle(shooting_roots):
    g = build_dumbbell(L)
    for r in shooting_roots.roots[::4]:
        rep = fd_oracle(g, r.edge_callables(), -1.0, 0.05)
        assert rep.passed
        assert rep.correction < 0.05


def test_oracle_rejects_non_solutions():
    g = build_dumbbell(L)
    funcs = [lambda x: 0.3 * np.cos(x), lambda x: np.full_like(x, -0.3), lambda x: 0.3 * np.cos(x)]
    rep = fd_oracle(g, funcs, -1.0, 0.05)
    assert rep.raw_residual > 1e-2


def test_richardson_power_converges():
    r = shoot(math.sqrt(0.5), -1.0, L)
    Q, reps = richardson_power(build_dumbbell(L), r.edge_callables(), -1.0)
    assert Q == pytest.approx(0.5 * (4 * math.pi + 2 * L), rel=1e-12)
    assert all(rep.passed for rep in reps)


# -- complete loops ------------------------------------------------------------


def test_triple_parse_and_format():
    t = SolutionTriple.parse("(1,Λ,-2)")
    assert t == SolutionTriple(1, LAM, -2)
    assert str(t) == "(1,Λ,-2)"
    assert SolutionTriple.parse("(0,L,0)").m == LAM


def test_existence_thresholds():
    star = (math.pi / (2 * L)) ** 2
    assert SolutionTriple(1, 0, 1).exists(0.99, L) and not SolutionTriple(1, 0, 1).exists(1.0, L)
    assert SolutionTriple(1, 1, 1).exists(star - 1e-9, L)
    assert not SolutionTriple(1, 1, 1).exists(star + 1e-9, L)
    assert SolutionTriple(-1, LAM, -1).exists(-0.5 - 1e-9, L)
    assert not SolutionTriple(-1, LAM, -1).exists(-0.5 + 1e-9, L)


def test_examples_at_half():
    got = {str(t) for t in enumerate_complete(0.5, L)}
    for s in ("(1,0,1)", "(0,0,1)", "(1,0,2)", "(2,0,2)"):
        assert s in got


def test_odd_dn_centre_breaks_reversal():
    t = SolutionTriple(1, -1, 2)
    assert not t.reversal_is_symmetry()
    assert t.canonical() == t and t.swapped().canonical() == t.swapped()
    lam = -3.0
    a, b = materialize(t, lam, L), materialize(t.swapped(), lam, L)
    assert a is not None and b is not None
    sys = make_system(dumbbell(L), 0.05)
    fa, fb = a.function(sys), b.function(sys)
    images = [fb] + [apply_symmetry(SymmetryOp(n), fb) for n in ("R1", "R2", "R3")]
    assert not any(fa.allclose(g, 1e-6) or fa.allclose(-g, 1e-6) for g in images)


@pytest.mark.parametrize("lam", [0.5, -0.4, -1.5, -3.0])
def test_complete_solutions_pass_oracle(lam):
    g = build_dumbbell(L)
    for t in enumerate_complete(lam, L):
        sol = materialize(t, lam, L)
        rep = fd_oracle(g, sol.edge_callables(), lam, 0.05)
        assert rep.passed, t
        # complete loops: the energy cannot increase into the bar
        assert sol.edge_energy(0) >= sol.edge_energy(1) - 1e-9
        assert sol.edge_energy(2) >= sol.edge_energy(1) - 1e-9


@settings(max_examples=25)
@given(st.floats(-6, 2), st.floats(0.01, 1.5), st.floats(0.3, 6))
def test_candidates_monotone_in_lam(lam, drop, Lb):
    hi = set(complete_candidates(lam, Lb))
    lo = set(complete_candidates(lam - drop, Lb))
    assert hi <= lo


def test_materializability_can_be_lost_at_a_fold():
    # a cn loop whose amplitude falls below the vertex value of a dn centre
    t = SolutionTriple(1, -1, 1)
    assert materialize(t, -5.0, 3.3) is not None
    assert materialize(t, -5.4, 3.3) is None
    assert t.exists(-5.4, 3.3)


def test_schedule_examples():
    sched = complete_bifurcation_schedule(L)
    key = {(str(e.child), e.lam) for e in sched}
    assert ("(1,0,1)", 1.0) in key
    assert ("(Λ,Λ,Λ)", 0.0) in key
    assert ("(-1,Λ,-1)", -0.5) in key
    lams = [e.lam for e in sched]
    assert lams == sorted(lams, reverse=True)


@pytest.mark.parametrize("Lb", [2.0, 3.3])
def test_schedule_children_materialize_below_threshold(Lb):
    for e in complete_bifurcation_schedule(Lb):
        for d in (1e-3, 0.05):
            assert materialize(e.child, e.lam - d, Lb) is not None, (e, d)
        if e.rule != 3:
            assert not e.child.exists(e.lam + 1e-6, Lb)


def test_orbit_sizes():
    sys = make_system(build_dumbbell(L), 0.05)
    lam = -1.0
    const = materialize(SolutionTriple(LAM, LAM, LAM), lam, L).function(sys)
    assert orbit_size(const) == 2
    one = materialize(SolutionTriple(1, 0, 0), 0.5, L).function(sys)
    assert orbit_size(one) > 2


# -- hybrids -------------------------------------------------------------------


@pytest.fixture(scope="module")
def hybrids_at_minus_one():
    return hybrid_solutions_at(-1.0, L)


def test_lollipop_tip_is_flat(hybrids_at_minus_one):
    q = hybrids_at_minus_one[0].q
    g, v, _ = lollipop_shot(q, -1.0, L)
    assert abs(g) < 1e-10


def test_hybrids_pass_oracle(hybrids_at_minus_one):
    sys = make_system(build_dumbbell(L), 0.05)
    assert hybrids_at_minus_one
    for rec in hybrids_at_minus_one:
        u = sys.from_function(rec.solution)
        v, _ = _newton(sys, u.copy(), -1.0, 1e-10, 30)
        assert np.max(np.abs(sys.residual(v, -1.0))) <= 1e-8
        # e1 and e2 are already grid solutions; only the analytic e3 wave moves, by O(h^2)
        assert np.max(np.abs(v - u)) < 1e-2
        assert rec.solution.inner(rec.solution) > 0.1


def test_hybrid_phases_are_mirror_images(hybrids_at_minus_one):
    recs = {(r.q, r.kind, r.n, r.descending): r for r in hybrids_at_minus_one}
    for (q, kind, n, desc), r in recs.items():
        other = recs.get((q, kind, n, not desc))
        if other is not None:
            p, o = r.solution, other.solution
            assert p.inner(p) == pytest.approx(o.inner(o), rel=1e-10)


def test_hybrid_band_edges_are_folds():
    branches = hybrid_waves((-1.5, -0.5), L, n_max=1, kinds=("cn",))
    sys = make_system(build_dumbbell(L), 0.05)
    folds = [(b, e) for b in branches for e in b.events]
    assert folds
    for b, e in folds:
        assert "fold" in e.tags
        # the two phases meet at the edge: their nearest points lie on the same side in lam
        ue = sys.from_function(e.solution)
        dist = [np.max(np.abs(sys.from_function(p.solution) - ue)) for p in b.points]
        i, j = np.argsort(dist)[:2]
        assert (b.points[i].lam - e.lam) * (b.points[j].lam - e.lam) >= 0
        v, _ = _newton(sys, ue.copy(), e.lam, 1e-10, 30)
        lmin = abs(nearest_eigs(sys, v, e.lam, 1)[0][0])
        p = b.points[len(b.points) // 4]
        u = sys.from_function(p.solution)
        w, _ = _newton(sys, u.copy(), p.lam, 1e-10, 30)
        assert lmin < 0.1 * abs(nearest_eigs(sys, w, p.lam, 1)[0][0])
    assert all(p.Q > 0.1 for b in branches for p in b.points)
