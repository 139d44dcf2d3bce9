import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgraph.discretize import DiscreteSystem, constant_solution, make_system, power, snapshot_rows
from qgraph.elliptic import quantize_loop
from qgraph.graphs import SymmetryOp, apply_symmetry, build_dumbbell, build_interval, build_lollipop
from qgraph.spectrum import fd_eigenmodes

from conftest import dumbbell

SYS = make_system(build_dumbbell(2.0), 0.1, 16)
SYS_ONE = make_system(build_dumbbell(2.0), 0.1, 16, stencil="one-sided")


def _loop_wave_solution(sys, lam):
    """cn wave on e1 vanishing at the vertex, zero elsewhere: an exact solution."""
    w = quantize_loop(lam, 1, "cn").with_value_at(-math.pi, 0.0, descending=False)
    return sys.sample([w, 0.0, 0.0])


@pytest.mark.parametrize("sys", [SYS, SYS_ONE], ids=["ghost", "one-sided"])
def test_trivial_and_constant_solutions(sys):
    assert np.all(sys.residual(np.zeros(sys.size), 0.7) == 0)
    for lam in (-0.1, -1.0, -4.0):
        c = constant_solution(lam)
        assert np.max(np.abs(sys.residual(np.full(sys.size, c), lam))) <= 1e-12


def test_constant_solution_domain():
    assert constant_solution(0.0) == 0.0
    with pytest.raises(ValueError):
        constant_solution(0.1)


@pytest.mark.parametrize("stencil", ["ghost", "one-sided"])
def test_residual_second_order(stencil):
    lam = -0.5
    res = []
    for h in (0.04, 0.02, 0.01):
        sys = make_system(build_dumbbell(2.0), h, stencil=stencil)
        res.append(np.max(np.abs(sys.residual(_loop_wave_solution(sys, lam), lam))))
    ratios = [res[0] / res[1], res[1] / res[2]]
    assert all(3.5 < r < 4.5 for r in ratios), ratios


@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 1))
def test_jacobian_matches_central_differences(seed, lam):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=SYS.size)
    d = rng.normal(size=SYS.size)
    eps = 1e-6
    fd = (SYS.residual(u + eps * d, lam) - SYS.residual(u - eps * d, lam)) / (2 * eps)
    ex = SYS.jacobian(u, lam) @ d
    assert np.max(np.abs(fd - ex)) <= 1e-6 * max(1.0, np.max(np.abs(ex)))
    dl = (SYS.residual(u, lam + eps) - SYS.residual(u, lam - eps)) / (2 * eps)
    assert np.allclose(dl, SYS.d_lam(u), atol=1e-7)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["R1", "R2", "R3"]), st.floats(-3, 1))
def test_residual_equivariant(seed, name, lam):
    sys = make_system(build_dumbbell(2.0), 0.1, 16)
    rng = np.random.default_rng(seed)
    u = rng.normal(size=sys.size)
    op = SymmetryOp(name)
    Ru = sys.from_function(apply_symmetry(op, sys.to_function(u)))
    lhs = sys.residual(Ru, lam)
    rhs = sys.from_function(apply_symmetry(op, sys.to_function(sys.residual(u, lam))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(lhs)))


def test_ghost_stencil_is_self_adjoint():
    A = (SYS.jacobian(np.linspace(-1, 1, SYS.size), -0.3)).toarray()
    MA = SYS.weights[:, None] * A
    assert np.max(np.abs(MA - MA.T)) <= 1e-12 * np.max(np.abs(MA))


def test_constant_jacobian_spectrum_shift():
    # J at the constant branch is the Laplacian shifted by 2*lam
    lam = -0.8
    c = constant_solution(lam)
    J = SYS.jacobian(np.full(SYS.size, c), lam).toarray()
    ev = np.sort(np.linalg.eigvals(J).real)[:8]
    lap = np.array([l for l, _ in fd_eigenmodes(SYS, count=8)])
    assert np.allclose(ev, lap + 2 * lam, atol=1e-9)


@given(st.floats(0.1, 10), st.floats(-5, 0))
def test_power_of_constant(L, lam):
    sys = make_system(dumbbell(L), 0.2, 16)
    c = constant_solution(lam)
    assert power(sys.to_function(np.full(sys.size, c))) == pytest.approx(
        c * c * (4 * math.pi + 2 * L), rel=1e-12, abs=1e-15)


def test_layout_round_trip():
    u = np.random.default_rng(0).normal(size=SYS.size)
    assert np.array_equal(SYS.from_function(SYS.to_function(u)), u)
    with pytest.raises(ValueError):
        SYS.residual(np.zeros(SYS.size + 1), 0.0)


def test_resampling_between_grids():
    coarse = make_system(build_dumbbell(2.0), 0.1, 16)
    fine = make_system(build_dumbbell(2.0), 0.05, 16)
    u = coarse.sample([np.cos, -1.0, np.cos])
    v = fine.from_function(coarse.to_function(u))
    assert fine.to_function(v).vertex_mismatch() == 0
    assert np.max(np.abs(v - fine.sample([np.cos, -1.0, np.cos]))) < 5e-3


def test_lollipop_tip_is_neumann():
    sys = make_system(build_lollipop(1.0), 0.01)
    lams = [l for l, _ in fd_eigenmodes(sys, count=3)]
    assert lams[0] == pytest.approx(0.0, abs=1e-10)


def test_interval_neumann_eigenvalues():
    sys = make_system(build_interval(math.pi), 0.01)
    lams = [l for l, _ in fd_eigenmodes(sys, count=4)]
    assert np.allclose(lams, [0, 1, 4, 9], atol=2e-3)


def test_bad_stencil_and_sizes():
    with pytest.raises(ValueError):
        DiscreteSystem(build_interval(1.0), (8,), stencil="upwind")
    with pytest.raises(ValueError):
        DiscreteSystem(build_interval(1.0), (1,))


def test_snapshot_rows_cover_every_sample():
    rows = list(snapshot_rows(SYS.to_function(np.zeros(SYS.size))))
    assert len(rows) == sum(n + 1 for n in SYS.intervals)
    assert {r[0] for r in rows} == {"e1", "e2", "e3"}
