import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgraph.discretize import make_system
from qgraph.graphs import build_dumbbell, build_interval
from qgraph.spectrum import (LOOP, LinearMode, classify_fd_mode, epsilon_expansion_check,
                             fd_eigenmodes, find_modes, first_mode, loop_wavenumber, secular_determinant,
                             secular_factors)

from conftest import dumbbell


def test_linear_mode_validation():
    with pytest.raises(ValueError):
        LinearMode(1.5, LOOP, 2)
    with pytest.raises(ValueError):
        LinearMode(1.0, LOOP, 1)
    with pytest.raises(ValueError):
        LinearMode(0.5, "constant")
    with pytest.raises(ValueError):
        LinearMode(1.0, "radial")
    assert LinearMode(2.0, LOOP, 2).lam == 4.0


def test_dumbbell_modes_L2():
    modes, resonant = find_modes(2.0, 2.5)
    assert not resonant
    assert modes[0] == LinearMode(0.0, "constant")
    loops = [m for m in modes if m.family == LOOP]
    assert [m.k for m in loops] == [1.0, 2.0]
    assert all(m.multiplicity == 2 for m in loops)
    assert [m.k for m in modes] == sorted(m.k for m in modes)


@given(st.floats(0.3, 6.0))
def test_factored_roots_are_scattering_roots(L):
    # dual route: factored secular equation against det(I - S D(k))
    modes, _ = find_modes(L, 4.0)
    for m in modes:
        if m.family in ("even", "odd"):
            which = 0 if m.family == "even" else 1
            assert abs(secular_factors(m.k, L)[which]) <= 1e-9
            assert abs(secular_determinant(m.k, L)) <= 1e-7


def test_determinant_nonzero_between_modes():
    L = 2.0
    ks = sorted(m.k for m in find_modes(L, 4.0)[0])
    mids = [(a + b) / 2 for a, b in zip(ks, ks[1:]) if b - a > 1e-3]
    assert all(abs(secular_determinant(k, L)) > 1e-3 for k in mids)


def test_resonance_reported():
    modes, resonant = find_modes(math.pi, 3.5)
    assert resonant
    assert any(m.resonant for m in modes)


def test_find_modes_arguments():
    with pytest.raises(ValueError):
        find_modes(2.0, 0.0)
    with pytest.raises(ValueError):
        find_modes(-1.0, 2.0)
    assert first_mode(2.0, "odd") == pytest.approx(
        [m.k for m in find_modes(2.0, 3)[0] if m.family == "odd"][0])


def test_fd_modes_match_secular_with_family():
    L = 2.0
    sys = make_system(build_dumbbell(L), 0.02)
    fd = fd_eigenmodes(sys, count=8)
    modes = [m for m in find_modes(L, 3.0)[0]]
    expected = sorted([(m.k ** 2, m.family) for m in modes for _ in range(m.multiplicity)])[:8]
    for (lam, phi), (lam_ex, fam) in zip(fd, expected):
        assert lam == pytest.approx(lam_ex, abs=5e-3)
        if fam != LOOP:
            assert classify_fd_mode(phi) == fam


def test_fd_convergence_rate():
    L = 2.0
    k_odd = first_mode(L, "odd")
    errs = []
    for h in (0.04, 0.02):
        lam = [l for l, _ in fd_eigenmodes(make_system(build_dumbbell(L), h), count=4)]
        errs.append(min(abs(l - k_odd ** 2) for l in lam))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_fd_modes_are_normalised():
    sys = make_system(build_interval(2.0), 0.05)
    for lam, phi in fd_eigenmodes(sys, count=3):
        assert phi.inner(phi) == pytest.approx(1.0, rel=1e-12)


def test_fd_requires_resolution():
    with pytest.raises(ValueError):
        fd_eigenmodes(make_system(build_interval(1.0), 0.5, 4))


@pytest.mark.parametrize("parity", ["even", "odd"])
def test_epsilon_series_fourth_order(parity):
    errs = [abs(np.subtract(*epsilon_expansion_check(1, parity, e))) for e in (0.02, 0.01)]
    assert math.log2(errs[0] / errs[1]) > 3.7


def test_epsilon_arguments():
    with pytest.raises(ValueError):
        epsilon_expansion_check(1, "even", 0.5)
    with pytest.raises(ValueError):
        epsilon_expansion_check(1, "mixed", 0.01)
    assert loop_wavenumber(1, 0.01) == pytest.approx(200 * math.pi)
