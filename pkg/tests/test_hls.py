import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslab.errors import DivergentIntegral, DomainError
from hslab.hls import (HlsIndices, check_indices, dilate, dilation_test, j_functional,
                       lebesgue_norm, potential)
from hslab.radial import RadialField, make_grid

SOBOLEV = HlsIndices(3, 2.0, 0.0, 0.0, 1.2, 1.2)
WEIGHTED = HlsIndices.conjugate(4, 1.5, 0.4, 0.2, 2.5)


def extremal(grid):
    # -Lap (1+r^2)^-1/2 = 3 (1+r^2)^-5/2 in R^3
    return RadialField.from_function(grid, lambda r: (1 + r * r) ** -2.5, theta=5.0)


def bump(grid, theta=6.0):
    return RadialField.from_function(grid, lambda r: (1 + r * r) ** (-theta / 2), theta=theta)


def test_sobolev_indices_valid():
    chk = check_indices(SOBOLEV)
    assert chk.valid and chk.failures == () and chk.relation_residual <= 1e-15


def test_weight_too_large_is_named():
    ix = HlsIndices.conjugate(3, 2.0, 1.8, 0.0, 2.0)
    chk = check_indices(ix)
    assert not chk.valid
    assert "sigma1/n < 1 - 1/r" in chk.failures


def test_weights_exceeding_alpha_rejected():
    ix = HlsIndices(3, 2.0, 1.5, 1.0, 2.0, 2.0)
    assert "0 <= sigma1 + sigma2 <= alpha" in check_indices(ix).failures


def test_relation_violation_rejected():
    ix = HlsIndices(3, 2.0, 0.0, 0.0, 1.2, 1.3)
    chk = check_indices(ix)
    assert not chk.valid and chk.relation_residual > 1e-3


def test_conjugate_without_solution():
    with pytest.raises(DomainError):
        HlsIndices.conjugate(3, 2.0, 1.0, 1.0, 0.9)


def test_potential_closed_form(grid):
    t = potential(extremal(grid), 3, 2.0, 0.0)
    sel = (grid.r > 1e-2) & (grid.r < 1e2)
    exact = 4 * math.pi / 3 * (1 + grid.r[sel] ** 2) ** -0.5
    assert np.max(np.abs(t.values[sel] / exact - 1)) <= 1e-6
    assert t.tail.theta == 1.0


def test_j_closed_form(grid):
    # J = (4 pi / 3) 4 pi int r^2 (1+r^2)^-3 dr = pi^3 / 3
    assert j_functional(extremal(grid), extremal(grid), SOBOLEV) == pytest.approx(
        math.pi ** 3 / 3, rel=1e-5)


def test_lebesgue_norm_closed_form(grid):
    f = RadialField.from_function(grid, lambda r: (1 + r * r) ** -0.5, theta=1.0)
    assert lebesgue_norm(f, 3, 6.0) == pytest.approx((math.pi ** 2 / 4) ** (1 / 6), rel=1e-6)


@pytest.mark.parametrize("ix", [SOBOLEV, WEIGHTED], ids=["plain", "weighted"])
def test_dilation_invariance(grid, ix):
    rep = dilation_test(bump(grid), bump(grid, 7.0), ix)
    assert rep.variation <= 1e-6
    assert rep.to_dict()["lambdas"] == [0.5, 1.0, 2.0, 4.0]


def test_swap_symmetry(grid):
    f, g = bump(grid), bump(grid, 7.0)
    ix = WEIGHTED
    sw = HlsIndices(ix.n, ix.alpha, ix.sigma2, ix.sigma1, ix.s, ix.r)
    assert check_indices(sw).valid
    assert j_functional(f, g, ix) == pytest.approx(j_functional(g, f, sw), rel=1e-8)


def test_monotone_in_f(grid):
    f, g = bump(grid), bump(grid, 7.0)
    bigger = RadialField.from_function(grid, lambda r: (1 + r * r) ** -3 + 0.1 * (1 + r) ** -8,
                                       theta=6.0)
    assert j_functional(bigger, g, WEIGHTED) > j_functional(f, g, WEIGHTED)


def test_invalid_indices_raise(grid):
    with pytest.raises(DomainError):
        j_functional(bump(grid), bump(grid), HlsIndices(3, 2.0, 1.5, 1.0, 2.0, 2.0))


def test_grids_must_match(grid):
    other = make_grid(1e-3, 1e3, 256)
    with pytest.raises(DomainError):
        j_functional(bump(grid), bump(other), SOBOLEV)


def test_slow_tail_diverges(grid):
    slow = RadialField.from_function(grid, lambda r: (1 + r * r) ** -0.5, theta=1.0)
    with pytest.raises(DivergentIntegral) as e:
        j_functional(slow, slow, SOBOLEV)
    assert e.value.endpoint == "infinity"


def test_dilate_matches_pointwise(grid):
    f = bump(grid)
    d = dilate(f, 2.0)
    sel = (grid.r > 1e-3) & (grid.r < 1e2)
    assert np.allclose(d.values[sel], (1 + 4 * grid.r[sel] ** 2) ** -3, rtol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0))
def test_homogeneity(c):
    g = make_grid(1e-4, 1e4, 512)
    f = bump(g)
    cf = RadialField.from_function(g, lambda r: c * (1 + r * r) ** -3, theta=6.0)
    assert j_functional(cf, f, SOBOLEV) == pytest.approx(c * j_functional(f, f, SOBOLEV), rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 8), st.floats(0.05, 0.95), st.floats(0, 1), st.floats(0, 1),
       st.floats(1.05, 10.0))
def test_conjugate_satisfies_relation(n, af, w1, w2, r):
    alpha = af * n
    s1, s2 = w1 * alpha / 2, w2 * alpha / 2
    try:
        ix = HlsIndices.conjugate(n, alpha, s1, s2, r)
    except DomainError:
        return
    assert check_indices(ix).relation_residual <= 1e-12
