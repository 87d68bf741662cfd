import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hslab import exponents as ex
from hslab.errors import DivergentIntegral, DomainError
from hslab.kernel import angular_kernel_array, get_profile
from hslab.radial import RadialField, TailModel, make_grid
from hslab.solver import (SolutionBundle, SolverOptions, Status, ansatz, apply_T1, apply_T2,
                          operator_residuals, output_tail, rescale, solve)

A = (3 / (4 * math.pi)) ** 0.25


def bubble(r, lam=1.0):
    return A * math.sqrt(lam) * (1 + (lam * r) ** 2) ** -0.5


def interior(grid, lo=1e-2, hi=1e2):
    return (grid.r >= lo) & (grid.r <= hi)


def test_bubble_reproduced_by_both_operators(bubble_params, grid):
    b = RadialField.from_function(grid, bubble, theta=1.0)
    sel = interior(grid)
    for op in (apply_T1, apply_T2):
        out = op(b, bubble_params, grid=grid)
        assert np.max(np.abs(out.values[sel] / b.values[sel] - 1)) <= 1e-6
        assert out.tail.theta == 1.0 and out.tail.log_power == 0.0


def test_operator_against_direct_quadrature(grid):
    # independent route: scipy quad over s with the kernel from direct angular quadrature
    from scipy import integrate
    P = ex.validate(4, 2.5, 2.0, 2.0, 0.5, 0.3, for_solver=True)
    f = lambda s: (1 + s * s) ** -2.0
    v = RadialField.from_function(grid, f, theta=4.0)
    u = apply_T1(v, P, grid=grid)
    for r in (0.05, 1.0, 7.0):
        def integrand(s):
            k = r ** (P.alpha - P.n) * angular_kernel_array(P.n, P.alpha, np.array([s / r]))[0]
            return k * f(s) ** P.q * s ** (P.n - 1 - P.sigma1)
        ref = sum(integrate.quad(integrand, a, b, epsabs=0, epsrel=1e-10, limit=200)[0]
                  for a, b in ((0, r), (r, 10 * r), (10 * r, np.inf)))
        assert float(u(r)) == pytest.approx(ref, rel=2e-5)


def test_divergent_input_tail(bubble_params, grid):
    # q theta <= alpha - sigma1 makes the far field diverge
    v = RadialField.from_function(grid, lambda r: (1 + r * r) ** -0.2, theta=0.4)
    with pytest.raises(DivergentIntegral):
        apply_T1(v, bubble_params, grid=grid)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 6.0), st.floats(0.5, 6.0), st.floats(0.0, 1.9))
def test_power_counting(theta, power, sigma):
    n, alpha = 3, 2.0
    th, lp = output_tail(n, alpha, TailModel(1.0, theta), power, sigma)
    far = power * theta - (alpha - sigma)
    if abs(far - (n - alpha)) <= 1e-9:
        assert th == n - alpha and lp == 1.0
    else:
        assert th == pytest.approx(min(n - alpha, far))
        assert lp == 0.0


def test_fast_v_laws(grid):
    for tup, case in (((6, 2.0, 1.2, 3.0, 0.0, 0.0), ex.VCase.ANOMALOUS),
                      ((5, 2.0, 5.0 / 3.0, 3.0, 0.0, 0.0), ex.VCase.LOG),
                      ((5, 2.0, 2.0, 3.0, 0.0, 0.0), ex.VCase.PLAIN)):
        P = ex.validate(*tup, for_solver=True)
        d = ex.derive(P)
        u, _ = ansatz(P, "fast", grid)
        v = apply_T2(u, P, grid=grid)
        assert d.v_case is case
        assert v.tail.theta == pytest.approx(d.fast_v, abs=1e-9)
        assert v.tail.log_flag is (case is ex.VCase.LOG)


def test_rescale_identity_and_validation(bubble_params, grid):
    u, v = ansatz(bubble_params, "bubble", grid)
    u1, v1 = rescale(u, v, bubble_params, 1.0)
    assert np.array_equal(u1.values, u.values) and np.array_equal(v1.values, v.values)
    with pytest.raises(DomainError):
        rescale(u, v, bubble_params, 0.0)


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.7])
def test_rescale_stays_in_bubble_family(bubble_params, grid, lam):
    u, v = ansatz(bubble_params, "bubble", grid)
    ul, _ = rescale(u, v, bubble_params, lam)
    sel = interior(grid)
    assert np.allclose(ul.values[sel], bubble(grid.r[sel], lam), rtol=1e-8)


@pytest.mark.parametrize("tup", [(3, 2.0, 5.0, 5.0, 0.0, 0.0), (4, 2.5, 2.0, 3.0, 0.7, 0.2)])
@pytest.mark.parametrize("lam", [0.5, 3.0])
def test_rescale_commutes_with_operators(grid, tup, lam):
    P = ex.validate(*tup, for_solver=True)
    u, v = ansatz(P, "fast", grid)
    sel = interior(grid, 1e-2, 1e2)
    ru, rv = rescale(u, v, P, lam)
    lhs = apply_T1(rv, P, grid=grid)
    rhs, _ = rescale(apply_T1(v, P, grid=grid), v, P, lam)
    assert np.max(np.abs(lhs.values[sel] / rhs.values[sel] - 1)) <= 1e-6
    lhs = apply_T2(ru, P, grid=grid)
    _, rhs = rescale(u, apply_T2(u, P, grid=grid), P, lam)
    assert np.max(np.abs(lhs.values[sel] / rhs.values[sel] - 1)) <= 1e-6


def test_exact_bubble_with_full_step(bubble_params, grid):
    opts = SolverOptions(omega=1.0)
    b = solve(bubble_params, "bubble", opts, grid=grid)
    assert b.status is Status.CONVERGED
    assert b.iterations <= 3
    assert max(b.operator_residuals) <= 10 * opts.tol


def test_converged_bubble_properties(bubble_bundle):
    b = bubble_bundle
    opts = b.options
    assert max(b.operator_residuals) <= 10 * opts.tol
    assert b.u.positive and b.v.positive
    assert b.u.is_monotone_decreasing() and b.v.is_monotone_decreasing()
    # scaling aligned comparison with the exact family
    lam = (b.u.head[0] / A) ** 2
    sel = interior(b.grid)
    assert np.max(np.abs(b.u.values[sel] / bubble(b.grid.r[sel], lam) - 1)) <= 1e-6
    # lower-bound laws on [1, r_max]
    tail = b.grid.r >= 1
    r = b.grid.r[tail]
    assert np.min(b.u.values[tail] * (1 + r)) > 0.1
    assert np.min(b.v.values[tail] * (1 + r)) > 0.1


def test_solve_equivariant_under_rescaled_init(bubble_params, grid):
    u, v = ansatz(bubble_params, "fast", grid)
    a = solve(bubble_params, (u, v), grid=grid)
    ru, rv = rescale(u, v, bubble_params, 2.5)
    b = solve(bubble_params, (ru, rv), grid=grid)
    assert a.converged and b.converged
    la = (a.u.head[0] / A) ** 2
    lb = (b.u.head[0] / A) ** 2
    sel = interior(grid)
    ua, _ = rescale(a.u, a.v, bubble_params, lb / la)
    assert np.max(np.abs(ua.values[sel] / b.u.values[sel] - 1)) <= 1e-2


def test_weighted_critical_case_converges(grid):
    P = ex.validate(3, 2.0, 4.0, 4.0, 0.5, 0.5, for_solver=True)
    assert ex.classify(P).kind is ex.RegimeKind.CRITICAL
    b = solve(P, "fast", grid=grid)
    assert b.status is Status.CONVERGED
    assert max(b.operator_residuals) <= 10 * b.options.tol
    assert b.u.is_monotone_decreasing()


def test_subcritical_never_converges(grid):
    P = ex.validate(3, 2.0, 4.0, 4.0, 0.0, 0.0, for_solver=True)
    for init in ("slow", "fast"):
        b = solve(P, init, grid=grid)
        assert b.status in (Status.COLLAPSE, Status.BLOWUP, Status.MAX_ITERATIONS)
        assert b.cause
        assert len(b.residual_trace) == b.iterations


def test_max_iterations_status(bubble_params, grid):
    b = solve(bubble_params, "slow", SolverOptions(max_iterations=3), grid=grid)
    assert b.status is Status.MAX_ITERATIONS
    assert b.iterations == 3


def test_divergent_init_reported_as_status(bubble_params, grid):
    f = lambda r: (1 + r * r) ** -0.1
    init = (RadialField.from_function(grid, f, theta=0.2),
            RadialField.from_function(grid, f, theta=0.2))
    b = solve(bubble_params, init, grid=grid)
    assert b.status is Status.BLOWUP
    assert "divergent" in b.cause


def test_positivity_every_step(bubble_params, grid):
    for k in (1, 2, 5):
        b = solve(bubble_params, "slow", SolverOptions(max_iterations=k), grid=grid)
        assert b.u.positive and b.v.positive


@pytest.mark.parametrize("kw", [dict(omega=0.0), dict(omega=1.5), dict(tol=0.0),
                                dict(max_iterations=0), dict(pivot=-1.0),
                                dict(blowup=0.5), dict(drift_tol=-1.0)])
def test_options_validated(kw):
    with pytest.raises(DomainError):
        SolverOptions(**kw)


def test_solver_rejects_bad_inputs(grid):
    P = ex.validate(3, 0.8, 5.0, 5.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        solve(P, "fast", grid=grid)
    Q = ex.validate(3, 2.0, 5.0, 5.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        ansatz(Q, "gaussian", grid)
    other = make_grid(1e-3, 1e3, 256)
    with pytest.raises(DomainError):
        solve(Q, ansatz(Q, "fast", other), grid=grid)


def test_bundle_json_roundtrip(bubble_bundle):
    d = json.loads(json.dumps(bubble_bundle.to_dict()))
    assert d["schema_version"] == 1 and d["status"] == "Converged"
    assert {"residual_trace", "params", "grid", "u", "v"} <= set(d)
    back = SolutionBundle.from_dict(d)
    assert back.status is Status.CONVERGED
    assert np.array_equal(back.u.values, bubble_bundle.u.values)
    assert back.params == bubble_bundle.params
    d["schema_version"] = 99
    with pytest.raises(DomainError):
        SolutionBundle.from_dict(d)


def test_operator_residuals_of_exact_bubble(bubble_params, grid):
    u, v = ansatz(bubble_params, "bubble", grid)
    r1, r2 = operator_residuals(bubble_params, u, v, get_profile(3, 2.0))
    assert r1 <= 1e-8 and r2 <= 1e-8


@pytest.mark.parametrize("N", [256, 512])
def test_coarse_grid_converges_despite_scaling_drift(bubble_params, N):
    # coarse grids leave a steady per-sweep pin; the shape is still a fixed point
    g = make_grid(1e-4, 1e4, N)
    b = solve(bubble_params, "fast", grid=g)
    assert b.status is Status.CONVERGED
    assert max(b.operator_residuals) <= 1e-6


def test_drift_bound_blocks_convergence(bubble_params):
    g = make_grid(1e-4, 1e4, 256)
    b = solve(bubble_params, "fast", SolverOptions(drift_tol=0.0, max_iterations=50), grid=g)
    assert b.status is Status.MAX_ITERATIONS
