import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.grid import ParabolicCylinder
from stefanlab.operators import EllipticOperatorSpec
from stefanlab.solver import (
    CFLError,
    DirichletProblem,
    cfl_limit,
    comparison_check,
    discrete_residual,
    growth_bound_certify,
    solve_dirichlet,
)

BALL = ParabolicCylinder((0.0, 0.0), 1.0, 0.0, 0.1)


def quad_trace(x, t):
    return np.sum(x * x, axis=-1) + 2 * x.shape[-1] * t


def augmented(K):
    # |x|^2 + (2n/K) t + e^{-t/K} cos x1: convex, so M^-_K acts as Delta / K
    def u(x, t):
        n = x.shape[-1]
        return np.sum(x * x, axis=-1) + 2 * n / K * t + np.exp(-t / K) * np.cos(x[..., 0])
    return u


def max_error(field, exact):
    x = field.nodes()
    return max(float(np.abs(field.values[k] - exact(x, t))[field.mask[k]].max())
               for k, t in enumerate(field.times))


def test_linear_data_is_stationary():
    prob = DirichletProblem(EllipticOperatorSpec("trace"), BALL, lambda x, t: x[..., 0], h=1 / 32)
    f = solve_dirichlet(prob)
    assert max_error(f, lambda x, t: x[..., 0]) < 1e-10


def test_quadratic_solutions_are_reproduced():
    prob = DirichletProblem(EllipticOperatorSpec("trace"), BALL, quad_trace, h=1 / 64)
    assert max_error(solve_dirichlet(prob), quad_trace) < 1e-3
    K = 2.0

    def convex(x, t):
        return np.sum(x * x, axis=-1) + 2 * x.shape[-1] / K * t

    prob = DirichletProblem(EllipticOperatorSpec("pucci_minus", K), BALL, convex, h=1 / 64)
    assert max_error(solve_dirichlet(prob), convex) < 1e-3


@pytest.mark.parametrize("kind,K", [("trace", 1.0), ("pucci_minus", 2.0)])
def test_refinement_ratio(kind, K):
    exact = augmented(K)
    errs = []
    for h in (1 / 16, 1 / 32):
        prob = DirichletProblem(EllipticOperatorSpec(kind, K), BALL, exact, h=h)
        errs.append(max_error(solve_dirichlet(prob), exact))
    assert errs[0] / errs[1] >= 3


def test_cfl_guard():
    with pytest.raises(CFLError):
        DirichletProblem(EllipticOperatorSpec("pucci_plus", 2.0), BALL, quad_trace, h=0.1, dt=0.01)
    assert cfl_limit(0.1, 2, 2.0) == pytest.approx(0.01 / 16)


def test_discrete_residual_vanishes_when_every_step_is_stored():
    prob = DirichletProblem(EllipticOperatorSpec("pucci_plus", 2.0), BALL,
                            lambda x, t: np.cos(2 * x[..., 0]) * x[..., 1], h=1 / 16, keep_every=1)
    f = solve_dirichlet(prob)
    assert discrete_residual(f, prob.operator) <= 1e-8


def _pair(kind, seed, h=1 / 16):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=4)
    bump = abs(rng.normal())
    s1, ds = rng.normal(), abs(rng.normal())
    op = EllipticOperatorSpec(kind, 1.0 if kind == "trace" else float(rng.uniform(1, 3)))
    dom = ParabolicCylinder((0.0, 0.0), 1.0, 0.0, 0.05)

    def d1(x, t):
        return c[0] * x[..., 0] ** 2 + c[1] * np.sin(3 * x[..., 1]) + c[2] * x[..., 0] * x[..., 1] + c[3] * t

    def d2(x, t):
        return d1(x, t) + bump * (1 + x[..., 0] ** 2)

    p1 = DirichletProblem(op, dom, d1, lambda x, t: s1, h=h)
    p2 = DirichletProblem(op, dom, d2, lambda x, t: s1 + ds, h=h)
    return p1, p2


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.sampled_from(["trace", "pucci_plus", "pucci_minus"]))
def test_ordered_inputs_stay_ordered(seed, kind):
    p1, p2 = _pair(kind, seed)
    assert comparison_check(p1, p2).passed


def test_comparison_examples():
    p1, _ = _pair("pucci_plus", 0)
    assert comparison_check(p1, p1).min_difference == 0.0
    shifted = DirichletProblem(p1.operator, p1.domain, lambda x, t: p1.boundary_data(x, t) + 1,
                               p1.source, h=p1.h)
    assert comparison_check(p1, shifted).min_difference >= 1 - 1e-8
    other = DirichletProblem(p1.operator, p1.domain, p1.boundary_data, h=1 / 8)
    with pytest.raises(ValueError):
        comparison_check(p1, other)


@pytest.mark.parametrize("s", [0.0, 0.3, 2.0])
def test_constant_source_gap(s):
    op = EllipticOperatorSpec("pucci_minus", 2.0)

    def data(x, t):
        return np.cos(x[..., 0]) * np.sin(x[..., 1] + 1)

    p1 = DirichletProblem(op, BALL, data, lambda x, t: 0.0, h=1 / 16)
    p2 = DirichletProblem(op, BALL, data, lambda x, t: s, h=1 / 16)
    rep, u1, u2 = comparison_check(p1, p2, return_fields=True)
    span = BALL.t_end - BALL.t_start
    assert np.max(np.abs(u2.values - u1.values)) <= s * span + 1e-8
    assert rep.passed


def test_growth_bound_examples():
    base = growth_bound_certify(1.0, 1.0, 0.0, 1 / 128, n=1)
    assert 1.0 <= base.C <= 1.2 and base.certified
    assert growth_bound_certify(0.0, 1.0, 0.0, 1 / 32, n=1).C == 0.0
    sink = growth_bound_certify(1.0, 1.0, -0.1, 1 / 128, n=1)
    assert sink.C <= base.C
