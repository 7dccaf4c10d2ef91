import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.geometry import (
    FitError,
    FlatnessError,
    NondegSpec,
    exponents,
    fit_trapping,
    g_convexity,
    hopf_lower_bound,
    lipschitz_equivalence_check,
    measure_flatness,
    mollifier_c1,
    mollify_coefficient,
    nondeg_integral,
    nondeg_pointwise,
    p0_mean,
    sample_directions,
    weak_harnack_check,
)
from stefanlab.grid import ParabolicCylinder, SpaceTimeField
from stefanlab.operators import EllipticOperatorSpec
from stefanlab.stefan import FrontGraph, MovingPlane, SpaceTimeSolution, StefanScenario, traveling_wave


def box_field(fn, h=1 / 32, radius=1.0, t0=0.0, t1=0.25, dt=1 / 64, center=(0.0, 0.0)):
    dom = ParabolicCylinder(center, radius, t0, t1)
    return SpaceTimeField.from_function(fn, dom, h, dt)


def graph_pair(s_fn, h=1 / 64, radius=1.25, nt=3, dt=0.01):
    """Field ``(x_n - s(x1))^+`` and its front on a square box."""
    fld = box_field(lambda x, t: np.maximum(x[..., 1] - s_fn(x[..., 0], t), 0.0), h=h, radius=radius,
                    t1=dt * (nt - 1), dt=dt)
    xs = fld.coords(0)
    heights = np.stack([s_fn(xs, t) for t in fld.times])
    return FrontGraph(heights, fld.lower[:1], h, fld.t0, dt), fld


# -- flatness --------------------------------------------------------------------

def test_flat_plane():
    front, fld = graph_pair(lambda x1, t: 0 * x1)
    rep = measure_flatness(front, fld, (0.0, 0.0), 1.0)
    assert rep.epsilon == 0.0
    np.testing.assert_allclose(rep.nu, [0, 1], atol=1e-15)


def test_flatness_of_a_sine():
    front, fld = graph_pair(lambda x1, t: 0.05 * np.sin(2 * np.pi * x1))
    rep = measure_flatness(front, fld, (0.0, 0.0), 1.0)
    assert rep.epsilon == pytest.approx(0.05, abs=2 * fld.h * 0.05 + 1e-3)
    np.testing.assert_allclose(rep.nu, [0, 1], atol=1e-12)
    # brute force over the sampled directions: nothing beats e_n
    pts = np.stack([front.coords()[..., 0], front.heights[0]], axis=-1)
    pts = pts[np.linalg.norm(pts, axis=-1) < 1.0]
    proj = pts @ sample_directions(2).T
    widths = 0.5 * (proj.max(axis=0) - proj.min(axis=0))
    assert widths.min() >= rep.epsilon - 1e-12


def test_flatness_of_a_tilt(frozen):
    front, fld = graph_pair(lambda x1, t: 0.3 * x1)
    rep = measure_flatness(front, fld, (0.0, 0.0), 1.0)
    assert rep.epsilon <= 0.01
    np.testing.assert_allclose(rep.nu, frozen["tilted_plane_nu"], atol=5e-3)


def test_flatness_sign_conditions():
    # positivity below the front turns the normal around
    front, fld = graph_pair(lambda x1, t: 0 * x1)
    flipped = fld.with_values(np.maximum(-fld.nodes()[..., 1], 0.0)[None].repeat(fld.nt, 0))
    rep = measure_flatness(front, flipped, (0.0, 0.0), 1.0, direction_samples=90)
    np.testing.assert_allclose(rep.nu, [0, -1], atol=1e-12)
    # positive on both sides: no direction is admissible
    both = fld.with_values(np.abs(fld.nodes()[..., 1])[None].repeat(fld.nt, 0))
    with pytest.raises(FlatnessError):
        measure_flatness(front, both, (0.0, 0.0), 1.0, direction_samples=90)


def test_fixed_offset_is_never_thinner():
    front, fld = graph_pair(lambda x1, t: 0.05 + 0.02 * np.cos(3 * x1) - 0.1 * t)
    free = measure_flatness(front, fld, (0.0, 0.0), 1.0)
    pinned = measure_flatness(front, fld, (0.0, 0.0), 1.0, free_offset=False)
    assert pinned.epsilon >= free.epsilon


# -- nondegeneracy ---------------------------------------------------------------

@pytest.mark.parametrize("p0", [0.3, 0.5, 0.9])
def test_p0_mean_of_constant(p0):
    fld = box_field(lambda x, t: 0.7 + 0 * x[..., 0])
    for r in (0.1, 0.3):
        assert p0_mean(fld, (0.0, 0.0), 0.0, r, 0.05, p0) == pytest.approx(0.7, rel=1e-12)


def test_p0_mean_against_quadrature(frozen):
    fld = box_field(lambda x, t: np.maximum(x[..., 1], 0.0), h=1 / 512, radius=0.125, center=(0.0, 0.5),
                    t1=0.01, dt=0.01)
    value = p0_mean(fld, (0.0, 0.5), 0.0, 0.1, 0.01, 0.5)
    rng = np.random.default_rng(0)
    rad = 0.1 * np.sqrt(rng.uniform(size=10**6))
    th = rng.uniform(0, 2 * np.pi, 10**6)
    mc = np.mean(np.sqrt(0.5 + rad * np.sin(th))) ** 2
    assert value == pytest.approx(mc, rel=5e-3)
    assert value == pytest.approx(frozen["p0_mean_xn_disk01_center05_p05"], rel=5e-3)


def test_p0_mean_homogeneity_and_errors():
    fld = box_field(lambda x, t: np.exp(x[..., 0]) * (1 + t))
    doubled = fld.with_values(2 * fld.values)
    v1 = p0_mean(fld, (0.1, 0.0), 0.05, 0.2, 0.1, 0.5)
    assert p0_mean(doubled, (0.1, 0.0), 0.05, 0.2, 0.1, 0.5) == pytest.approx(2 * v1, rel=1e-12)
    with pytest.raises(ValueError):
        p0_mean(fld, (0.9, 0.0), 0.0, 0.2, 0.1, 0.5)
    with pytest.raises(ValueError):
        p0_mean(fld, (0.0, 0.0), 0.2, 0.1, 0.1, 0.5)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_nondeg_integral_is_monotone(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=3)
    fld = box_field(lambda x, t: np.abs(c[0] + c[1] * x[..., 0] + c[2] * np.sin(x[..., 1] + t)))
    bigger = fld.with_values(fld.values + np.abs(rng.normal(size=fld.values.shape)))
    spec = NondegSpec(K=2.0, p0=float(rng.uniform(0.1, 0.9)))
    v1, _ = nondeg_integral(fld, (0.0, 0.0), 0.0, 0.25, spec, 0.5)
    v2, _ = nondeg_integral(bigger, (0.0, 0.0), 0.0, 0.25, spec, 0.5)
    assert v1 <= v2


def test_nondeg_pointwise_examples():
    spec = NondegSpec(K=2.0, f_neg_norm=0.5, f_norm=1.0)
    lam = 0.4
    thr = spec.pointwise_threshold(lam)
    assert thr == pytest.approx((1 + 0.5) * lam / 2)
    fld = box_field(lambda x, t: thr + 0 * x[..., 0])
    assert nondeg_pointwise(fld, (0.0, 0.0), 0.1, spec, lam)
    assert not nondeg_pointwise(fld, (0.0, 0.0), 0.1, spec, lam, mode="full_norm")
    zero = box_field(lambda x, t: 0 * x[..., 0])
    assert not nondeg_pointwise(zero, (0.0, 0.0), 0.1, spec, lam)
    tw = traveling_wave(0.5, 1.0)
    far = box_field(lambda x, t: tw(x + np.array([0.0, 1.5]), t))
    assert nondeg_pointwise(far, (0.0, 0.5), 0.1, NondegSpec(K=10.0), 1.0)
    with pytest.raises(ValueError):
        nondeg_pointwise(far, (0.0, 0.5), 0.1, spec, lam, mode="other")


def test_nondeg_spec_validation():
    with pytest.raises(ValueError):
        NondegSpec(K=2.0, p0=1.0)
    with pytest.raises(ValueError):
        NondegSpec(K=0.5)
    with pytest.raises(ValueError):
        NondegSpec(K=2.0, f_neg_norm=1.0, f_norm=0.5)


def test_lipschitz_constant_case():
    spec = NondegSpec(K=2.0, f_neg_norm=0.2, f_norm=0.2)
    lam = 0.8
    A = (1 + 0.2) / 2
    fld = box_field(lambda x, t: A * lam + 0 * x[..., 0], h=1 / 64, radius=0.5)
    rep = lipschitz_equivalence_check(fld, 0.0, spec, lam, (0.0, 0.0), 0.05, 0.15)
    assert rep.passed
    assert rep.value == pytest.approx(A * lam, rel=1e-12)
    assert rep.slack == pytest.approx(2.0, rel=1e-12)
    too_big = lipschitz_equivalence_check(fld, 10.0, spec, lam, (0.0, 0.0), 0.05, 0.15)
    assert not too_big.applicable and not too_big.passed


def test_g_convexity(frozen):
    y = np.linspace(0.1, 0.9, 9)
    assert g_convexity(0.5) >= 0
    second = [(1 - (v + 0.05) ** 0.5 - (1 - v - 0.05) ** 0.5) - 2 * (1 - v**0.5 - (1 - v) ** 0.5)
              + (1 - (v - 0.05) ** 0.5 - (1 - v + 0.05) ** 0.5) for v in y]
    np.testing.assert_allclose(second, frozen["g_convexity_p05_second_differences"], rtol=1e-9)


# -- Harnack and Hopf ------------------------------------------------------------

def test_weak_harnack_examples():
    one = box_field(lambda x, t: 1 + 0 * x[..., 0], radius=0.5, t1=0.2, dt=0.005)
    assert weak_harnack_check(one, 0.0, 0.2, 0.5) == pytest.approx(1.0)
    ramp = box_field(lambda x, t: np.maximum(x[..., 1], 0.0), radius=0.5, t1=0.2, dt=0.005)
    assert weak_harnack_check(ramp, 0.0, 0.2, 0.5) == math.inf


def test_weak_harnack_heat_kernel_is_resolution_stable():
    def kernel(x, t):
        s = t + 0.05
        return np.exp(-x[..., 0] ** 2 / (4 * s)) / np.sqrt(4 * np.pi * s)

    vals = []
    for h in (1 / 64, 1 / 128):
        dom = ParabolicCylinder((0.0,), 1.0, 0.0, 0.2)
        fld = SpaceTimeField.from_function(kernel, dom, h, h * h)
        vals.append(weak_harnack_check(fld, 0.0, 0.2, 0.5))
    assert math.isfinite(vals[0])
    assert vals[1] == pytest.approx(vals[0], rel=0.1)


def test_hopf_lower_bound_examples():
    def field(fn):
        return box_field(lambda x, t: fn(np.linalg.norm(x, axis=-1)), h=1 / 64, radius=1.0, t1=0.1, dt=0.05)

    assert hopf_lower_bound(field(lambda r: 1 - r), 0.0) == pytest.approx(1.0, abs=1e-12)
    assert hopf_lower_bound(field(lambda r: 1 - r * r), 0.0) == pytest.approx(1.0, abs=1e-12)
    assert hopf_lower_bound(field(lambda r: 0 * r), 0.0) == 0.0


# -- mollifier and trapping ------------------------------------------------------

def test_mollifier_examples(frozen):
    eta, dt = 0.2, 1e-4
    t = dt * np.arange(2000)
    np.testing.assert_allclose(mollify_coefficient(np.full(t.size, 1.7), dt, eta), 1.7, rtol=1e-12)
    np.testing.assert_allclose(mollify_coefficient(t, dt, eta), t, atol=1e-10)
    c1 = mollifier_c1()
    assert c1 == pytest.approx(frozen["mollifier_c1"], rel=1e-8)
    jump = 0.3
    step = np.where(t > t[1000], jump, 0.0)
    slope = np.max(np.diff(mollify_coefficient(step, dt, eta))) / dt
    assert slope == pytest.approx(c1 / eta**2 * jump, rel=0.05)
    with pytest.raises(ValueError):
        mollify_coefficient(t, eta**2, eta)


def test_exponents():
    g, b = exponents(1.0)
    assert g == pytest.approx(1 / 3) and b == pytest.approx(1 / 12)


def _synthetic_solution(fn, front_fn, lam, h=1 / 64, t0=-0.5, dt=2.5e-4, source=0.0):
    nt = int(round(-t0 / dt)) + 1
    lower = np.array([-0.5, -0.25])
    xs = lower[0] + h * np.arange(int(round(1 / h)) + 1)
    zs = lower[1] + h * np.arange(int(round(1 / h)) + 1)
    X = np.stack(np.meshgrid(xs, zs, indexing="ij"), axis=-1)
    times = t0 + dt * np.arange(nt)
    values = np.stack([fn(X, t) for t in times])
    dom = ParabolicCylinder((0.0, 0.25), 0.5, t0, 0.0)
    fld = SpaceTimeField(h, dt, lower, t0, values, values > 0, dom)
    heights = np.stack([front_fn(xs, t) for t in times])
    front = FrontGraph(heights, lower[:1], h, t0, dt)
    sc = StefanScenario(n=2, operator=EllipticOperatorSpec("trace"), lam=lam, K=4.0, lower=tuple(lower),
                        upper=(0.5, 0.75), h=h, t_start=t0, u0=lambda x: fn(x, t0),
                        front0=lambda xp: front_fn(xp[..., 0], t0), source=source)
    return SpaceTimeSolution(fld, front, sc)


def test_fit_on_exact_plane():
    a0, lam = 1.3, 0.5
    pl = MovingPlane(a0, lam, 0.0)
    sol = _synthetic_solution(pl, lambda xs, t: np.full(xs.shape, pl.b(t)), lam, source=a0 * a0)
    fit = fit_trapping(sol, 0.1)
    np.testing.assert_allclose(fit.a_bar, a0, atol=1e-9)
    np.testing.assert_allclose(fit.b_tilde, pl.b(fit.times), atol=1e-9)
    assert fit.residual <= 1e-9
    assert fit.integral_error <= 1e-8 and fit.ode_error <= 1e-8


def test_fit_on_the_wave():
    c, lam = 0.5, 0.5
    tw = traveling_wave(c, lam)
    sol = _synthetic_solution(tw, lambda xs, t: np.full(xs.shape, -c * t), lam, t0=-1.0, dt=1e-3)
    fits = [fit_trapping(sol, eta) for eta in (0.2, 0.1)]
    for fit in fits:
        assert np.abs(fit.b_tilde - (-c * fit.times)).max() <= 0.02
        assert fit.ode_error <= 1e-8
    # the slab slope tends to c / lam as eta shrinks
    errs = [np.abs(f.a_bar - c / lam).max() for f in fits]
    assert errs[1] < errs[0] < 0.1
    assert fits[1].residual < fits[0].residual <= 1


def test_fit_time_relabeling_is_invisible():
    tw = traveling_wave(0.5, 0.5)
    sol = _synthetic_solution(tw, lambda xs, t: np.full(xs.shape, -0.5 * t), 0.5, t0=-0.3, dt=1e-3)
    shifted = SpaceTimeSolution(sol.field.with_values(sol.field.values, t0=sol.field.t0 + 7.0),
                                FrontGraph(sol.front.heights, sol.front.lower, sol.front.h, sol.front.t0 + 7.0,
                                           sol.front.dt), sol.scenario)
    f1, f2 = fit_trapping(sol, 0.1), fit_trapping(shifted, 0.1)
    assert np.array_equal(f1.a_bar, f2.a_bar)
    assert np.array_equal(f1.b_tilde, f2.b_tilde)
    assert f1.residual == f2.residual


def test_fit_errors():
    tw = traveling_wave(0.5, 0.5)
    sol = _synthetic_solution(tw, lambda xs, t: np.full(xs.shape, -0.5 * t), 0.5, t0=-0.1, dt=1e-3)
    with pytest.raises(FitError):
        fit_trapping(sol, 0.02)
    zero = _synthetic_solution(lambda x, t: 0 * x[..., 0], lambda xs, t: 0 * xs, 0.5, t0=-0.1, dt=1e-3)
    with pytest.raises(FitError):
        fit_trapping(zero, 0.1)
