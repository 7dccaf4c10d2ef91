import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.grid import full_stencil_mask, laplacian_interior
from stefanlab.operators import EllipticOperatorSpec
from stefanlab.stefan import (
    MovingPlane,
    StefanScenario,
    front_velocity,
    rescale_parabolic,
    simulate,
    traveling_wave,
)

TRACE = EllipticOperatorSpec("trace")


def tw_scenario(n=2, h=1 / 32, c=0.5, lam=0.5, t0=-0.25, t1=0.0, source=0.0, store=None, **kw):
    tw = traveling_wave(c, lam)
    lower = (-0.5,) * (n - 1) + (-0.25,)
    upper = (0.5,) * (n - 1) + (0.75,)
    return StefanScenario(
        n=n, operator=TRACE, lam=lam, K=4.0, lower=lower, upper=upper, h=h, t_start=t0, t_end=t1,
        u0=lambda x: tw(x, t0), front0=lambda xp: np.full(np.shape(xp)[:-1], -c * t0),
        source=source, lateral=kw.pop("lateral", tw), store_levels=store or 50, **kw)


def test_traveling_wave_oracle():
    c, lam = 0.5, 0.5
    tw = traveling_wave(c, lam)
    rng = np.random.default_rng(0)
    t = rng.uniform(-1, 0, 100)
    xp = rng.uniform(-1, 1, 100)
    front = np.stack([xp, -c * t], axis=-1)
    assert np.all(tw(front, t) == 0.0)
    x = np.stack([xp, -c * t + rng.uniform(0.01, 1, 100)], axis=-1)
    res = tw.time_derivative(x, t) - np.trace(tw.hessian(x, t), axis1=-2, axis2=-1)
    assert np.abs(res).max() <= 1e-12
    grad = tw.gradient(front, t)
    assert np.abs(tw.time_derivative(front, t) - lam * np.sum(grad**2, axis=-1)).max() <= 1e-12
    assert grad[0, -1] == pytest.approx(c / lam)


def _state(fn, h, lower_n=-0.25, N=40, width=9):
    z = lower_n + h * np.arange(N)
    xs = h * (np.arange(width) - width // 2)
    X = np.stack(np.meshgrid(xs, z, indexing="ij"), axis=-1)
    return X, fn(X)


def test_front_velocity_of_the_wave():
    h, c, lam = 1 / 128, 0.5, 0.5
    tw = traveling_wave(c, lam)
    X, u = _state(lambda X: tw(X, 0.1), h, N=60)
    s = np.full(X.shape[0], -c * 0.1)
    v = front_velocity(u, s, -0.25, h, lam)
    np.testing.assert_allclose(v, -c, rtol=0.02)
    assert np.all(front_velocity(np.zeros_like(u), s, -0.25, h, lam) == 0.0)


@pytest.mark.parametrize("theta", [0.0, 0.2, 0.5])
def test_front_velocity_tilted_plane(theta):
    h, lam, a, d = 1 / 64, 0.7, 1.3, 0.05
    nu = np.array([math.sin(theta), math.cos(theta)])

    def plane(X):
        return a * np.maximum(X @ nu - d, 0.0)

    X, u = _state(plane, h, N=60, width=21)
    s = (d - X[:, 0, 0] * nu[0]) / nu[1]
    sdot = front_velocity(u, s, -0.25, h, lam)
    inner = slice(1, -1)  # centred slopes away from the ends
    np.testing.assert_allclose(-sdot[inner] * nu[1], lam * a, rtol=1e-9)


def test_wave_front_position_1d():
    c, lam = 0.5, 0.5
    tw = traveling_wave(c, lam)
    sc = StefanScenario(n=1, operator=TRACE, lam=lam, K=4.0, lower=(-1.0,), upper=(1.0,), h=1 / 128,
                        t_start=0.0, t_end=1.0, u0=lambda x: tw(x, 0.0), front0=lambda xp: 0.0,
                        lateral=tw)
    sol = simulate(sc)
    assert abs(float(sol.front.heights[-1]) + c) <= 0.02


def test_null_solution():
    sc = StefanScenario(n=2, operator=TRACE, lam=0.5, K=4.0, lower=(-0.5, -0.25), upper=(0.5, 0.5), h=1 / 16,
                        t_start=-0.1, u0=lambda x: 0 * x[..., 0], front0=lambda xp: 0 * xp[..., 0])
    sol = simulate(sc)
    assert np.all(sol.field.values == 0.0)
    assert np.all(sol.front.heights == 0.0)


def test_rejects_bad_initial_data():
    with pytest.raises(ValueError):
        simulate(StefanScenario(n=1, operator=TRACE, lam=0.5, K=4, lower=(-1.0,), upper=(1.0,), h=1 / 16,
                                t_start=0.0, t_end=0.1, u0=lambda x: 1 + 0 * x[..., 0], front0=lambda xp: 0.0))
    with pytest.raises(ValueError):
        StefanScenario(n=1, operator=TRACE, lam=2.0, K=4, lower=(-1.0,), upper=(1.0,), h=1 / 16,
                       t_start=0.0, t_end=0.1, u0=lambda x: x[..., 0], front0=lambda xp: 0.0)


def test_sink_slows_melting():
    base = simulate(tw_scenario())
    sink = simulate(tw_scenario(source=-0.05))
    h = base.field.h
    assert np.all(sink.front.heights >= base.front.heights - 2 * h)
    # edge columns carry the source-free lateral data, so compare strictly inside
    assert np.all(sink.front.heights[:, 1:-1] >= base.front.heights[:, 1:-1] - 1e-12)


@settings(max_examples=6)
@given(st.floats(0.2, 1.0), st.floats(0.2, 1.0), st.sampled_from(["trace", "pucci_plus", "pucci_minus"]))
def test_support_grows_and_u_is_nonnegative(c, lam, kind):
    tw = traveling_wave(c, lam)
    op = EllipticOperatorSpec(kind, 1.5 if kind != "trace" else 1.0)
    sc = StefanScenario(n=2, operator=op, lam=lam, K=4.0, lower=(-0.5, -0.25), upper=(0.5, 0.75),
                        h=1 / 16, t_start=-0.1, u0=lambda x: tw(x, -0.1),
                        front0=lambda xp: np.full(np.shape(xp)[:-1], 0.1 * c), lateral="initial")
    sol = simulate(sc)
    assert np.all(np.diff(sol.front.heights, axis=0) <= 1e-15)
    assert sol.field.values.min() >= 0.0


def test_stored_field_solves_the_scheme():
    # every step stored: the explicit update holds on nodes whose stencil stays positive
    sol = simulate(tw_scenario(h=1 / 16, t0=-0.02, store=10_000))
    f = sol.field
    for k in range(f.nt - 1):
        m = full_stencil_mask(f.mask[k]) & full_stencil_mask(f.mask[k + 1])
        rate = laplacian_interior(f.values[k], f.h)
        res = (f.values[k + 1][1:-1, 1:-1] - f.values[k][1:-1, 1:-1]) / f.dt - rate
        core = m[1:-1, 1:-1]
        # the face rows carry prescribed data
        core[:, -1] = False
        core[0, :] = core[-1, :] = False
        if core.any():
            assert np.abs(res[core]).max() <= 1e-8


def test_rescale_identity_and_wave():
    sol = simulate(tw_scenario())
    same = rescale_parabolic(sol, 1.0)
    assert np.array_equal(same.field.values, sol.field.values)
    assert np.array_equal(same.front.heights, sol.front.heights)
    tau, c, lam = 0.5, 0.5, 0.5
    r = rescale_parabolic(sol, tau)
    assert r.scenario.lam == tau * lam
    ref = traveling_wave(c * tau, lam * tau)
    x = r.field.nodes()
    rng = np.random.default_rng(1)
    for k in rng.integers(0, r.field.nt, 5):
        exact = ref(x, r.field.times[k])
        orig = traveling_wave(c, lam)(tau * x, tau**2 * r.field.times[k]) / tau
        np.testing.assert_allclose(exact, orig, atol=1e-9)


def test_rescale_plane():
    tau, a, lam, b = 0.5, 1.0, 0.5, 0.125
    pl = MovingPlane(a, lam, b)
    sc = StefanScenario(n=2, operator=TRACE, lam=lam, K=4.0, lower=(-0.5, -0.25), upper=(0.5, 0.75), h=1 / 16,
                        t_start=-0.1, t_end=0.0, u0=lambda x: pl(x, -0.1),
                        front0=lambda xp: np.full(np.shape(xp)[:-1], pl.b(-0.1)), source=a * a, lateral=pl)
    sol = simulate(sc)
    r = rescale_parabolic(sol, tau)
    x = r.field.nodes()
    for k, t in enumerate(r.field.times):
        want = a * np.maximum(x[..., -1] - pl.b(tau**2 * t) / tau, 0.0)
        np.testing.assert_allclose(r.field.values[k], want, atol=1e-12)
