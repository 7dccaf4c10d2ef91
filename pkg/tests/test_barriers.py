import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanlab.barriers import (
    Region,
    certify,
    certify_hopf,
    detect_touching,
    front_defect,
    g_profile,
    hopf_candidate,
    hopf_params,
    hopf_T_tilde,
    interior_defect,
    lemma31_region,
    lemma31_w,
    plane_candidate,
    printed_w_condition,
    search_lemma31_w,
    section3_v,
    traveling_wave_candidate,
    v_geometry_check,
    v_region,
)
from stefanlab.grid import ParabolicCylinder, SpaceTimeField
from stefanlab.operators import EllipticOperatorSpec


def closed_form_T_tilde(n, K, delta):
    return (8 - delta**2) / (16 * n * K * math.log(8 / delta**2))


# -- Hopf barrier -------------------------------------------------------------------

def test_hopf_params_examples(frozen):
    p = hopf_params(1, 1.0, 1.0, 1.0)
    assert p.a == pytest.approx(frozen["hopf_a_delta1"], rel=1e-12)
    assert p.b_exp == pytest.approx(frozen["hopf_b_delta1"], rel=1e-5)
    assert p.b_exp == pytest.approx(7 / (8 * math.log(8)), rel=1e-12)
    T = hopf_T_tilde(2, 2.0, 0.5)
    assert T == pytest.approx(frozen["hopf_T_tilde_n2_K2_d05"], rel=1e-8)
    assert hopf_params(2, 2.0, 0.5, T).b_exp == pytest.approx(frozen["hopf_b_at_T_tilde"], rel=1e-8)


@settings(max_examples=30)
@given(st.integers(1, 3), st.floats(1.0, 4.0), st.floats(0.05, 1.0))
def test_T_tilde_matches_closed_form(n, K, delta):
    assert hopf_T_tilde(n, K, delta) == pytest.approx(closed_form_T_tilde(n, K, delta), rel=1e-9)


def test_T_tilde_grows_with_delta():
    vals = [hopf_T_tilde(2, 2.0, d) for d in (0.25, 0.5, 0.75, 1.0)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_hopf_params_validation():
    for args in [(2, 2.0, 0.0, 0.1), (2, 2.0, 1.5, 0.1), (2, 2.0, 0.5, 0.0), (2, 0.5, 0.5, 0.1)]:
        with pytest.raises(ValueError):
            hopf_params(*args)


@pytest.mark.parametrize("n,K,delta", [(1, 1.0, 1.0), (2, 2.0, 0.5), (3, 1.5, 0.8)])
def test_hopf_boundary_values(n, K, delta):
    p = hopf_params(n, K, delta, hopf_T_tilde(n, K, delta))
    cand = hopf_candidate(p)
    rng = np.random.default_rng(1)
    d = rng.normal(size=(200, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # h(0, 0) = 1, h vanishes on the lateral boundary at t = T and grows there before
    assert cand.value(np.zeros((1, n)), np.zeros(1))[0] == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(cand.value(d, np.full(200, p.T)), 0.0, atol=1e-12)
    ts = np.linspace(0, p.T, 200)
    # the sign lives in the bracket; the exponential prefactor underflows
    assert np.all(cand.factored(d, ts)[1] > 0)
    assert np.all(cand.value(d, ts) <= 1e-12)
    # nonpositive at t = 0 outside the core
    r = np.linspace(delta, 1.0, 200)[:, None]
    assert np.all(cand.value(r * d, np.zeros(200)) <= 0)


def test_hopf_certificate_pieces_and_kappa():
    T_tilde = hopf_T_tilde(2, 2.0, 0.5)
    p, cert, m = certify_hopf(2, 2.0, 0.5, T_tilde, samples=4096)
    assert m == 1 and cert.passed
    assert p.mu > 0 and np.isfinite(cert.log10_kappa)
    p2, cert2, m2 = certify_hopf(2, 2.0, 0.5, 2.5 * T_tilde, samples=4096)
    assert m2 == 3 and cert2.passed
    assert cert2.constants["pieces"] == 3


# -- candidates ----------------------------------------------------------------------

def _candidates():
    p = hopf_params(2, 2.0, 0.5, 0.03)
    a = lambda t: np.full(np.shape(t), 1.0)
    v, d = section3_v(0.1, 0.5, 0.5, a, lambda t: -0.5 * np.asarray(t), 1.0, 1.0, 0.5)
    return [
        (hopf_candidate(p), Region(2, 1.0, 0.0, 0.03)),
        (lemma31_w(1.0, 0.2, 2, 1.05), lemma31_region(2)),
        (lemma31_w(1.0, 0.2, 1, 1.05), lemma31_region(1)),
        (v, v_region(0.1, 0.5, d, 2)),
        (traveling_wave_candidate(0.5, 0.5), Region(2, 1.0, -1.0, 0.0)),
        (plane_candidate(1.3, 0.5), Region(2, 1.0, -1.0, 0.0)),
    ]


@pytest.mark.parametrize("idx", range(6))
def test_candidate_self_tests(idx):
    cand, region = _candidates()[idx]
    assert cand.self_test(region, points=300) <= 1e-6


def test_certify_is_reproducible_and_monotone_in_samples():
    cand = lemma31_w(1.0, 0.2, 2, 1.05)
    op = EllipticOperatorSpec("pucci_plus", 1.5)
    region = lemma31_region(2)
    c1 = certify(cand, op, 0.0, 0.2, region, samples=512, seed=3)
    c2 = certify(cand, op, 0.0, 0.2, region, samples=512, seed=3)
    assert c1.to_dict() == c2.to_dict()
    big = certify(cand, op, 0.0, 0.2, region, samples=2048, seed=3)
    assert big.interior_margin <= c1.interior_margin
    assert big.front_margin <= c1.front_margin


def test_plane_has_zero_front_margin():
    cert = certify(plane_candidate(1.3, 0.5), EllipticOperatorSpec("trace"), 0.0, 0.5,
                   Region(2, 1.0, -1.0, 0.0), samples=512)
    assert abs(cert.front_margin) <= 1e-14
    assert cert.interior_margin == pytest.approx(0.5 * 1.3**2)
    assert not cert.passed


def test_wave_defects_vanish():
    cand = traveling_wave_candidate(0.5, 0.5)
    x, t = Region(2, 1.0, -1.0, 0.0).sample(512, 0)
    pos = cand.positive(x, t)
    np.testing.assert_allclose(interior_defect(cand, EllipticOperatorSpec("trace"), x[pos], t[pos]), 0, atol=1e-12)
    uf = np.random.default_rng(0).uniform(size=(64, 1))
    tf = np.linspace(-1, 0, 64)
    np.testing.assert_allclose(front_defect(cand, 0.5, cand.front(uf, tf), tf), 0, atol=1e-12)


# -- the profile g and w --------------------------------------------------------------

def test_g_profile(frozen):
    assert g_profile(0.0, 2) == 0.0
    assert g_profile(-1.0, 2) == 0.0
    eps = 1e-7
    for n in (1, 2, 3):
        assert (g_profile(eps, n) - g_profile(0.0, n)) / eps == pytest.approx(1.0, rel=1e-6)
    assert float(g_profile(1.0, 1)) == pytest.approx(frozen["g1_n1"], rel=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_w_front_condition(n):
    C0, lam = 0.8, 0.3
    tf = np.linspace(0, 1, 32)
    uf = np.random.default_rng(n).uniform(size=(32, max(n - 1, 0)))
    flat = lemma31_w(C0, lam, n, 1.0)
    np.testing.assert_allclose(front_defect(flat, lam, flat.front(uf, tf), tf), 0.0, atol=1e-14)
    fast = lemma31_w(C0, lam, n, 1.1)
    np.testing.assert_allclose(front_defect(fast, lam, fast.front(uf, tf), tf), 0.1 * lam * C0**2, rtol=1e-12)


def test_w_search_one_dimension():
    search = search_lemma31_w(1, 1.0, 0.0, samples=1024)
    assert search.certificate is not None and search.certificate.passed
    assert not search.printed_inequality_satisfiable
    assert not printed_w_condition(search.C0, search.lam, 1, 1.0, 0.0)


# -- the perturbed plane v -------------------------------------------------------------

def _v(C1=1.0, C2=1.0, C3=0.5, eta=0.1, lam=0.5):
    a = lambda t: np.full(np.shape(t), 1.0)
    b = lambda t: -lam * np.asarray(t)
    cand, d = section3_v(eta, 0.5, lam, a, b, C1, C2, C3)
    return cand, d, a


def test_v_reduces_to_the_plane_on_the_axis():
    cand, _, _ = _v(C1=0.0, C2=0.0, C3=0.0)
    t = np.linspace(-0.2, 0.0, 11)
    x = np.stack([np.zeros(11), 0.05 - 0.5 * t], axis=-1)
    np.testing.assert_allclose(cand.value(x, t), 0.05, rtol=1e-12)


def test_v_ordering_and_separation():
    cand, d, a = _v()
    order, sep = v_geometry_check(cand, d, a, 0.1, 0.5, 0.5)
    assert order >= -1e-12
    assert sep >= 0
    # without the damping factor the ordering is tight and separation fails
    cand0, d0, _ = _v(C2=0.0)
    _, sep0 = v_geometry_check(cand0, d0, a, 0.1, 0.5, 0.5)
    assert sep0 < sep


def test_v_validation():
    with pytest.raises(ValueError):
        _v(C2=10.0)


# -- touching --------------------------------------------------------------------------

def _plane_field(shift=0.0, bump=0.0):
    dom = ParabolicCylinder((0.0, 0.0), 0.5, -0.2, 0.0)
    pl = plane_candidate(1.0, 0.5)

    def fn(x, t):
        tt = np.broadcast_to(t, x.shape[:-1])
        return pl.value(x, tt) + shift + bump * x[..., 0]

    return SpaceTimeField.from_function(fn, dom, 1 / 16, 0.05), pl


def test_detect_touching_examples():
    fld, pl = _plane_field()
    hits = detect_touching(fld, pl)
    kinds = {c.where for c in hits}
    assert kinds == {"interior", "front"}
    above, _ = _plane_field(shift=0.1)
    assert detect_touching(above, pl) == []
    crossing, _ = _plane_field(bump=0.1)
    assert detect_touching(crossing, pl) == []
    with_ext = detect_touching(fld, pl, include_exterior=True)
    assert len(with_ext) > len(hits)
