"""Closed-form barriers and their sampled certification as strict sub/supersolutions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .operators import EllipticOperatorSpec, operator_eval


class SelfTestError(ValueError):
    """Analytic derivatives disagree with finite differences of the value."""


class BarrierParamError(ValueError):
    """Barrier parameters violate a structural condition."""


# -- sampling regions -------------------------------------------------------------

def _sobol(dim, count, seed):
    eng = qmc.Sobol(dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # non power-of-two counts are fine here
        return eng.random(count)


def _ball_points(u, n):
    """Map ``u`` in ``[0,1)^n`` to the unit ball, uniform in volume."""
    r = u[:, 0] ** (1.0 / n)
    if n == 1:
        return (2 * (u[:, 0] >= 0.5) - 1.0)[:, None] * (2 * np.abs(u[:, 0] - 0.5))[:, None]
    if n == 2:
        th = 2 * np.pi * u[:, 1]
        return r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)
    z = 1 - 2 * u[:, 1]
    ph = 2 * np.pi * u[:, 2]
    s = np.sqrt(np.maximum(1 - z * z, 0))
    return r[:, None] * np.stack([s * np.cos(ph), s * np.sin(ph), z], axis=-1)


@dataclass(frozen=True)
class Region:
    """``{inner <= |x - c(t)| < radius} x (t0, t1]`` with ``c(t) = center + center_speed * t``.

    ``center_fn`` (optional) overrides the affine centre path.
    """

    n: int
    radius: float
    t0: float
    t1: float
    center: tuple = ()
    inner: float = 0.0
    center_fn: Callable | None = None
    half_line: bool = False

    def centre(self, t):
        t = np.asarray(t, dtype=float)
        if self.center_fn is not None:
            return np.asarray(self.center_fn(t), dtype=float)
        c = np.zeros(self.n) if not self.center else np.asarray(self.center, dtype=float)
        return np.broadcast_to(c, t.shape + (self.n,))

    def sample(self, count, seed):
        """``count`` Sobol points ``(x, t)``; the first ``m`` points never depend on ``count``."""
        u = _sobol(self.n + 1, count, seed)
        t = self.t0 + (self.t1 - self.t0) * u[:, -1]
        if self.n == 1:
            lo = self.inner if self.half_line or self.inner > 0 else -self.radius
            side = 1.0
            if not self.half_line and self.inner > 0:
                side = np.where(u[:, 0] < 0.5, -1.0, 1.0)
                frac = (2 * u[:, 0]) % 1.0
                r = lo + (self.radius - lo) * frac
                x = (side * r)[:, None]
            else:
                x = (lo + (self.radius - lo) * u[:, 0])[:, None]
        elif self.inner > 0:
            # radius uniform in volume between the spheres
            n = self.n
            r = (self.inner**n + u[:, 0] * (self.radius**n - self.inner**n)) ** (1.0 / n)
            d = _ball_points(np.concatenate([np.ones((count, 1)), u[:, 1:-1]], axis=1), n)
            x = r[:, None] * d
        else:
            x = self.radius * _ball_points(u[:, :-1], self.n)
        return x + self.centre(t), t


# -- candidates ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClosedFormCandidate:
    """Analytic barrier ``phi(x, t)`` with derivatives on its positive branch.

    ``value`` is the full function (with the ``(.)^+`` cut-off); ``gradient``,
    ``hessian`` and ``time_derivative`` evaluate the smooth branch, so at free
    boundary points they are the one-sided limits from ``{phi > 0}``.
    ``front(u, t)`` maps ``u`` in ``[0,1)^(n-1)`` to free-boundary points at
    time ``t`` (``None`` when the candidate has no free boundary).
    """

    cid: str
    kind: str
    n: int
    value: Callable
    gradient: Callable
    hessian: Callable
    time_derivative: Callable
    positive: Callable
    front: Callable | None = None
    length_scale: float = 1.0
    params: dict = field(default_factory=dict)
    factored: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("subsolution", "supersolution"):
            raise ValueError("kind must be 'subsolution' or 'supersolution'")

    def self_test(self, region, points=1000, seed=0, rtol=1e-6):
        """Analytic vs centred finite differences at ``points`` positive-phase samples.

        Returns the worst relative error; raises :class:`SelfTestError` above ``rtol``.
        """
        x, t = region.sample(4 * points, seed)
        keep = self.positive(x, t)
        # stay a few steps away from the free boundary, where phi has a kink
        L = self.length_scale
        eps = 1e-3 * L
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = 2 * eps
            keep &= self.positive(x + e, t) & self.positive(x - e, t)
        keep &= self.positive(x, t + (2 * eps) ** 2) & self.positive(x, t - (2 * eps) ** 2)
        x, t = x[keep][:points], t[keep][:points]
        if len(t) == 0:
            raise SelfTestError("no positive-phase points for the self-test")
        g = self.gradient(x, t)
        H = self.hessian(x, t)
        dt_ = self.time_derivative(x, t)
        v0 = self.value(x, t)

        def diffs(hs, ht):
            g_fd = np.empty_like(g)
            H_fd = np.empty_like(H)
            for i in range(self.n):
                ei = np.zeros(self.n)
                ei[i] = hs
                g_fd[:, i] = (self.value(x + ei, t) - self.value(x - ei, t)) / (2 * hs)
                for j in range(self.n):
                    ej = np.zeros(self.n)
                    ej[j] = hs
                    if i == j:
                        H_fd[:, i, i] = (self.value(x + ei, t) - 2 * v0 + self.value(x - ei, t)) / hs**2
                    else:
                        H_fd[:, i, j] = (
                            self.value(x + ei + ej, t) - self.value(x + ei - ej, t)
                            - self.value(x - ei + ej, t) + self.value(x - ei - ej, t)
                        ) / (4 * hs * hs)
            t_fd = (self.value(x, t + ht) - self.value(x, t - ht)) / (2 * ht)
            return g_fd, H_fd, t_fd

        # Richardson extrapolation of centred differences (fourth order)
        hs, ht = 1e-3 * L, 1e-3 * L * L
        coarse = diffs(hs, ht)
        fine = diffs(hs / 2, ht / 2)
        g_fd, H_fd, t_fd = ((4 * f - c) / 3 for f, c in zip(fine, coarse))

        def rel(a, b, scale):
            return np.abs(a - b) / np.maximum(scale, 1e-300)

        sg = np.max(np.abs(g), axis=-1) + np.abs(v0) / L
        sh = np.max(np.abs(H), axis=(-2, -1)) + sg / L
        st = np.abs(dt_) + sg / L
        worst = max(
            float(np.max(rel(g, g_fd, sg[:, None]))),
            float(np.max(rel(H, H_fd, sh[:, None, None]))),
            float(np.max(rel(dt_, t_fd, st))),
        )
        if worst > rtol:
            raise SelfTestError(f"{self.cid}: derivative self-test relative error {worst:.3e} > {rtol:g}")
        return worst


# -- certificates ------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierCertificate:
    cid: str
    kind: str
    operator: dict
    source_bound: float
    lam: float
    seed: int
    samples: int
    interior_count: int
    front_count: int
    interior_margin: float
    front_margin: float | None
    lipschitz_estimate: float
    fill_distance: float
    constants: dict = field(default_factory=dict)
    log10_abs_margin: float | None = None

    @property
    def passed(self):
        sign = 1.0 if self.kind == "supersolution" else -1.0
        # a recorded log-margin means every reduced defect had the strict sign
        strict = sign * self.interior_margin > 0 or self.log10_abs_margin is not None
        ok = self.interior_count > 0 and strict
        if self.front_margin is not None:
            ok = ok and sign * self.front_margin > 0
        return bool(ok)

    @property
    def kappa(self):
        """Largest ``k`` with interior defect ``<= -k`` (subsolutions).

        May underflow to zero; ``log10_kappa`` is always finite for a pass.
        """
        return -self.interior_margin

    @property
    def log10_kappa(self):
        if self.log10_abs_margin is not None:
            return self.log10_abs_margin
        m = abs(self.interior_margin)
        return math.log10(m) if m > 0 else -math.inf

    @property
    def robust(self):
        """Whether the margin exceeds the defect's estimated variation between samples."""
        return abs(self.interior_margin) > self.lipschitz_estimate * self.fill_distance

    def to_dict(self):
        return {
            "candidate": self.cid,
            "kind": self.kind,
            "operator": self.operator,
            "source_bound": self.source_bound,
            "lam": self.lam,
            "seed": self.seed,
            "samples": self.samples,
            "interior_count": self.interior_count,
            "front_count": self.front_count,
            "interior_margin": self.interior_margin,
            "front_margin": self.front_margin,
            "lipschitz_estimate": self.lipschitz_estimate,
            "fill_distance": self.fill_distance,
            "robust": self.robust,
            "constants": self.constants,
            "log10_abs_margin": self.log10_kappa,
            "verdict": "pass" if self.passed else "fail",
        }


def interior_defect(candidate, operator, x, t):
    """``d_t phi - F(D^2 phi)`` at the given points."""
    H = candidate.hessian(x, t)
    return candidate.time_derivative(x, t) - operator_eval(operator, H, check=False)


def front_defect(candidate, lam, x, t):
    """``d_t phi - lam |grad phi|^2`` at free-boundary points."""
    g = candidate.gradient(x, t)
    return candidate.time_derivative(x, t) - lam * np.sum(g * g, axis=-1)


def certify(candidate, operator, source_bound, lam, region, samples=4096, seed=0,
            self_test=True):
    """Sampled strictness verdict for a candidate on ``region``.

    Supersolutions need ``d_t phi - F(D^2 phi) - lam * source_bound > 0`` in
    ``{phi > 0}`` and ``d_t phi - lam |grad phi|^2 > 0`` on the front;
    subsolutions need the interior defect ``+ lam * source_bound < 0`` and a
    negative front defect.  The reported margins are the worst sampled values
    (min for supersolutions, max for subsolutions).
    """
    if self_test:
        candidate.self_test(region, points=min(1000, samples), seed=seed)
    x, t = region.sample(samples, seed)
    pos = candidate.positive(x, t)
    x, t = x[pos], t[pos]
    if len(t) == 0:
        raise ValueError("empty sample region: no point has phi > 0")
    sign = 1.0 if candidate.kind == "supersolution" else -1.0
    shift = -sign * lam * source_bound

    def defect(xx, tt):
        return interior_defect(candidate, operator, xx, tt) + shift

    log_margin = None
    if candidate.factored is not None and shift == 0.0:
        logp, dt_r, H_r = candidate.factored(x, t)
        red = dt_r - operator_eval(operator, H_r, check=False)
        if np.any(sign * red <= 0):
            i = int(np.argmin(sign * red))
            margin = float(red[i] * np.exp(logp[i]))
        else:
            score = logp + np.log(np.abs(red))
            i = int(np.argmin(score))
            margin = float(sign * np.exp(score[i]))
            log_margin = float(score[i] / math.log(10))
        d = red * np.exp(logp)
    else:
        d = defect(x, t)
        margin = float(d.min()) if sign > 0 else float(d.max())

    # crude Lipschitz estimate of the defect from one-sided differences
    L = candidate.length_scale
    step = 1e-4 * L
    lip = 0.0
    for k in range(candidate.n):
        e = np.zeros(candidate.n)
        e[k] = step
        ok = candidate.positive(x + e, t)
        if ok.any():
            lip = max(lip, float(np.max(np.abs(defect(x[ok] + e, t[ok]) - d[ok])) / step))
    span = max(region.t1 - region.t0, 1e-300)
    vol = (2 * region.radius) ** candidate.n * span
    fill = (vol / samples) ** (1.0 / (candidate.n + 1))

    front_margin = None
    nf = 0
    if candidate.front is not None:
        uf = _sobol(max(candidate.n - 1, 0) + 1, samples, seed + 1)
        tf = region.t0 + (region.t1 - region.t0) * uf[:, -1]
        xf = candidate.front(uf[:, :-1], tf)
        keep = np.all(np.isfinite(xf), axis=-1)
        c = region.centre(tf)
        dist = np.linalg.norm(xf - c, axis=-1)
        keep &= (dist < region.radius) & (dist >= region.inner)
        xf, tf = xf[keep], tf[keep]
        nf = len(tf)
        if nf:
            fd = front_defect(candidate, lam, xf, tf)
            front_margin = float(fd.min()) if sign > 0 else float(fd.max())
    return BarrierCertificate(candidate.cid, candidate.kind, operator.to_dict(), float(source_bound),
                              float(lam), int(seed), int(samples), int(len(t)), nf, margin,
                              front_margin, lip, fill, dict(candidate.params), log_margin)


# -- the Hopf barrier --------------------------------------------------------------

@dataclass(frozen=True)
class HopfBarrierParams:
    n: int
    K: float
    delta: float
    T: float
    a: float
    b_exp: float
    F_const: float
    D: float
    kappa: float | None = None
    mu: float | None = None

    def E(self, x, t):
        """``E`` divided by ``a^-b`` (the normalisation of ``F_const`` and ``D``)."""
        r2 = np.sum(np.asarray(x) ** 2, axis=-1)
        s = np.asarray(t) + self.a
        return np.exp(self.b_exp * np.log(self.a / s) - self.K * r2 / s)

    def h(self, x, t):
        return (self.E(x, t) - self.F_const) / self.D

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("n", "K", "delta", "T", "a", "b_exp", "F_const", "D", "kappa", "mu")}


def hopf_params(n, K, delta, T):
    """Solve ``(T + a)/(4a) = 2/delta^2`` and ``b = K/((T + a) log(1 + T/a))``.

    Raises :class:`BarrierParamError` when the monotonicity condition
    ``b (T + a) < K`` fails.  ``F`` and ``D`` are computed in log space
    relative to ``a^-b`` so that small ``T`` does not overflow; the returned
    ``F_const`` and ``D`` are both divided by ``a^-b``, which leaves ``h``
    unchanged because ``E`` is scaled the same way (see :func:`hopf_candidate`).
    """
    if not 0 < delta < 1 + 1e-15:
        raise ValueError("delta must lie in (0, 1]")
    if not T > 0:
        raise ValueError("T must be positive")
    if not K >= 1:
        raise ValueError("K must be >= 1")
    a = T * delta**2 / (8 - delta**2)
    b = K / ((T + a) * math.log(1 + T / a))
    if not b * (T + a) < K:
        raise BarrierParamError("b (T + a) >= K: T too large for one shot, iterate over sub-intervals")
    # normalised by a^-b: F/a^-b = (a/(T+a))^b e^{-K/(T+a)}
    F = math.exp(b * math.log(a / (T + a)) - K / (T + a))
    D = 1.0 - F
    if not D > 0:
        raise BarrierParamError("D must be positive")
    check = (T + a) / (4 * a) - 2 / delta**2
    if abs(check) > 1e-12 * (2 / delta**2):
        raise BarrierParamError("(T + a)/(4a) = 2/delta^2 violated")
    return HopfBarrierParams(n, float(K), float(delta), float(T), a, b, F, D)


def hopf_T_tilde(n, K, delta, tol=1e-12, hi=1.0):
    """Largest ``T`` (by bisection) with ``2 n K^2 - b_exp(T) < 0``; returns a value just inside."""

    def ok(T):
        a = T * delta**2 / (8 - delta**2)
        b = K / ((T + a) * math.log(1 + T / a))
        return 2 * n * K * K - b < 0

    lo = 0.0
    while ok(hi):
        lo, hi = hi, 2 * hi
    if lo == 0.0:
        lo = hi
        while not ok(lo):
            lo *= 0.5
            if lo < 1e-300:
                raise BarrierParamError("no admissible T found")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def hopf_candidate(p: HopfBarrierParams):
    """``h = (E - F)/D`` with analytic derivatives (a subsolution with no free boundary)."""
    K, a, b = p.K, p.a, p.b_exp
    logscale = -b * math.log(a)  # E, F and D all carry the factor a^-b

    def e(x, t):
        r2 = np.sum(x * x, axis=-1)
        s = t + a
        return np.exp(-b * np.log(s) - K * r2 / s - logscale)

    def value(x, t):
        return (e(x, t) - p.F_const) / p.D

    def gradient(x, t):
        s = (t + a)[..., None]
        return (e(x, t) / p.D)[..., None] * (-2 * K * x / s)

    def hessian(x, t):
        s = (t + a)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        eye = np.eye(x.shape[-1])
        return (e(x, t) / p.D)[..., None, None] * (2 * K / s**2) * (2 * K * outer - s * eye)

    def time_derivative(x, t):
        s = t + a
        r2 = np.sum(x * x, axis=-1)
        return e(x, t) / p.D / s**2 * (K * r2 - b * s)

    def positive(x, t):
        return np.ones(np.shape(t), dtype=bool)

    def factored(x, t):
        # P = E/D carried in log form; it underflows long before the brackets do
        s = t + a
        r2 = np.sum(x * x, axis=-1)
        logp = b * np.log(a / s) - K * r2 / s - math.log(p.D)
        outer = x[..., :, None] * x[..., None, :]
        eye = np.eye(x.shape[-1])
        H = (2 * K / s**2)[..., None, None] * (2 * K * outer - s[..., None, None] * eye)
        return logp, (K * r2 - b * s) / s**2, H

    return ClosedFormCandidate("hopf", "subsolution", p.n, value, gradient, hessian,
                               time_derivative, positive, None,
                               length_scale=math.sqrt(a), params=p.to_dict(), factored=factored)


def hopf_mu(p: HopfBarrierParams, samples=4001):
    """``min_{|x| < 1} h(x, T) / (1 - |x|)`` along a radius (h is radial)."""
    r = np.linspace(0, 1, samples)[:-1]
    x = np.zeros((r.size, p.n))
    x[:, 0] = r
    cand = hopf_candidate(p)
    vals = cand.value(x, np.full(r.size, p.T))
    return float(np.min(vals / (1 - r)))


def certify_hopf(n, K, delta, T, samples=64**3, seed=0):
    """Certify the barrier on ``B_1 x (0, T]``, splitting ``T`` into ``m`` pieces below ``T~``.

    Returns ``(params, certificate, m)``; ``params`` carries kappa and mu.
    """
    T_tilde = hopf_T_tilde(n, K, delta)
    m = max(1, math.ceil(T / T_tilde * (1 - 1e-12)))
    piece = T / m
    p = hopf_params(n, K, delta, piece)
    cand = hopf_candidate(p)
    region = Region(n, 1.0, 0.0, piece)
    cert = certify(cand, EllipticOperatorSpec("pucci_minus", K), 0.0, 1.0, region, samples, seed)
    mu = hopf_mu(p)
    p = HopfBarrierParams(**{**p.__dict__, "kappa": cert.kappa, "mu": mu})
    constants = {**p.to_dict(), "T_total": T, "pieces": m, "T_tilde": T_tilde,
                 "log10_kappa": cert.log10_kappa}
    cert = BarrierCertificate(**{**cert.__dict__, "constants": constants})
    return p, cert, m


# -- Lemma-type supersolution w ------------------------------------------------------

def g_profile(s, n):
    """``g(s) = (1 - e^{-2ns})/(2n)`` for ``s >= 0`` and 0 below."""
    s = np.asarray(s, dtype=float)
    return np.where(s > 0, -np.expm1(-2 * n * np.maximum(s, 0)) / (2 * n), 0.0)


def lemma31_w(C0, lam, n, speedup=1.0):
    """``w = C0 g(|x| - r(t))`` with ``r(t) = 1 - speedup * C0 lam t``.

    ``speedup = 1`` is the equality case of the free-boundary condition;
    ``speedup > 1`` makes it strict.
    """
    if not C0 > 0:
        raise ValueError("C0 must be positive")
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    v = speedup * C0 * lam

    def rad(x):
        return np.sqrt(np.sum(x * x, axis=-1))

    def s_of(x, t):
        return rad(x) - (1 - v * t)

    def gp(s):  # g' on the smooth branch
        return np.exp(-2 * n * s)

    def value(x, t):
        return C0 * g_profile(s_of(x, t), n)

    def gradient(x, t):
        r = rad(x)[..., None]
        return C0 * gp(s_of(x, t))[..., None] * x / r

    def hessian(x, t):
        r = rad(x)[..., None, None]
        xh = x[..., :, None] * x[..., None, :] / r**2
        eye = np.eye(x.shape[-1])
        g1 = gp(s_of(x, t))[..., None, None]
        return C0 * (-2 * n * g1 * xh + g1 / r * (eye - xh))

    def time_derivative(x, t):
        return C0 * v * gp(s_of(x, t))

    def positive(x, t):
        return s_of(x, t) > 0

    def front(u, t):
        r = 1 - v * t
        if n == 1:
            return r[:, None]
        d = _ball_points(np.concatenate([np.ones((len(t), 1)), u], axis=1), n)
        return r[:, None] * d

    params = {"C0": C0, "lam": lam, "n": n, "speedup": speedup}
    return ClosedFormCandidate("lemma31_w", "supersolution", n, value, gradient, hessian,
                               time_derivative, positive, front, length_scale=1.0 / (2 * n),
                               params=params)


def lemma31_region(n):
    """``(1/2 <= |x| < 2) x (0, 1]``; in one dimension the half-line ``x > 0``."""
    return Region(n, 2.0, 0.0, 1.0, inner=0.5, half_line=(n == 1))


@dataclass(frozen=True)
class Lemma31Search:
    certificate: BarrierCertificate | None
    C0: float | None
    lam: float | None
    tried: int
    box: dict
    printed_inequality_satisfiable: bool
    printed_reason: str

    def to_dict(self):
        return {
            "certified": self.certificate is not None,
            "C0": self.C0,
            "lam": self.lam,
            "tried": self.tried,
            "box": self.box,
            "printed_inequality_satisfiable": self.printed_inequality_satisfiable,
            "printed_reason": self.printed_reason,
            "certificate": self.certificate.to_dict() if self.certificate else None,
        }


def printed_w_condition(C0, lam, n, K, f_bound):
    """The displayed sufficient condition ``C0 g'(C0 lam - 4nK) > f`` with ``r(t) >= 1/2`` on ``[0, 1]``.

    ``g'`` is at its smallest, ``e^{-2n(1 + C0 lam)}``.
    """
    gmin = math.exp(-2 * n * (1 + C0 * lam))
    return C0 * lam <= 0.5 and C0 * gmin * (C0 * lam - 4 * n * K) > f_bound


def search_lemma31_w(n, K, f_bound=0.0, C0_grid=None, lam_grid=None, c0_min=0.0,
                     speedup=1.05, samples=4096, seed=0, operator=None):
    """First ``(C0, lam)`` (C0 ascending, then lam) whose ``w`` certifies on :func:`lemma31_region`.

    Only pairs keeping ``r(t) >= 1/2`` on ``[0, 1]`` are tried.  The default
    operator is ``M+_K``, the worst case over K-elliptic operators for a
    supersolution.  The printed sufficient condition is checked over the same
    box and reported separately.
    """
    C0_grid = np.geomspace(0.25, 16, 13) if C0_grid is None else np.asarray(C0_grid, dtype=float)
    lam_grid = np.array([1.0, 0.5, 0.2, 0.1, 0.05, 0.025]) if lam_grid is None else np.asarray(lam_grid)
    operator = operator or EllipticOperatorSpec("pucci_plus", K)
    region = lemma31_region(n)
    box = {"C0": [float(c) for c in C0_grid], "lam": [float(v) for v in lam_grid],
           "speedup": speedup, "c0_min": c0_min, "operator": operator.to_dict()}
    printed = any(printed_w_condition(c, l, n, K, f_bound) for c in C0_grid for l in lam_grid)
    reason = ("some searched pair satisfies it" if printed else
              "C0 lam <= 1/2 (needed for r(t) >= 1/2) contradicts C0 lam > 4nK >= 4")
    tried = 0
    for c in C0_grid:
        if c < c0_min:
            continue
        for l in lam_grid:
            if speedup * c * l > 0.5:
                continue
            tried += 1
            cand = lemma31_w(float(c), float(l), n, speedup)
            cert = certify(cand, operator, f_bound, float(l), region, samples, seed)
            if cert.passed:
                return Lemma31Search(cert, float(c), float(l), tried, box, printed, reason)
    return Lemma31Search(None, None, None, tried, box, printed, reason)


# -- the perturbed plane subsolution v -----------------------------------------------

def section3_v(eta, gamma, lam, a_bar_fn, b_tilde_fn, C1, C2, C3, n=2, a_bar_prime_fn=None):
    """``v = (1 - C2 eta^{gamma/2}) a(t) h(x - d(t) e_n)^+``.

    ``h(y) = y_n - eta^{gamma/2 - 1} (|y'|^2 - C3 y_n^2)`` and
    ``d(t) = b~(t) + C1 eta^{gamma/2} lam t``; ``b~`` is taken to solve
    ``b~' = -lam a`` (so ``d' = lam (-a + C1 eta^{gamma/2})``).
    """
    q = eta ** (gamma / 2)
    A = 1 - C2 * q
    if not (eta > 0 and A > 0):
        raise ValueError("need eta > 0 and 1 - C2 eta^{gamma/2} > 0")
    k = eta ** (gamma / 2 - 1)
    if a_bar_prime_fn is None:
        def a_bar_prime_fn(t):
            return np.zeros_like(np.asarray(t, dtype=float))

    def d(t):
        return b_tilde_fn(t) + C1 * q * lam * t

    def dprime(t):
        return lam * (-a_bar_fn(t) + C1 * q)

    def y_of(x, t):
        y = np.array(x, dtype=float, copy=True)
        y[..., -1] -= d(t)
        return y

    def h_raw(y):
        yp2 = np.sum(y[..., :-1] ** 2, axis=-1)
        yn = y[..., -1]
        return yn - k * (yp2 - C3 * yn * yn)

    def grad_h(y):
        g = np.empty_like(y)
        g[..., :-1] = -2 * k * y[..., :-1]
        g[..., -1] = 1 + 2 * k * C3 * y[..., -1]
        return g

    def value(x, t):
        return A * a_bar_fn(t) * np.maximum(h_raw(y_of(x, t)), 0.0)

    def gradient(x, t):
        return (A * a_bar_fn(t))[..., None] * grad_h(y_of(x, t))

    def hessian(x, t):
        diag = np.full(n, -2 * k)
        diag[-1] = 2 * k * C3
        return (A * a_bar_fn(t))[..., None, None] * np.diag(diag)

    def time_derivative(x, t):
        y = y_of(x, t)
        hn = grad_h(y)[..., -1]
        return A * (a_bar_prime_fn(t) * h_raw(y) - a_bar_fn(t) * hn * dprime(t))

    def positive(x, t):
        return h_raw(y_of(x, t)) > 0

    def front(u, t):
        # y' uniform in the (n-1)-ball of radius 2 eta, y_n the root near zero
        m = len(t)
        if n == 1:
            yp = np.zeros((m, 0))
        elif n == 2:
            yp = (2 * eta * (2 * u[:, :1] - 1))
        else:
            yp = 2 * eta * _ball_points(u, n - 1)
        rho2 = np.sum(yp * yp, axis=-1)
        if C3 > 0:
            yn = 2 * k * rho2 / (1 + np.sqrt(1 + 4 * k * k * C3 * rho2))
        else:
            yn = k * rho2
        x = np.concatenate([yp, yn[:, None]], axis=1)
        x[:, -1] += d(t)
        return x

    params = {"eta": eta, "gamma": gamma, "lam": lam, "C1": C1, "C2": C2, "C3": C3, "n": n}
    cand = ClosedFormCandidate("section3_v", "subsolution", n, value, gradient, hessian,
                               time_derivative, positive, front, length_scale=eta, params=params)
    return cand, d


def v_region(eta, lam, d_fn, n):
    """``union_t B_{2 eta}(d(t) e_n) x {t}`` for ``t`` in ``[-eta/lam, 0]``."""

    def centre(t):
        c = np.zeros(np.shape(t) + (n,))
        c[..., -1] = d_fn(t)
        return c

    return Region(n, 2 * eta, -eta / lam, 0.0, center_fn=centre)


def v_geometry_check(cand, d_fn, a_bar_fn, eta, gamma, lam, samples=10_000, seed=0):
    """Sampled ordering ``v <= a (x_n - d)^+`` in ``B_{2eta}(d e_n)`` and the separation on its sphere.

    Returns ``(ordering_margin, separation_margin)``: the smallest values of
    ``a (x_n - d)^+ - v`` inside the ball and of that difference minus
    ``eta^{1 + gamma/2}`` on the sphere where ``v > 0`` (both must be >= 0).
    """
    n = cand.n
    region = v_region(eta, lam, d_fn, n)
    x, t = region.sample(samples, seed)
    plane = a_bar_fn(t) * np.maximum(x[:, -1] - d_fn(t), 0.0)
    order = float(np.min(plane - cand.value(x, t)))
    u = _sobol(n, samples, seed + 7)
    ts = region.t0 + (region.t1 - region.t0) * u[:, -1]
    if n == 1:
        dirs = np.where(u[:, :1] < 0.5, -1.0, 1.0)
    else:
        dirs = _ball_points(np.concatenate([np.ones((samples, 1)), u[:, :-1]], axis=1), n)
    xs = region.centre(ts) + 2 * eta * dirs
    vs = cand.value(xs, ts)
    on = vs > 0
    if not on.any():
        return order, math.inf
    gap = a_bar_fn(ts[on]) * np.maximum(xs[on, -1] - d_fn(ts[on]), 0.0) - vs[on]
    return order, float(np.min(gap - eta ** (1 + gamma / 2)))


@dataclass(frozen=True)
class SectionThreeSearch:
    constants: tuple | None
    certificate: BarrierCertificate | None
    ordering_margin: float | None
    separation_margin: float | None
    tried: int
    box: dict

    def to_dict(self):
        return {
            "certified": self.certificate is not None,
            "constants": None if self.constants is None else dict(zip(("C1", "C2", "C3"), self.constants)),
            "ordering_margin": self.ordering_margin,
            "separation_margin": self.separation_margin,
            "tried": self.tried,
            "box": self.box,
            "certificate": self.certificate.to_dict() if self.certificate else None,
        }


def search_section3_v(eta, gamma, lam, K, a_bar_fn, b_tilde_fn, f_neg=0.0, n=2,
                      a_bar_prime_fn=None, C1_grid=None, C2_grid=None, C3_grid=None,
                      samples=4096, seed=0):
    """Grid search for ``(C1, C2, C3)``: strict subsolution against ``M+_K`` plus ordering and separation."""
    C1_grid = np.array([0.5, 1, 2, 4, 8, 16]) if C1_grid is None else np.asarray(C1_grid)
    C2_grid = np.array([0.25, 0.5, 1, 1.5, 2, 3]) if C2_grid is None else np.asarray(C2_grid)
    C3_grid = np.array([0.1, 0.25, 0.5, 1, 2, 4]) if C3_grid is None else np.asarray(C3_grid)
    op = EllipticOperatorSpec("pucci_plus", K)
    box = {"C1": C1_grid.tolist(), "C2": C2_grid.tolist(), "C3": C3_grid.tolist(), "operator": op.to_dict()}
    tried = 0
    q = eta ** (gamma / 2)
    for c3 in C3_grid:
        for c2 in C2_grid:
            if 1 - c2 * q <= 0:
                continue
            for c1 in C1_grid:
                tried += 1
                cand, d = section3_v(eta, gamma, lam, a_bar_fn, b_tilde_fn, float(c1), float(c2),
                                     float(c3), n=n, a_bar_prime_fn=a_bar_prime_fn)
                order, sep = v_geometry_check(cand, d, a_bar_fn, eta, gamma, lam, seed=seed)
                if order < -1e-12 or sep < 0:
                    continue
                cert = certify(cand, op, f_neg, lam, v_region(eta, lam, d, n), samples, seed)
                if cert.passed:
                    return SectionThreeSearch((float(c1), float(c2), float(c3)), cert, order, sep, tried, box)
    return SectionThreeSearch(None, None, None, None, tried, box)


# -- exact references as candidates ------------------------------------------------------

def traveling_wave_candidate(c, lam, n=2, kind="supersolution"):
    """``lam^{-1}(e^{c(x_n + ct)} - 1)^+``: both defects vanish identically."""
    from .stefan import TravelingWave

    tw = TravelingWave(c, lam)

    def smooth(fn):
        def wrapped(x, t):
            return fn(x, t)
        return wrapped

    def front(u, t):
        m = len(t)
        xp = 2 * u - 1 if n > 1 else np.zeros((m, 0))
        return np.concatenate([xp, (-c * t)[:, None]], axis=1)

    def positive(x, t):
        return x[..., -1] + c * t > 0

    def gradient(x, t):
        s = x[..., -1] + c * t
        g = np.zeros(x.shape)
        g[..., -1] = c / lam * np.exp(c * s)
        return g

    def hessian(x, t):
        s = x[..., -1] + c * t
        H = np.zeros(x.shape + (n,))
        H[..., -1, -1] = c * c / lam * np.exp(c * s)
        return H

    def time_derivative(x, t):
        s = x[..., -1] + c * t
        return c * c / lam * np.exp(c * s)

    return ClosedFormCandidate("traveling_wave", kind, n, smooth(tw.value), gradient, hessian,
                               time_derivative, positive, front, length_scale=1.0,
                               params={"c": c, "lam": lam})


def plane_candidate(a, lam, n=2, b0=0.0, kind="supersolution"):
    """``a (x_n - b(t))^+`` with ``b(t) = b0 - lam a t``."""

    def b(t):
        return b0 - lam * a * t

    def value(x, t):
        return a * np.maximum(x[..., -1] - b(t), 0.0)

    def gradient(x, t):
        g = np.zeros(x.shape)
        g[..., -1] = a
        return g

    def hessian(x, t):
        return np.zeros(x.shape + (n,))

    def time_derivative(x, t):
        return np.full(np.shape(t), lam * a * a)

    def positive(x, t):
        return x[..., -1] > b(t)

    def front(u, t):
        m = len(t)
        xp = 2 * u - 1 if n > 1 else np.zeros((m, 0))
        return np.concatenate([xp, b(t)[:, None]], axis=1)

    return ClosedFormCandidate("plane", kind, n, value, gradient, hessian, time_derivative,
                               positive, front, length_scale=1.0, params={"a": a, "lam": lam, "b0": b0})


# -- touching ------------------------------------------------------------------------

@dataclass(frozen=True)
class Contact:
    x: tuple
    t: float
    difference: float
    where: str  # "interior" or "front"


def detect_touching(field, candidate, region=None, tolerance=1e-9, include_exterior=False):
    """One-sided contacts between a stored field and a candidate.

    Over the region's nodes (default: all nodes and levels) the signed
    difference ``field - phi`` must keep one sign up to ``tolerance``;
    otherwise the graphs cross and no contact is reported.  Contacts are nodes
    with ``|field - phi| <= tolerance``, classified ``interior`` where
    ``phi > 0`` and ``front`` where ``phi = 0`` next to a positive neighbour.
    Nodes where both vanish away from the front are dropped unless
    ``include_exterior``.
    """
    x = field.nodes()
    h = field.h
    n = field.n
    diffs, infos = [], []
    for k, t in enumerate(field.times):
        tt = np.full(x.shape[:-1], t)
        if region is not None:
            c = region.centre(tt)
            dist = np.linalg.norm(x - c, axis=-1)
            sel = (dist < region.radius) & (dist >= region.inner)
            if not (region.t0 - 1e-12 <= t <= region.t1 + 1e-12):
                continue
        else:
            sel = np.ones(x.shape[:-1], dtype=bool)
        if not sel.any():
            continue
        xs, ts = x[sel], tt[sel]
        phi = candidate.value(xs, ts)
        diff = field.values[k][sel] - phi
        diffs.append(diff)
        infos.append((xs, ts, phi))
    if not diffs:
        return []
    all_d = np.concatenate(diffs)
    if all_d.min() < -tolerance and all_d.max() > tolerance:
        return []
    contacts = []
    for diff, (xs, ts, phi) in zip(diffs, infos):
        hit = np.abs(diff) <= tolerance
        if not hit.any():
            continue
        pos = phi > tolerance
        near = np.zeros_like(pos)
        for a in range(n):
            e = np.zeros(n)
            e[a] = h
            near |= candidate.value(xs + e, ts) > tolerance
            near |= candidate.value(xs - e, ts) > tolerance
        for i in np.flatnonzero(hit):
            if pos[i]:
                where = "interior"
            elif near[i]:
                where = "front"
            elif include_exterior:
                where = "exterior"
            else:
                continue
            contacts.append(Contact(tuple(float(v) for v in xs[i]), float(ts[i]), float(diff[i]), where))
    return contacts
