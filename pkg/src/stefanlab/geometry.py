"""Measurable free-boundary geometry: flatness, nondegeneracy, trapping planes.

All analyses read immutable fields and fronts and never modify them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .grid import holder_seminorm


class FlatnessError(ValueError):
    """No sampled direction satisfies the one-sided sign conditions."""


class FitError(ValueError):
    """The trapping fit has nothing (or only zeros) to fit."""


# -- flatness -----------------------------------------------------------------

def sample_directions(n, count=720):
    """Unit directions: ``count`` angles in 2-d, a 16 x 64 polar grid in 3-d."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.sin(th), np.cos(th)], axis=-1)
    if n == 3:
        polar = np.pi * (np.arange(16) + 0.5) / 16
        azim = 2 * np.pi * np.arange(64) / 64
        P, A = np.meshgrid(polar, azim, indexing="ij")
        d = np.stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), np.cos(P)], axis=-1)
        return np.concatenate([d.reshape(-1, 3), [[0.0, 0.0, 1.0]]])
    raise ValueError("direction sampling supports n <= 3")


def _refine_directions(nu, n, spread, count=41):
    if n == 1:
        return nu[None, :]
    if n == 2:
        th0 = math.atan2(nu[0], nu[1])
        th = th0 + spread * np.linspace(-1, 1, count)
        return np.stack([np.sin(th), np.cos(th)], axis=-1)
    rng = np.random.default_rng(0)
    cand = nu + spread * rng.normal(size=(count * 4, n))
    cand = np.concatenate([nu[None, :], cand])
    return cand / np.linalg.norm(cand, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class FlatnessReport:
    epsilon: float
    nu: np.ndarray
    center: tuple
    radius: float
    times: np.ndarray
    half_widths: np.ndarray
    offsets: np.ndarray
    free_offset: bool = True

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "nu": [float(v) for v in self.nu],
            "center": list(self.center),
            "radius": self.radius,
            "free_offset": self.free_offset,
            "max_half_width": float(np.max(self.half_widths)) if self.half_widths.size else 0.0,
        }


def _front_points(front, level, center, radius):
    s = front.heights[level]
    if s.ndim == 0:
        pts = np.array([[float(s)]])
    else:
        xp = front.coords().reshape(-1, s.ndim)
        pts = np.concatenate([xp, s.reshape(-1, 1)], axis=1)
    d = np.linalg.norm(pts - center, axis=-1)
    return pts[d < radius]


def _sign_ok(field, level, center, radius, nu, width, offset):
    x = field.nodes()
    d = np.linalg.norm(x - center, axis=-1)
    inside = d < radius
    proj = (x - center) @ nu - offset
    u = field.values[level]
    neg = inside & (proj <= -width)
    pos = inside & (proj >= width)
    return bool(np.all(u[neg] == 0.0) and np.all(u[pos] > 0.0))


def measure_flatness(front, field, center, radius, direction_samples=720, t_range=None,
                     free_offset=True, tol=1e-12):
    """Best strip ``{|<x - x0, nu> - o(t)| <= eps * radius}`` holding the front in the ball.

    For each sampled direction the half-width at a level is the smallest strip
    containing the front nodes inside ``B_radius(center)``; with
    ``free_offset`` the strip may slide along ``nu`` from level to level (the
    strip centre ``o(t)`` is the midpoint of the projections), otherwise it is
    pinned at the ball centre.  ``eps`` is the largest half-width over the
    window divided by ``radius``.  Directions are tried from thinnest to
    thickest until the sign conditions (``u = 0`` behind the strip, ``u > 0``
    ahead of it) hold on the field nodes of every checked level.
    """
    center = np.asarray(center, dtype=float)
    n = center.size
    times = front.times
    levels = np.arange(front.nt)
    if t_range is not None:
        levels = levels[(times >= t_range[0] - 1e-12) & (times <= t_range[1] + 1e-12)]
    pts = [_front_points(front, k, center, radius) for k in levels]
    if any(p.shape[0] == 0 for p in pts):
        raise FlatnessError("front misses the ball at some time level")

    def widths(dirs):
        hw = np.empty((len(pts), len(dirs)))
        off = np.empty_like(hw)
        for i, p in enumerate(pts):
            proj = (p - center) @ dirs.T
            if free_offset:
                hi, lo = proj.max(axis=0), proj.min(axis=0)
                hw[i] = 0.5 * (hi - lo)
                off[i] = 0.5 * (hi + lo)
            else:
                hw[i] = np.abs(proj).max(axis=0)
                off[i] = 0.0
        return hw, off

    # field levels that coincide with front levels, for the sign checks
    ftimes = field.times
    checks = []
    for i, k in enumerate(levels):
        j = int(np.argmin(np.abs(ftimes - times[k])))
        if abs(ftimes[j] - times[k]) <= 1e-9 * max(1.0, abs(times[k])):
            checks.append((i, j))

    def admissible(nu, hw, off):
        for i, j in checks:
            if not _sign_ok(field, j, center, radius, nu, hw[i] + tol, off[i]):
                return False
        return True

    dirs = sample_directions(n, direction_samples)
    hw, off = widths(dirs)
    eps_all = hw.max(axis=0)
    best = None
    for d in np.argsort(eps_all, kind="stable"):
        if admissible(dirs[d], hw[:, d], off[:, d]):
            best = d
            break
    if best is None:
        raise FlatnessError("sign conditions fail for every sampled direction")
    nu = dirs[best]
    spread = 2 * np.pi / direction_samples if n == 2 else 0.1
    rdirs = _refine_directions(nu, n, spread)
    rhw, roff = widths(rdirs)
    reps = rhw.max(axis=0)
    for d in np.argsort(reps, kind="stable"):
        if reps[d] >= eps_all[best]:
            break
        if admissible(rdirs[d], rhw[:, d], roff[:, d]):
            nu, hw, off = rdirs[d], rhw, roff
            best = d
            eps_all = reps
            break
    else:
        hw, off = hw, off
    col = hw[:, best]
    return FlatnessReport(float(col.max() / radius), nu, tuple(center), float(radius),
                          times[levels], col, off[:, best], free_offset)


# -- nondegeneracy ----------------------------------------------------------------

@dataclass(frozen=True)
class NondegSpec:
    """Thresholds ``K^-1 (1 + ||f^-||) lam`` (integral) and ``K^-1 (1 + ||f||) lam`` (pointwise)."""

    K: float
    p0: float = 0.5
    C_H: float | None = None
    f_neg_norm: float = 0.0
    f_norm: float = 0.0

    def __post_init__(self):
        if not 0 < self.p0 < 1:
            raise ValueError("p0 must lie in (0, 1)")
        if not self.K >= 1:
            raise ValueError("K must be >= 1")
        if self.f_neg_norm < 0 or self.f_norm < self.f_neg_norm - 1e-15:
            raise ValueError("need 0 <= ||f^-|| <= ||f||")

    def integral_threshold(self, lam):
        return (1 + self.f_neg_norm) * lam / self.K

    def pointwise_threshold(self, lam, mode="negative_part"):
        norm = self.f_norm if mode == "full_norm" else self.f_neg_norm
        return (1 + norm) * lam / self.K


def p0_mean(field, x0, t0, r, duration, p0, time_samples=None):
    """``(mean of u^p0 over B_r(x0) x (t0, t0 + duration))^(1/p0)`` by the midpoint rule.

    Space: grid cells whose centres (the nodes) lie in the ball.  Time:
    midpoints of ``m`` equal sub-intervals, values interpolated linearly
    between stored levels.
    """
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 - r < field.lower - 1e-12) or np.any(x0 + r > field.upper + 1e-12):
        raise ValueError("cylinder exits the field box")
    times = field.times
    if t0 < times[0] - 1e-12 or t0 + duration > times[-1] + 1e-12:
        raise ValueError("cylinder exits the stored time window")
    lo = np.floor((x0 - r - field.lower) / field.h).astype(int)
    hi = np.ceil((x0 + r - field.lower) / field.h).astype(int) + 1
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.array(field.shape))
    sl = tuple(slice(a, b) for a, b in zip(lo, hi))
    axes = [field.lower[a] + field.h * np.arange(lo[a], hi[a]) for a in range(field.n)]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    inside = np.sum((x - x0) ** 2, axis=-1) < r * r
    if not inside.any():
        raise ValueError("ball contains no grid node")
    m = time_samples or max(2, int(math.ceil(duration / field.dt)))
    ts = t0 + duration * (np.arange(m) + 0.5) / m
    pos = (ts - field.t0) / field.dt
    k = np.clip(np.floor(pos).astype(int), 0, max(field.nt - 2, 0))
    w = pos - k
    total = 0.0
    for ki, wi in zip(k, w):
        a = field.values[(ki,) + sl][inside]
        if field.nt > 1 and wi > 0:
            a = (1 - wi) * a + wi * field.values[(ki + 1,) + sl][inside]
        total += np.mean(np.maximum(a, 0.0) ** p0)
    return float((total / m) ** (1 / p0))


def nondeg_integral(field, x0, t0, r, spec: NondegSpec, lam, scale=1.0):
    """p0-mean over ``B_r(x0) x (t0, t0 + r^2/K)`` and the integral verdict.

    ``scale`` multiplies the threshold (1 in the rescaled setting, the
    ball radius in the unscaled one).
    """
    value = p0_mean(field, x0, t0, r, r * r / spec.K, spec.p0)
    return value, value >= spec.integral_threshold(lam) * scale


def nondeg_pointwise(field, x0, t0, spec: NondegSpec, lam, mode="negative_part", scale=1.0):
    if mode not in ("negative_part", "full_norm"):
        raise ValueError("mode must be 'negative_part' or 'full_norm'")
    u = float(field.sample(np.asarray(x0, dtype=float), t0))
    return u >= spec.pointwise_threshold(lam, mode) * scale


def g_convexity(p0, samples=None):
    """Minimum second difference of ``g(y) = 1 - y^p0 - (1 - y)^p0`` on a y-grid."""
    y = np.linspace(0.1, 0.9, 9) if samples is None else np.asarray(samples, dtype=float)
    step = 1e-3

    def g(v):
        return 1 - v**p0 - (1 - v) ** p0

    second = (g(y + step) - 2 * g(y) + g(y - step)) / step**2
    return float(second.min())


@dataclass(frozen=True)
class LipschitzReport:
    applicable: bool
    reason: str
    value: float = float("nan")
    bound: float = float("nan")
    slack: float = float("nan")
    g_convex: bool = True

    @property
    def passed(self):
        return self.applicable and self.value >= self.bound and self.g_convex


def lipschitz_equivalence_check(field, L, spec: NondegSpec, lam, x0, t0, r, holder_pairs=20000):
    """Pointwise bound plus small parabolic Lipschitz norm implies the halved integral bound.

    Hypotheses that fail make the report inapplicable rather than failed.
    """
    A = (1 + spec.f_neg_norm) / spec.K
    convex = g_convexity(spec.p0) >= 0
    if L > 2 * A + 1e-15:
        return LipschitzReport(False, f"L={L:g} exceeds 2 (1 + ||f^-||) / K = {2 * A:g}", g_convex=convex)
    if not r < lam / 4:
        return LipschitzReport(False, "radius must be below lam / 4", g_convex=convex)
    measured = holder_seminorm(field, 1.0, sample_pairs=holder_pairs)
    if measured > L * (1 + 1e-9) + 1e-12:
        return LipschitzReport(False, f"measured Lipschitz norm {measured:g} exceeds L", g_convex=convex)
    u0 = float(field.sample(np.asarray(x0, dtype=float), t0))
    if u0 < A * lam:
        return LipschitzReport(False, "pointwise bound fails at (x0, t0)", g_convex=convex)
    value = p0_mean(field, x0, t0, r, r * r, spec.p0)
    bound = 0.5 * A * lam
    return LipschitzReport(True, "", value, bound, value / bound, convex)


# -- Harnack and Hopf checks ----------------------------------------------------

def weak_harnack_check(field, f_bound, r, p0, center=None, t_origin=None):
    """Empirical ``C_H``: p0-mean over ``B_r x (r^2, 2r^2)`` over ``inf_{B_r x (3r^2, 4r^2)} u + r^2 f``.

    Times are measured from ``t_origin`` (default: the first stored level).
    Returns ``inf`` when the denominator vanishes under a positive numerator.
    """
    if not 0 < r < 0.25:
        raise ValueError("r must lie in (0, 1/4)")
    center = np.zeros(field.n) if center is None else np.asarray(center, dtype=float)
    t0 = field.t0 if t_origin is None else t_origin
    num = p0_mean(field, center, t0 + r * r, r, r * r, p0)
    x = field.nodes()
    inside = np.sum((x - center) ** 2, axis=-1) < r * r
    times = field.times
    sel = (times >= t0 + 3 * r * r - 1e-12) & (times <= t0 + 4 * r * r + 1e-12)
    if not sel.any():
        raise ValueError("no stored level in the infimum window")
    low = float(field.values[sel][:, inside].min())
    den = low + r * r * f_bound
    if den <= 0:
        return math.inf if num > 0 else 0.0
    return num / den


def hopf_lower_bound(field, T1, center=None, radius=1.0):
    """``min u / dist(x, boundary of B_radius)`` over the ball and levels ``t >= T1``.

    Nodes closer than ``2h`` to the sphere are skipped.
    """
    center = np.zeros(field.n) if center is None else np.asarray(center, dtype=float)
    x = field.nodes()
    dist = radius - np.linalg.norm(x - center, axis=-1)
    sel = dist >= 2 * field.h - 1e-12
    levels = field.times >= T1 - 1e-12
    if not sel.any() or not levels.any():
        raise ValueError("no nodes in the requested region")
    ratio = field.values[levels][:, sel] / dist[sel]
    return max(0.0, float(ratio.min()))


# -- mollification and trapping -------------------------------------------------

def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


_BUMP_MASS = integrate.quad(lambda r: float(_bump(r)), -1, 1)[0]


def bump(r):
    """Standard mollifier on ``(-1, 1)`` with unit mass."""
    return _bump(r) / _BUMP_MASS


def mollifier_c1():
    """``c1 = 2 * integral_{-1}^{0} rho'(r) dr``.

    The kernel over a window of length ``eta^2`` is ``(2/eta^2) rho(2 s/eta^2)``,
    so a jump of size D produces a slope of at most ``c1 D / eta^2``.
    """
    def drho(r):
        return float(bump(np.array(r)) * (-2 * r / (1 - r * r) ** 2)) if abs(r) < 1 else 0.0

    return 2 * integrate.quad(drho, -1, 0, limit=200)[0]


def mollify_coefficient(a, dt, eta):
    """Convolve uniform samples with the unit-mass bump of support length ``eta^2``.

    Edges use odd reflection about the end samples, which keeps affine inputs
    exact up to the ends.
    """
    a = np.asarray(a, dtype=float)
    width = eta * eta
    if dt > width / 8 + 1e-15:
        raise ValueError(f"time step {dt:g} is not finer than eta^2/8 = {width / 8:g}")
    half = int(math.floor(0.5 * width / dt))
    if half >= a.size:
        raise ValueError("mollifier window exceeds the sample range")
    offs = np.arange(-half, half + 1)
    w = bump(2 * offs * dt / width)
    w = w / w.sum()
    left = 2 * a[0] - a[half:0:-1]
    right = 2 * a[-1] - a[-2:-half - 2:-1]
    ext = np.concatenate([left, a, right])
    return np.convolve(ext, w[::-1], mode="valid")


@dataclass(frozen=True, eq=False)
class TrappingFit:
    times: np.ndarray
    a_bar: np.ndarray
    a_bar_smooth: np.ndarray
    b: np.ndarray
    b_tilde: np.ndarray
    b_tilde_prime: np.ndarray
    alpha0: float
    gamma: float
    beta: float
    eta: float
    lam: float
    residual: float
    integral_error: float
    ode_error: float
    window: tuple = field(default=())

    def to_dict(self):
        return {
            "eta": self.eta,
            "alpha0": self.alpha0,
            "gamma": self.gamma,
            "beta": self.beta,
            "lam": self.lam,
            "residual": self.residual,
            "integral_error": self.integral_error,
            "ode_error": self.ode_error,
            "a_bar_min": float(self.a_bar.min()),
            "a_bar_max": float(self.a_bar.max()),
            "window": list(self.window),
        }


def exponents(alpha0):
    gamma = alpha0 / (2 + alpha0)
    return gamma, gamma / 4


def _slab_slope(u, x, b, eta):
    xp = x[..., :-1]
    d = x[..., -1] - b
    sel = (np.sum(xp * xp, axis=-1) < eta * eta) & (d > 0) & (d < eta)
    if not sel.any():
        raise FitError("empty fitting slab")
    uu, dd = u[sel], d[sel]
    if not np.any(uu > 0):
        raise FitError("degenerate fit: the slab carries only zeros")
    return float(np.dot(uu, dd) / np.dot(dd, dd))


def _rk4_backward(times, a_fn, lam):
    """``b' = -lam a(t)`` from ``b(times[-1]) = 0`` back to ``times[0]``."""
    b = np.zeros(times.size)
    for k in range(times.size - 1, 0, -1):
        t, h = times[k], times[k - 1] - times[k]
        f1 = -lam * a_fn(t)
        f2 = -lam * a_fn(t + h / 2)
        f3 = f2
        f4 = -lam * a_fn(t + h)
        b[k - 1] = b[k] + h * (f1 + 2 * f2 + 2 * f3 + f4) / 6
    return b


def _rk4_step(t, b, h, a_fn, lam):
    f1 = -lam * a_fn(t)
    f2 = -lam * a_fn(t + h / 2)
    f4 = -lam * a_fn(t + h)
    return b + h * (f1 + 4 * f2 + f4) / 6


def _rk4_derivative(times, b, a_fn, lam, delta):
    """``b'`` at the nodes by fourth-order differences of short RK4 continuations.

    Each node value is continued by single RK4 steps of ``+-delta`` and
    ``+-2 delta``, so the check measures the computed solution, not ``a``.
    """
    pts = [_rk4_step(times, b, k * delta, a_fn, lam) for k in (-2, -1, 1, 2)]
    return (pts[0] - 8 * pts[1] + 8 * pts[2] - pts[3]) / (12 * delta)


def fit_trapping(solution, eta, alpha0=1.0):
    """Trapping planes ``a(t) (x_n - b~(t) -+ eta^(1+beta))^+`` around ``u`` near the origin.

    Times are taken relative to the last stored level (``t = 0``).  ``a`` is
    the least-squares slope of ``u`` against ``(x_n - b(t))^+`` on the slab
    ``|x'| < eta, 0 < x_n - b(t) < eta`` with ``b(t) = s(0, t)``; it is
    mollified over windows of length ``eta^2`` and ``b~`` solves
    ``b~' = -lam a_eta`` with ``b~(0) = 0`` (RK4 on a cubic spline of
    ``a_eta``).  ``residual`` is the smallest shift, in units of
    ``eta^(1+beta)``, making the two planes enclose ``u`` on
    ``B_eta x [-eta/lam, 0]``.
    """
    fld = solution.fine_field()
    front = solution.front
    lam = solution.lam
    if not lam > 0:
        raise FitError("the trapping fit needs lam > 0")
    if eta < 4 * fld.h - 1e-12:
        raise FitError(f"eta={eta:g} is below 4h; the slab is not resolved")
    if front.nt != fld.nt:
        raise FitError("front and field levels differ")
    gamma, beta = exponents(alpha0)
    nt = fld.nt
    t = fld.dt * (np.arange(nt) - (nt - 1))
    b = front.b()
    x = fld.nodes()
    a_bar = np.array([_slab_slope(fld.values[k], x, b[k], eta) for k in range(nt)])
    a_s = mollify_coefficient(a_bar, fld.dt, eta)
    spline = CubicSpline(t, a_s)
    b_t = _rk4_backward(t, spline, lam)
    b_prime = _rk4_derivative(t, b_t, spline, lam, fld.dt / 16)
    ode_error = float(np.max(np.abs(b_prime + lam * a_s)))
    integ = spline.antiderivative()
    # b~(t) = lam * int_t^0 a_eta
    integral_error = float(np.max(np.abs(b_t - lam * (integ(0.0) - integ(t)))))

    t_lo = -eta / lam
    win = t >= t_lo - 1e-12
    if not np.any(win):
        raise FitError("no stored level in the trapping window")
    ball = np.sum(x * x, axis=-1) < eta * eta
    xn = x[..., -1][ball]
    worst = -np.inf
    for k in np.flatnonzero(win):
        u = fld.values[k][ball]
        d = xn - b_t[k]
        q = u / a_s[k]
        need_up = np.where(u > 0, q - d, -np.inf)
        need_lo = d - q
        worst = max(worst, float(np.max(need_up)), float(np.max(need_lo)))
    residual = worst / eta ** (1 + beta)
    return TrappingFit(t, a_bar, a_s, b, b_t, b_prime, alpha0, gamma, beta, eta, lam,
                       residual, integral_error, ode_error, (float(t[win][0]), 0.0))
