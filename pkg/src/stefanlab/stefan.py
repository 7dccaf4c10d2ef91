"""One-phase Stefan problem with a tracked graph front ``x_n = s(x', t)``.

The temperature solves ``u_t - F(D^2 u) = lam * f`` above the front and
vanishes below it; the front moves by ``u_t = lam |grad u|^2``, which for a
graph reads ``s_t = -lam u_n (1 + |grad' s|^2)``.

Near the front every column is extended below its first well-separated node
(``anchor``, at least ``h/2`` above the front) by the quadratic through the
front (where ``u = 0``) and the two nodes above it.  The centred stencils
then act on the extended values, and ``u_n`` at the front is the slope of
the same quadratic.
"""

from __future__ import annotations

import math
import time
from itertools import product
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import ParabolicCylinder, SpaceTimeField
from .operators import EllipticOperatorSpec
from .solver import CFLError, SolverDivergence, apply_operator, cfl_limit


class FrontError(RuntimeError):
    """The front left the box or the state became inconsistent."""


# -- exact references ------------------------------------------------------

@dataclass(frozen=True)
class TravelingWave:
    """``u = (exp(c (x_n + c t)) - 1)^+ / lam``: exact for the heat operator with ``f = 0``."""

    c: float
    lam: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("wave speed must be positive")
        if not 0 < self.lam <= 1:
            raise ValueError("lambda must lie in (0, 1]")

    def _arg(self, x, t):
        return self.c * (np.asarray(x, dtype=float)[..., -1] + self.c * np.asarray(t, dtype=float))

    def value(self, x, t):
        s = self._arg(x, t)
        return np.where(s > 0, np.expm1(np.maximum(s, 0)) / self.lam, 0.0)

    def gradient(self, x, t):
        x = np.asarray(x, dtype=float)
        s = self._arg(x, t)
        g = np.zeros(np.broadcast_shapes(x.shape, np.shape(s) + (x.shape[-1],)))
        g[..., -1] = np.where(s >= 0, self.c * np.exp(np.maximum(s, 0)) / self.lam, 0.0)
        return g

    def hessian(self, x, t):
        x = np.asarray(x, dtype=float)
        s = self._arg(x, t)
        n = x.shape[-1]
        H = np.zeros(np.shape(s) + (n, n))
        H[..., -1, -1] = np.where(s > 0, self.c**2 * np.exp(np.maximum(s, 0)) / self.lam, 0.0)
        return H

    def time_derivative(self, x, t):
        s = self._arg(x, t)
        return np.where(s >= 0, self.c**2 * np.exp(np.maximum(s, 0)) / self.lam, 0.0)

    def front(self, xp, t):
        return np.full(np.shape(xp)[:-1] if np.ndim(xp) else (), -self.c * t, dtype=float)

    def __call__(self, x, t):
        return self.value(x, t)


def traveling_wave(c, lam):
    return TravelingWave(float(c), float(lam))


@dataclass(frozen=True)
class MovingPlane:
    """``a (x_n - b(t))^+`` with ``b(t) = b0 - lam a t``: the equality case of the front law."""

    a: float
    lam: float
    b0: float = 0.0

    def b(self, t):
        return self.b0 - self.lam * self.a * np.asarray(t, dtype=float)

    def value(self, x, t):
        return self.a * np.maximum(np.asarray(x, dtype=float)[..., -1] - self.b(t), 0.0)

    def front(self, xp, t):
        return np.full(np.shape(xp)[:-1] if np.ndim(xp) else (), float(self.b(t)))

    def __call__(self, x, t):
        return self.value(x, t)


# -- scenario and state ------------------------------------------------------

def _as_source(f):
    if callable(f):
        return f
    value = float(f)
    return lambda x, t: value


@dataclass(frozen=True, eq=False)
class StefanScenario:
    """A graph-front Stefan run on the box ``[lower, upper]`` over ``(t_start, t_end]``.

    ``u0(x)`` and ``front0(xp)`` give the initial state; ``lateral`` is
    ``"initial"`` (boundary values frozen at ``u0``, edge fronts pinned),
    ``"neumann"`` (mirrored sides, top frozen) or a callable ``g(x, t)``
    prescribing values on the box faces.  ``source`` is ``f`` (a callable or a
    constant); the PDE right-hand side is ``lam * f``.
    """

    n: int
    operator: EllipticOperatorSpec
    lam: float
    K: float
    lower: tuple
    upper: tuple
    h: float
    t_start: float
    u0: Callable
    front0: Callable
    t_end: float = 0.0
    source: object = 0.0
    lateral: object = "initial"
    dt: float | None = None
    store_levels: int = 200
    detail_lower: tuple | None = None
    detail_upper: tuple | None = None
    detail_dt: float | None = None
    name: str = "scenario"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if not self.K >= 1:
            raise ValueError("K must be >= 1")
        if len(self.lower) != self.n or len(self.upper) != self.n:
            raise ValueError("box corners must have n coordinates")
        if not self.t_start < self.t_end:
            raise ValueError("need t_start < t_end")
        if isinstance(self.lateral, str) and self.lateral not in ("initial", "neumann"):
            raise ValueError(f"unknown lateral mode {self.lateral!r}")
        limit = cfl_limit(self.h, self.n, self.operator.coefficient_bound)
        if self.dt is not None and self.dt > limit * (1 + 1e-12):
            raise CFLError(f"dt={self.dt:.3e} exceeds h^2/(4nK)={limit:.3e}")

    @property
    def f(self):
        return _as_source(self.source)

    def source_norms(self, x=None, t=None):
        """``(sup |f|, sup f^-)``; exact for constants, sampled on nodes otherwise."""
        if not callable(self.source):
            v = float(self.source)
            return abs(v), max(-v, 0.0)
        if x is None:
            x = self.grid()[1]
        ts = np.linspace(self.t_start, self.t_end, 9) if t is None else [t]
        vals = np.concatenate([np.ravel(np.broadcast_to(self.source(x, s), x.shape[:-1])) for s in ts])
        return float(np.abs(vals).max()), float(np.maximum(-vals, 0).max())

    def grid(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        counts = np.rint((upper - lower) / self.h).astype(int) + 1
        axes = [lower[a] + self.h * np.arange(counts[a]) for a in range(self.n)]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return lower, x

    def time_grid(self):
        span = self.t_end - self.t_start
        target = self.dt or cfl_limit(self.h, self.n, self.operator.coefficient_bound)
        steps = max(1, math.ceil(span / target - 1e-9))
        keep = max(1, math.ceil(steps / max(1, self.store_levels)))
        fine = keep
        if self.detail_dt is not None:
            fine = max(1, min(keep, int(self.detail_dt / (span / steps) + 1e-9)))
            keep = fine * max(1, round(keep / fine))
        steps = keep * math.ceil(steps / keep)
        return span / steps, steps, keep, fine

    def describe(self):
        """JSON-friendly echo of the scalar settings."""
        return {
            "name": self.name,
            "n": self.n,
            "operator": self.operator.to_dict(),
            "lam": self.lam,
            "K": self.K,
            "lower": list(map(float, self.lower)),
            "upper": list(map(float, self.upper)),
            "h": self.h,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "source": self.source if not callable(self.source) else "callable",
            "lateral": self.lateral if isinstance(self.lateral, str) else "callable",
            "meta": self.meta,
        }


@dataclass(frozen=True, eq=False)
class FrontGraph:
    """Front heights ``s[k, i1..i_{n-1}]`` over the ``x'`` grid; ``u > 0`` above."""

    heights: np.ndarray
    lower: np.ndarray
    h: float
    t0: float
    dt: float
    nu: tuple = ()

    def __post_init__(self):
        s = np.array(self.heights, dtype=float)
        if not np.all(np.isfinite(s)):
            raise ValueError("front heights must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "heights", s)
        lower = np.array(self.lower, dtype=float).reshape(-1)
        lower.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        if not self.nu:
            e = [0.0] * (s.ndim - 1) + [1.0]
            object.__setattr__(self, "nu", tuple(e))

    @property
    def nt(self):
        return self.heights.shape[0]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    def coords(self):
        """``x'`` node positions, shape ``(*shape', n - 1)``."""
        shape = self.heights.shape[1:]
        axes = [self.lower[a] + self.h * np.arange(shape[a]) for a in range(len(shape))]
        if not axes:
            return np.zeros((0,))
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def at(self, xp, level):
        """Multilinear interpolation of the heights at ``xp`` for one level."""
        s = self.heights[level]
        if s.ndim == 0:
            return float(s)
        xp = np.asarray(xp, dtype=float)
        pos = [(xp[..., a] - self.lower[a]) / self.h for a in range(s.ndim)]
        out = np.zeros(xp.shape[:-1])
        base, frac = [], []
        for p, d in zip(pos, s.shape):
            if np.any(p < -1e-9) or np.any(p > d - 1 + 1e-9):
                raise ValueError("x' outside the front grid")
            p = np.clip(p, 0, d - 1)
            i = np.minimum(np.floor(p).astype(int), d - 2)
            base.append(i)
            frac.append(p - i)
        for corner in product((0, 1), repeat=s.ndim):
            w = np.ones(xp.shape[:-1])
            idx = []
            for c, i, f in zip(corner, base, frac):
                w = w * (f if c else 1 - f)
                idx.append(i + c)
            out = out + w * s[tuple(idx)]
        return out

    def b(self):
        """``b(t) = s(0, t)`` per stored level."""
        if self.heights.ndim == 1:
            return self.heights.copy()
        zero = np.zeros(self.heights.ndim - 1)
        return np.array([float(self.at(zero, k)) for k in range(self.nt)])


@dataclass(frozen=True, eq=False)
class SpaceTimeSolution:
    field: SpaceTimeField
    front: FrontGraph
    scenario: StefanScenario
    detail: SpaceTimeField | None = None
    meta: dict = field(default_factory=dict)

    @property
    def lam(self):
        return self.scenario.lam

    def b(self):
        return self.front.b()

    def fine_field(self):
        return self.detail if self.detail is not None else self.field


# -- the front law -----------------------------------------------------------

def _anchors(s, lower_n, h, nn):
    # first node at least h/2 above the front
    a = np.ceil((s + 0.5 * h - lower_n) / h - 1e-12).astype(int)
    if np.any(a < 1) or np.any(a + 1 > nn - 2):
        raise FrontError("front left the box (no room for the one-sided stencil)")
    return a


def _quadratic_pieces(u, s, a, lower_n, h):
    """``(d0, ua, ua1)`` for the quadratic through the front and the two anchor nodes."""
    ua = np.take_along_axis(u, a[..., None], axis=-1)[..., 0]
    ua1 = np.take_along_axis(u, (a + 1)[..., None], axis=-1)[..., 0]
    d0 = lower_n + a * h - s
    return d0, ua, ua1


def _eval_quadratic(zeta, d0, ua, ua1, h):
    d1 = d0 + h
    d0 = d0[..., None]
    d1 = d1[..., None]
    return -zeta * (zeta - d1) / (d0 * h) * ua[..., None] + zeta * (zeta - d0) / (d1 * h) * ua1[..., None]


def front_normal_derivative(u, s, lower_n, h, anchors=None):
    """``u_n`` at the front from the one-sided quadratic through the two anchors."""
    a = _anchors(s, lower_n, h, u.shape[-1]) if anchors is None else anchors
    d0, ua, ua1 = _quadratic_pieces(u, s, a, lower_n, h)
    d1 = d0 + h
    return ua * d1 / (d0 * h) - ua1 * d0 / (d1 * h)


def front_gradient(s, h):
    """``grad' s`` by centred differences (one-sided at the edges)."""
    if s.ndim == 0:
        return np.zeros((0,))
    if s.ndim == 1:
        return np.gradient(s, h)[..., None] if s.size > 1 else np.zeros(s.shape + (1,))
    return np.stack(np.gradient(s, h), axis=-1)


def front_velocity(u, s, lower_n, h, lam, tol=1e-9, anchors=None):
    """Graph-form front speed ``-lam u_n (1 + |grad' s|^2)``; always ``<= 0``.

    ``u`` has shape ``(*shape', N_n)`` with the last axis along ``x_n``.
    A clearly negative extracted ``u_n`` raises ``FrontError``.
    """
    s = np.asarray(s, dtype=float)
    un = front_normal_derivative(u, s, lower_n, h, anchors)
    scale = max(1.0, float(np.max(np.abs(u)))) / h
    if np.any(un < -tol * scale):
        raise FrontError(f"negative normal derivative at the front (min {un.min():.3e})")
    un = np.maximum(un, 0.0)
    g = front_gradient(s, h)
    return -lam * un * (1 + np.sum(g * g, axis=-1))


def _extend(u, s, a, lower_n, h, lo, hi, uncovered_only=False):
    """Write the quadratic extension into rows ``lo..hi-1`` below each anchor (in place).

    With ``uncovered_only`` only rows above the front ``s`` are touched.
    """
    if hi <= lo:
        return
    d0, ua, ua1 = _quadratic_pieces(u, s, a, lower_n, h)
    rows = np.arange(lo, hi)
    zeta = lower_n + h * rows - s[..., None]
    q = _eval_quadratic(zeta, d0, ua, ua1, h)
    sel = rows < a[..., None]
    if uncovered_only:
        sel &= zeta > 0
    band = u[..., lo:hi]
    band[sel] = q[sel]


def _fill_below(u, s, lower_n, h):
    """Extend every column below its anchor (in place); returns the anchors."""
    a = _anchors(s, lower_n, h, u.shape[-1])
    _extend(u, s, a, lower_n, h, 0, int(a.max()))
    return a


def _masked_copy(u, s, lower_n, h):
    """Stored representation: zero at and below the front, clipped at 0 above."""
    nn = u.shape[-1]
    z = lower_n + h * np.arange(nn)
    pos = z > s[..., None]
    return np.where(pos, np.maximum(u, 0.0), 0.0), pos


def _subbox_slices(lower, h, shape, sub_lower, sub_upper):
    sl = []
    for a in range(len(shape)):
        i0 = int(round((sub_lower[a] - lower[a]) / h))
        i1 = int(round((sub_upper[a] - lower[a]) / h)) + 1
        if i0 < 0 or i1 > shape[a] or i0 >= i1:
            raise ValueError("detail box must lie inside the simulation box")
        sl.append(slice(i0, i1))
    return tuple(sl)


def simulate(scenario: StefanScenario) -> SpaceTimeSolution:
    """Operator-split march: PDE step in the positive phase, then a front step."""
    wall = time.perf_counter()
    sc = scenario
    n, h, lam = sc.n, sc.h, sc.lam
    lower, x = sc.grid()
    shape = x.shape[:-1]
    lower_n = float(lower[-1])
    xp = x[..., 0, :-1]
    dt, steps, keep, fine = sc.time_grid()
    f = sc.f

    s = np.array(np.broadcast_to(sc.front0(xp), shape[:-1]), dtype=float)
    u = np.array(np.broadcast_to(sc.u0(x), shape), dtype=float)
    z = lower_n + h * np.arange(shape[-1])
    below = z <= s[..., None]
    if np.any(u < -1e-12):
        raise ValueError("initial temperature must be nonnegative")
    if np.any(np.abs(u[below]) > 1e-12):
        raise ValueError("initial temperature must vanish at and below the front")
    u[below] = 0.0
    u_init = u.copy()
    s_init = s.copy()

    # boundary bookkeeping: faces of the box
    face = np.zeros(shape, dtype=bool)
    face[..., -1] = True
    for a in range(n - 1):
        idx = [slice(None)] * n
        idx[a] = 0
        face[tuple(idx)] = True
        idx[a] = -1
        face[tuple(idx)] = True
    edge_cols = np.zeros(shape[:-1], dtype=bool)
    for a in range(n - 1):
        idx = [slice(None)] * (n - 1)
        idx[a] = 0
        edge_cols[tuple(idx)] = True
        idx[a] = -1
        edge_cols[tuple(idx)] = True
    lateral = sc.lateral
    if lateral == "neumann":
        face = np.zeros(shape, dtype=bool)
        face[..., -1] = True
    nn = shape[-1]
    rows = np.arange(nn)
    xcore = (slice(1, -1),) * (n - 1)
    x_face = x[face]
    u_face = u_init[face]
    const_src = None if callable(sc.source) else float(sc.source)

    detail_sl = None
    if sc.detail_lower is not None:
        detail_sl = _subbox_slices(lower, h, shape, sc.detail_lower, sc.detail_upper)

    levels, masks, fronts = [], [], []
    dlevels, dmasks = [], []

    def record(k):
        vals, pos = _masked_copy(u, s, lower_n, h)
        if k % keep == 0:
            levels.append(vals)
            masks.append(pos)
        if detail_sl is not None and k % fine == 0:
            dlevels.append(vals[detail_sl])
            dmasks.append(pos[detail_sl])
        if k % (fine if detail_sl is not None else keep) == 0:
            fronts.append(s.copy())

    record(0)
    max_speed = 0.0
    u_cap = 10 * sc.K
    for k in range(steps):
        t = sc.t_start + k * dt
        a = _anchors(s, lower_n, h, nn)
        lo = int(a.min()) - 1
        # only rows >= lo are read by the stencils of active nodes
        _extend(u, s, a, lower_n, h, lo, int(a.max()))
        speed = front_velocity(u, s, lower_n, h, lam, anchors=a)
        if lateral == "initial" and n > 1:
            speed[edge_cols] = 0.0
        vmax = float(np.max(np.abs(speed))) if speed.size else 0.0
        max_speed = max(max_speed, vmax)
        if vmax * dt > h:
            raise CFLError(f"front CFL violated at t={t:.6g}: |s_t| dt = {vmax * dt:.3e} > h")

        rate = apply_operator(sc.operator, u[..., lo:], h)
        inner = xcore + (slice(lo + 1, nn - 1),)
        active = rows[lo + 1:nn - 1] >= a[xcore][..., None]
        if const_src is None:
            rate = rate + lam * np.broadcast_to(f(x[inner], t), rate.shape)
        elif const_src != 0.0:
            rate = rate + lam * const_src
        new = u.copy()
        target = new[inner]
        target[active] += dt * rate[active]
        s_new = s + dt * speed

        t_next = t + dt
        if callable(lateral):
            new[face] = np.broadcast_to(lateral(x_face, t_next), x_face.shape[:-1])
        elif lateral == "initial":
            new[face] = u_face
        if lateral == "neumann" and n > 1:
            for ax in range(n - 1):
                for edge, inside in ((0, 1), (-1, -2)):
                    dst = [slice(None)] * n
                    src = [slice(None)] * n
                    dst[ax], src[ax] = edge, inside
                    new[tuple(dst)] = new[tuple(src)]
                    s_new[tuple(dst[:-1])] = s_new[tuple(src[:-1])]

        # nodes uncovered by the front step get values from the quadratic
        # through the new front and the old anchors (an interpolation)
        _extend(new, s_new, a, lower_n, h, max(lo - 1, 0), int(a.max()), uncovered_only=True)

        band = new[..., lo:]
        np.maximum(band, np.where(z[lo:] > s_new[..., None], 0.0, -np.inf), out=band)
        if not np.all(np.isfinite(band)):
            raise SolverDivergence(f"non-finite temperature at t={t_next:.6g}")
        if band.max() > u_cap:
            raise SolverDivergence(f"temperature exceeds 10 K at t={t_next:.6g}")
        u, s = new, s_new
        record(k + 1)

    values = np.stack(levels)
    domain = ParabolicCylinder(0.5 * (lower + np.asarray(sc.upper)),
                               0.5 * float(np.max(np.asarray(sc.upper) - lower)),
                               sc.t_start, sc.t_end)
    meta = {"dt_step": dt, "steps": steps, "max_front_speed": max_speed}
    fld = SpaceTimeField(h, dt * keep, lower, sc.t_start, values, np.stack(masks), domain,
                         {"kind": "stefan", **meta})
    detail = None
    if detail_sl is not None:
        dlower = lower + h * np.array([sl.start for sl in detail_sl])
        detail = SpaceTimeField(h, dt * fine, dlower, sc.t_start, np.stack(dlevels),
                                np.stack(dmasks), domain, {"kind": "stefan-detail", **meta})
    fstride = fine if detail_sl is not None else keep
    front = FrontGraph(np.stack(fronts), lower[:-1], h, sc.t_start, dt * fstride)
    run_meta = {
        **meta,
        "cfl_ratio": dt / cfl_limit(h, n, sc.operator.coefficient_bound),
        "front_cfl_ratio": max_speed * dt / h,
        "wall_time_s": time.perf_counter() - wall,
        "lateral": sc.lateral if isinstance(sc.lateral, str) else "callable",
        "initial_front_b": float(np.ravel(s_init)[0]) if s_init.size else float(s_init),
    }
    return SpaceTimeSolution(fld, front, sc, detail, run_meta)


# -- rescaling ---------------------------------------------------------------

def _rescale_field(fld, tau, window=None):
    values = fld.values / tau
    lower = fld.lower / tau
    t0 = fld.t0 / tau**2
    d = fld.domain
    domain = ParabolicCylinder(np.asarray(d.center) / tau, d.radius / tau,
                               d.t_start / tau**2, d.t_end / tau**2)
    out = SpaceTimeField(fld.h / tau, fld.dt / tau**2, lower, t0, values, fld.mask, domain,
                         {**fld.meta, "rescaled_by": tau})
    if window is not None:
        out = crop_field(out, *window)
    return out


def crop_field(fld, lower, upper, t_start, t_end):
    """Restrict a field to a sub-box and time window that lie inside it."""
    tol = 1e-9
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower < fld.lower - tol * fld.h) or np.any(upper > fld.upper + tol * fld.h):
        raise ValueError("window exceeds the stored box")
    times = fld.times
    if t_start < times[0] - tol * fld.dt or t_end > times[-1] + tol * fld.dt:
        raise ValueError("window exceeds the stored time range")
    i0 = np.ceil((lower - fld.lower) / fld.h - tol).astype(int)
    i1 = np.floor((upper - fld.lower) / fld.h + tol).astype(int) + 1
    k0 = int(np.ceil((t_start - fld.t0) / fld.dt - tol))
    k1 = int(np.floor((t_end - fld.t0) / fld.dt + tol)) + 1
    sl = (slice(k0, k1),) + tuple(slice(a, b) for a, b in zip(i0, i1))
    return SpaceTimeField(fld.h, fld.dt, fld.lower + fld.h * i0, fld.t0 + fld.dt * k0,
                          fld.values[sl], fld.mask[sl], fld.domain, dict(fld.meta))


def resample_quadratic(fld, h_new):
    """Resample a field on a grid of step ``h_new`` covering the same box.

    Quadratic Lagrange interpolation in each spatial direction (three-node
    stencils), time levels unchanged.
    """
    n = fld.n
    counts = np.floor((fld.upper - fld.lower) / h_new + 1e-9).astype(int) + 1
    vals = fld.values
    mask = fld.mask.astype(float)
    for a in range(n):
        N = fld.shape[a]
        pos = np.arange(counts[a]) * h_new / fld.h
        i = np.clip(np.rint(pos).astype(int), 1, N - 2)
        r = pos - i
        w = [0.5 * r * (r - 1), 1 - r * r, 0.5 * r * (r + 1)]
        ax = a + 1

        def interp(arr):
            take = [np.take(arr, i + o, axis=ax) for o in (-1, 0, 1)]
            shape = [1] * arr.ndim
            shape[ax] = -1
            return sum(wk.reshape(shape) * tk for wk, tk in zip(w, take))

        vals = interp(vals)
        mask = interp(mask)
    return SpaceTimeField(h_new, fld.dt, fld.lower, fld.t0, vals, mask > 0.5, fld.domain,
                          {**fld.meta, "resampled_h": h_new})


def rescale_parabolic(solution, tau, window=None, h=None):
    """``u_tau(x, t) = u(tau x, tau^2 t) / tau`` on the mapped grid.

    The mapped grid has step ``h / tau`` and time step ``dt / tau^2``, so the
    nodes carry exactly the scaled data.  ``window=(lower, upper, t0, t1)``
    crops the result (an error if it exceeds the data); ``h`` additionally
    resamples it with quadratic interpolation.  The scenario echo carries
    ``tau * lam`` and ``f(tau x, tau^2 t)``.
    """
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    fld = _rescale_field(solution.field, tau, window)
    detail = None
    if solution.detail is not None:
        detail = _rescale_field(solution.detail, tau)
    if h is not None:
        fld = resample_quadratic(fld, h)
    fr = solution.front
    front = FrontGraph(fr.heights / tau, fr.lower / tau, fr.h / tau, fr.t0 / tau**2,
                       fr.dt / tau**2, fr.nu)
    sc = solution.scenario
    f = sc.f
    source = (lambda x, t: f(tau * np.asarray(x), tau**2 * t)) if callable(sc.source) else sc.source
    u0, front0 = sc.u0, sc.front0
    new_sc = replace(
        sc,
        u0=lambda x: u0(tau * np.asarray(x)) / tau,
        front0=lambda xp: front0(tau * np.asarray(xp)) / tau,
        lam=tau * sc.lam,
        lower=tuple(np.asarray(sc.lower) / tau),
        upper=tuple(np.asarray(sc.upper) / tau),
        h=sc.h / tau,
        t_start=sc.t_start / tau**2,
        t_end=sc.t_end / tau**2,
        source=source,
        dt=None,
        meta={**sc.meta, "rescaled_by": tau},
    )
    return SpaceTimeSolution(fld, front, new_sc, detail, {**solution.meta, "rescaled_by": tau})
