"""Explicit finite-difference solver for ``u_t - F(D^2 u) = g`` on balls and annuli.

The scheme is forward Euler in time with the centred Hessian in space.  Ball
and annulus domains are masks over a bounding box; every grid node outside
the open domain carries the prescribed boundary data at every time level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import ParabolicCylinder, SpaceTimeField, hessian_interior, laplacian_interior
from .operators import EllipticOperatorSpec, operator_eval


class CFLError(ValueError):
    """Time step too large for the explicit scheme."""


class SolverDivergence(RuntimeError):
    """Non-finite values appeared during time marching."""


def cfl_limit(h, n, coef_bound):
    """Largest stable step ``h^2 / (4 n K)`` of the explicit scheme."""
    return h * h / (4 * n * coef_bound)


def _zero_source(x, t):
    return 0.0


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """``u_t - F(D^2 u) = source`` in ``{inner_radius < |x - c| < radius}`` with data on the rest.

    ``boundary_data(x, t)`` supplies the initial values and the lateral values
    (it is evaluated on every node outside the open domain at every level).
    ``dt=None`` picks the CFL limit.  ``keep_every`` thins the stored levels;
    ``None`` keeps at most about 400 of them.
    """

    operator: EllipticOperatorSpec
    domain: ParabolicCylinder
    boundary_data: Callable
    source: Callable | None = None
    h: float = 1 / 32
    dt: float | None = None
    inner_radius: float = 0.0
    keep_every: int | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not 0 <= self.inner_radius < self.domain.radius:
            raise ValueError("inner radius must lie in [0, radius)")
        limit = cfl_limit(self.h, self.domain.n, self.operator.coefficient_bound)
        if self.dt is not None and self.dt > limit * (1 + 1e-12):
            raise CFLError(
                f"dt={self.dt:.3e} exceeds the explicit stability limit h^2/(4nK)={limit:.3e}"
            )

    @property
    def n(self):
        return self.domain.n

    def time_grid(self):
        """``(dt, steps, keep)``: ``steps * dt`` spans the window, ``keep`` divides ``steps``."""
        span = self.domain.t_end - self.domain.t_start
        target = self.dt or cfl_limit(self.h, self.n, self.operator.coefficient_bound)
        steps = max(1, math.ceil(span / target - 1e-9))
        keep = self.keep_every or max(1, math.ceil(steps / 400))
        steps = keep * math.ceil(steps / keep)
        return span / steps, steps, keep

    def grid(self):
        """``(lower, nodes, interior_mask)`` of the bounding box."""
        c = np.asarray(self.domain.center)
        count = int(round(2 * self.domain.radius / self.h)) + 1
        lower = c - self.h * (count - 1) / 2
        axes = [lower[a] + self.h * np.arange(count) for a in range(self.n)]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        r = np.sqrt(np.sum((x - c) ** 2, axis=-1))
        tol = 1e-12 * max(1.0, self.domain.radius)
        inside = r < self.domain.radius - tol
        if self.inner_radius > 0:
            inside &= r > self.inner_radius + tol
        return lower, x, inside

    def same_discretization(self, other):
        return (
            self.operator.to_dict() == other.operator.to_dict()
            and self.domain == other.domain
            and self.h == other.h
            and self.time_grid() == other.time_grid()
            and self.inner_radius == other.inner_radius
        )


def _pucci_2d(u, h, K, sign):
    # closed-form eigenvalues of the 2x2 centred Hessian, without building it
    c = u[1:-1, 1:-1]
    a = (u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / (h * h)
    d = (u[1:-1, 2:] - 2 * c + u[1:-1, :-2]) / (h * h)
    b = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * h * h)
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    lo, hi = mean - rad, mean + rad
    pos = np.maximum(lo, 0) + np.maximum(hi, 0)
    neg = np.minimum(lo, 0) + np.minimum(hi, 0)
    if sign == "plus":
        return K * pos + neg / K
    return pos / K + K * neg


def apply_operator(spec, u, h):
    """``F(D^2 u)`` on the one-layer interior of ``u``."""
    if spec.kind == "trace":
        return laplacian_interior(u, h)
    if u.ndim == 2 and spec.kind in ("pucci_plus", "pucci_minus"):
        return _pucci_2d(u, h, spec.K, spec.kind[6:])
    return operator_eval(spec, hessian_interior(u, h), check=False)


def solve_dirichlet(problem: DirichletProblem) -> SpaceTimeField:
    """March the problem to ``t_end``; returns the stored levels as a field.

    ``meta`` records the step, the step count and the CFL ratio.
    """
    dt, steps, keep = problem.time_grid()
    lower, x, inside = problem.grid()
    n = problem.n
    src = problem.source or _zero_source
    core = (slice(1, -1),) * n
    inner_mask = inside[core]
    boundary = ~inside

    t0 = problem.domain.t_start
    u = np.array(np.broadcast_to(problem.boundary_data(x, t0), inside.shape), dtype=float)
    stored = [u.copy()]
    for k in range(steps):
        t = t0 + k * dt
        rate = apply_operator(problem.operator, u, problem.h)
        g = np.broadcast_to(src(x, t), inside.shape)[core]
        new = u.copy()
        new_core = new[core]
        new_core[inner_mask] += dt * (rate[inner_mask] + g[inner_mask])
        t_next = t0 + (k + 1) * dt
        data = np.broadcast_to(problem.boundary_data(x, t_next), inside.shape)
        new[boundary] = data[boundary]
        if not np.all(np.isfinite(new)):
            raise SolverDivergence(f"non-finite values at step {k + 1} (t={t_next:.6g})")
        u = new
        if (k + 1) % keep == 0:
            stored.append(u.copy())
    values = np.stack(stored)
    mask = np.broadcast_to(inside, values.shape)
    meta = {
        "dt_step": dt,
        "steps": steps,
        "keep_every": keep,
        "cfl_ratio": dt / cfl_limit(problem.h, n, problem.operator.coefficient_bound),
        "operator": problem.operator.to_dict(),
        "inner_radius": problem.inner_radius,
    }
    return SpaceTimeField(problem.h, dt * keep, lower, t0, values, mask, problem.domain, meta)


def discrete_residual(field, spec, source=None):
    """Residual of the explicit update between consecutive stored levels.

    Only meaningful for fields stored at every step (``keep_every=1``).
    Returns the max abs residual over interior mask nodes.
    """
    src = source or _zero_source
    x = field.nodes()
    core = (slice(1, -1),) * field.n
    worst = 0.0
    for k in range(field.nt - 1):
        u = field.values[k]
        rate = apply_operator(spec, u, field.h)
        g = np.broadcast_to(src(x, field.times[k]), field.shape)[core]
        res = (field.values[k + 1][core] - u[core]) / field.dt - rate - g
        m = field.mask[k][core] & field.mask[k + 1][core]
        if m.any():
            worst = max(worst, float(np.abs(res[m]).max()))
    return worst


@dataclass(frozen=True)
class ComparisonReport:
    min_difference: float
    tol: float

    @property
    def passed(self):
        return self.min_difference >= -self.tol


def comparison_check(p1, p2, tol=1e-8, return_fields=False):
    """Solve both problems and report ``min(u2 - u1)`` over all nodes and levels.

    The caller is responsible for the ordering of data and sources.
    """
    if not p1.same_discretization(p2):
        raise ValueError("comparison needs identical operator, domain and resolution")
    u1 = solve_dirichlet(p1)
    u2 = solve_dirichlet(p2)
    report = ComparisonReport(float(np.min(u2.values - u1.values)), tol)
    if return_fields:
        return report, u1, u2
    return report


@dataclass(frozen=True, eq=False)
class GrowthBound:
    """Linear growth constant ``C`` with ``u <= C (|x| - 1)^+`` off the inner sphere."""

    C: float
    certified: bool
    field: SpaceTimeField


def growth_bound_certify(K_data, lam, f_bound, h, operator=None, n=2, dt=None):
    """Annulus comparison solve with 0 on ``|x| = 1`` and ``K_data`` elsewhere.

    Solves ``v_t - F(D^2 v) = lam * f_bound`` in ``(B_2 minus B_1) x (-1/K, 0]``
    and returns the largest ratio ``v / (|x| - 1)`` over the second half of the
    window (where the linear bound is claimed), at nodes at least ``h`` away
    from the inner sphere so boundary localization does not pollute it.
    """
    operator = operator or EllipticOperatorSpec("trace")
    K = max(operator.K, 1.0)
    domain = ParabolicCylinder(np.zeros(n), 2.0, -1.0 / K, 0.0)

    def data(x, t):
        r = np.sqrt(np.sum(x * x, axis=-1))
        return np.where(r <= 1.0 + 1e-12, 0.0, float(K_data))

    def source(x, t):
        return lam * f_bound

    problem = DirichletProblem(operator, domain, data, source, h=h, dt=dt, inner_radius=1.0)
    field = solve_dirichlet(problem)
    x = field.nodes()
    dist = np.sqrt(np.sum(x * x, axis=-1)) - 1.0
    late = field.times >= domain.t_start + 0.5 * (domain.t_end - domain.t_start) - 1e-12
    sel = field.mask[0] & (dist >= h - 1e-12)
    ratios = field.values[late][:, sel] / dist[sel]
    C = max(0.0, float(ratios.max())) if ratios.size else 0.0
    vals = field.values[late][:, sel]
    certified = bool(np.all(vals <= C * dist[sel] + 1e-12))
    return GrowthBound(C, certified, field)
