"""Space-time grids, parabolic cylinders and finite-difference kernels.

Fields live on uniform Cartesian grids.  Balls and annuli are realised as
boolean masks over a bounding box.  Values are stored with time as the leading
axis, ``values[k, i1, ..., in]``, and the last spatial axis is ``x_n``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

FIELD_SCHEMA_VERSION = 1


class StencilError(ValueError):
    """A finite-difference stencil leaves the positivity set or the grid."""


class FieldFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SpaceTimePoint:
    x: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))
        if not all(math.isfinite(v) for v in x + (self.t,)):
            raise ValueError("space-time point must have finite coordinates")


@dataclass(frozen=True)
class ParabolicCylinder:
    """``B_radius(center) x (t_start, t_end]``."""

    center: tuple
    radius: float
    t_start: float
    t_end: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.t_start < self.t_end:
            raise ValueError(f"need t_start < t_end, got {self.t_start} >= {self.t_end}")

    @classmethod
    def standard(cls, center, r, t0=0.0):
        """The standard cylinder ``P_r(x0, t0) = B_r(x0) x (t0, t0 + r^2]``."""
        return cls(center, r, t0, t0 + r * r)

    @property
    def n(self):
        return len(self.center)

    def contains(self, x, t):
        x = np.asarray(x, dtype=float)
        r2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
        return (r2 < self.radius**2) & (t > self.t_start) & (t <= self.t_end)


def parabolic_distance(p, q):
    """``(|x - y|^2 + |t - s|)^(1/2)`` between two space-time points."""
    dx = np.subtract(p.x, q.x)
    return math.sqrt(float(np.dot(dx, dx)) + abs(p.t - q.t))


def parabolic_distance_array(x1, t1, x2, t2):
    """Vectorised parabolic distance; ``x*`` have shape ``(..., n)``."""
    dx = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    return np.sqrt(np.sum(dx * dx, axis=-1) + np.abs(np.asarray(t1) - np.asarray(t2)))


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Scalar values on a uniform grid, one array slice per time level.

    ``mask`` marks nodes that belong to the positivity set (or, for plain PDE
    solves, to the computational domain).  Arrays are made read-only.
    """

    h: float
    dt: float
    lower: np.ndarray
    t0: float
    values: np.ndarray
    mask: np.ndarray
    domain: ParabolicCylinder
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != lower.size + 1:
            raise ValueError(
                f"values must have shape (nt, N1..Nn) for n={lower.size}, got {values.shape}"
            )
        if mask.shape != values.shape:
            raise ValueError("mask and values must share a shape")
        if not (self.h > 0 and self.dt > 0):
            raise ValueError("h and dt must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        for a in (lower, values, mask):
            a.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n(self):
        return self.lower.size

    @property
    def nt(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape[1:]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    @property
    def upper(self):
        return self.lower + self.h * (np.array(self.shape) - 1)

    def coords(self, axis):
        return self.lower[axis] + self.h * np.arange(self.shape[axis])

    def nodes(self):
        """Node positions, shape ``(*shape, n)``."""
        axes = [self.coords(a) for a in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_values(self, values, mask=None, **changes):
        """A new field on the same grid."""
        kw = dict(h=self.h, dt=self.dt, lower=self.lower, t0=self.t0, domain=self.domain,
                  meta=dict(self.meta))
        kw.update(changes)
        return SpaceTimeField(values=values, mask=self.mask if mask is None else mask, **kw)

    @classmethod
    def from_function(cls, fn, domain, h, dt, mask_fn=None, nt=None):
        """Sample ``fn(x, t)`` (``x`` of shape ``(..., n)``) on the bounding box of ``domain``.

        The grid has ``round(2 r / h) + 1`` nodes per axis centred on the
        cylinder centre, and time levels ``t_start + k dt`` up to ``t_end``.
        """
        c = np.asarray(domain.center)
        count = int(round(2 * domain.radius / h)) + 1
        lower = c - h * (count - 1) / 2
        if nt is None:
            nt = int(round((domain.t_end - domain.t_start) / dt)) + 1
        axes = [lower[a] + h * np.arange(count) for a in range(domain.n)]
        x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        times = domain.t_start + dt * np.arange(nt)
        values = np.stack([np.broadcast_to(fn(x, t), x.shape[:-1]) for t in times])
        if mask_fn is None:
            mask = np.ones(values.shape, dtype=bool)
        else:
            mask = np.stack([np.broadcast_to(mask_fn(x, t), x.shape[:-1]) for t in times])
        return cls(h, dt, lower, domain.t_start, values, mask, domain)

    def sample(self, x, t):
        """Multilinear interpolation in space and linear in time.

        ``x`` has shape ``(..., n)``; ``t`` broadcasts against ``x[..., 0]``.
        Points outside the stored box raise ``ValueError``.
        """
        x = np.asarray(x, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
        pos = [(x[..., a] - self.lower[a]) / self.h for a in range(self.n)]
        pos.insert(0, (t - self.t0) / self.dt)
        dims = (self.nt,) + self.shape
        tol = 1e-9
        for p, d in zip(pos, dims):
            if np.any(p < -tol) or np.any(p > d - 1 + tol):
                raise ValueError("sample point outside the stored field")
        base = []
        frac = []
        for p, d in zip(pos, dims):
            p = np.clip(p, 0, d - 1)
            i = np.minimum(np.floor(p).astype(int), max(d - 2, 0))
            base.append(i)
            frac.append(p - i if d > 1 else np.zeros_like(p))
        out = np.zeros(x.shape[:-1])
        for corner in product((0, 1), repeat=len(dims)):
            w = np.ones(x.shape[:-1])
            idx = []
            for c, i, f, d in zip(corner, base, frac, dims):
                w = w * (f if c else 1 - f)
                idx.append(np.minimum(i + c, d - 1))
            out = out + w * self.values[tuple(idx)]
        return out


def _shifted(u, offsets):
    """``u`` shifted by integer ``offsets`` restricted to the one-layer interior."""
    sl = tuple(slice(1 + o, u.shape[a] - 1 + o) for a, o in enumerate(offsets))
    return u[sl]


def hessian_interior(u, h):
    """Centred second differences on the interior of an n-d array.

    Returns an array of shape ``(*(N - 2), n, n)``; symmetric by construction.
    """
    n = u.ndim
    inner = tuple(s - 2 for s in u.shape)
    H = np.empty(inner + (n, n))
    zero = [0] * n
    centre = _shifted(u, zero)
    for a in range(n):
        e = list(zero)
        e[a] = 1
        m = [-v for v in e]
        H[..., a, a] = (_shifted(u, e) - 2 * centre + _shifted(u, m)) / (h * h)
        for b in range(a + 1, n):
            pp, pm, mp, mm = (list(zero) for _ in range(4))
            pp[a], pp[b] = 1, 1
            pm[a], pm[b] = 1, -1
            mp[a], mp[b] = -1, 1
            mm[a], mm[b] = -1, -1
            val = (_shifted(u, pp) - _shifted(u, pm) - _shifted(u, mp) + _shifted(u, mm)) / (
                4 * h * h
            )
            H[..., a, b] = val
            H[..., b, a] = val
    return H


def laplacian_interior(u, h):
    zero = [0] * u.ndim
    centre = _shifted(u, zero)
    out = np.zeros_like(centre)
    for a in range(u.ndim):
        e = list(zero)
        e[a] = 1
        out += _shifted(u, e) + _shifted(u, [-v for v in e]) - 2 * centre
    return out / (h * h)


def stencil_offsets(n):
    """All offsets in ``{-1, 0, 1}^n`` (the full 3^n box stencil)."""
    return [np.array(o) for o in product((-1, 0, 1), repeat=n)]


def full_stencil_mask(mask):
    """Nodes whose whole 3^n box stencil lies inside ``mask`` (interior only)."""
    n = mask.ndim
    out = np.zeros(mask.shape, dtype=bool)
    core = np.ones(tuple(s - 2 for s in mask.shape), dtype=bool)
    for o in stencil_offsets(n):
        core &= _shifted(mask, list(o))
    out[tuple(slice(1, -1) for _ in range(n))] = core
    return out


def gradient_hessian(field, node, level=0):
    """Centred-difference gradient and Hessian at one grid node.

    Exact for polynomials of degree two.  Raises ``StencilError`` when a
    stencil neighbour falls outside the grid or outside ``field.mask``.
    """
    node = tuple(int(i) for i in node)
    n = field.n
    u = field.values[level]
    m = field.mask[level]
    for o in stencil_offsets(n):
        idx = tuple(i + d for i, d in zip(node, o))
        if any(j < 0 or j >= s for j, s in zip(idx, field.shape)):
            raise StencilError(f"stencil at {node} leaves the grid")
        if not m[idx]:
            raise StencilError(f"stencil at {node} crosses the mask at {idx}")
    h = field.h
    sub = u[tuple(slice(i - 1, i + 2) for i in node)]
    grad = np.empty(n)
    zero = [1] * n
    for a in range(n):
        p = list(zero)
        q = list(zero)
        p[a] = 2
        q[a] = 0
        grad[a] = (sub[tuple(p)] - sub[tuple(q)]) / (2 * h)
    H = hessian_interior(sub, h).reshape(n, n)
    return grad, H


def _pair_stream(n_items, count, seed, block=4096):
    rng = np.random.default_rng(seed)
    out_i, out_j = [], []
    got = 0
    while got < count:
        out_i.append(rng.integers(0, n_items, size=block))
        out_j.append(rng.integers(0, n_items, size=block))
        got += block
    return np.concatenate(out_i)[:count], np.concatenate(out_j)[:count]


def holder_seminorm(field, alpha, sample_pairs=20000, seed=0):
    """Sampled parabolic Hoelder seminorm ``max |u(p) - u(q)| / d_p(p, q)^alpha``.

    Pairs are drawn from a fixed-seed block stream, so a larger sample is a
    superset of a smaller one and the estimate is nondecreasing in the count.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    vals = field.values.reshape(-1)
    if vals.size < 2:
        return 0.0
    i, j = _pair_stream(vals.size, int(sample_pairs), seed)
    keep = i != j
    i, j = i[keep], j[keep]
    spatial = int(np.prod(field.shape))
    ki, si = np.divmod(i, spatial)
    kj, sj = np.divmod(j, spatial)
    xi = np.stack(np.unravel_index(si, field.shape), axis=-1) * field.h
    xj = np.stack(np.unravel_index(sj, field.shape), axis=-1) * field.h
    d = parabolic_distance_array(xi, ki * field.dt, xj, kj * field.dt)
    ratio = np.abs(vals[i] - vals[j]) / d**alpha
    return float(ratio.max()) if ratio.size else 0.0


# -- persistence -----------------------------------------------------------

def _field_meta(field):
    return {
        "schema": "stefanlab-field",
        "version": FIELD_SCHEMA_VERSION,
        "n": field.n,
        "h": field.h,
        "dt": field.dt,
        "t0": field.t0,
        "lower": [float(v) for v in field.lower],
        "shape": [int(s) for s in field.shape],
        "nt": field.nt,
        "domain": {
            "center": list(field.domain.center),
            "radius": field.domain.radius,
            "t_start": field.domain.t_start,
            "t_end": field.domain.t_end,
        },
        "meta": field.meta,
    }


def _check_meta(meta, source):
    if meta.get("schema") != "stefanlab-field":
        raise FieldFormatError(f"{source}: not a stefanlab field dump", line=1)
    if meta.get("version") != FIELD_SCHEMA_VERSION:
        raise FieldFormatError(
            f"{source}: field schema version {meta.get('version')} is not supported "
            f"(expected {FIELD_SCHEMA_VERSION}); re-export the run with this version",
            line=1,
        )


def write_field_csv(field, path, level_stride=1):
    """CSV dump: a ``# {json}`` metadata line, header ``x1..xn,t,u,mask``, then rows.

    Rows are ordered by (time level, i1, ..., in).  Floats are written as their
    shortest round-trip repr, so the dump reloads bit-exactly.
    """
    path = Path(path)
    levels = np.arange(0, field.nt, level_stride)
    meta = _field_meta(field)
    if level_stride != 1:
        meta["dt"] = field.dt * level_stride
        meta["nt"] = int(levels.size)
    x = field.nodes().reshape(-1, field.n)
    header = [f"x{a + 1}" for a in range(field.n)] + ["t", "u", "mask"]
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        fh.write(",".join(header) + "\n")
        for k in levels:
            t = field.t0 + field.dt * k
            u = field.values[k].reshape(-1)
            m = field.mask[k].reshape(-1)
            block = np.column_stack([x, np.full(u.shape, t), u])
            cols = [list(map(repr, c.tolist())) for c in block.T]
            cols.append(["1" if v else "0" for v in m.tolist()])
            fh.write("\n".join(map(",".join, zip(*cols))) + "\n")


def read_field_csv(path):
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise FieldFormatError(f"{path}: missing metadata line", line=1)
        try:
            meta = json.loads(first[2:])
        except json.JSONDecodeError as exc:
            raise FieldFormatError(f"{path}: bad metadata ({exc})", line=1) from None
        _check_meta(meta, path)
        n = meta["n"]
        header = fh.readline().strip().split(",")
        expected = [f"x{a + 1}" for a in range(n)] + ["t", "u", "mask"]
        if header != expected:
            raise FieldFormatError(f"header {header} != {expected}", line=2)
        shape = tuple(meta["shape"])
        nt = meta["nt"]
        total = nt * int(np.prod(shape))
        u = np.empty(total)
        m = np.empty(total, dtype=bool)
        reader = csv.reader(fh)
        count = 0
        for lineno, row in enumerate(reader, start=3):
            if len(row) != n + 3:
                raise FieldFormatError(f"expected {n + 3} columns, got {len(row)}", line=lineno)
            if count >= total:
                raise FieldFormatError("more rows than the metadata declares", line=lineno)
            try:
                u[count] = float(row[n + 1])
                m[count] = bool(int(row[n + 2]))
            except ValueError as exc:
                raise FieldFormatError(str(exc), line=lineno) from None
            count += 1
        if count != total:
            raise FieldFormatError(
                f"truncated dump: {count} of {total} rows present", line=count + 3
            )
    return _field_from_meta(meta, u.reshape((nt,) + shape), m.reshape((nt,) + shape))


def _field_from_meta(meta, values, mask):
    d = meta["domain"]
    domain = ParabolicCylinder(tuple(d["center"]), d["radius"], d["t_start"], d["t_end"])
    return SpaceTimeField(meta["h"], meta["dt"], np.array(meta["lower"]), meta["t0"], values,
                          mask, domain, meta=meta.get("meta", {}))


def save_field_npz(field, path):
    np.savez(path, values=field.values, mask=field.mask, meta=json.dumps(_field_meta(field)))


def load_field_npz(path):
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        _check_meta(meta, path)
        return _field_from_meta(meta, data["values"].copy(), data["mask"].copy())
