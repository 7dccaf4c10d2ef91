"""Uniformly elliptic operators ``F(D^2 u)`` and the Pucci extremal pair.

All evaluators accept a single symmetric matrix or a stack of them with shape
``(..., n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("trace", "pucci_plus", "pucci_minus", "bellman_min")


def _check_symmetric(M, tol=1e-12):
    M = np.asarray(M, dtype=float)
    if M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if not np.allclose(M, np.swapaxes(M, -1, -2), rtol=0, atol=tol * scale):
        raise ValueError("matrix is not symmetric")
    return M


def sym_eigvals(M):
    """Eigenvalues of symmetric matrices; closed form for n <= 2."""
    n = M.shape[-1]
    if n == 1:
        return M[..., 0, :]
    if n == 2:
        a, b, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
        mean = 0.5 * (a + d)
        rad = np.hypot(0.5 * (a - d), b)
        return np.stack([mean - rad, mean + rad], axis=-1)
    return np.linalg.eigvalsh(M)


def pucci_from_eigs(eigs, K, sign):
    pos = np.where(eigs > 0, eigs, 0.0).sum(axis=-1)
    neg = np.where(eigs < 0, eigs, 0.0).sum(axis=-1)
    if sign == "plus":
        return K * pos + neg / K
    return pos / K + K * neg


def pucci_eval(sign, M, K, check=True):
    """``M^+_K`` (``sign='plus'``) or ``M^-_K`` (``sign='minus'``) of ``M``.

    ``M^+ = K sum(pos eig) + K^-1 sum(neg eig)``, ``M^-`` swaps the weights.
    """
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    if K < 1:
        raise ValueError(f"ellipticity constant must be >= 1, got {K}")
    M = _check_symmetric(M) if check else np.asarray(M, dtype=float)
    out = pucci_from_eigs(sym_eigvals(M), K, sign)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class EllipticOperatorSpec:
    kind: str
    K: float = 1.0
    bellman_matrices: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; choose from {KINDS}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.kind == "bellman_min":
            if not self.bellman_matrices:
                raise ValueError("bellman_min needs a nonempty list of matrices")
            mats = tuple(_check_symmetric(np.array(A, dtype=float)) for A in self.bellman_matrices)
            for A in mats:
                ev = np.linalg.eigvalsh(A)
                if ev.min() < 1 / self.K - 1e-12 or ev.max() > self.K + 1e-12:
                    raise ValueError(
                        f"Bellman matrix eigenvalues {ev} leave [1/K, K] for K={self.K}"
                    )
            object.__setattr__(self, "bellman_matrices", mats)
        elif self.bellman_matrices is not None:
            raise ValueError("bellman_matrices only apply to kind='bellman_min'")

    @property
    def coefficient_bound(self):
        """Largest diffusion coefficient along any direction (drives the CFL bound)."""
        if self.kind == "trace":
            return 1.0
        if self.kind == "bellman_min":
            return max(float(np.linalg.eigvalsh(A).max()) for A in self.bellman_matrices)
        return float(self.K)

    def __call__(self, M):
        return operator_eval(self, M)

    def to_dict(self):
        d = {"kind": self.kind, "K": self.K}
        if self.bellman_matrices is not None:
            d["matrices"] = [A.tolist() for A in self.bellman_matrices]
        return d

    @classmethod
    def from_dict(cls, d):
        mats = d.get("matrices")
        return cls(d["kind"], float(d.get("K", 1.0)), tuple(mats) if mats else None)


def operator_eval(spec, M, check=True):
    M = _check_symmetric(M) if check else np.asarray(M, dtype=float)
    if spec.kind == "trace":
        out = np.trace(M, axis1=-2, axis2=-1)
    elif spec.kind == "pucci_plus":
        out = pucci_from_eigs(sym_eigvals(M), spec.K, "plus")
    elif spec.kind == "pucci_minus":
        out = pucci_from_eigs(sym_eigvals(M), spec.K, "minus")
    else:
        vals = [np.einsum("ij,...ji->...", A, M) for A in spec.bellman_matrices]
        out = np.min(np.stack(vals), axis=0)
    return float(out) if np.ndim(out) == 0 else out


def random_symmetric(rng, n, size=None, scale=1.0):
    shape = (n, n) if size is None else (size, n, n)
    A = rng.normal(scale=scale, size=shape)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def random_psd(rng, n, size=None):
    shape = (n, n) if size is None else (size, n, n)
    B = rng.normal(size=shape)
    return B @ np.swapaxes(B, -1, -2)


def ellipticity_margin(spec, samples, seed=0, n=2, rank_one=False):
    """Extremal ratios ``(F(M + N) - F(M)) / ||N||`` over random ``N >= 0``.

    ``||N||`` is the largest eigenvalue.  A spec is K-elliptic on the sample
    when both returned margins lie in ``[1/K, K]``.  With this norm a full-rank
    ``N`` lets the trace reach ``n`` and ``M+_K`` reach ``n K``; ``rank_one``
    draws ``N = v v^T``, for which ``tr N = ||N||``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    M = random_symmetric(rng, n, samples, scale=2.0)
    if rank_one:
        v = rng.normal(size=(samples, n, 1))
        N = v @ np.swapaxes(v, -1, -2)
    else:
        N = random_psd(rng, n, samples)
    norm = np.linalg.eigvalsh(N)[..., -1]
    ratio = (operator_eval(spec, M + N, check=False) - operator_eval(spec, M, check=False)) / norm
    ratio = np.atleast_1d(ratio)
    return float(ratio.min()), float(ratio.max())


def margins_within(margins, K, tol=1e-12):
    lo, hi = margins
    return (1 / K - tol) <= lo and hi <= K + tol


def _quat_columns(q):
    """Columns of the rotation matrices of (unnormalized) quaternions ``q``."""
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y + z * w), 2 * (x * z - y * w)),
        (2 * (x * y - z * w), 1 - 2 * (x * x + z * z), 2 * (y * z + x * w)),
        (2 * (x * z + y * w), 2 * (y * z - x * w), 1 - 2 * (x * x + y * y)),
    )


def _frame_params(rng, n, size, base=None, spread=None):
    """Random frame parameters: an angle (n=2), a quaternion (n=3), else a matrix."""
    if n == 2:
        if base is None:
            return rng.uniform(0, 2 * np.pi, size)
        return base + rng.normal(0, spread, size)
    if n == 3:
        if base is None:
            return rng.normal(size=(size, 4))
        return base / np.linalg.norm(base) + rng.normal(0, spread / 2, (size, 4))
    if base is None:
        Z = rng.normal(size=(size, n, n))
        Q, R = np.linalg.qr(Z)
        return Q * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[:, None, :]
    S = rng.normal(scale=spread, size=(size, n, n))
    S = 0.5 * (S - np.swapaxes(S, -1, -2))
    eye = np.eye(n)
    return base @ np.linalg.solve(eye - S, eye + S)


def _frame_diagonals(M, params):
    """``q_i^T M q_i`` for every column ``q_i`` of each frame, shape ``(size, n)``."""
    n = M.shape[-1]
    if n == 1:
        return np.full((len(params), 1), M[0, 0])
    if n == 2:
        c, s = np.cos(params), np.sin(params)
        cross = 2 * M[0, 1] * c * s
        d0 = M[0, 0] * c * c + M[1, 1] * s * s + cross
        d1 = M[0, 0] * s * s + M[1, 1] * c * c - cross
        return np.stack([d0, d1], -1)
    if n == 3:
        out = []
        for a, b, c in _quat_columns(params):
            out.append(
                M[0, 0] * a * a + M[1, 1] * b * b + M[2, 2] * c * c
                + 2 * (M[0, 1] * a * b + M[0, 2] * a * c + M[1, 2] * b * c)
            )
        return np.stack(out, -1)
    return np.einsum("kji,jl,kli->ki", params, M, params)


def pucci_bruteforce(M, K, samples=100_000, seed=0, rounds=10):
    """Random-search bounds ``(inf, sup)`` of ``tr(A M)`` over admissible ``A``.

    ``A = Q diag(a) Q^T`` with ``a_i`` in ``[1/K, K]``.  Only the frame ``Q`` is
    searched; for a fixed frame ``tr(A M) = sum a_i q_i^T M q_i`` is linear in
    ``a`` so the best weights sit at the box corners.  The eigen-decomposition
    of ``M`` is never used: the first round draws Haar-random frames, later
    rounds perturb the incumbents.  The results bound ``M^-`` from above and
    ``M^+`` from below.  ``K`` may be a sequence, sharing the sampled frames.
    """
    M = _check_symmetric(M)
    n = M.shape[-1]
    Ks = np.atleast_1d(np.asarray(K, dtype=float))
    if np.any(Ks < 1):
        raise ValueError(f"ellipticity constant must be >= 1, got {K}")
    rng = np.random.default_rng(seed)
    first = samples // 2
    rest = max(1, (samples - first) // max(1, 2 * len(Ks) * (rounds - 1)))
    lo, hi = np.empty(len(Ks)), np.empty(len(Ks))
    params = _frame_params(rng, n, first)
    d0 = _frame_diagonals(M, params)
    for j, k in enumerate(Ks):
        for which in ("sup", "inf"):
            sgn = 1.0 if which == "sup" else -1.0
            d = d0
            p = params
            for r in range(rounds):
                # best corner weights for each frame, evaluated in the sign-flipped problem
                vals = np.maximum(k * sgn * d, sgn * d / k).sum(-1)
                i = int(np.argmax(vals))
                if r == 0 or vals[i] > best:
                    best, bp = float(vals[i]), p[i]
                if r == rounds - 1:
                    break
                p = _frame_params(rng, n, rest, base=bp, spread=0.5 * 0.6**r)
                d = _frame_diagonals(M, p)
            if which == "sup":
                hi[j] = best
            else:
                lo[j] = -best
    if np.ndim(K) == 0:
        return float(lo[0]), float(hi[0])
    return lo, hi
