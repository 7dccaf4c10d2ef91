"""Recompute the frozen reference values in ``tests/oracles/frozen.json``.

Every number here comes from closed forms or mpmath quadrature, without
importing :mod:`stefanlab`, so the tests compare the package against an
independent computation.  Run once; commit the JSON.
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 30


def hopf_a_b(n, K, delta, T):
    a = T * delta**2 / (8 - delta**2)
    b = K / ((T + a) * mp.log(1 + T / a))
    return a, b


def hopf_T_tilde(n, K, delta):
    # a = T d^2/(8 - d^2) gives T + a = 8T/(8 - d^2) and 1 + T/a = 8/d^2,
    # so b = K (8 - d^2) / (8 T log(8/d^2)) and b > 2 n K^2 iff T < this:
    return (8 - mp.mpf(delta) ** 2) / (16 * n * K * mp.log(8 / mp.mpf(delta) ** 2))


def bump_mass():
    return mp.quad(lambda r: mp.exp(-1 / (1 - r * r)), [-1, 0, 1])


def p0_mean_disk(cx, cy, r, p0):
    """``(mean of x_2^p0 over the disk)^(1/p0)`` in polar coordinates."""
    inner = mp.quad(lambda rho, th: rho * (cy + rho * mp.sin(th)) ** p0, [0, r], [0, 2 * mp.pi])
    return (inner / (mp.pi * r * r)) ** (1 / p0)


def main():
    a1, b1 = hopf_a_b(2, 1, 1, 1)
    T_tilde = hopf_T_tilde(2, 2, mp.mpf("0.5"))
    aT, bT = hopf_a_b(2, 2, mp.mpf("0.5"), T_tilde)
    c1 = 2 * mp.e**-1 / bump_mass()
    tilt = mp.sqrt(1 + mp.mpf("0.09"))
    out = {
        "parabolic_distance_3_0_7": float(mp.sqrt(9 + 7)),
        "pucci_identity3_K2": [6.0, 1.5],
        "pucci_diag_1_m1_K2": [1.5, -1.5],
        "hopf_a_delta1": float(a1),
        "hopf_b_delta1": float(b1),
        "hopf_T_tilde_n2_K2_d05": float(T_tilde),
        "hopf_b_at_T_tilde": float(bT),
        "g1_n1": float((1 - mp.e**-2) / 2),
        "mollifier_c1": float(c1),
        "p0_mean_xn_disk01_center05_p05": float(p0_mean_disk(0, mp.mpf("0.5"), mp.mpf("0.1"), mp.mpf("0.5"))),
        "tilted_plane_nu": [float(-mp.mpf("0.3") / tilt), float(1 / tilt)],
        "tw_front_slope_c05_lam05": 1.0,
        "g_convexity_p05_second_differences": [
            float(g2) for g2 in (
                (lambda g, y, d: g(y + d) - 2 * g(y) + g(y - d))(
                    lambda y: 1 - mp.sqrt(y) - mp.sqrt(1 - y), mp.mpf(k) / 10, mp.mpf("0.05"))
                for k in range(1, 10))
        ],
    }
    path = Path(__file__).resolve().parent.parent / "tests" / "oracles" / "frozen.json"
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
