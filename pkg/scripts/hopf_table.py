"""Table of the Hopf barrier constants (T~, b, log10 kappa, mu) over delta and K."""

import argparse

from stefanlab.barriers import certify_hopf, hopf_T_tilde


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--K", type=float, nargs="+", default=[1.0, 2.0, 4.0])
    p.add_argument("--delta", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    p.add_argument("--samples", type=int, default=4096)
    args = p.parse_args()
    print(f"{'K':>5} {'delta':>6} {'T~':>12} {'b':>10} {'log10 kappa':>12} {'mu':>12} verdict")
    for K in args.K:
        for d in args.delta:
            T = hopf_T_tilde(args.n, K, d)
            params, cert, _ = certify_hopf(args.n, K, d, T, samples=args.samples)
            print(f"{K:>5g} {d:>6g} {T:>12.6g} {params.b_exp:>10.4g} {cert.log10_kappa:>12.2f} "
                  f"{params.mu:>12.4g} {'pass' if cert.passed else 'fail'}")


if __name__ == "__main__":
    main()
