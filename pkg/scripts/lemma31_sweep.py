"""Front penetration ``1 - s(1)`` against lambda, with the fitted slope.

    python scripts/lemma31_sweep.py --lambdas 0.2 0.1 0.05 0.025 --h 0.0078125
"""

import argparse
import json

from stefanlab.pipeline import lemma31_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    p.add_argument("--h", type=float, default=1 / 64)
    p.add_argument("--K-data", type=float, default=1.0)
    p.add_argument("--source", type=float, default=0.0)
    p.add_argument("--json", action="store_true", help="print the full report as JSON")
    args = p.parse_args()
    rep = lemma31_experiment(args.lambdas, args.K_data, args.h, args.source)
    if args.json:
        print(json.dumps(rep.to_dict(), indent=2, default=str))
        return
    for lam, d in zip(rep.lambdas, rep.depths):
        ratio = d / lam if lam > 0 else float("nan")
        print(f"lambda={lam:<8g} depth={d:.6f} depth/lambda={ratio:.4f}")
    print(f"C_fit = {rep.C_fit:.4f}; barrier C = {rep.barrier.get('C')}; bound holds: {rep.bound_holds}")


if __name__ == "__main__":
    main()
