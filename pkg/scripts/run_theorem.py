"""Run the flat-front experiment for one config and print the trapping coefficients.

    python scripts/run_theorem.py configs/tw_quick.cfg --out runs/tw-quick

Like ``stefanlab theorem`` (which also writes the field dumps and SVGs), but
prints a few samples of the fitted ``a(t)`` and ``b~(t)`` per eta, which is
handy when comparing resolutions.
"""

import argparse
from pathlib import Path

import numpy as np

from stefanlab.config import load_config
from stefanlab.pipeline import AnalysisOptions, run_theorem_experiment
from stefanlab.runio import write_json


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=Path("runs/theorem"))
    p.add_argument("--resolution", type=float, default=None)
    args = p.parse_args()
    cfg = load_config(args.config)
    if args.resolution is not None:
        cfg = cfg.with_overrides(scenario__h=args.resolution)
    rep = run_theorem_experiment(cfg.scenario(), AnalysisOptions.from_config(cfg))
    d = rep.to_dict()
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(d, args.out / "report.json")
    print(f"eps0 = {d['eps0']}; hypotheses {'pass' if d['hypothesis_pass'] else 'fail'}; "
          f"conclusion {d['conclusion_pass']}")
    for fit, row in zip(rep.fits, d["eta_table"]):
        idx = np.linspace(0, fit.times.size - 1, 4).astype(int)
        cells = "  ".join(f"t={fit.times[i]:+.3f} a={fit.a_bar[i]:.4f} b~={fit.b_tilde[i]:+.4f}" for i in idx)
        print(f"eta={fit.eta:<6g} residual={row['residual']:.4f}  {cells}")
    if d["failure"]:
        print(f"failed at stage {d['stage']}: {d['failure']}")


if __name__ == "__main__":
    main()
