"""Command-line surface: ``stefanlab {simulate,analyze,certify,theorem,lemma31}``.

Exit codes: 0 when the run or check passes, 1 when an analysis fails, 2 on
usage errors (bad flags, missing or invalid files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .barriers import certify_hopf, search_lemma31_w
from .config import ConfigError, load_config, schema_help
from .grid import FieldFormatError
from .pipeline import AnalysisOptions, lemma31_experiment, run_theorem_experiment
from .runio import load_run, save_run, write_json
from .stefan import simulate
from .svg import dashboard_svg, overlay_svg

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--resolution", type=float, default=None, metavar="H", help="override the grid step")
    common.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    common.add_argument("--quiet", action="store_true", help="print nothing but errors")

    p = _Parser(prog="stefanlab", description="Flat free boundaries of the one-phase Stefan problem.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("simulate", parents=[common], help="simulate a scenario and save the run")
    s.add_argument("config", type=Path)
    a = sub.add_parser("analyze", parents=[common], help="analyse a saved run directory")
    a.add_argument("run_dir", type=Path)
    c = sub.add_parser("certify", parents=[common], help="certify a closed-form barrier")
    c.add_argument("barrier", choices=("hopf", "w"))
    c.add_argument("--n", type=int, default=2)
    c.add_argument("--K", type=float, default=2.0)
    c.add_argument("--delta", type=float, default=0.5, help="hopf: radius of the positive core")
    c.add_argument("--T", type=float, default=None, help="hopf: time horizon (default T~)")
    c.add_argument("--C0", type=float, default=None, help="w: amplitude (default: search)")
    c.add_argument("--lam", type=float, default=None, help="w: lambda (default: search)")
    c.add_argument("--source", type=float, default=0.0, help="w: bound on the source")
    c.add_argument("--samples", type=int, default=None)
    t = sub.add_parser("theorem", parents=[common], help="simulate, analyse and certify in one go")
    t.add_argument("config", type=Path)
    m = sub.add_parser("lemma31", parents=[common], help="front penetration against lambda")
    m.add_argument("config", type=Path)
    return p


def _say(args, *lines):
    if not args.quiet:
        for line in lines:
            print(line)


def _load(args):
    if not args.config.is_file():
        raise FileNotFoundError(f"config file not found: {args.config}")
    cfg = load_config(args.config)
    over = {}
    if args.resolution is not None:
        if not args.resolution > 0:
            raise UsageError("--resolution must be positive")
        over["scenario__h"] = args.resolution
        over["lemma31__h"] = args.resolution
    if args.seed is not None:
        over["run__seed"] = args.seed
    return cfg.with_overrides(**over) if over else cfg


def _out_dir(args, default):
    out = args.out if args.out is not None else Path("runs") / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(out, report, solution=None):
    d = report.to_dict()
    write_json(d, out / "report.json")
    certs = out / "certificates"
    certs.mkdir(exist_ok=True)
    for entry in d["certificates"]:
        if entry.get("certificate") is not None:
            write_json(entry, certs / f"v_eta{entry['eta']:g}.json")
    rows = [{"eta": r["eta"], "residual": r["residual"]} for r in d["eta_table"]]
    (out / "dashboard.svg").write_text(dashboard_svg(report.fits, rows, title=d["scenario"].get("name", "run")))
    if solution is not None and solution.front.heights.ndim == 2 and report.flatness is not None:
        fl = report.flatness
        level = solution.front.nt - 1
        fit = report.fits[-1] if report.fits else None
        (out / "overlay.svg").write_text(overlay_svg(
            solution.front, level, fl["center"], fl["radius"], fl["epsilon"], np.array(fl["nu"]),
            fit=fit, fit_level=(fit.times.size - 1) if fit is not None else None))
    return d


def _summary(d):
    lines = [f"hypotheses: {'pass' if d['hypothesis_pass'] else 'fail'} (eps0 = {d['eps0']})"]
    for r in d["eta_table"]:
        lines.append(f"  eta={r['eta']:<6g} residual={r['residual']:.4g} applicable={r['applicable']} "
                     f"ode_error={r['ode_error']:.2e} v_certified={r.get('v_certified')}")
    concl = d["conclusion_pass"]
    lines.append("conclusion: " + ("untested" if concl is None else "pass" if concl else "fail"))
    if d["failure"]:
        lines.append(f"failure at stage {d['stage']}: {d['failure'].splitlines()[0]}")
    return lines


def _verdict(d):
    return EXIT_OK if d["hypothesis_pass"] and d["conclusion_pass"] else EXIT_FAIL


def cmd_simulate(args):
    cfg = _load(args)
    sol = simulate(cfg.scenario())
    out = _out_dir(args, cfg["scenario"]["name"])
    save_run(out, cfg, sol)
    write_json({"scenario": cfg.scenario().describe(), "run": sol.meta}, out / "report.json")
    _say(args, f"saved run to {out} ({sol.field.nt} levels, front at t_end = "
               f"{float(np.mean(sol.front.heights[-1])):.6g})")
    return EXIT_OK


def cmd_analyze(args):
    if not args.run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {args.run_dir}")
    cfg, sol = load_run(args.run_dir)
    if args.seed is not None:
        cfg = cfg.with_overrides(run__seed=args.seed)
    report = run_theorem_experiment(sol.scenario, AnalysisOptions.from_config(cfg), solution=sol)
    out = args.out if args.out is not None else args.run_dir
    out.mkdir(parents=True, exist_ok=True)
    d = _write_report(out, report, sol)
    _say(args, *_summary(d))
    return _verdict(d)


def cmd_theorem(args):
    cfg = _load(args)
    sol = simulate(cfg.scenario())
    out = _out_dir(args, cfg["scenario"]["name"])
    save_run(out, cfg, sol)
    report = run_theorem_experiment(sol.scenario, AnalysisOptions.from_config(cfg), solution=sol)
    d = _write_report(out, report, sol)
    _say(args, *_summary(d), f"artifacts in {out}")
    return _verdict(d)


def cmd_lemma31(args):
    cfg = _load(args)
    sec = cfg["lemma31"]
    rep = lemma31_experiment(sec["lambdas"], sec["K_data"], sec["h"], sec["source"], sec["speedup"],
                             seed=cfg["run"]["seed"])
    d = rep.to_dict()
    out = _out_dir(args, "lemma31")
    (out / "config.echo").write_text(cfg.echo())
    (out / "inputs.sha1").write_text(cfg.content_hash() + "\n")
    write_json(d, out / "report.json")
    certs = out / "certificates"
    certs.mkdir(exist_ok=True)
    if d["barrier"].get("certificate"):
        write_json(d["barrier"]["certificate"], certs / "w.json")
    lines = [f"lambda={l:<8g} depth={dep:.6g}" for l, dep in zip(d["lambdas"], d["depths"])]
    lines += [f"ratio {r['lams'][0]:g}/{r['lams'][1]:g}: {r['ratio']:.4f}" for r in d["ratios"]]
    lines.append(f"C_fit = {d['C_fit']}; barrier certified: {d['barrier'].get('certified')}; "
                 f"bound holds: {d['bound_holds']}")
    _say(args, *lines)
    if d["failure"]:
        print(f"error: {d['failure']}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK if d["bound_holds"] else EXIT_FAIL


def _cert_table(cert):
    rows = [("candidate", cert.cid), ("kind", cert.kind), ("operator", json.dumps(cert.operator)),
            ("samples", cert.samples), ("interior points", cert.interior_count),
            ("interior margin", f"{cert.interior_margin:.6g}"),
            ("front margin", "n/a" if cert.front_margin is None else f"{cert.front_margin:.6g}"),
            ("log10 |margin|", f"{cert.log10_kappa:.6g}"),
            ("robust", cert.robust),
            ("verdict", "pass" if cert.passed else "fail")]
    width = max(len(k) for k, _ in rows)
    return [f"{k:<{width}}  {v}" for k, v in rows]


def cmd_certify(args):
    seed = 0 if args.seed is None else args.seed
    out = _out_dir(args, f"certify-{args.barrier}") / "certificates"
    out.mkdir(parents=True, exist_ok=True)
    if args.barrier == "hopf":
        from .barriers import hopf_T_tilde

        T = args.T if args.T is not None else hopf_T_tilde(args.n, args.K, args.delta)
        samples = args.samples or 64**3
        params, cert, m = certify_hopf(args.n, args.K, args.delta, T, samples=samples, seed=seed)
        write_json(cert.to_dict(), out / "hopf.json")
        c = cert.constants
        _say(args, *_cert_table(cert),
             f"T~ = {c['T_tilde']:.7g}; pieces m = {m}; piece length {T / m:.7g}",
             f"kappa = 10^{c['log10_kappa']:.4f}",
             f"mu = {params.mu:.6g}")
        return EXIT_OK if cert.passed else EXIT_FAIL
    samples = args.samples or 4096
    if (args.C0 is None) != (args.lam is None):
        raise UsageError("give both --C0 and --lam, or neither")
    grids = {} if args.C0 is None else {"C0_grid": [args.C0], "lam_grid": [args.lam]}
    search = search_lemma31_w(args.n, args.K, args.source, samples=samples, seed=seed, **grids)
    write_json(search.to_dict(), out / "w.json")
    lines = [f"searched {search.tried} pair(s); printed inequality satisfiable: "
             f"{search.printed_inequality_satisfiable} ({search.printed_reason})"]
    if search.certificate is not None:
        lines = _cert_table(search.certificate) + [f"C0 = {search.C0:g}, lam = {search.lam:g}"] + lines
    else:
        lines.append("no certified (C0, lam) in the search box")
    _say(args, *lines)
    return EXIT_OK if search.certificate is not None else EXIT_FAIL


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "certify": cmd_certify,
            "theorem": cmd_theorem, "lemma31": cmd_lemma31}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(schema_help(), file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, FieldFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
