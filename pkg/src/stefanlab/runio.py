"""Run directories: config echo, field and front dumps, report and certificates."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, parse_config_text
from .grid import FieldFormatError, read_field_csv, write_field_csv
from .stefan import FrontGraph, SpaceTimeSolution

FRONT_SCHEMA_VERSION = 1


def worker_count():
    """Worker cap from ``STEFANLAB_THREADS`` (default 1)."""
    raw = os.environ.get("STEFANLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def write_front_csv(front: FrontGraph, path):
    """``# {json}`` line, header ``t,x1..x_{n-1},s``, rows by (level, x' node)."""
    path = Path(path)
    nprime = front.heights.ndim - 1
    meta = {
        "schema": "stefanlab-front",
        "version": FRONT_SCHEMA_VERSION,
        "n": nprime + 1,
        "h": front.h,
        "dt": front.dt,
        "t0": front.t0,
        "lower": [float(v) for v in front.lower],
        "shape": list(front.heights.shape[1:]),
        "nt": front.nt,
        "nu": list(front.nu),
    }
    xp = front.coords().reshape(-1, nprime) if nprime else np.zeros((1, 0))
    header = ["t"] + [f"x{a + 1}" for a in range(nprime)] + ["s"]
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        fh.write(",".join(header) + "\n")
        xcols = [list(map(repr, c.tolist())) for c in xp.T]
        for k, t in enumerate(front.times):
            s = np.ravel(front.heights[k])
            cols = [[repr(float(t))] * s.size] + xcols + [list(map(repr, s.tolist()))]
            fh.write("\n".join(map(",".join, zip(*cols))) + "\n")


def read_front_csv(path):
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise FieldFormatError(f"{path}: missing metadata line", line=1)
        try:
            meta = json.loads(first[2:])
        except json.JSONDecodeError as exc:
            raise FieldFormatError(f"{path}: bad metadata ({exc})", line=1) from None
        if meta.get("schema") != "stefanlab-front":
            raise FieldFormatError(f"{path}: not a front dump", line=1)
        if meta.get("version") != FRONT_SCHEMA_VERSION:
            raise FieldFormatError(
                f"{path}: front schema version {meta.get('version')} is not supported "
                f"(expected {FRONT_SCHEMA_VERSION}); re-export the run with this version", line=1)
        fh.readline()
        shape = tuple(meta["shape"])
        per = int(np.prod(shape)) if shape else 1
        total = meta["nt"] * per
        cols = meta["n"] + 1
        s = np.empty(total)
        count = 0
        for lineno, row in enumerate(csv.reader(fh), start=3):
            if len(row) != cols:
                raise FieldFormatError(f"expected {cols} columns, got {len(row)}", line=lineno)
            if count >= total:
                raise FieldFormatError("more rows than the metadata declares", line=lineno)
            try:
                s[count] = float(row[-1])
            except ValueError as exc:
                raise FieldFormatError(str(exc), line=lineno) from None
            count += 1
        if count != total:
            raise FieldFormatError(f"truncated dump: {count} of {total} rows present", line=count + 3)
    heights = s.reshape((meta["nt"],) + shape)
    return FrontGraph(heights, np.array(meta["lower"]), meta["h"], meta["t0"], meta["dt"],
                      tuple(meta["nu"]))


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


def save_run(out, cfg: ScenarioConfig, solution: SpaceTimeSolution):
    """Write ``config.echo``, ``inputs.sha1``, ``field.csv``, ``front.csv`` (and ``detail.csv``)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(cfg.echo())
    (out / "inputs.sha1").write_text(cfg.content_hash() + "\n")
    write_field_csv(solution.field, out / "field.csv")
    write_front_csv(solution.front, out / "front.csv")
    if solution.detail is not None:
        write_field_csv(solution.detail, out / "detail.csv")
    write_json({k: v for k, v in solution.meta.items()}, out / "run.json")
    return out


def load_run(run_dir):
    """``(config, solution)`` from a directory written by :func:`save_run`."""
    run_dir = Path(run_dir)
    echo = run_dir / "config.echo"
    if not echo.is_file():
        raise FileNotFoundError(f"{run_dir}: no config.echo (not a run directory)")
    cfg = parse_config_text(echo.read_text(), str(echo))
    field = read_field_csv(run_dir / "field.csv")
    front = read_front_csv(run_dir / "front.csv")
    detail = None
    if (run_dir / "detail.csv").is_file():
        detail = read_field_csv(run_dir / "detail.csv")
    meta = {}
    if (run_dir / "run.json").is_file():
        meta = json.loads((run_dir / "run.json").read_text())
    return cfg, SpaceTimeSolution(field, front, cfg.scenario(), detail, meta)
