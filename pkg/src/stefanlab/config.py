"""Scenario configuration: a flat ``key = value`` file with typed sections, or JSON.

Example::

    [scenario]
    name = tw
    n = 2
    lam = 0.5
    K = 4
    lower = -1, -0.25
    upper = 1, 1
    h = 0.03125
    t_start = -0.5

    [initial]
    kind = traveling_wave
    c = 0.5

Every key of every section is listed in :data:`SCHEMA` with its type and
default; unknown sections or keys are rejected.  ``echo()`` writes the
resolved configuration (defaults included) back in the same format.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .operators import EllipticOperatorSpec
from .stefan import MovingPlane, StefanScenario, traveling_wave


class ConfigError(ValueError):
    """Schema violation or unreadable configuration."""


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    text = str(text).strip()
    if text in ("", "none", "None"):
        return None
    return tuple(float(v) for v in text.replace(";", ",").split(","))


def _opt_float(text):
    if text is None:
        return None
    if isinstance(text, (int, float)):
        return float(text)
    text = str(text).strip()
    return None if text in ("", "none", "None") else float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (parser, default, help)
SCHEMA = {
    "scenario": {
        "name": (str, "scenario", "run label"),
        "n": (int, 2, "space dimension (1, 2 or 3)"),
        "lam": (float, 0.5, "free-boundary speed factor lambda in [0, 1]"),
        "K": (float, 4.0, "ellipticity constant of the scenario (time window 1/(K lam))"),
        "lower": (_floats, (-1.0, -0.25), "box lower corner"),
        "upper": (_floats, (1.0, 1.0), "box upper corner"),
        "h": (float, 1 / 32, "grid step"),
        "t_start": (float, -0.5, "initial time"),
        "t_end": (float, 0.0, "final time"),
        "source": (float, 0.0, "constant source f (the equation carries lam * f)"),
        "lateral": (str, "exact", "initial | neumann | exact (closed-form data when available)"),
        "store_levels": (int, 200, "stored coarse levels"),
        "detail_lower": (_floats, None, "lower corner of the fine-in-time detail box"),
        "detail_upper": (_floats, None, "upper corner of the detail box"),
        "detail_dt": (_opt_float, None, "time stride of the detail box"),
    },
    "operator": {
        "kind": (str, "trace", "trace | pucci_plus | pucci_minus"),
        "K": (float, 1.0, "operator ellipticity"),
    },
    "initial": {
        "kind": (str, "traveling_wave", "traveling_wave | plane | linear"),
        "c": (float, 0.5, "traveling-wave speed"),
        "a": (float, 1.0, "plane slope"),
        "b0": (float, 0.0, "plane front at t = 0 (linear: fixed front)"),
        "scale": (float, 1.0, "multiplier applied to the initial and lateral data"),
    },
    "analysis": {
        "p0": (float, 0.5, "exponent of the integral nondegeneracy mean"),
        "alpha0": (float, 1.0, "boundary Holder exponent alpha0"),
        "eta_sweep": (_floats, (0.2, 0.1, 0.05), "trapping scales"),
        "eps0_max": (float, 0.02, "flatness required by the hypotheses"),
        "eps0_factor": (float, 0.1, "per-eta flatness threshold eps0 <= factor * eta^2"),
        "flat_radius": (float, 0.5, "radius of the flatness ball (centred at the origin)"),
        "nondeg_r": (_floats, (0.125,), "cylinder radii of the nondegeneracy scan"),
        "nondeg_times": (int, 6, "number of t0 values scanned"),
        "hopf_center": (_floats, None, "centre of the Hopf sub-cylinder (default 0.5 e_n)"),
        "hopf_radius": (float, 0.2, "radius of the Hopf sub-cylinder"),
        "certify_v": (_bool, True, "search constants for the perturbed subsolution per eta"),
        "v_samples": (int, 2048, "samples per certification of v"),
    },
    "lemma31": {
        "lambdas": (_floats, (0.1, 0.05), "lambda values"),
        "K_data": (float, 1.0, "slope of the initial profile K_data (x - 1)^+"),
        "h": (float, 1 / 128, "grid step"),
        "source": (float, 0.0, "constant source"),
        "speedup": (float, 1.05, "front speedup making the barrier strict"),
    },
    "run": {
        "seed": (int, 0, "seed for sampled checks"),
    },
}


def schema_help():
    lines = ["configuration sections and keys (type, default):"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for key, (kind, default, text) in keys.items():
            name = getattr(kind, "__name__", "value").lstrip("_")
            lines.append(f"    {key} ({name}, default {default!r}): {text}")
    return "\n".join(lines)


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved configuration: ``sections[sec][key]`` with defaults filled in."""

    sections: dict
    source_path: str | None = None

    def __getitem__(self, sec):
        return self.sections[sec]

    def echo(self):
        out = []
        for sec, keys in SCHEMA.items():
            out.append(f"[{sec}]")
            for key in keys:
                out.append(f"{key} = {_fmt(self.sections[sec][key])}")
            out.append("")
        return "\n".join(out)

    def content_hash(self):
        """Git-style blob hash of the echoed configuration."""
        data = self.echo().encode()
        return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()

    def with_overrides(self, **flat):
        """``with_overrides(scenario__h=0.01)`` style replacement."""
        secs = {k: dict(v) for k, v in self.sections.items()}
        for name, value in flat.items():
            sec, key = name.split("__")
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            secs[sec][key] = value
        return ScenarioConfig(secs, self.source_path)

    def operator(self):
        op = self["operator"]
        return EllipticOperatorSpec(op["kind"], op["K"])

    def scenario(self):
        return build_scenario(self)


def _resolve(raw, origin):
    secs = {}
    for sec, keys in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{sec}]")
        for key in keys:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{sec}]")
    for sec, keys in SCHEMA.items():
        given = raw.get(sec, {})
        secs[sec] = {}
        for key, (kind, default, _) in keys.items():
            if key in given:
                try:
                    value = kind(given[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{origin}: bad value for {sec}.{key}: {exc}") from None
            else:
                value = default
            secs[sec][key] = value
    return secs


def parse_config_text(text, origin="<config>"):
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{origin}: invalid JSON: {exc}") from None
        if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
            raise ConfigError(f"{origin}: JSON config must map sections to objects")
    else:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        cp.optionxform = str
        try:
            cp.read_string(text, source=origin)
        except configparser.Error as exc:
            raise ConfigError(f"{origin}: {exc}") from None
        raw = {sec: dict(cp[sec]) for sec in cp.sections()}
    return ScenarioConfig(_resolve(raw, origin), origin)


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def build_scenario(cfg: ScenarioConfig) -> StefanScenario:
    sc, ini = cfg["scenario"], cfg["initial"]
    n, lam = sc["n"], sc["lam"]
    scale = ini["scale"]
    kind = ini["kind"]
    t0 = sc["t_start"]
    exact = None
    if kind == "traveling_wave":
        tw = traveling_wave(ini["c"], lam) if lam > 0 else None
        if tw is None:
            raise ConfigError("traveling_wave initial data needs lam > 0")
        front_value = -ini["c"] * t0

        def u0(x):
            return scale * tw(x, t0)

        def front0(xp):
            return np.full(np.shape(xp)[:-1], front_value)

        def exact(x, t):
            return scale * tw(x, t)
    elif kind == "plane":
        pl = MovingPlane(ini["a"], lam, ini["b0"])
        front_value = pl.b(t0)

        def u0(x):
            return scale * pl(x, t0)

        def front0(xp):
            return np.full(np.shape(xp)[:-1], front_value)

        def exact(x, t):
            return scale * pl(x, t)
    elif kind == "linear":
        a, b0 = ini["a"], ini["b0"]

        def u0(x):
            return scale * a * np.maximum(np.asarray(x)[..., -1] - b0, 0.0)

        def front0(xp):
            return np.full(np.shape(xp)[:-1], b0)
    else:
        raise ConfigError(f"unknown initial kind {kind!r}")
    lateral = sc["lateral"]
    if lateral == "exact":
        if exact is None:
            raise ConfigError("lateral = exact needs closed-form initial data")
        lateral = exact
    elif lateral not in ("initial", "neumann"):
        raise ConfigError(f"unknown lateral mode {lateral!r}")
    if len(sc["lower"]) != n or len(sc["upper"]) != n:
        raise ConfigError("box corners must have n coordinates")
    return StefanScenario(
        n=n, operator=cfg.operator(), lam=lam, K=sc["K"], lower=sc["lower"], upper=sc["upper"],
        h=sc["h"], t_start=t0, u0=u0, front0=front0, t_end=sc["t_end"], source=sc["source"],
        lateral=lateral, store_levels=sc["store_levels"], detail_lower=sc["detail_lower"],
        detail_upper=sc["detail_upper"], detail_dt=sc["detail_dt"], name=sc["name"],
        meta={"config_hash": cfg.content_hash(), "initial": dict(ini)},
    )
