"""Experiment configuration: YAML file, defaults, environment overrides, validation.

Any key can be overridden from the environment as ``KPSTAB_CFG__<BLOCK>__<KEY>``,
for example ``KPSTAB_CFG__FLOW__DT=1e-3``. Override values are parsed as YAML
scalars, so numbers and booleans keep their types.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

import yaml

from .errors import ConfigError
from .evolution import Equation, FlowSpec, Scheme, config_hash
from .spectral import Grid

ENV_PREFIX = "KPSTAB_CFG__"

DEFAULTS: dict = {
    "grid": {"nx": 512, "ny": 32, "lx": 32.0, "dealias_fraction": 2.0 / 3.0},
    "flow": {
        "equation": "KP2",
        "c": 2.0,
        "dt": 5e-4,
        "t_end": 1.0,
        "scheme": "ETDRK4",
        "frame_speed": 0.0,
        "sponge": 0.0,
        "sponge_start": 0.85,
        "sponge_end": 1.0,
        "observe_every": 100,
        "dealias": True,
        "nonlinear": True,
    },
    "background": "soliton",
    "perturbation": {
        "type": "random-smooth",
        "delta": 0.05,
        "seed": 0,
        "norm": "L2",
        "band": 1.0 / 3.0,
        "side": "kink",
        "mode": 1,
        "path": None,
    },
    "diagnostics": {
        "snapshot_times": [],
        "checkpoint_every": 0,
        "eps": 0.1,
        "window_speed": None,
    },
    # absorbing layer for stability runs; None keeps the experiment's own default
    "stability": {"kind": "orbital", "delta_inv": 0.05, "sponge": None, "sponge_start": None, "sponge_end": None},
}

PERTURBATION_TYPES = ("random-smooth", "single-mode", "given-file", "none")
BACKGROUNDS = ("soliton", "none")
EQUATION_ALIASES = {"MKP2": "MKP2_PERTURBATION"}


def _merge(base: dict, upd: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in upd.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in key[len(ENV_PREFIX) :].split("__") if p]
        if not parts:
            continue
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        try:
            node[parts[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError as err:
            raise ConfigError(f"cannot parse {key}={raw!r}: {err}") from err
    return out


def load_config(path: str | os.PathLike | None = None, environ=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then environment overrides, then explicit ``overrides``."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as err:
            raise ConfigError(f"{p}: malformed YAML: {err}") from err
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        cfg = _merge(cfg, data)
    cfg = _merge(cfg, env_overrides(environ))
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def _num(block: dict, key: str, kind=float, positive: bool = False, where: str = ""):
    try:
        v = kind(block[key])
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}{key} must be {kind.__name__}, got {block[key]!r}") from err
    if positive and not v > 0:
        raise ConfigError(f"{where}{key} must be positive, got {v}")
    block[key] = v
    return v


def validate(cfg: dict) -> None:
    g = cfg["grid"]
    for k in ("nx", "ny"):
        _num(g, k, int, True, "grid.")
    _num(g, "lx", float, True, "grid.")
    _num(g, "dealias_fraction", float, True, "grid.")
    try:
        Grid(g["nx"], g["ny"], g["lx"], g["dealias_fraction"])
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from err
    f = cfg["flow"]
    for k in ("c", "dt"):
        _num(f, k, float, True, "flow.")
    for k in ("t_end", "frame_speed", "sponge", "sponge_start", "sponge_end"):
        _num(f, k, float, False, "flow.")
    _num(f, "observe_every", int, True, "flow.")
    try:
        name = str(f["equation"]).upper()
        f["equation"] = Equation(EQUATION_ALIASES.get(name, name)).value
        f["scheme"] = Scheme(str(f["scheme"]).upper()).value
        flow_spec(cfg)
    except ValueError as err:
        raise ConfigError(f"flow: {err}") from err
    if cfg["background"] not in BACKGROUNDS:
        raise ConfigError(f"background must be one of {BACKGROUNDS}")
    p = cfg["perturbation"]
    if p["type"] not in PERTURBATION_TYPES:
        raise ConfigError(f"perturbation.type must be one of {PERTURBATION_TYPES}")
    _num(p, "delta", float, False, "perturbation.")
    if p["delta"] < 0:
        raise ConfigError("perturbation.delta must be non-negative")
    _num(p, "seed", int, False, "perturbation.")
    _num(p, "band", float, True, "perturbation.")
    _num(p, "mode", int, False, "perturbation.")
    if p["norm"] not in ("L2", "E"):
        raise ConfigError("perturbation.norm must be 'L2' or 'E'")
    if p["side"] not in ("kink", "kp"):
        raise ConfigError("perturbation.side must be 'kink' or 'kp'")
    if p["type"] == "given-file" and not p["path"]:
        raise ConfigError("perturbation.path is required for type given-file")
    d = cfg["diagnostics"]
    if not isinstance(d["snapshot_times"], list):
        raise ConfigError("diagnostics.snapshot_times must be a list")
    _num(d, "checkpoint_every", int, False, "diagnostics.")
    _num(d, "eps", float, True, "diagnostics.")
    s = cfg["stability"]
    if s["kind"] not in ("orbital", "asymptotic"):
        raise ConfigError("stability.kind must be 'orbital' or 'asymptotic'")
    _num(s, "delta_inv", float, True, "stability.")
    for key in ("sponge", "sponge_start", "sponge_end"):
        if s[key] is not None:
            _num(s, key, float, False, "stability.")


def grid_of(cfg: dict) -> Grid:
    g = cfg["grid"]
    return Grid(g["nx"], g["ny"], g["lx"], g["dealias_fraction"])


def flow_spec(cfg: dict) -> FlowSpec:
    f = cfg["flow"]
    return FlowSpec(
        equation=f["equation"],
        c=f["c"],
        dt=f["dt"],
        t_end=f["t_end"],
        scheme=f["scheme"],
        dealias=bool(f["dealias"]),
        frame_speed=f["frame_speed"],
        nonlinear=bool(f["nonlinear"]),
        observe_every=f["observe_every"],
        sponge=f["sponge"],
        sponge_start=f["sponge_start"],
        sponge_end=f["sponge_end"],
    )


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)


def cfg_hash(cfg: dict) -> str:
    return config_hash(cfg)
