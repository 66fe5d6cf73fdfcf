"""Scenario configuration: parsing, validation, hashing and construction.

Configuration grammar
---------------------
A configuration is an INI file read by :mod:`configparser`::

    # comment
    [section]
    key = value

Every value is parsed with :func:`ast.literal_eval`, so ``0.5`` is a float,
``512`` an int, ``true``/``false`` (any case) are booleans, ``(1.0, 1.0, 0.0)``
is a tuple and anything that is not a Python literal (``interval``) is kept
as a bare string.  Recognised sections and keys are those of
:data:`DEFAULTS`; unknown sections or keys are validation errors.  A file
whose first non-blank character is ``{`` is read as JSON with the same
nested layout.  Values from the file are merged over :data:`DEFAULTS`, and
``--override section.key=value`` strings are merged last with the same
value rules.

The configuration hash is the SHA-256 of the canonical JSON (sorted keys,
no whitespace) of the fully merged configuration.
"""
from __future__ import annotations

import ast
import configparser
import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .chemistry import ReactionNetwork
from .domain import (Disk, Interval, MovingDomain, Rectangle, RigidRotation, RigidTranslation,
                     SmoothDeformation, ZeroVelocity, is_inside)
from .grid import Grid
from .penalty import PenaltyParams
from .solver import SimState, Simulation
from .thermo import EosSpec, TransportLaws, flat_start_closure


class ConfigError(ValueError):
    """Parse or validation failure; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


DEFAULTS: dict = {
    "scenario": {"name": "custom"},
    "grid": {"dim": 1, "n": 512, "half_width": None},
    "domain": {
        "shape": "interval", "a": -1.0, "b": 1.0,
        "center": None, "radius": None, "half_widths": None,
        "velocity": "translation", "speed": (0.5,), "omega": 0.0, "amplitude": 0.0,
        "r_in": 1.8, "R": 2.0, "T": 1.0, "rk4_dt": 0.01, "min_rk4_steps": 10,
    },
    "eos": {
        "a": 0.1, "p_inf": 1.0, "c_v": 1.5,
        "species_enthalpies": (1.0, 1.0, 0.0), "species_entropies": (0.2, 0.2, 0.1),
        "closure": "monatomic", "Z_under": 1.0, "Z_over": 1.0, "c_bound": 2.0,
    },
    "transport": {"mu0": 0.01, "eta0": 0.005, "kappa0": 0.01, "kappa1": 0.001,
                  "zeta0": 0.01, "zeta1": 0.005},
    "chemistry": {"kind": "reversible", "n": 3, "K0": 1.0, "sigma_bar": 1.0,
                  "affinity_width": 0.05},
    "penalty": {"h": 0.2, "eps": 1e-5, "delta": 0.0, "beta": 4.0, "thermal_sink": True},
    "initial": {
        "rho_in": 1.0, "rho_out": 0.0, "rho_amp": 0.0,
        "theta_base": 1.0, "theta_amp": 0.2, "theta_min": 0.1, "theta_max": 10.0,
        "Y_base": (0.3, 0.3, 0.4), "Y_amp": (0.1, -0.1, 0.0), "velocity": "domain",
    },
    "run": {"T_final": 1.0, "cfl": 0.4, "every": 1, "keep_every": 0, "cut_cell": True,
            "thin_fraction": 0.02, "rho_ref": 1.0, "vtk": True},
}

CATALOG = ("piston1d", "disk2d-translate", "disk2d-rotate", "frozen-box")


# ---------------------------------------------------------------------------
# parsing and merging
# ---------------------------------------------------------------------------


def parse_value(text: str):
    """Typed scalar from a configuration string (literal, boolean or bare word)."""
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(s)
    except (ValueError, SyntaxError):
        return s


def parse_text(text: str) -> dict:
    """Nested dict from INI or JSON text."""
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"JSON parse error: {exc}"]) from exc
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    return {sec: {k: parse_value(v) for k, v in cp.items(sec)} for sec in cp.sections()}


def _normalise(value):
    if isinstance(value, (list, tuple)):
        return [_normalise(v) for v in value]
    if isinstance(value, dict):
        return {k: _normalise(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    return value


def merge(base: dict, update: dict, errors: list) -> dict:
    out = copy.deepcopy(base)
    for sec, body in update.items():
        if sec not in out:
            errors.append(f"{sec}: unknown section")
            continue
        if not isinstance(body, dict):
            errors.append(f"{sec}: expected a table of keys")
            continue
        for key, val in body.items():
            if key not in out[sec]:
                errors.append(f"{sec}.{key}: unknown key")
                continue
            out[sec][key] = _normalise(val)
    return out


def apply_overrides(cfg: dict, overrides, errors: list | None = None) -> dict:
    """Apply ``section.key=value`` strings.

    Problems are appended to ``errors`` when given, otherwise raised.
    """
    collect = errors is not None
    errors = errors if collect else []
    upd: dict = {}
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            errors.append(f"override {item!r}: expected section.key=value")
            continue
        path, val = item.split("=", 1)
        sec, key = path.strip().split(".", 1)
        upd.setdefault(sec, {})[key] = parse_value(val)
    out = merge(cfg, upd, errors)
    if errors and not collect:
        raise ConfigError(errors)
    return out


def config_hash(cfg: dict) -> str:
    canon = json.dumps(_normalise(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    """Validated, fully resolved run description."""

    config: dict
    grid: Grid
    domain: MovingDomain
    eos: EosSpec
    network: ReactionNetwork
    params: PenaltyParams

    @property
    def name(self) -> str:
        return self.config["scenario"]["name"]

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    @property
    def run_opts(self) -> dict:
        return self.config["run"]

    @property
    def T_final(self) -> float:
        return float(self.run_opts["T_final"])

    def with_overrides(self, overrides) -> "Scenario":
        return build_scenario(apply_overrides(self.config, overrides))

    def simulation(self) -> Simulation:
        r = self.run_opts
        return Simulation(self.grid, self.domain, self.eos, self.network, self.params,
                          cut_cell=bool(r["cut_cell"]), thin_fraction=float(r["thin_fraction"]),
                          rho_ref=float(r["rho_ref"]), cfl=float(r["cfl"]))

    def initial_fields(self):
        """``(rho, u, theta, Y)`` of the initial-data recipe on the grid."""
        return _initial_fields(self.config["initial"], self.grid, self.domain)

    def initial_state(self, sim: Simulation | None = None) -> SimState:
        sim = sim or self.simulation()
        rho, u, theta, Y = self.initial_fields()
        return sim.make_state(0.0, rho, u, theta, Y)


def _profile(grid: Grid) -> np.ndarray:
    x = grid.centers
    return np.sin(np.pi * np.sum(x, axis=0) / grid.half_width)


def _initial_fields(ini: dict, grid: Grid, dom: MovingDomain):
    inside, _ = is_inside(0.0, grid.centers.reshape(grid.dim, -1), dom)
    inside = inside.reshape(grid.shape)
    prof = _profile(grid)
    rho = np.where(inside, ini["rho_in"] * (1.0 + ini["rho_amp"] * prof), ini["rho_out"])
    theta = ini["theta_base"] + ini["theta_amp"] * prof
    Yb = np.asarray(ini["Y_base"], dtype=float).reshape((-1,) + (1,) * grid.dim)
    Ya = np.asarray(ini["Y_amp"], dtype=float).reshape((-1,) + (1,) * grid.dim)
    Y = Yb + Ya * prof
    if ini["velocity"] == "domain":
        u = dom.V(0.0, grid.centers)
    else:
        u = np.zeros((grid.dim,) + grid.shape)
    return rho, u, theta, Y


def _try(errors, path, fn):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def _build_geometry(d: dict, dim: int, half_width: float):
    shape = d["shape"]
    if shape == "interval":
        return Interval(float(d["a"]), float(d["b"]))
    if shape == "disk":
        return Disk(tuple(d["center"] or (0.0, 0.0)), float(d["radius"]))
    if shape == "rectangle":
        return Rectangle(tuple(d["center"] or (0.0, 0.0)), tuple(d["half_widths"]))
    if shape == "box":
        # a region slightly larger than the box: no interface inside B
        big = 1.05 * half_width
        return Interval(-big, big) if dim == 1 else Rectangle((0.0, 0.0), (big, big))
    raise ValueError(f"unknown shape {shape!r} (interval, disk, rectangle, box)")


def _build_velocity(d: dict, dim: int):
    kind = d["velocity"]
    if kind == "zero":
        return ZeroVelocity(dim)
    if kind == "translation":
        speed = tuple(float(v) for v in np.atleast_1d(d["speed"]))
        if len(speed) != dim:
            raise ValueError(f"speed has {len(speed)} components for a {dim}D grid")
        return RigidTranslation(speed, float(d["r_in"]), float(d["R"]))
    if kind == "rotation":
        return RigidRotation(float(d["omega"]), float(d["r_in"]), float(d["R"]))
    if kind == "deformation":
        return SmoothDeformation(float(d["amplitude"]), float(d["R"]))
    raise ValueError(f"unknown velocity {kind!r} (zero, translation, rotation, deformation)")


def build_scenario(cfg: dict, errors: list | None = None) -> Scenario:
    """Construct and validate; all violations are collected before raising."""
    errors = list(errors or [])
    g, d, e, tr, ch, pe, ini, run = (cfg[k] for k in
                                     ("grid", "domain", "eos", "transport", "chemistry",
                                      "penalty", "initial", "run"))
    R = d["R"]
    half = g["half_width"] if g["half_width"] is not None else (2.0 * R if isinstance(R, (int, float)) else None)
    grid = _try(errors, "grid", lambda: Grid(int(g["dim"]), int(g["n"]), float(half)))
    dim = int(g["dim"]) if g["dim"] in (1, 2) else 1

    geom = _try(errors, "domain.shape", lambda: _build_geometry(d, dim, float(half)))
    vel = _try(errors, "domain.velocity", lambda: _build_velocity(d, dim))
    if geom is not None and geom.dim != dim:
        errors.append(f"domain.shape: {d['shape']} is {geom.dim}D but grid.dim={dim}")
        geom = None
    dom = None
    if geom is not None and vel is not None:
        dom = _try(errors, "domain", lambda: MovingDomain(
            geom, vel, float(R), T=float(d["T"]), rk4_dt=float(d["rk4_dt"]),
            min_rk4_steps=int(d["min_rk4_steps"])))
    if dom is not None and grid is not None:
        if geom.min_feature < 4 * grid.dx:
            errors.append(f"grid.n: smallest feature {geom.min_feature:.4g} is under four "
                          f"cells ({4 * grid.dx:.4g})")
        if abs(grid.half_width - dom.box_half_width) > 1e-12 and d["shape"] != "box":
            errors.append(f"grid.half_width: box half-width {grid.half_width} differs from 2R = "
                          f"{dom.box_half_width}")

    transport = _try(errors, "transport", lambda: TransportLaws(**{k: float(v) for k, v in tr.items()}))
    closure = None
    if e["closure"] == "flat_start":
        closure = flat_start_closure(float(e["p_inf"]))
    elif e["closure"] != "monatomic":
        errors.append(f"eos.closure: unknown closure {e['closure']!r} (monatomic, flat_start)")
    eos = None
    if transport is not None:
        eos = _try(errors, "eos", lambda: EosSpec(
            a=float(e["a"]), p_inf=float(e["p_inf"]), c_v=float(e["c_v"]),
            species_enthalpies=tuple(e["species_enthalpies"]),
            species_entropies=tuple(e["species_entropies"]), transport=transport,
            Z_under=float(e["Z_under"]), Z_over=float(e["Z_over"]),
            c_bound=float(e["c_bound"]), closure=closure))
    net = _try(errors, "chemistry", lambda: ReactionNetwork(
        kind=str(ch["kind"]), n=int(ch["n"]), K0=float(ch["K0"]),
        sigma_bar=float(ch["sigma_bar"]), affinity_width=float(ch["affinity_width"])))
    if eos is not None and net is not None and eos.n_species != net.n:
        errors.append(f"chemistry.n: network has {net.n} species, eos defines {eos.n_species}")
    params = _try(errors, "penalty", lambda: PenaltyParams(
        h=float(pe["h"]), eps=float(pe["eps"]), delta=float(pe["delta"]),
        beta=float(pe["beta"]), thermal_sink=bool(pe["thermal_sink"])))

    # run options
    if not 0 < run["cfl"] < 1:
        errors.append(f"run.cfl: must lie in (0, 1), got {run['cfl']}")
    if not run["T_final"] >= 0:
        errors.append(f"run.T_final: must be non-negative, got {run['T_final']}")
    if dom is not None and run["T_final"] > dom.T * (1 + 1e-12):
        errors.append(f"run.T_final: {run['T_final']} exceeds the domain horizon domain.T={dom.T}")
    if int(run["every"]) < 1:
        errors.append("run.every: must be at least 1")

    # initial data
    ns = eos.n_species if eos is not None else len(ini["Y_base"])
    if len(ini["Y_base"]) != ns or len(ini["Y_amp"]) != ns:
        errors.append(f"initial.Y_base/Y_amp: need {ns} components")
    if not ini["theta_min"] > 0:
        errors.append("initial.theta_min: lower temperature bound must be positive")
    if ini["velocity"] not in ("domain", "zero"):
        errors.append(f"initial.velocity: expected 'domain' or 'zero', got {ini['velocity']!r}")
    shape_ok = len(ini["Y_base"]) == len(ini["Y_amp"]) and ini["velocity"] in ("domain", "zero")
    if grid is not None and dom is not None and shape_ok:
        rho, _, theta, Y = _initial_fields(ini, grid, dom)
        inside, _ = is_inside(0.0, grid.centers.reshape(grid.dim, -1), dom)
        outside = ~inside.reshape(grid.shape)
        if np.any(rho[outside] != 0.0):
            errors.append(f"initial.rho_out: rho0 must vanish outside Omega_0, found "
                          f"{np.count_nonzero(rho[outside])} solid cells with rho0 > 0")
        if np.any(rho < 0):
            errors.append("initial.rho_in/rho_amp: rho0 must be non-negative")
        if theta.min() < ini["theta_min"] or theta.max() > ini["theta_max"]:
            errors.append(f"initial.theta_base/theta_amp: theta0 range [{theta.min():.4g}, "
                          f"{theta.max():.4g}] leaves [{ini['theta_min']}, {ini['theta_max']}]")
        if Y.min() < 0 or Y.max() > 1:
            errors.append("initial.Y_base/Y_amp: mass fractions leave [0, 1]")
        if np.max(np.abs(Y.sum(axis=0) - 1.0)) > 1e-12:
            errors.append("initial.Y_base/Y_amp: mass fractions must sum to one")
    if errors:
        raise ConfigError(errors)
    return Scenario(cfg, grid, dom, eos, net, params)


def load_config(source, overrides=()) -> Scenario:
    """Load a scenario from a path, a catalog name or configuration text."""
    text = None
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        name = str(source)
        if name in CATALOG:
            text = resources.files("penflow").joinpath("scenarios").joinpath(f"{name}.ini").read_text()
        else:
            path = Path(name)
            if not path.exists():
                raise ConfigError([f"{name}: no such file or catalog scenario "
                                   f"({', '.join(CATALOG)})"])
            text = path.read_text()
    else:
        text = str(source)
    errors: list = []
    cfg = merge(DEFAULTS, parse_text(text), errors)
    cfg = apply_overrides(cfg, overrides, errors)
    return build_scenario(cfg, errors)
