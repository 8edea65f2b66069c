"""Experiment configuration: a flat YAML (or JSON) document with defaults for every field."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .analysis import AnalysisContext, QuadratureSettings
from .deployment import SharingModel, decompose_densities
from .protocols import Protocol, SensingParams
from .radio import AntennaParams, NoiseParams, PathLossParams, db_to_lin, noise_floor_dbm
from .simulator import SimConfig


class ConfigError(ValueError):
    pass


NETWORK_DEFAULTS = {
    "lambda_1": 30.0,  # BS/km^2
    "lambda_2": 30.0,
    "rho": 0.5,
    "c_los_db": -60.0,
    "c_nlos_db": -70.0,
    "alpha_los": 2.0,
    "alpha_nlos": 4.0,
    "beta": 0.007,  # 1/m
    "p_x_dbm": 36.0,
    "p_u_dbm": 15.0,
    "n_bs": 64,
    "n_ue": 16,
    "theta_bs_deg": 10.0,
    "theta_ue_deg": 30.0,
    "omni_penalty_db": 7.0,
    "n0_dbm_per_hz": -174.0,
    "bandwidth_hz": 600e6,
    "noise_figure_db": 10.0,
    "p_th_offset_db": 15.0,  # above the noise floor
    "p_th_a_offset_db": 0.0,
    "p_th_dbm": None,  # absolute thresholds override the offsets
    "p_th_a_dbm": None,
    "r_bar": 100.0,
}
SIM_DEFAULTS = {"iterations_pt": 10000, "iterations_cov": 10000, "region_radius": 2000.0, "master_seed": 0, "workers": 1}
QUAD_DEFAULTS = {"rel_tol": 1e-6, "abs_tol": 1e-9, "r_max_m": None}
SWEEP_KEYS = ("rho", "p_th_offset_db", "p_th_a_offset_db")
TOP_KEYS = {"protocols", "mode", "sweeps", "sweep_mode", "z_grid_db", "sim", "output", "quadrature", *NETWORK_DEFAULTS}
MODES = ("analysis", "sim", "both")


def default_z_grid() -> list[float]:
    return [float(z) for z in range(-10, 71, 5)]


@dataclass
class ExperimentConfig:
    network: dict = field(default_factory=lambda: dict(NETWORK_DEFAULTS))
    protocols: list = field(default_factory=lambda: [Protocol.NON_CS])
    mode: str = "both"
    sweeps: dict = field(default_factory=dict)
    sweep_mode: str = "product"
    z_grid_db: list = field(default_factory=default_z_grid)
    sim: SimConfig = field(default_factory=SimConfig)
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    output: dict = field(default_factory=lambda: {"path": "results", "format": "csv"})

    def sweep_points(self) -> list[dict]:
        """Parameter overrides for every sweep point, in a deterministic order."""
        keys = [k for k in SWEEP_KEYS if k in self.sweeps]
        if not keys:
            return [{}]
        values = [self.sweeps[k] for k in keys]
        if self.sweep_mode == "zip":
            return [dict(zip(keys, v)) for v in zip(*values)]
        points = [{}]
        for k, vals in zip(keys, values):
            points = [{**p, k: v} for p in points for v in vals]
        return points

    def context(self, protocol: Protocol, overrides: dict | None = None) -> AnalysisContext:
        net = {**self.network, **(overrides or {})}
        return build_context(net, protocol, self.quadrature)


def build_context(net: dict, protocol: Protocol, quadrature: QuadratureSettings = QuadratureSettings()) -> AnalysisContext:
    model = SharingModel(net["lambda_1"], net["lambda_2"], net["rho"])
    decompose_densities(model)  # rejects negative exclusive densities early
    pl = PathLossParams(
        c_los=db_to_lin(net["c_los_db"]),
        c_nlos=db_to_lin(net["c_nlos_db"]),
        alpha_los=net["alpha_los"],
        alpha_nlos=net["alpha_nlos"],
        beta=net["beta"],
    )
    antenna = AntennaParams(
        n_bs=int(net["n_bs"]),
        n_ue=int(net["n_ue"]),
        theta_bs=math.radians(net["theta_bs_deg"]),
        theta_ue=math.radians(net["theta_ue_deg"]),
        omni_penalty_db=net["omni_penalty_db"],
    )
    noise = NoiseParams(net["n0_dbm_per_hz"], net["bandwidth_hz"], net["noise_figure_db"])
    nf = noise_floor_dbm(noise)
    p_th_dbm = net["p_th_dbm"] if net.get("p_th_dbm") is not None else nf + net["p_th_offset_db"]
    p_th_a_dbm = net["p_th_a_dbm"] if net.get("p_th_a_dbm") is not None else nf + net["p_th_a_offset_db"]
    sensing = SensingParams(
        p_th=db_to_lin(p_th_dbm),
        p_th_a=db_to_lin(p_th_a_dbm),
        p_x=db_to_lin(net["p_x_dbm"]),
        p_u=db_to_lin(net["p_u_dbm"]),
    )
    return AnalysisContext(model, pl, antenna, sensing, noise, Protocol.parse(protocol), net["r_bar"], quadrature)


def _number(path, v, *, lo=None, hi=None, integer=False, strict_lo=False):
    if isinstance(v, str):
        # YAML 1.1 reads exponents without a sign (6e8) as strings
        try:
            v = float(v)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {v!r}") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if lo is not None and (v < lo or (strict_lo and v == lo)):
        raise ConfigError(f"{path}: must be {'>' if strict_lo else '>='} {lo}, got {v!r}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {v!r}")
    return int(v) if integer else float(v)


_NETWORK_RULES = {
    "lambda_1": dict(lo=0),
    "lambda_2": dict(lo=0),
    "rho": dict(lo=0, hi=1),
    "alpha_los": dict(lo=0, strict_lo=True),
    "alpha_nlos": dict(lo=0, strict_lo=True),
    "beta": dict(lo=0),
    "n_bs": dict(lo=1, integer=True),
    "n_ue": dict(lo=1, integer=True),
    "theta_bs_deg": dict(lo=0, hi=360, strict_lo=True),
    "theta_ue_deg": dict(lo=0, hi=360, strict_lo=True),
    "bandwidth_hz": dict(lo=0, strict_lo=True),
    "r_bar": dict(lo=0, strict_lo=True),
}


def _validate_network(raw: dict) -> dict:
    net = dict(NETWORK_DEFAULTS)
    for k in NETWORK_DEFAULTS:
        if k in raw and raw[k] is not None:
            net[k] = _number(k, raw[k], **_NETWORK_RULES.get(k, {}))
    return net


def _sub(raw, key, defaults):
    sub = raw.get(key) or {}
    if not isinstance(sub, dict):
        raise ConfigError(f"{key}: expected a mapping")
    unknown = set(sub) - set(defaults) - ({"path", "format"} if key == "output" else set())
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}: unknown field")
    return {**defaults, **sub}


def parse_config(raw: dict | None) -> ExperimentConfig:
    """Validate a parsed document and fill in defaults."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a mapping")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    net = _validate_network(raw)

    protos = raw.get("protocols", ["non-cs"])
    if isinstance(protos, str):
        protos = [protos]
    if not protos:
        raise ConfigError("protocols: at least one protocol is required")
    try:
        protocols = [Protocol.parse(p) for p in protos]
    except ValueError as e:
        raise ConfigError(f"protocols: {e}") from None

    mode = raw.get("mode", "both")
    mode = "sim" if mode == "simulation" else mode
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {'|'.join(MODES)}, got {mode!r}")

    sweeps_raw = raw.get("sweeps") or {}
    if not isinstance(sweeps_raw, dict):
        raise ConfigError("sweeps: expected a mapping")
    sweeps = {}
    for k, vals in sweeps_raw.items():
        if k not in SWEEP_KEYS:
            raise ConfigError(f"sweeps.{k}: unknown sweep (expected one of {', '.join(SWEEP_KEYS)})")
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"sweeps.{k}: expected a non-empty list")
        rules = _NETWORK_RULES.get(k, {})
        sweeps[k] = [_number(f"sweeps.{k}[{i}]", v, **rules) for i, v in enumerate(vals)]
    sweep_mode = raw.get("sweep_mode", "product")
    if sweep_mode not in ("product", "zip"):
        raise ConfigError("sweep_mode: expected 'product' or 'zip'")
    if sweep_mode == "zip" and len({len(v) for v in sweeps.values()}) > 1:
        lens = ", ".join(f"{k}={len(v)}" for k, v in sweeps.items())
        raise ConfigError(f"sweeps: zipped sweeps need equal lengths ({lens})")

    z = raw.get("z_grid_db", default_z_grid())
    if not isinstance(z, list) or not z:
        raise ConfigError("z_grid_db: expected a non-empty list")
    z = [_number(f"z_grid_db[{i}]", v) for i, v in enumerate(z)]
    if any(b < a for a, b in zip(z, z[1:])):
        raise ConfigError("z_grid_db: must be sorted")

    s = _sub(raw, "sim", SIM_DEFAULTS)
    sim = SimConfig(
        iterations_pt=_number("sim.iterations_pt", s["iterations_pt"], lo=1, integer=True),
        iterations_cov=_number("sim.iterations_cov", s["iterations_cov"], lo=1, integer=True),
        region_radius=_number("sim.region_radius", s["region_radius"], lo=0, strict_lo=True),
        master_seed=_number("sim.master_seed", s["master_seed"], lo=0, integer=True),
        z_grid_db=tuple(z),
        workers=_number("sim.workers", s["workers"], lo=1, integer=True),
    )
    q = _sub(raw, "quadrature", QUAD_DEFAULTS)
    quad = QuadratureSettings(
        rel_tol=_number("quadrature.rel_tol", q["rel_tol"], lo=0, strict_lo=True),
        abs_tol=_number("quadrature.abs_tol", q["abs_tol"], lo=0, strict_lo=True),
        r_max_m=None if q["r_max_m"] is None else _number("quadrature.r_max_m", q["r_max_m"], lo=0, strict_lo=True),
    )
    out = _sub(raw, "output", {"path": "results", "format": "csv"})
    if out["format"] not in ("csv", "json"):
        raise ConfigError("output.format: expected 'csv' or 'json'")

    cfg = ExperimentConfig(net, protocols, mode, sweeps, sweep_mode, z, sim, quad, out)
    # build every context once so physical inconsistencies surface at load time
    for point in cfg.sweep_points():
        try:
            cfg.context(protocols[0], point)
        except ValueError as e:
            where = ", ".join(f"{k}={v}" for k, v in point.items()) or "network"
            raise ConfigError(f"{where}: {e}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"<root>: cannot parse {path}: {e}") from None
    return parse_config(raw)
