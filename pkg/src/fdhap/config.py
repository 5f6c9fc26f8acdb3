"""Experiment configuration: YAML ingestion, defaults and validation.

Powers may be given in dB (``p_ap_db``, ``p_dl_db``, ``e_ap_db``) or in
linear units (``p_ap``, ``p_dl``, ``e_ap``), never both.  This module is the
only place dB values are converted; everything downstream is linear.
Every validation error names the offending field as a dotted path.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigurationError
from .model import DiskModel, PathLossProfile, SystemParams, db2lin, sample_path_losses

__all__ = ["EXPERIMENTS", "ExperimentConfig", "load_config", "validate_config", "parse_config"]

EXPERIMENTS = ("rate-region", "ul-rate-vs-antennas", "validate-bounds", "optimize-once")

# Simulation-section defaults: eta = 0.5, K_u = 3, K_d = 5, unit noise and SI
# power, P_A = 20 dB, N_t = 10, N_r = 50.
DEFAULT_PARAMS = dict(n_tx=10, n_rx=50, k_dl=5, k_ul=3, p_ap_db=20.0, p_dl_db=0.0, tau=None,
                      alpha=0.5, eta=0.5, sigma_n2=1.0, sigma_si2=1.0)
DEFAULT_TRIALS = {"rate-region": 1000, "ul-rate-vs-antennas": 10000, "validate-bounds": 10000,
                  "optimize-once": 1}
DEFAULT_R_UL = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5]
DEFAULT_ALPHA = [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95]
DEFAULT_N_TX = [16, 32, 64, 128, 256]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: SystemParams
    losses: PathLossProfile
    seed: int = 0
    trials: int = 10000
    output: str = "results"
    csi_mode: str = "perfect"
    alpha_grid: tuple = tuple(DEFAULT_ALPHA)
    r_ul_grid: tuple = tuple(DEFAULT_R_UL)
    n_tx_grid: tuple = tuple(DEFAULT_N_TX)
    e_ap: float = 100.0
    power_law: str = "inv_square"
    r_ul_min: float = 0.0
    loss_spec: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Plain-data view for the run report."""
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, SystemParams):
                value = dataclasses.asdict(value)
            elif isinstance(value, PathLossProfile):
                value = value.as_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


def _expect_mapping(value, path):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"expected a mapping, got {type(value).__name__}", path)
    return value


def _reject_unknown(block, allowed, prefix):
    for key in block:
        if key not in allowed:
            raise ConfigurationError(f"unknown key (allowed: {', '.join(sorted(allowed))})",
                                     f"{prefix}.{key}" if prefix else str(key))


def _number(value, path, minimum=None, strict=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", path)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigurationError("must be finite", path)
    if minimum is not None and (value <= minimum if strict else value < minimum):
        raise ConfigurationError(f"must be {'>' if strict else '>='} {minimum}, got {value}", path)
    return value


def _integer(value, path, minimum=0):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigurationError(f"expected an integer, got {value!r}", path)
    if value < minimum:
        raise ConfigurationError(f"must be >= {minimum}, got {value}", path)
    return int(value)


def _power(block, name, path, default_db):
    lin, db = block.get(name), block.get(f"{name}_db")
    if lin is not None and db is not None:
        raise ConfigurationError(f"give either {name} or {name}_db, not both", f"{path}.{name}")
    if lin is not None:
        return _number(lin, f"{path}.{name}", minimum=0.0)
    if db is not None:
        return float(db2lin(_number(db, f"{path}.{name}_db")))
    return None if default_db is None else float(db2lin(default_db))


def _grid(value, path, kind=float, minimum=None):
    """A list of numbers or ``{start, stop, num}`` (inclusive linspace)."""
    if isinstance(value, dict):
        _reject_unknown(value, {"start", "stop", "num"}, path)
        missing = {"start", "stop", "num"} - set(value)
        if missing:
            raise ConfigurationError(f"missing {', '.join(sorted(missing))}", path)
        num = _integer(value["num"], f"{path}.num", minimum=1)
        values = np.linspace(_number(value["start"], f"{path}.start"), _number(value["stop"], f"{path}.stop"), num)
        values = values.tolist()
    elif isinstance(value, (list, tuple)):
        values = list(value)
    else:
        raise ConfigurationError("expected a list or a {start, stop, num} mapping", path)
    if not values:
        raise ConfigurationError("grid is empty", path)
    out = []
    for i, v in enumerate(values):
        if kind is int:
            out.append(_integer(v, f"{path}[{i}]", minimum=1 if minimum is None else minimum))
        else:
            out.append(_number(v, f"{path}[{i}]", minimum=minimum))
    return tuple(out)


_PARAM_KEYS = {"n_tx", "n_rx", "k_dl", "k_ul", "p_ap", "p_ap_db", "p_dl", "p_dl_db", "tau", "alpha", "eta",
               "sigma_n2", "sigma_si2"}


def _params(block) -> SystemParams:
    block = _expect_mapping(block, "params")
    _reject_unknown(block, _PARAM_KEYS, "params")
    merged = {k: block.get(k, DEFAULT_PARAMS.get(k)) for k in ("n_tx", "n_rx", "k_dl", "k_ul", "tau")}
    values = {}
    for key in ("n_tx", "n_rx"):
        values[key] = _integer(merged[key], f"params.{key}", minimum=1)
    for key in ("k_dl", "k_ul"):
        values[key] = _integer(merged[key], f"params.{key}")
    tau = merged["tau"]
    values["tau"] = values["k_dl"] + values["n_tx"] if tau is None else _integer(tau, "params.tau")
    values["p_ap"] = _power(block, "p_ap", "params", DEFAULT_PARAMS["p_ap_db"])
    values["p_dl"] = _power(block, "p_dl", "params", DEFAULT_PARAMS["p_dl_db"])
    if not values["p_dl"] > 0:
        raise ConfigurationError("must be positive", "params.p_dl")
    alpha = _number(block.get("alpha", DEFAULT_PARAMS["alpha"]), "params.alpha")
    if not 0.0 <= alpha < 1.0:
        raise ConfigurationError(f"time split must satisfy 0 <= alpha < 1 (harvesting gain diverges "
                                 f"at alpha = 1), got {alpha}", "params.alpha")
    values["alpha"] = alpha
    eta = _number(block.get("eta", DEFAULT_PARAMS["eta"]), "params.eta")
    if not 0.0 < eta < 1.0:
        raise ConfigurationError(f"conversion efficiency must lie in (0, 1), got {eta}", "params.eta")
    values["eta"] = eta
    values["sigma_n2"] = _number(block.get("sigma_n2", DEFAULT_PARAMS["sigma_n2"]), "params.sigma_n2",
                                 minimum=0.0, strict=True)
    values["sigma_si2"] = _number(block.get("sigma_si2", DEFAULT_PARAMS["sigma_si2"]), "params.sigma_si2",
                                  minimum=0.0)
    try:
        return SystemParams(**values)
    except ConfigurationError as exc:
        message = str(exc).split(": ", 1)[-1] if exc.path else str(exc)
        raise ConfigurationError(message, f"params.{exc.path}" if exc.path else "params") from None


def _losses(block, params: SystemParams, seed: int):
    block = _expect_mapping(block, "losses")
    model = block.get("model", "uniform")
    if model == "uniform":
        _reject_unknown(block, {"model", "value"}, "losses")
        value = _number(block.get("value", 1.0), "losses.value", minimum=0.0, strict=True)
        return PathLossProfile.uniform(params, value), {"model": "uniform", "value": value}
    if model == "disk":
        keys = {"radius", "exponent", "reference_gain", "reference_distance", "min_distance"}
        _reject_unknown(block, keys | {"model"}, "losses")
        kwargs = {k: _number(block[k], f"losses.{k}", minimum=0.0, strict=True) for k in keys if k in block}
        disk = DiskModel(**kwargs)
        # node drop uses its own stream so it never collides with trial streams
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2**63,))))
        return sample_path_losses(disk, params, gen), {"model": "disk", **dataclasses.asdict(disk)}
    if model == "explicit":
        keys = ("beta_ap_dl", "beta_ap_ul", "beta_dl_ul", "beta_ul_dl")
        _reject_unknown(block, set(keys) | {"model"}, "losses")
        arrays = {}
        for k in keys:
            if k not in block:
                raise ConfigurationError("missing table", f"losses.{k}")
            arrays[k] = block[k]
        try:
            profile = PathLossProfile(**arrays)
            profile.check(params)
        except (ConfigurationError, ValueError, TypeError) as exc:
            raise ConfigurationError(str(exc), "losses") from None
        return profile, {"model": "explicit"}
    raise ConfigurationError(f"unknown path-loss model {model!r} (uniform, disk, explicit)", "losses.model")


_TOP_KEYS = {"experiment", "seed", "trials", "output", "csi_mode", "params", "losses", "grids", "scaling",
             "r_ul_min"}


def parse_config(raw: Any, experiment: Optional[str] = None) -> ExperimentConfig:
    """Validate a parsed YAML document and fill in every default.

    ``experiment`` (from the command line) overrides the document's field.
    """
    raw = _expect_mapping(raw, "")
    _reject_unknown(raw, _TOP_KEYS, "")
    name = experiment or raw.get("experiment")
    if name is None:
        raise ConfigurationError("no experiment given", "experiment")
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r} (expected one of {', '.join(EXPERIMENTS)})",
                                 "experiment")
    seed = _integer(raw.get("seed", 0), "seed")
    if seed >= 2**64:
        raise ConfigurationError("must fit in 64 bits", "seed")
    trials = _integer(raw.get("trials", DEFAULT_TRIALS[name]), "trials", minimum=1)
    output = raw.get("output", "results")
    if not isinstance(output, str) or not output:
        raise ConfigurationError("expected a nonempty path", "output")
    csi_mode = raw.get("csi_mode", "perfect")
    if csi_mode not in ("perfect", "estimated"):
        raise ConfigurationError(f"expected perfect or estimated, got {csi_mode!r}", "csi_mode")
    params = _params(raw.get("params"))
    losses, loss_spec = _losses(raw.get("losses"), params, seed)

    grids = _expect_mapping(raw.get("grids"), "grids")
    _reject_unknown(grids, {"alpha", "r_ul", "n_tx"}, "grids")
    alpha_grid = _grid(grids.get("alpha", DEFAULT_ALPHA), "grids.alpha", minimum=0.0)
    if any(a >= 1.0 for a in alpha_grid):
        raise ConfigurationError("time split values must be < 1", "grids.alpha")
    r_ul_grid = _grid(grids.get("r_ul", DEFAULT_R_UL), "grids.r_ul", minimum=0.0)
    n_tx_grid = _grid(grids.get("n_tx", DEFAULT_N_TX), "grids.n_tx", kind=int)
    if any(b <= a for a, b in zip(n_tx_grid, n_tx_grid[1:])):
        raise ConfigurationError("must be strictly increasing", "grids.n_tx")

    scaling = _expect_mapping(raw.get("scaling"), "scaling")
    _reject_unknown(scaling, {"e_ap", "e_ap_db", "power_law"}, "scaling")
    e_ap = _power(scaling, "e_ap", "scaling", 20.0)
    power_law = scaling.get("power_law", "inv_square")
    if power_law not in ("inv_square", "inv_linear"):
        raise ConfigurationError(f"expected inv_square or inv_linear, got {power_law!r}", "scaling.power_law")
    r_ul_min = _number(raw.get("r_ul_min", 0.0), "r_ul_min", minimum=0.0)

    return ExperimentConfig(name, params, losses, seed, trials, output, csi_mode, alpha_grid, r_ul_grid,
                            n_tx_grid, e_ap, power_law, r_ul_min, loss_spec)


def load_config(path: Optional[str]) -> Any:
    """Read a YAML document; ``None`` or an empty file gives an empty mapping."""
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise ConfigurationError(f"no such file: {path}", "config")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"invalid YAML: {exc}", "config") from None
    return {} if doc is None else doc


def validate_config(path: Optional[str], experiment: Optional[str] = None, **overrides) -> ExperimentConfig:
    """Load, apply command-line overrides (seed, trials, output) and validate."""
    raw = load_config(path)
    raw = dict(_expect_mapping(raw, ""))
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return parse_config(raw, experiment)
