"""Scenario configuration: defaults, YAML parsing, validation, seeding."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .mobility import Arena
from .tables import DEFAULT_DECAY, DEFAULT_EPSILON, DEFAULT_H_MAX

MAX_NODES = 10_000
MOBILITY_MODELS = ("gauss_markov", "random_waypoint", "static")

# independent RNG streams derived from one master seed
STREAMS = {"placement": 0, "mobility": 1, "links": 2, "policy": 3, "traffic": 4, "init": 5,
           "train": 6}


class ConfigError(ValueError):
    """Raised with every violated constraint, not only the first."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Flow:
    source: int
    destination: int
    inter_arrival: int = 2
    offset: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    n_nodes: int = 12
    flows: Tuple[Flow, ...] = ()
    n_flows: int = 0
    t_max: int = 300
    episode_cap: int = 1500
    inter_arrival: int = 2
    # mobility
    mobility: str = "gauss_markov"
    arena_width: float = 1000.0
    arena_height: float = 500.0
    region_scale: float = 1.0
    radio_range: float = 250.0
    alpha_gm: float = 0.75
    mean_speed: float = 2.0
    speed_variance: float = 1.0
    heading_std: float = 0.3
    dynamic_scale: float = 1.0
    speed_range: Tuple[float, float] = (1.0, 3.0)
    positions: Optional[Tuple[Tuple[float, float], ...]] = None
    # protocol
    decay: float = DEFAULT_DECAY
    epsilon: float = DEFAULT_EPSILON
    h_max: float = DEFAULT_H_MAX
    k: int = 4
    link_reliability: float = 1.0
    ack_size: float = 0.1
    seed: int = 0

    @property
    def arena(self) -> Arena:
        return Arena(self.arena_width, self.arena_height, self.region_scale, self.radio_range)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def validate(cfg: ScenarioConfig) -> List[str]:
    errs = []
    if not isinstance(cfg.n_nodes, int) or cfg.n_nodes < 2:
        errs.append("network.n_nodes: N >= 2 required")
    elif cfg.n_nodes > MAX_NODES:
        errs.append(f"network.n_nodes: N <= {MAX_NODES} required")
    if not cfg.flows and cfg.n_flows <= 0:
        errs.append("traffic: at least one flow (flows or n_flows) required")
    for idx, f in enumerate(cfg.flows):
        for name in ("source", "destination"):
            v = getattr(f, name)
            if not isinstance(v, int) or not 0 <= v < max(cfg.n_nodes, 0):
                errs.append(f"traffic.flows[{idx}].{name}: node id {v!r} out of range")
        if f.source == f.destination:
            errs.append(f"traffic.flows[{idx}]: source == destination ({f.source})")
        if f.inter_arrival < 1:
            errs.append(f"traffic.flows[{idx}].inter_arrival: must be >= 1")
    if cfg.n_flows < 0:
        errs.append("traffic.n_flows: must be >= 0")
    if cfg.inter_arrival < 1:
        errs.append("traffic.inter_arrival: must be >= 1")
    if cfg.t_max < 0:
        errs.append("traffic.t_max: must be >= 0")
    if cfg.episode_cap < cfg.t_max:
        errs.append("traffic.episode_cap: must be >= t_max")
    if cfg.mobility not in MOBILITY_MODELS:
        errs.append(f"mobility.model: one of {MOBILITY_MODELS}")
    for name in ("arena_width", "arena_height", "radio_range", "region_scale"):
        if not getattr(cfg, name) > 0:
            errs.append(f"mobility.{name}: must be > 0")
    if not 0.0 <= cfg.alpha_gm <= 1.0:
        errs.append("mobility.alpha_gm: must lie in [0, 1]")
    if cfg.speed_variance < 0:
        errs.append("mobility.speed_variance: must be >= 0")
    if cfg.dynamic_scale < 0:
        errs.append("mobility.dynamic_scale: must be >= 0")
    lo, hi = cfg.speed_range
    if lo < 0 or hi < lo:
        errs.append("mobility.speed_range: need 0 <= low <= high")
    if cfg.positions is not None and len(cfg.positions) != cfg.n_nodes:
        errs.append("mobility.positions: one (x, y) per node required")
    if not 0.0 <= cfg.decay <= 1.0:
        errs.append("protocol.decay: must lie in [0, 1]")
    if not 0.0 <= cfg.epsilon < 1.0:
        errs.append("protocol.epsilon: must lie in [0, 1)")
    if cfg.h_max < 1:
        errs.append("protocol.h_max: must be >= 1")
    if cfg.k < 1:
        errs.append("protocol.k: K >= 1 required")
    if not 0.0 <= cfg.link_reliability <= 1.0:
        errs.append("protocol.link_reliability: must lie in [0, 1]")
    if cfg.ack_size < 0:
        errs.append("protocol.ack_size: must be >= 0")
    return errs


def check(cfg: ScenarioConfig) -> ScenarioConfig:
    errs = validate(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


# section -> {file key: dataclass field}
SECTIONS: Dict[str, Dict[str, str]] = {
    "network": {"n_nodes": "n_nodes", "radio_range": "radio_range"},
    "traffic": {"flows": "flows", "n_flows": "n_flows", "t_max": "t_max",
                "episode_cap": "episode_cap", "inter_arrival": "inter_arrival"},
    "mobility": {"model": "mobility", "arena_width": "arena_width",
                 "arena_height": "arena_height", "region_scale": "region_scale",
                 "alpha_gm": "alpha_gm", "mean_speed": "mean_speed",
                 "speed_variance": "speed_variance", "heading_std": "heading_std",
                 "dynamic_scale": "dynamic_scale", "speed_range": "speed_range",
                 "positions": "positions"},
    "protocol": {"decay": "decay", "epsilon": "epsilon", "h_max": "h_max", "k": "k",
                 "link_reliability": "link_reliability", "ack_size": "ack_size"},
}
TOP_LEVEL = {"seed": "seed"}


def from_mapping(data: Dict[str, Any]) -> ScenarioConfig:
    """Build a validated config from the nested mapping form."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a mapping"])
    errs: List[str] = []
    values: Dict[str, Any] = {}
    for key, val in data.items():
        if key in TOP_LEVEL:
            values[TOP_LEVEL[key]] = val
        elif key == "training":
            # read by training_from_mapping
            continue
        elif key in SECTIONS:
            if not isinstance(val, dict):
                errs.append(f"{key}: expected a mapping")
                continue
            for sub, v in val.items():
                if sub not in SECTIONS[key]:
                    errs.append(f"{key}.{sub}: unknown field")
                else:
                    values[SECTIONS[key][sub]] = v
        else:
            errs.append(f"{key}: unknown section")
    default_ia = values.get("inter_arrival", ScenarioConfig.inter_arrival)
    if "flows" in values:
        flows = []
        for idx, f in enumerate(values["flows"] or []):
            try:
                flows.append(Flow(int(f["source"]), int(f["destination"]),
                                  int(f.get("inter_arrival", default_ia)),
                                  int(f.get("offset", 0))))
            except (KeyError, TypeError, ValueError) as exc:
                errs.append(f"traffic.flows[{idx}]: malformed flow ({exc})")
        values["flows"] = tuple(flows)
    if "speed_range" in values:
        try:
            lo, hi = values["speed_range"]
            values["speed_range"] = (float(lo), float(hi))
        except (TypeError, ValueError):
            errs.append("mobility.speed_range: expected [low, high]")
            values.pop("speed_range")
    if values.get("positions") is not None:
        try:
            values["positions"] = tuple((float(x), float(y)) for x, y in values["positions"])
        except (TypeError, ValueError):
            errs.append("mobility.positions: expected a list of [x, y]")
            values.pop("positions")
    types = {f.name: f.type for f in fields(ScenarioConfig)}
    for name in list(values):
        t = types[name]
        v = values[name]
        try:
            if t == "int":
                if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                    raise ValueError(v)
                values[name] = int(v)
            elif t == "float":
                values[name] = float(v)
            elif t == "str":
                values[name] = str(v)
        except (TypeError, ValueError):
            errs.append(f"{name}: expected {t}, got {v!r}")
            values.pop(name)
    cfg = ScenarioConfig(**values)
    errs.extend(validate(cfg))
    if errs:
        raise ConfigError(errs)
    return cfg


def parse_config(path) -> ScenarioConfig:
    """Read a YAML scenario file; omitted fields take their defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, source=str(path))


def parse_config_text(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        line = text.splitlines()[mark.line] if mark and mark.line < len(text.splitlines()) else ""
        raise ConfigError([f"parse error at {where}: {getattr(exc, 'problem', exc)}"
                           + (f"\n    {line}" if line else "")]) from None
    return from_mapping(data)


def to_mapping(cfg: ScenarioConfig) -> Dict[str, Any]:
    """Nested form with every field explicit (the "effective config")."""
    flat = asdict(cfg)
    flat["flows"] = [asdict(f) for f in cfg.flows]
    flat["speed_range"] = list(cfg.speed_range)
    flat["positions"] = None if cfg.positions is None else [list(p) for p in cfg.positions]
    out: Dict[str, Any] = {}
    for section, keys in SECTIONS.items():
        out[section] = {k: flat[f] for k, f in keys.items()}
    out["seed"] = cfg.seed
    return out


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_mapping(cfg), sort_keys=False)


def config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(to_mapping(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def stream(seed: int, name: str) -> np.random.Generator:
    """Named RNG stream; draws from one stream never shift another."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                        spawn_key=(STREAMS[name],)))


def resolve_flows(cfg: ScenarioConfig) -> Tuple[Flow, ...]:
    """Explicit flows, or ``n_flows`` random distinct pairs from the traffic stream."""
    if cfg.flows:
        return cfg.flows
    rng = stream(cfg.seed, "traffic")
    flows = []
    for i in range(cfg.n_flows):
        s, d = rng.choice(cfg.n_nodes, size=2, replace=False)
        flows.append(Flow(int(s), int(d), cfg.inter_arrival, offset=i % cfg.inter_arrival))
    return tuple(flows)
