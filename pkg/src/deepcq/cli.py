"""Command-line entry point: ``deepcq simulate|train|evaluate|sweep``.

Every command writes an effective-config file next to its outputs so a run can
be repeated from (config, seed, weights) alone. Result rows carry the config
hash, seed and weights hash.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

import yaml

from . import metrics as M
from .config import (MAX_NODES, ConfigError, ScenarioConfig, check, config_hash, dump_config,
                     from_mapping, parse_config, resolve_flows, to_mapping)
from .policy import PolicyWeights, WeightsError, load_weights, save_weights, weights_to_text
from .sim import Simulation, make_policy
from .trainer import (PPOConfig, RewardConfig, ppo_config_dict, train,
                      training_from_mapping)

log = logging.getLogger("deepcq")

POLICIES = ("cq", "cq+", "deepcq+")


def weights_hash(weights: Optional[PolicyWeights]) -> str:
    if weights is None:
        return ""
    return hashlib.sha256(weights_to_text(weights).encode()).hexdigest()[:16]


def run_one(cfg: ScenarioConfig, policy: str, weights: Optional[PolicyWeights] = None,
            trace: bool = False):
    """One episode; returns ``(row, events)``."""
    sim = Simulation(cfg, make_policy(policy, cfg, weights), trace=trace)
    m = sim.run()
    row = M.result_row(m, cfg.n_nodes, cfg.ack_size, policy=policy,
                       flows=len(resolve_flows(cfg)), dynamic_scale=cfg.dynamic_scale,
                       seed=cfg.seed, config_hash=config_hash(cfg),
                       weights_hash=weights_hash(weights) if policy == "deepcq+" else "")
    return row, sim.events


def _task(args):
    cfg, policy, weights = args
    return run_one(cfg, policy, weights)[0]


def run_many(tasks: Sequence[tuple], workers: int = 1) -> List[dict]:
    """Run independent episodes; rows come back in task order whatever ``workers`` is."""
    if workers <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def evaluate_matrix(weights: PolicyWeights, n_list: Sequence[int], flow_counts: Sequence[int],
                    dynamic_scales: Sequence[float], seeds: Sequence[int],
                    base: Optional[ScenarioConfig] = None, workers: int = 1,
                    policies: Sequence[str] = ("cq+", "deepcq+")) -> List[dict]:
    """CQ+ and DeepCQ+ on identical (N, flows, scale, seed) scenarios.

    One row per (policy, N, flows, scale, seed). Flows are drawn from the
    scenario seed, so both policies see the same endpoints and placement.
    """
    base = base or ScenarioConfig()
    tasks = []
    for n, f, s, seed in itertools.product(n_list, flow_counts, dynamic_scales, seeds):
        if not 2 <= n <= MAX_NODES:
            raise ConfigError([f"N={n} outside [2, {MAX_NODES}]"])
        cfg = check(base.with_(n_nodes=int(n), flows=(), n_flows=int(f),
                               dynamic_scale=float(s), seed=int(seed)))
        for p in policies:
            tasks.append((cfg, p, weights if p == "deepcq+" else None))
    return run_many(tasks, workers)


def _set_dotted(data: Dict, dotted: str, value) -> None:
    *parents, leaf = dotted.split(".")
    node = data
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value


def expand_grid(grid_doc: Dict) -> List[ScenarioConfig]:
    """Cartesian product of ``grid`` values (dotted keys) over ``base`` and ``seeds``."""
    base = grid_doc.get("base") or {}
    grid = grid_doc.get("grid") or {}
    seeds = parse_seeds(grid_doc.get("seeds", [0]))
    keys = list(grid)
    cfgs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        data = copy.deepcopy(base)
        for k, v in zip(keys, combo):
            _set_dotted(data, k, v)
        for seed in seeds:
            data["seed"] = seed
            cfgs.append(from_mapping(data))
    return cfgs


def sweep(grid_doc: Dict, workers: int = 1, base_dir: str = ".") -> List[dict]:
    policies = grid_doc.get("policies", ["cq+"])
    bad = [p for p in policies if p not in POLICIES]
    if bad:
        raise ConfigError([f"policies: unknown {bad}"])
    weights = None
    if "deepcq+" in policies:
        if not grid_doc.get("weights"):
            raise ConfigError(["weights: required when deepcq+ is swept"])
        weights = load_weights(os.path.join(base_dir, grid_doc["weights"]))
    tasks = [(cfg, p, weights if p == "deepcq+" else None)
             for cfg in expand_grid(grid_doc) for p in policies]
    return run_many(tasks, workers)


def parse_seeds(value) -> List[int]:
    """``[0, 3, 7]``, ``"0:20"`` (half-open range) or ``{start, count}``."""
    if isinstance(value, dict):
        start = int(value.get("start", 0))
        return list(range(start, start + int(value["count"])))
    if isinstance(value, str):
        if ":" in value:
            lo, hi = value.split(":")
            return list(range(int(lo), int(hi)))
        return [int(v) for v in value.split(",")]
    if isinstance(value, int):
        return [value]
    return [int(v) for v in value]


def _write(path: str, text: str) -> None:
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _effective_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".effective.yaml"


def _load_mapping(path: Optional[str]) -> Dict:
    if path is None:
        return {}
    parse_config(path)  # reports syntax and semantic errors with context
    with open(path, "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = check(cfg.with_(seed=args.seed))
    if args.policy == "deepcq+" and not args.weights:
        raise ConfigError(["--weights is required for deepcq+"])
    weights = load_weights(args.weights) if args.policy == "deepcq+" else None
    row, events = run_one(cfg, args.policy, weights, trace=bool(args.trace))
    _write(args.out, M.format_rows([row]))
    _write(_effective_path(args.out), dump_config(cfg))
    if args.trace:
        lines = ["slot\tnode\tkind\tpacket\tpeer\thops"]
        for e in events:
            lines.append(f"{e.slot}\t{e.node}\t{e.kind}\t{e.packet[0]}:{e.packet[1]}\t"
                         f"{'' if e.peer is None else e.peer}\t"
                         f"{'' if e.hops is None else e.hops}")
        _write(args.trace, "\n".join(lines) + "\n")
    log.info("goodput %s oh %s", row["goodput"], row["oh"])
    return 0


def cmd_train(args) -> int:
    data = _load_mapping(args.config)
    cfg = from_mapping(data)
    rc, pc = training_from_mapping(data.get("training"))
    if args.reward:
        rc = RewardConfig(**{**rc.__dict__, "mode": args.reward})
    if args.steps is not None:
        pc = PPOConfig(**{**ppo_config_dict(pc), "total_steps": args.steps})
    os.makedirs(args.out_dir, exist_ok=True)
    eff = to_mapping(cfg)
    eff["training"] = {"reward": dict(rc.__dict__), "ppo": ppo_config_dict(pc)}
    _write(os.path.join(args.out_dir, "effective.yaml"), yaml.safe_dump(eff, sort_keys=False))
    # fresh episode seeds per rollout, offset from the scenario seed
    res = train(cfg, rc, pc, out_dir=args.out_dir,
                scenario_fn=lambda e: cfg.with_(seed=cfg.seed + e))
    if not res.curves:
        save_weights(res.weights, os.path.join(args.out_dir, "weights.json"))
    log.info("trained %d iterations; weights in %s", len(res.curves), args.out_dir)
    return 0


def cmd_evaluate(args) -> int:
    weights = load_weights(args.weights)
    base = parse_config(args.config) if args.config else ScenarioConfig()
    rows = evaluate_matrix(weights, args.n, args.flows, args.scales, parse_seeds(args.seeds),
                           base=base, workers=args.workers)
    _write(args.out, M.format_rows(rows))
    _write(_effective_path(args.out), dump_config(base))
    return 0


def cmd_sweep(args) -> int:
    with open(args.grid, "r", encoding="utf-8") as fh:
        try:
            grid_doc = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([f"{args.grid}: {exc}"]) from None
    rows = sweep(grid_doc, workers=args.workers, base_dir=os.path.dirname(args.grid) or ".")
    _write(args.out, M.format_rows(rows))
    _write(_effective_path(args.out), yaml.safe_dump(grid_doc, sort_keys=False))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deepcq", description="MANET selective-broadcast lab")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode")
    p.add_argument("--config", required=True)
    p.add_argument("--policy", choices=POLICIES, default="cq+")
    p.add_argument("--weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="metrics row (CSV)")
    p.add_argument("--trace", help="optional per-event trace (TSV)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the shared broadcast policy")
    p.add_argument("--config", required=True, help="scenario file, optional training section")
    p.add_argument("--reward", choices=("srr_mimic", "overhead_min"))
    p.add_argument("--steps", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="CQ+ vs DeepCQ+ on paired seeds")
    p.add_argument("--weights", required=True)
    p.add_argument("--config", help="base scenario; N, flows, scale and seed are overridden")
    p.add_argument("--n", type=int, nargs="+", default=[12, 20, 30])
    p.add_argument("--flows", type=int, nargs="+", default=[1, 2])
    p.add_argument("--scales", type=float, nargs="+", default=[1.0])
    p.add_argument("--seeds", default="0:20")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid of scenarios from a YAML grid file")
    p.add_argument("--grid", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"deepcq: {exc}", file=sys.stderr)
    except (WeightsError, FileNotFoundError) as exc:
        print(f"deepcq: {exc}", file=sys.stderr)
    except (ValueError, FloatingPointError, OSError) as exc:
        print(f"deepcq: error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
