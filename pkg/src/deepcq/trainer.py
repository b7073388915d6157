"""Multi-agent PPO with one parameter vector shared by every node.

Rollouts run whole episodes in which each node samples its own actions from
the shared policy (decentralised execution); all agents' transitions are pooled
into one batch and a single central update is made (centralised training).
Gradients come from hand-written backpropagation through the MLP.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, List, Optional

import numpy as np

from . import metrics as M
from .config import ScenarioConfig, stream
from .policy import (BROADCAST, PolicyWeights, forward_batch, init_weights, log_softmax,
                     save_weights)
from .sim import NeuralPolicy, run_episode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardConfig:
    mode: str = "overhead_min"
    w1: float = 1.0
    w2: float = 0.2
    w3: float = 0.1
    epsilon: float = 0.05

    def __post_init__(self):
        if self.mode not in ("srr_mimic", "overhead_min"):
            raise ValueError(f"unknown reward mode {self.mode!r}")
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValueError("reward weights must be non-negative")


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 5e-5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    epochs: int = 4
    minibatch_size: int = 256
    rollout_steps: int = 4096
    total_steps: int = 1_000_000
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: Optional[float] = 0.5
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if not self.clip_ratio > 0:
            raise ValueError("clip_ratio must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def reward_srr_mimic(action: int, c_best: float, epsilon: float) -> float:
    eps_t = 1.0 - epsilon
    return 1.0 - c_best * eps_t if action == BROADCAST else c_best * eps_t


def reward_overhead_min(delivered: bool, transmitted: bool, n_ack: int, n_nodes: int,
                        rc: RewardConfig) -> float:
    """Delivery credit minus a no-ACK penalty minus the normalised ACK count."""
    zero = 1.0 if transmitted and n_ack == 0 else 0.0
    return rc.w1 * float(delivered) - rc.w2 * zero - rc.w3 * n_ack / n_nodes


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    agents: np.ndarray
    episodes: np.ndarray
    c_best: np.ndarray
    episode_metrics: List[M.EpisodeMetrics] = field(default_factory=list)
    n_nodes: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def empty(cls, obs_dim: int) -> "Batch":
        z = np.zeros(0)
        return cls(np.zeros((0, obs_dim)), z.astype(int), z, z, z, z.astype(bool),
                   z.astype(int), z.astype(int), z)


def batch_from_recorder(rec, n_nodes: int, rc: RewardConfig, episode: int) -> Batch:
    """Order one episode's decisions per agent and attach rewards."""
    n = len(rec)
    agents = np.asarray(rec.agent, dtype=int)
    # stable sort keeps each agent's decisions in time order
    order = np.argsort(agents, kind="stable")
    actions = np.asarray(rec.action, dtype=int)
    c_best = np.asarray(rec.c_best, dtype=float)
    if rc.mode == "srr_mimic":
        rewards = np.array([reward_srr_mimic(a, c, rc.epsilon) for a, c in zip(actions, c_best)])
    else:
        rewards = np.array([reward_overhead_min(dl, True, na, n_nodes, rc)
                            for dl, na in zip(rec.delivered, rec.n_ack)])
    agents = agents[order]
    dones = np.zeros(n, dtype=bool)
    if n:
        dones[np.flatnonzero(np.diff(agents))] = True
        dones[-1] = True
    obs = np.asarray(rec.obs, dtype=float)[order] if n else np.zeros((0, 0))
    return Batch(obs, actions[order], np.asarray(rec.logp)[order], rewards[order],
                 np.asarray(rec.value)[order], dones, agents, np.full(n, episode, dtype=int),
                 c_best[order])


def concat(batches: List[Batch]) -> Batch:
    batches = [b for b in batches if len(b)]
    if not batches:
        return Batch.empty(0)
    out = Batch(*(np.concatenate([getattr(b, f) for b in batches])
                  for f in ("obs", "actions", "logp", "rewards", "values", "dones",
                            "agents", "episodes", "c_best")))
    return out


def collect_rollouts(cfg: ScenarioConfig, weights: PolicyWeights, rc: RewardConfig,
                     steps: int, first_episode: int = 0,
                     seed_fn: Optional[Callable[[int], ScenarioConfig]] = None) -> Batch:
    """Run whole episodes with the shared policy until ``steps`` decisions exist.

    Episode ``e`` uses ``seed_fn(e)`` when given, else ``cfg`` with seed
    ``cfg.seed + e``.
    """
    policy = NeuralPolicy(weights)
    parts, mets, sizes = [], [], []
    total, e = 0, first_episode
    while total < steps:
        ecfg = seed_fn(e) if seed_fn else cfg.with_(seed=cfg.seed + e)
        m, rec = run_episode(ecfg, policy, record=True)
        b = batch_from_recorder(rec, ecfg.n_nodes, rc, e)
        parts.append(b)
        mets.append(m)
        sizes.append(ecfg.n_nodes)
        total += len(b)
        e += 1
        if len(b) == 0 and m.packets_entered == 0:
            break
    batch = concat(parts)
    batch.episode_metrics, batch.n_nodes = mets, sizes
    return batch


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   gamma: float, lam: float):
    """GAE over consecutive per-agent segments; a segment ends where ``dones``.

    Terminal steps bootstrap from zero. Returns ``(advantages, value_targets)``.
    """
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        if dones[t]:
            next_v, last = 0.0, 0.0
        else:
            next_v = values[t + 1]
        delta = rewards[t] + gamma * next_v - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv, adv + values


# loss and gradient ---------------------------------------------------------

def ppo_loss(weights: PolicyWeights, obs, actions, old_logp, adv, returns, clip: float,
             value_coef: float, entropy_coef: float, grad: bool = True):
    """Clipped-surrogate + value + entropy loss (to be minimised).

    Returns ``(loss, flat_gradient or None, stats)``.
    """
    b = len(actions)
    logits, values, acts = forward_batch(weights, obs, keep=grad)
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    idx = np.arange(b)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr1, surr2 = ratio * adv, clipped * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_loss = np.mean((values - returns) ** 2)
    entropy = -np.sum(p * logp_all, axis=1)
    loss = policy_loss + value_coef * value_loss - entropy_coef * np.mean(entropy)
    stats = {"loss": float(loss), "policy_loss": float(policy_loss),
             "value_loss": float(value_loss), "entropy": float(np.mean(entropy)),
             "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip))}
    if not grad:
        return float(loss), None, stats

    used = (surr1 <= surr2).astype(float)
    g_logp = -adv * ratio * used / b
    onehot = np.zeros_like(logits)
    onehot[idx, actions] = 1.0
    d_logits = g_logp[:, None] * (onehot - p)
    d_logits += entropy_coef / b * p * (logp_all + entropy[:, None])
    d_values = 2.0 * value_coef * (values - returns) / b

    x = acts[-1]
    wa, wv = weights.action[0], weights.value[0]
    g_action = (x.T @ d_logits, d_logits.sum(axis=0))
    g_value = (x.T @ d_values[:, None], np.array([d_values.sum()]))
    dx = d_logits @ wa.T + d_values[:, None] @ wv.T
    g_hidden = []
    for li in range(len(weights.hidden) - 1, -1, -1):
        out, inp = acts[li + 1], acts[li]
        dpre = dx * (1.0 - out * out)
        g_hidden.append((inp.T @ dpre, dpre.sum(axis=0)))
        dx = dpre @ weights.hidden[li][0].T
    g_hidden.reverse()
    flat = np.concatenate([np.concatenate([gw.ravel(), gb.ravel()])
                           for gw, gb in g_hidden + [g_action, g_value]])
    return float(loss), flat, stats


class NonFiniteLoss(FloatingPointError):
    pass


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m, self.v = np.zeros_like(theta), np.zeros_like(theta)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return theta - self.lr * mh / (np.sqrt(vh) + self.eps)


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, g: np.ndarray) -> np.ndarray:
        return theta - self.lr * g


def make_optimizer(pc: PPOConfig):
    return Adam(pc.learning_rate) if pc.optimizer == "adam" else SGD(pc.learning_rate)


def normalize(adv: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance; a constant vector is only centred."""
    centred = adv - adv.mean()
    std = adv.std()
    return centred / std if std > 1e-8 else centred


def ppo_update(weights: PolicyWeights, batch: Batch, pc: PPOConfig, optimizer=None,
               rng: Optional[np.random.Generator] = None, normalize_adv: bool = True):
    """Several epochs of shuffled minibatch steps; returns ``(weights, stats)``."""
    if len(batch) == 0:
        raise ValueError("ppo_update needs a non-empty batch")
    optimizer = make_optimizer(pc) if optimizer is None else optimizer
    rng = np.random.default_rng(pc.seed) if rng is None else rng
    adv, targets = gae_advantages(batch.rewards, batch.values, batch.dones,
                                  pc.gamma, pc.gae_lambda)
    if normalize_adv:
        adv = normalize(adv)
    theta = weights.flat()
    n = len(batch)
    mb = min(pc.minibatch_size, n)
    history = []
    for _ in range(pc.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            sel = perm[start:start + mb]
            w = weights.with_flat(theta)
            loss, g, stats = ppo_loss(w, batch.obs[sel], batch.actions[sel], batch.logp[sel],
                                      adv[sel], targets[sel], pc.clip_ratio, pc.value_coef,
                                      pc.entropy_coef)
            if not (math.isfinite(loss) and np.all(np.isfinite(g))):
                raise NonFiniteLoss(f"non-finite loss/gradient: {stats}, minibatch of {len(sel)}, "
                                    f"max |obs| {np.abs(batch.obs[sel]).max():.3g}")
            if pc.max_grad_norm is not None:
                gn = float(np.linalg.norm(g))
                if gn > pc.max_grad_norm:
                    g = g * (pc.max_grad_norm / gn)
            theta = optimizer.step(theta, g)
            history.append(stats)
    out = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    return weights.with_flat(theta), out


# training loop --------------------------------------------------------------

CURVE_FIELDS = ["iteration", "steps", "mean_reward", "goodput", "oh", "broadcast_rate"]


@dataclass
class TrainResult:
    weights: PolicyWeights
    curves: List[Dict[str, float]]


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else float("nan")


def train(cfg: ScenarioConfig, rc: RewardConfig, pc: PPOConfig, out_dir=None,
          weights: Optional[PolicyWeights] = None,
          scenario_fn: Optional[Callable[[int], ScenarioConfig]] = None) -> TrainResult:
    """Alternate rollout collection and PPO updates until ``pc.total_steps``.

    Checkpoints (``weights.json``) and the curve table (``curves.tsv``) are
    rewritten in ``out_dir`` after every iteration when it is given.
    """
    weights = init_weights(cfg.k, stream(pc.seed, "init")) if weights is None else weights
    curves: List[Dict[str, float]] = []
    if pc.total_steps <= 0:
        return TrainResult(weights, curves)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    opt = make_optimizer(pc)
    rng = stream(pc.seed, "train")
    steps, episode, it = 0, 0, 0
    while steps < pc.total_steps:
        budget = min(pc.rollout_steps, pc.total_steps - steps)
        batch = collect_rollouts(cfg, weights, rc, budget, first_episode=episode,
                                 seed_fn=scenario_fn)
        episode += len(batch.episode_metrics)
        if len(batch) == 0:
            log.warning("no decisions collected; skipping update")
            break
        weights, stats = ppo_update(weights, batch, pc, opt, rng)
        steps += len(batch)
        it += 1
        mets = batch.episode_metrics
        row = {"iteration": it, "steps": steps, "mean_reward": float(batch.rewards.mean()),
               "goodput": _mean([M.goodput(m) for m in mets]),
               "oh": _mean([M.normalized_overhead(m, n) for m, n in zip(mets, batch.n_nodes)]),
               "broadcast_rate": _mean([M.broadcast_rate(m) for m in mets])}
        curves.append(row)
        log.info("iter %d steps %d reward %.4f goodput %.3f oh %.3f bc %.3f loss %.4f",
                 it, steps, row["mean_reward"], row["goodput"], row["oh"],
                 row["broadcast_rate"], stats["loss"])
        if out_dir is not None:
            save_weights(weights, os.path.join(out_dir, "weights.json"))
            write_curves(curves, os.path.join(out_dir, "curves.tsv"))
    return TrainResult(weights, curves)


def write_curves(curves: List[Dict[str, float]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(CURVE_FIELDS) + "\n")
        for row in curves:
            fh.write("\t".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                               for k in CURVE_FIELDS) + "\n")


def ppo_config_dict(pc: PPOConfig) -> dict:
    return asdict(pc)


def training_from_mapping(data) -> "tuple[RewardConfig, PPOConfig]":
    """Read the ``training`` section of a scenario file (``reward`` and ``ppo`` keys)."""
    from .config import ConfigError
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(["training: expected a mapping"])
    errs = []
    known = {"reward": RewardConfig, "ppo": PPOConfig}
    built = {}
    for key in data:
        if key not in known:
            errs.append(f"training.{key}: unknown field")
    for key, cls in known.items():
        sub = data.get(key) or {}
        if not isinstance(sub, dict):
            errs.append(f"training.{key}: expected a mapping")
            continue
        names = {f.name for f in fields(cls)}
        bad = [k for k in sub if k not in names]
        errs.extend(f"training.{key}.{k}: unknown field" for k in bad)
        types = {f.name: f.type for f in fields(cls)}
        try:
            vals = {}
            for k, v in sub.items():
                if k not in names:
                    continue
                # YAML reads 1e6 as a string
                if types[k] == "int":
                    v = int(float(v))
                elif types[k] == "float":
                    v = float(v)
                vals[k] = v
            built[key] = cls(**vals)
        except (TypeError, ValueError) as exc:
            errs.append(f"training.{key}: {exc}")
    if errs:
        raise ConfigError(errs)
    return built["reward"], built["ppo"]
