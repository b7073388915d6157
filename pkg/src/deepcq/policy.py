"""Observation features, the shared MLP policy, and its weight file.

Observation layout for K neighbor slots (length ``4K + 2``)::

    [c_1..c_K, h_1..h_K, dc_1..dc_K, dh_1..dh_K, prev_action, arrived_via_broadcast]

``h`` values are divided by ``h_max`` so every feature sits roughly in [-1, 1].
Slots are ordered by ascending ``h * (1 - c)``; missing slots are padded with
the default entry ``(h_max, 0)``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

HIDDEN_SIZES = (16, 8, 8, 4)
UNICAST, BROADCAST = 0, 1
FORMAT = "deepcq-weights/1"


def observation_size(k: int) -> int:
    return 4 * k + 2


def candidates(table, path) -> set:
    """Known neighbors that are not already on the packet's path."""
    return table.neighbors.difference(path)


def sort_k_best(table, destination: int, neighbors: Iterable[int], k: int
                ) -> List[Tuple[Optional[int], float, float]]:
    """Best ``k`` neighbors as ``(id, h, c)``, padded with ``(None, h_max, 0)``."""
    ranked = []
    for j in neighbors:
        e = table.get(j, destination)
        ranked.append((e.h * (1.0 - e.c), j, e.h, e.c))
    ranked.sort()
    out = [(j, h, c) for _, j, h, c in ranked[:k]]
    out.extend([(None, table.h_max, 0.0)] * (k - len(out)))
    return out


def build_observation(node, destination: int, prev_obs_cache: Dict[int, np.ndarray],
                      k: int) -> np.ndarray:
    """Feature vector for ``node``'s head-of-queue packet bound to ``destination``.

    Neighbors on the head packet's path are excluded from the candidate set.
    ``node`` needs ``table``, ``prev_action`` and ``queue``. The cache maps a
    destination to the last sorted ``[c, h/h_max]`` block seen for it and is
    updated in place.
    """
    table = node.table
    head = node.queue[0]
    best = sort_k_best(table, destination, candidates(table, head.path), k)
    block = np.empty(2 * k)
    for i, (_, h, c) in enumerate(best):
        block[i] = c
        block[k + i] = h / table.h_max
    prev = prev_obs_cache.get(destination)
    delta = block - prev if prev is not None else np.zeros(2 * k)
    prev_obs_cache[destination] = block
    obs = np.empty(4 * k + 2)
    obs[:2 * k] = block
    obs[2 * k:4 * k] = delta
    obs[4 * k] = float(node.prev_action)
    obs[4 * k + 1] = 1.0 if head.arrived_via_broadcast else 0.0
    return obs


@dataclass
class PolicyWeights:
    """Dense trunk (tanh) with a 2-logit action head and a scalar value head.

    Each layer is ``(W, b)`` with ``W`` of shape ``(fan_in, fan_out)``.
    """

    hidden: List[Tuple[np.ndarray, np.ndarray]]
    action: Tuple[np.ndarray, np.ndarray]
    value: Tuple[np.ndarray, np.ndarray]

    @property
    def input_size(self) -> int:
        return self.hidden[0][0].shape[0] if self.hidden else self.action[0].shape[0]

    def layers(self) -> List[Tuple[str, Tuple[np.ndarray, np.ndarray]]]:
        named = [(f"hidden{i}", wb) for i, wb in enumerate(self.hidden)]
        return named + [("action", self.action), ("value", self.value)]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()])
                               for _, (w, b) in self.layers()])

    def with_flat(self, theta: np.ndarray) -> "PolicyWeights":
        theta = np.asarray(theta, dtype=float)
        parts, i = [], 0
        for _, (w, b) in self.layers():
            nw = theta[i:i + w.size].reshape(w.shape); i += w.size
            nb = theta[i:i + b.size].reshape(b.shape); i += b.size
            parts.append((nw.copy(), nb.copy()))
        if i != theta.size:
            raise ValueError(f"parameter vector has {theta.size} values, expected {i}")
        return PolicyWeights(parts[:-2], parts[-2], parts[-1])

    def copy(self) -> "PolicyWeights":
        return self.with_flat(self.flat())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolicyWeights):
            return NotImplemented
        a, b = self.layers(), other.layers()
        return len(a) == len(b) and all(
            wa.shape == wb.shape and np.array_equal(wa, wb) and np.array_equal(ba, bb)
            for (_, (wa, ba)), (_, (wb, bb)) in zip(a, b))


def init_weights(k: int = 4, rng: Optional[np.random.Generator] = None,
                 hidden_sizes: Sequence[int] = HIDDEN_SIZES) -> PolicyWeights:
    rng = np.random.default_rng(0) if rng is None else rng
    sizes = [observation_size(k), *hidden_sizes]
    hidden = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        hidden.append((rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out)),
                       np.zeros(fan_out)))
    last = sizes[-1]
    # near-uniform initial action distribution
    action = (rng.normal(0.0, 0.01 / math.sqrt(last), (last, 2)), np.zeros(2))
    value = (rng.normal(0.0, 1.0 / math.sqrt(last), (last, 1)), np.zeros(1))
    return PolicyWeights(hidden, action, value)


def zero_weights(k: int = 4, hidden_sizes: Sequence[int] = HIDDEN_SIZES) -> PolicyWeights:
    w = init_weights(k, hidden_sizes=hidden_sizes)
    return w.with_flat(np.zeros_like(w.flat()))


@dataclass(frozen=True)
class ActionDistribution:
    p_broadcast: float
    p_unicast: float
    state_value: float


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward_batch(weights: PolicyWeights, obs: np.ndarray, keep: bool = False):
    """Batched pass: returns ``(logits (B, 2), values (B,), activations)``.

    ``activations`` is the list of layer outputs (input first) when ``keep`` is
    set, for use by backpropagation.
    """
    x = np.atleast_2d(np.asarray(obs, dtype=float))
    if x.shape[1] != weights.input_size:
        raise ValueError(f"observation length {x.shape[1]} does not match policy input "
                         f"size {weights.input_size}")
    acts = [x] if keep else None
    for w, b in weights.hidden:
        x = np.tanh(x @ w + b)
        if keep:
            acts.append(x)
    logits = x @ weights.action[0] + weights.action[1]
    values = (x @ weights.value[0] + weights.value[1])[:, 0]
    return logits, values, acts


def forward(weights: PolicyWeights, obs: np.ndarray) -> ActionDistribution:
    logits, values, _ = forward_batch(weights, obs)
    p = np.exp(log_softmax(logits[0]))
    return ActionDistribution(float(p[BROADCAST]), float(p[UNICAST]), float(values[0]))


def broadcast_probabilities(weights: PolicyWeights, obs: np.ndarray):
    """``(p_broadcast (B,), log_probs (B, 2), values (B,))`` for a batch."""
    logits, values, _ = forward_batch(weights, obs)
    logp = log_softmax(logits)
    return np.exp(logp[:, BROADCAST]), logp, values


def sample_action(dist: ActionDistribution, rng: np.random.Generator) -> Tuple[int, float]:
    """Bernoulli draw; returns ``(action, log_prob)``."""
    action = BROADCAST if rng.random() < dist.p_broadcast else UNICAST
    p = dist.p_broadcast if action == BROADCAST else dist.p_unicast
    return action, math.log(p) if p > 0 else -math.inf


# weight file -------------------------------------------------------------

class WeightsError(Exception):
    pass


class WeightsFileMissing(WeightsError, FileNotFoundError):
    pass


class WeightsShapeError(WeightsError):
    pass


class WeightsValueError(WeightsError):
    pass


def weights_to_text(weights: PolicyWeights) -> str:
    layers = []
    for name, (w, b) in weights.layers():
        layers.append({"name": name, "shape": list(w.shape),
                       "weights": [float(v) for v in w.ravel()],
                       "bias": [float(v) for v in b.ravel()]})
    doc = {"format": FORMAT, "activation": "tanh",
           "dims": [weights.input_size] + [w.shape[1] for w, _ in weights.hidden],
           "layers": layers}
    return json.dumps(doc, indent=1, allow_nan=False)


def save_weights(weights: PolicyWeights, path) -> None:
    if not all(np.isfinite(weights.flat())):
        raise WeightsValueError("refusing to save non-finite parameters")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(weights_to_text(weights))
    os.replace(tmp, path)


def _reject_constant(name):
    raise WeightsValueError(f"non-finite value {name} in weight file")


def weights_from_text(text: str) -> PolicyWeights:
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise WeightsError(f"malformed weight file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise WeightsError(f"not a {FORMAT} document")
    parsed = []
    prev_out = None
    layers = doc.get("layers") or []
    if len(layers) < 3:
        raise WeightsShapeError("need at least one hidden layer plus action and value heads")
    for idx, layer in enumerate(layers):
        name = layer.get("name", f"layer{idx}")
        try:
            fan_in, fan_out = (int(v) for v in layer["shape"])
            w = np.array(layer["weights"], dtype=float)
            b = np.array(layer["bias"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightsShapeError(f"layer {name}: malformed ({exc})") from None
        if w.ndim != 1 or w.size != fan_in * fan_out:
            raise WeightsShapeError(f"layer {name}: {w.size} weights for shape "
                                    f"{fan_in}x{fan_out}")
        if b.ndim != 1 or b.size != fan_out:
            raise WeightsShapeError(f"layer {name}: bias length {b.size}, expected {fan_out}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise WeightsValueError(f"layer {name}: non-finite parameter")
        head = idx >= len(layers) - 2
        # both heads read the last hidden layer
        if prev_out is not None and fan_in != prev_out:
            raise WeightsShapeError(f"layer {name}: input size {fan_in} does not match "
                                    f"previous output {prev_out}")
        parsed.append((w.reshape(fan_in, fan_out), b))
        if not head:
            prev_out = fan_out
    if parsed[-2][0].shape[1] != 2:
        raise WeightsShapeError(f"layer {layers[-2].get('name', 'action')}: action head "
                                f"must have 2 outputs")
    if parsed[-1][0].shape[1] != 1:
        raise WeightsShapeError(f"layer {layers[-1].get('name', 'value')}: value head "
                                f"must have 1 output")
    if (parsed[0][0].shape[0] - 2) % 4:
        raise WeightsShapeError(f"layer {layers[0].get('name', 'hidden0')}: input size "
                                f"{parsed[0][0].shape[0]} is not 4K+2")
    return PolicyWeights(parsed[:-2], parsed[-2], parsed[-1])


def load_weights(path) -> PolicyWeights:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise WeightsFileMissing(f"weight file not found: {path}") from None
    return weights_from_text(text)


def weights_k(weights: PolicyWeights) -> int:
    return (weights.input_size - 2) // 4
