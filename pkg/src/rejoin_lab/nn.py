"""Minimal dense network in numpy: a ReLU trunk feeding an action-logit head
and a scalar value head, with hand-written backprop, masked softmax over
action slots, categorical sampling, and bias-corrected Adam updates.

Everything is float64; the backward pass is validated against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_VERSION = 1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
ACTION_HEAD_INIT_SCALE = 0.01  # near-uniform initial policy


class ShapeError(ValueError):
    """Input or gradient dimensions do not match the network."""


class CheckpointError(RuntimeError):
    """Checkpoint file is malformed or incompatible with the current setup."""


class DenseNet:
    """Fully connected ReLU trunk with two linear heads sharing it.

    The action head has one output per (x, y) action slot; the value head is
    a single scalar used as a learned baseline. Hidden weights use scaled
    normal (He) initialization, biases start at zero, and the action head is
    scaled down so the initial policy is close to uniform.
    """

    def __init__(
        self,
        input_dim: int,
        n_actions: int,
        hidden_dims: tuple[int, ...] = (128, 128),
        seed: int | np.random.Generator = 0,
    ):
        if input_dim < 1 or n_actions < 1 or any(h < 1 for h in hidden_dims):
            raise ShapeError("all layer sizes must be positive")
        rng = np.random.default_rng(seed)
        self.input_dim = int(input_dim)
        self.n_actions = int(n_actions)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        dims = [self.input_dim, *self.hidden_dims]
        self.trunk_w = [
            rng.standard_normal((dims[i], dims[i + 1])) * np.sqrt(2.0 / dims[i])
            for i in range(len(self.hidden_dims))
        ]
        self.trunk_b = [np.zeros(d) for d in self.hidden_dims]
        last = dims[-1]
        self.action_w = (
            rng.standard_normal((last, self.n_actions)) * np.sqrt(2.0 / last) * ACTION_HEAD_INIT_SCALE
        )
        self.action_b = np.zeros(self.n_actions)
        self.value_w = rng.standard_normal((last, 1)) * np.sqrt(2.0 / last)
        self.value_b = np.zeros(1)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.n_actions)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by stable names."""
        params: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.trunk_w, self.trunk_b)):
            params[f"trunk{i}_w"] = w
            params[f"trunk{i}_b"] = b
        params["action_w"] = self.action_w
        params["action_b"] = self.action_b
        params["value_w"] = self.value_w
        params["value_b"] = self.value_b
        return params

    def copy(self) -> "DenseNet":
        clone = DenseNet.__new__(DenseNet)
        clone.input_dim = self.input_dim
        clone.n_actions = self.n_actions
        clone.hidden_dims = self.hidden_dims
        clone.trunk_w = [w.copy() for w in self.trunk_w]
        clone.trunk_b = [b.copy() for b in self.trunk_b]
        clone.action_w = self.action_w.copy()
        clone.action_b = self.action_b.copy()
        clone.value_w = self.value_w.copy()
        clone.value_b = self.value_b.copy()
        return clone


def forward_batch(net: DenseNet, inputs: np.ndarray):
    """Batched forward pass.

    Returns (logits, values, cache); the cache holds the layer activations
    needed by backward_batch.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"expected input of shape (batch, {net.input_dim}), got {x.shape}")
    activations = [x]
    h = x
    for w, b in zip(net.trunk_w, net.trunk_b):
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    logits = h @ net.action_w + net.action_b
    values = h @ net.value_w + net.value_b
    return logits, values[:, 0], activations


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-state forward pass: (action logits, value estimate)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a flat input vector, got shape {x.shape}")
    logits, values, _ = forward_batch(net, x[None, :])
    return logits[0], float(values[0])


def backward_batch(
    net: DenseNet,
    activations: list[np.ndarray],
    d_logits: np.ndarray,
    d_values: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradients at both heads."""
    d_logits = np.asarray(d_logits, dtype=np.float64)
    d_values = np.asarray(d_values, dtype=np.float64)
    h_last = activations[-1]
    if d_logits.shape != (h_last.shape[0], net.n_actions) or d_values.shape != (h_last.shape[0],):
        raise ShapeError(
            f"head gradient shapes {d_logits.shape}/{d_values.shape} do not match "
            f"batch of {h_last.shape[0]} and {net.n_actions} actions"
        )
    grads: dict[str, np.ndarray] = {
        "action_w": h_last.T @ d_logits,
        "action_b": d_logits.sum(axis=0),
        "value_w": h_last.T @ d_values[:, None],
        "value_b": d_values.sum(axis=0, keepdims=True)[:1],
    }
    d_h = d_logits @ net.action_w.T + d_values[:, None] @ net.value_w.T
    for i in range(len(net.trunk_w) - 1, -1, -1):
        d_h = d_h * (activations[i + 1] > 0.0)
        grads[f"trunk{i}_w"] = activations[i].T @ d_h
        grads[f"trunk{i}_b"] = d_h.sum(axis=0)
        if i > 0:
            d_h = d_h @ net.trunk_w[i].T
    return grads


def backward(
    net: DenseNet, x: np.ndarray, d_logits: np.ndarray, d_value: float
) -> dict[str, np.ndarray]:
    """Single-state wrapper around backward_batch."""
    x = np.asarray(x, dtype=np.float64)
    _, _, activations = forward_batch(net, x[None, :])
    return backward_batch(net, activations, np.asarray(d_logits)[None, :], np.array([d_value]))


@dataclass(frozen=True)
class ActionDistribution:
    probabilities: np.ndarray
    mask: np.ndarray


class DistributionError(ValueError):
    """Invalid distribution request (all-masked input, masked index)."""


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> ActionDistribution:
    """Softmax over unmasked slots; masked slots get probability exactly 0.

    Stabilized by subtracting the unmasked maximum, so the result is invariant
    under adding a constant to all logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask)
    if logits.shape != mask.shape or logits.ndim != 1:
        raise ShapeError(f"logits {logits.shape} and mask {mask.shape} must be equal 1-D shapes")
    live = mask > 0
    if not live.any():
        raise DistributionError("all action slots are masked")
    shifted = np.where(live, logits, -np.inf)
    shifted = shifted - shifted[live].max()
    probs = np.exp(shifted)
    probs[~live] = 0.0
    probs /= probs.sum()
    return ActionDistribution(probabilities=probs, mask=np.where(live, 1.0, 0.0))


def masked_softmax_batch(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise masked softmax; every row must have at least one live slot."""
    live = mask > 0
    if not live.any(axis=1).all():
        raise DistributionError("a row has all action slots masked")
    shifted = np.where(live, logits, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs[~live] = 0.0
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def sample(dist: ActionDistribution, rng: np.random.Generator) -> int:
    """Draw a slot index according to the distribution."""
    cumulative = np.cumsum(dist.probabilities)
    draw = rng.random() * cumulative[-1]
    index = int(np.searchsorted(cumulative, draw, side="right"))
    index = min(index, len(cumulative) - 1)
    while index > 0 and dist.mask[index] == 0:  # numerically possible only at cumsum plateaus
        index -= 1
    return index


def log_prob(dist: ActionDistribution, index: int) -> float:
    if not (0 <= index < len(dist.probabilities)) or dist.mask[index] == 0:
        raise DistributionError(f"index {index} is masked or out of range")
    return float(np.log(dist.probabilities[index]))


def entropy(probabilities: np.ndarray) -> float:
    p = probabilities[probabilities > 0]
    return float(-(p * np.log(p)).sum())


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step: int = 0


def init_adam(net: DenseNet) -> AdamState:
    return AdamState(
        first_moment={k: np.zeros_like(v) for k, v in net.parameters().items()},
        second_moment={k: np.zeros_like(v) for k, v in net.parameters().items()},
    )


def adam_step(net: DenseNet, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update applied in place."""
    params = net.parameters()
    if set(grads) != set(params):
        raise ShapeError(f"gradient keys {sorted(grads)} do not match parameters {sorted(params)}")
    state.step += 1
    t = state.step
    for key, param in params.items():
        grad = grads[key]
        if grad.shape != param.shape:
            raise ShapeError(f"gradient for {key} has shape {grad.shape}, expected {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient for parameter {key}")
        m = state.first_moment[key]
        v = state.second_moment[key]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        param -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def save_checkpoint(
    path,
    net: DenseNet,
    opt_state: AdamState,
    n_max: int,
    catalog_fingerprint: str,
) -> None:
    """Dump parameters, optimizer state, and compatibility metadata."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(net.layer_dims),
        "hidden_dims": list(net.hidden_dims),
        "n_max": int(n_max),
        "catalog_fingerprint": catalog_fingerprint,
        "adam_step": opt_state.step,
    }
    arrays = {f"param__{k}": v for k, v in net.parameters().items()}
    arrays.update({f"adam_m__{k}": v for k, v in opt_state.first_moment.items()})
    arrays.update({f"adam_v__{k}": v for k, v in opt_state.second_moment.items()})
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_checkpoint(path, expected_fingerprint: str | None = None):
    """Load a checkpoint; returns (net, opt_state, meta).

    Rejects unknown versions, inconsistent layer dimensions, and, when
    `expected_fingerprint` is given, checkpoints trained on another catalog.
    """
    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in arrays:
        raise CheckpointError(f"checkpoint {path} is missing its metadata block")
    meta = json.loads(arrays.pop("meta").tobytes().decode("utf-8"))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta.get('version')} unsupported (expected {CHECKPOINT_VERSION})"
        )
    if expected_fingerprint is not None and meta["catalog_fingerprint"] != expected_fingerprint:
        raise CheckpointError(
            "checkpoint was trained against a different catalog "
            f"(fingerprint {meta['catalog_fingerprint'][:12]}..., expected {expected_fingerprint[:12]}...)"
        )
    dims = meta["layer_dims"]
    hidden = tuple(meta["hidden_dims"])
    net = DenseNet(input_dim=dims[0], n_actions=dims[-1], hidden_dims=hidden, seed=0)
    opt_state = init_adam(net)
    opt_state.step = int(meta["adam_step"])
    for key, param in net.parameters().items():
        for prefix, target in (("param__", param), ("adam_m__", opt_state.first_moment[key]),
                               ("adam_v__", opt_state.second_moment[key])):
            name = prefix + key
            if name not in arrays:
                raise CheckpointError(f"checkpoint {path} is missing array {name}")
            stored = arrays[name]
            if stored.shape != target.shape:
                raise CheckpointError(
                    f"checkpoint array {name} has shape {stored.shape}, expected {target.shape}"
                )
            target[...] = stored
    return net, opt_state, meta
