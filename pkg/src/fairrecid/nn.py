"""Dense feed-forward networks with explicit backprop and Adam.

Everything here is float64 and deterministic per seed. Networks are plain
ReLU MLPs ending in a single linear logit unit; the sigmoid lives with the
loss, not with the net, so callers can feed the raw logit elsewhere (the
adversary consumes it directly).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointError,
    InvalidDimsError,
    InvalidStepError,
    ShapeMismatchError,
    StaleCacheError,
)

BCE_CLIP = 1e-7
CHECKPOINT_FORMAT = "fairrecid-densenet-v1"


@dataclass
class DenseNet:
    """ReLU MLP with a single linear output unit (logit)."""

    dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "DenseNet":
        return DenseNet(
            dims=list(self.dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class GradientSet:
    """Per-layer parameter gradients, shape-matched to a DenseNet."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]

    def max_abs(self) -> float:
        vals = [np.max(np.abs(g)) if g.size else 0.0 for g in self.weight_grads]
        vals += [np.max(np.abs(g)) if g.size else 0.0 for g in self.bias_grads]
        return float(max(vals))


@dataclass
class ForwardCache:
    """Activations retained by forward() so backward() can replay the pass."""

    inputs: np.ndarray                  # the batch fed in
    pre_activations: list[np.ndarray]   # z_l = a_{l-1} W_l + b_l, every layer
    activations: list[np.ndarray]       # a_l = relu(z_l), hidden layers only


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: DenseNet, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in net.weights],
            v_weights=[np.zeros_like(w) for w in net.weights],
            m_biases=[np.zeros_like(b) for b in net.biases],
            v_biases=[np.zeros_like(b) for b in net.biases],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def init_network(dims: list[int], seed: int) -> DenseNet:
    """Build a net with fan-in-scaled uniform weights and zero biases.

    Weight entries for a layer with fan-in f are drawn from
    U(-sqrt(6/f), +sqrt(6/f)); the draw order is fixed so the same seed
    always yields the same parameters.
    """
    if len(dims) < 2 or any(d <= 0 for d in dims) or dims[-1] != 1:
        raise InvalidDimsError(
            f"dims must have >= 2 positive entries ending in 1, got {dims}"
        )
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(dims=list(dims), weights=weights, biases=biases)


def forward(net: DenseNet, X: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the net on a batch; returns (logits, cache for backward).

    X is (n, dims[0]); logits come back as a flat (n,) vector.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.dims[0]:
        raise ShapeMismatchError(
            f"expected input of shape (n, {net.dims[0]}), got {X.shape}"
        )
    a = X
    pre = []
    acts = []
    last = net.n_layers - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ W + b
        pre.append(z)
        if i < last:
            a = np.maximum(z, 0.0)   # ReLU; derivative at exactly 0 is 0
            acts.append(a)
    logits = pre[-1][:, 0]
    return logits, ForwardCache(inputs=X, pre_activations=pre, activations=acts)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clipped to [eps, 1-eps]."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeMismatchError(
            f"probs {probs.shape} and labels {labels.shape} differ in length"
        )
    p = np.clip(probs, BCE_CLIP, 1.0 - BCE_CLIP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


def backward(net: DenseNet, cache: ForwardCache,
             dloss_dlogit: np.ndarray) -> tuple[GradientSet, np.ndarray]:
    """Reverse-mode gradients for all parameters and for the input batch.

    dloss_dlogit is the upstream derivative per example, shape (n,). The
    returned input gradient is what lets an adversary's loss reach the
    predictor through the logit it consumes.
    """
    n = cache.inputs.shape[0]
    dloss_dlogit = np.asarray(dloss_dlogit, dtype=np.float64)
    if dloss_dlogit.shape != (n,):
        raise StaleCacheError(
            f"upstream gradient shape {dloss_dlogit.shape} does not match batch {n}"
        )
    if len(cache.pre_activations) != net.n_layers:
        raise StaleCacheError("cache layer count does not match the network")
    for z, W in zip(cache.pre_activations, net.weights):
        if z.shape[1] != W.shape[1]:
            raise StaleCacheError("cache widths do not match the network")

    weight_grads: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    bias_grads: list[np.ndarray] = [None] * net.n_layers    # type: ignore[list-item]

    delta = dloss_dlogit[:, None]  # gradient at the output layer's z
    for i in range(net.n_layers - 1, -1, -1):
        a_prev = cache.inputs if i == 0 else cache.activations[i - 1]
        weight_grads[i] = a_prev.T @ delta
        bias_grads[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
        if i > 0:
            delta = delta * (cache.pre_activations[i - 1] > 0.0)
    return GradientSet(weight_grads=weight_grads, bias_grads=bias_grads), delta


def numeric_gradient(loss_fn, net: DenseNet, h: float = 1e-6) -> GradientSet:
    """Central-difference gradient of loss_fn(net) w.r.t. every parameter.

    Testing oracle only: O(2 * n_params) full loss evaluations.
    """
    if h <= 0:
        raise InvalidStepError(f"step must be positive, got {h}")
    weight_grads = []
    bias_grads = []
    for W in net.weights:
        g = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            orig = W[idx]
            W[idx] = orig + h
            up = loss_fn(net)
            W[idx] = orig - h
            down = loss_fn(net)
            W[idx] = orig
            g[idx] = (up - down) / (2.0 * h)
        weight_grads.append(g)
    for b in net.biases:
        g = np.zeros_like(b)
        for j in range(b.size):
            orig = b[j]
            b[j] = orig + h
            up = loss_fn(net)
            b[j] = orig - h
            down = loss_fn(net)
            b[j] = orig
            g[j] = (up - down) / (2.0 * h)
        bias_grads.append(g)
    return GradientSet(weight_grads=weight_grads, bias_grads=bias_grads)


def adam_step(net: DenseNet, grads: GradientSet, state: AdamState,
              lr: float) -> tuple[DenseNet, AdamState]:
    """One bias-corrected Adam update, in place; returns (net, state)."""
    if lr <= 0:
        raise InvalidStepError(f"learning rate must be positive, got {lr}")
    if len(grads.weight_grads) != net.n_layers:
        raise ShapeMismatchError("gradient layer count does not match the network")
    for g, W in zip(grads.weight_grads, net.weights):
        if g.shape != W.shape:
            raise ShapeMismatchError(
                f"weight gradient shape {g.shape} does not match {W.shape}"
            )
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for i in range(net.n_layers):
        for params, grad, m, v in (
            (net.weights[i], grads.weight_grads[i], state.m_weights[i], state.v_weights[i]),
            (net.biases[i], grads.bias_grads[i], state.m_biases[i], state.v_biases[i]),
        ):
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            params -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return net, state


# ------------------------------------------------------------- checkpointing


def save_checkpoint(net: DenseNet, path: str | Path, meta: dict | None = None) -> None:
    """Write the net to a versioned JSON container.

    Floats are serialized via repr (exact round trip), keys are sorted, so
    identical nets produce byte-identical files.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "dims": list(net.dims),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[DenseNet, dict]:
    """Read a checkpoint, rejecting anything shape-inconsistent."""
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {p}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable checkpoint {p}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{p} is not a {CHECKPOINT_FORMAT} file")
    dims = payload["dims"]
    weights = [np.asarray(w, dtype=np.float64) for w in payload["weights"]]
    biases = [np.asarray(b, dtype=np.float64) for b in payload["biases"]]
    if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
        raise CheckpointError(f"{p}: layer count does not match dims {dims}")
    for i, (W, b) in enumerate(zip(weights, biases)):
        if W.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
            raise CheckpointError(
                f"{p}: layer {i} shapes {W.shape}/{b.shape} do not chain with dims {dims}"
            )
    return DenseNet(dims=list(dims), weights=weights, biases=biases), payload.get("meta", {})
