"""Fully connected gray-to-chroma regressor trained from scratch.

Forward pass per layer: o = f(W o_prev + b), rectifier on hidden layers,
identity on the output layer. Training minimizes the mean squared error of
the 2-vector chroma output with mini-batch gradient descent plus momentum.
Gradients come from plain reverse-mode backpropagation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class Network:
    """Weight matrices (out x in) and bias vectors for each layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        prev = self.weights[0].shape[1]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"bad layer shapes: weights {w.shape}, biases {b.shape}")
            if w.shape[1] != prev:
                raise ValueError(f"layer input {w.shape[1]} does not chain with {prev}")
            prev = w.shape[0]
        for arr in self.weights + self.biases:
            if not np.isfinite(arr).all():
                raise ValueError("network parameters must be finite")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "Network":
        return Network([w.astype(dtype) for w in self.weights],
                       [b.astype(dtype) for b in self.biases])


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    weight_init_scale: float = 1.0
    clip_norm: float = 1.0  # global gradient norm cap; 0 disables

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def hidden_sizes_for(input_dim: int, hidden_layers: int = 3) -> list[int]:
    """Layer size list with hidden width = half the input width, 2 outputs."""
    return [input_dim] + [input_dim // 2] * hidden_layers + [2]


def init_network(sizes: list[int], seed: int = 0, scale: float = 1.0) -> Network:
    """Zero-bias network with zero-mean weights scaled by sqrt(2 / fan_in)."""
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"need at least two positive layer sizes, got {sizes}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = scale * np.sqrt(2.0 / fan_in)
        weights.append(rng.standard_normal((fan_out, fan_in)) * std)
        biases.append(np.zeros(fan_out))
    return Network(weights, biases)


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on one descriptor (D,) or a batch (N, D)."""
    x = np.asarray(x)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.weights[0].shape[1]:
        raise ValueError(f"input length {h.shape[1]} does not match "
                         f"network input {net.weights[0].shape[1]}")
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h[0] if single else h


def loss(net: Network, x: np.ndarray, targets: np.ndarray) -> float:
    """Mean over the batch of the squared Euclidean output error."""
    x = np.atleast_2d(np.asarray(x))
    targets = np.atleast_2d(np.asarray(targets))
    if x.shape[0] == 0:
        raise ValueError("batch is empty")
    diff = forward(net, x) - targets
    return float(np.mean(np.sum(diff * diff, axis=1)))


def backward(net: Network, x: np.ndarray,
             targets: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of loss() for every weight and bias.

    The rectifier subgradient at exactly zero is taken as zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("batch is empty")
    n = x.shape[0]

    activations = [x]
    pre = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i != last else z
        activations.append(h)

    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    delta = 2.0 * (activations[-1] - targets) / n
    for i in range(last, -1, -1):
        grad_w[i] = delta.T @ activations[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (pre[i - 1] > 0.0)
    return grad_w, grad_b


def train(net: Network, x: np.ndarray, targets: np.ndarray,
          cfg: TrainConfig) -> tuple[Network, list[float]]:
    """Mini-batch SGD with momentum; returns the trained net and epoch losses.

    Gradients are clipped to cfg.clip_norm (global norm) before the update,
    which keeps the early large-error steps from killing rectifier units.
    Samples are reshuffled every epoch with a generator seeded from the
    config, so identical inputs give bit-identical results. Raises if the
    loss stops being finite.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("training set is empty")
    if x.shape[0] != targets.shape[0]:
        raise ValueError("sample and target counts differ")

    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    n = x.shape[0]
    history = []
    # Overflow during a diverging run is reported via the exception below.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            sq_err = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                bx, bt = x[idx], targets[idx]
                diff = forward(net, bx) - bt
                sq_err += float(np.sum(diff * diff))
                gw, gb = backward(net, bx, bt)
                if cfg.clip_norm > 0:
                    norm = np.sqrt(sum(float(np.sum(g * g)) for g in gw + gb))
                    if norm > cfg.clip_norm:
                        scale = cfg.clip_norm / norm
                        gw = [g * scale for g in gw]
                        gb = [g * scale for g in gb]
                for i in range(len(net.weights)):
                    vel_w[i] = cfg.momentum * vel_w[i] - cfg.learning_rate * gw[i]
                    vel_b[i] = cfg.momentum * vel_b[i] - cfg.learning_rate * gb[i]
                    net.weights[i] += vel_w[i]
                    net.biases[i] += vel_b[i]
            epoch_loss = sq_err / n
            if not np.isfinite(epoch_loss):
                raise RuntimeError(f"training diverged at epoch {epoch} "
                                   f"(loss={epoch_loss}); try a smaller learning rate")
            history.append(epoch_loss)
    return net, history
