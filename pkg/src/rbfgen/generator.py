"""Feed-forward generator mapping Gaussian latents to null-space coefficients."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Activation(str, enum.Enum):
    TANH = "tanh"
    RELU = "relu"


def _act(kind: Activation, x):
    return np.tanh(x) if kind is Activation.TANH else np.maximum(x, 0.0)


def _act_grad(kind: Activation, out):
    # derivative expressed through the activation output; relu uses the 0 branch at the kink
    return 1.0 - out**2 if kind is Activation.TANH else (out > 0).astype(float)


@dataclass
class GeneratorNet:
    """Layers are ``(W, b)`` with ``W`` of shape (fan_in, fan_out); rows are samples."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation = Activation.TANH
    alpha_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, nonempty weight and bias lists")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"layer shapes do not chain: {a.shape} -> {b.shape}")
        for W, b in zip(self.weights, self.biases):
            if b.shape != (W.shape[1],):
                raise ValueError(f"bias shape {b.shape} does not match weight {W.shape}")
        if self.alpha_scale < 0:
            raise ValueError("alpha_scale must be nonnegative")

    @property
    def latent_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def shapes(self) -> list[int]:
        return [self.latent_dim] + [W.shape[1] for W in self.weights]

    def params(self) -> list[np.ndarray]:
        """Parameters in the canonical order W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "GeneratorNet":
        return GeneratorNet(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.alpha_scale,
            dict(self.meta),
        )

    def __call__(self, z):
        return forward(self, z)

    def to_dict(self) -> dict:
        return {
            "activation": self.activation.value,
            "alpha_scale": self.alpha_scale,
            "layers": [
                {"shape": list(W.shape), "weight": W.ravel().tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorNet":
        weights = [np.asarray(l["weight"], dtype=float).reshape(l["shape"]) for l in d["layers"]]
        biases = [np.asarray(l["bias"], dtype=float) for l in d["layers"]]
        return cls(weights, biases, d["activation"], float(d["alpha_scale"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GeneratorNet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_generator(
    latent_dim: int,
    out_dim: int,
    hidden: tuple[int, ...] | list[int] = (64, 64),
    activation=Activation.TANH,
    alpha_scale: float = 1.0,
    seed: int = 0,
    zero_final: bool = True,
) -> GeneratorNet:
    """Glorot-uniform hidden layers; the output layer is zeroed unless ``zero_final=False``.

    A zeroed output layer makes G(z) = 0, so training starts from the
    minimum-norm interpolant.
    """
    if out_dim < 1:
        raise ValueError("generator needs out_dim >= 1 (K must exceed N)")
    if latent_dim < 1:
        raise ValueError("generator needs latent_dim >= 1")
    rng = np.random.default_rng(seed)
    sizes = [latent_dim, *hidden, out_dim]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        if zero_final and i == len(sizes) - 2:
            W = np.zeros_like(W)
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return GeneratorNet(weights, biases, activation, alpha_scale)


def _forward_cache(net: GeneratorNet, Z: np.ndarray):
    acts = [Z]
    h = Z
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W + b
        if i < last:
            h = _act(net.activation, h)
        acts.append(h)
    return acts


def _as_batch(net: GeneratorNet, z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    if Z.ndim != 2 or Z.shape[1] != net.latent_dim:
        raise ValueError(f"latent must have length {net.latent_dim}, got shape {z.shape}")
    return Z, single


def forward(net: GeneratorNet, z) -> np.ndarray:
    """``alpha = alpha_scale * G(z)`` for one latent vector or a batch (rows)."""
    Z, single = _as_batch(net, z)
    out = net.alpha_scale * _forward_cache(net, Z)[-1]
    return out[0] if single else out


def backward(net: GeneratorNet, z, upstream) -> list[np.ndarray]:
    """Gradient of ``sum_m upstream_m . forward(net, z_m)`` w.r.t. every parameter.

    Returns arrays in the order of :meth:`GeneratorNet.params`.
    """
    Z, single = _as_batch(net, z)
    U = np.asarray(upstream, dtype=float)
    U = U[None, :] if single else U
    if U.shape != (Z.shape[0], net.out_dim):
        raise ValueError(f"upstream gradient must have shape {(Z.shape[0], net.out_dim)}")
    acts = _forward_cache(net, Z)
    delta = net.alpha_scale * U
    grads: list[np.ndarray] = []
    for i in range(len(net.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(acts[i].T @ delta)
        if i > 0:
            delta = (delta @ net.weights[i].T) * _act_grad(net.activation, acts[i])
    grads.reverse()
    return grads
