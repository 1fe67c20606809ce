"""Small feed-forward backbone with exact backward pass and spectral norms."""

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")
# Lipschitz constant of each activation
ACTIVATION_LIPSCHITZ = {"relu": 1.0, "tanh": 1.0, "identity": 1.0}


class StaleTapeError(RuntimeError):
    """Backward called with a tape recorded before the last parameter update."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("weight must be (out, in) and bias (out,)")

    @property
    def lipschitz(self):
        return ACTIVATION_LIPSCHITZ[self.activation]


@dataclass
class Tape:
    inputs: list
    pre: list
    version: int


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(kind, z, a):
    if kind == "relu":
        # subgradient 0 at z == 0
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


class Mlp:
    """Stack of affine layers ``a_l = sigma_l(W_l a_{l-1} + b_l)``."""

    def __init__(self, layers):
        if not layers:
            raise ValueError("need at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weight.shape[0] != nxt.weight.shape[1]:
                raise ValueError("layer dimensions do not chain")
        self.layers = list(layers)
        self.version = 0

    @classmethod
    def initialize(cls, sizes, activation, rng):
        """Glorot-uniform weights, zero biases; the last layer is linear."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            act = "identity" if i == len(sizes) - 2 else activation
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def feature_dim(self):
        return self.layers[-1].weight.shape[0]

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def mark_updated(self):
        self.version += 1

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = np.atleast_2d(x)
        if a.shape[1] != self.input_dim:
            raise ValueError(f"expected input dimension {self.input_dim}, got {a.shape[1]}")
        inputs, pre = [], []
        for layer in self.layers:
            inputs.append(a)
            z = a @ layer.weight.T + layer.bias
            pre.append(z)
            a = _activate(layer.activation, z)
        tape = Tape(inputs, pre, self.version)
        return (a[0] if single else a), tape

    def backward(self, tape, grad_feature):
        """Return ``(grads, grad_x)`` with ``grads`` aligned to :meth:`parameters`."""
        if tape.version != self.version:
            raise StaleTapeError("tape predates the latest parameter update")
        g = np.atleast_2d(np.asarray(grad_feature, dtype=np.float64))
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            z = tape.pre[i]
            a = _activate(layer.activation, z) if layer.activation == "tanh" else None
            gz = g * _activate_grad(layer.activation, z, a)
            grads[2 * i] = gz.T @ tape.inputs[i]
            grads[2 * i + 1] = gz.sum(axis=0)
            g = gz @ layer.weight
        grad_x = g[0] if np.ndim(grad_feature) == 1 else g
        return grads, grad_x

    def spectral_norms(self):
        return np.array([spectral_norm(layer.weight) for layer in self.layers])

    def activation_lipschitz(self):
        return np.array([layer.lipschitz for layer in self.layers])


def spectral_norm(w, max_iter=200, tol=1e-12):
    """Largest singular value of ``w`` by power iteration on W^T W."""
    w = np.asarray(w, dtype=np.float64)
    if not np.any(w):
        return 0.0
    v = np.random.default_rng(0).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        u = w.T @ (w @ v)
        lam = float(np.linalg.norm(u))
        if lam == 0.0:
            return 0.0
        v = u / lam
        if abs(lam - prev) <= tol * lam:
            break
        prev = lam
    return float(np.sqrt(lam))


def spectral_norms(net):
    return net.spectral_norms()
