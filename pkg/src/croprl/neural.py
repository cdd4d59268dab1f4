"""Minimal fully-connected networks with exact backpropagation.

Float64 throughout.  The only topology is an MLP with relu or tanh hidden
layers and a linear output; gradients are computed analytically and are
validated against central finite differences in the test suite.  Optimizers
are plain SGD and bias-corrected Adam with optional global-norm gradient
clipping.  Parameters are saved as a small binary format (magic bytes,
layer-size header, little-endian float64 in layer order) with a JSON
sidecar for architecture and optimizer metadata.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DimensionMismatch(ValueError):
    """Input or gradient shape does not match the network."""


_ACTIVATIONS = ("relu", "tanh")
_MAGIC = b"MLP1"


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


@dataclass
class MlpNetwork:
    """Weights ``W[i]`` have shape (out, in); biases ``b[i]`` shape (out,)."""

    layer_sizes: tuple[int, ...]
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(
        cls,
        layer_sizes: tuple[int, ...] | list[int],
        activation: str,
        rng: np.random.Generator,
    ) -> "MlpNetwork":
        """He-uniform init for relu layers, Xavier-uniform for tanh and for
        the linear output layer; zero biases."""
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2:
            raise ValueError("need at least input and output layers")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        weights, biases = [], []
        n_layers = len(sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            hidden = i < n_layers - 1
            if hidden and activation == "relu":
                bound = np.sqrt(6.0 / fan_in)
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(sizes, activation, weights, biases)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        """Live parameter arrays, weights and biases interleaved per layer."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            self.layer_sizes,
            self.activation,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    # -- forward / backward ------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cache(x)
        return y

    def forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Forward pass keeping the intermediates needed by backward().

        Accepts a single vector (d,) or a batch (B, d); output matches.
        """
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"input shape {np.shape(x)} incompatible with input dim {self.input_dim}"
            )
        activations = [arr]
        pre: list[np.ndarray] = []
        h = arr
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pre.append(z)
            h = z if i == last else _act(z, self.activation)
            activations.append(h)
        cache = {"activations": activations, "pre": pre, "single": single}
        out = h[0] if single else h
        return out, cache

    def backward(self, cache: dict, output_grad: np.ndarray) -> list[np.ndarray]:
        """Exact parameter gradients for the scalar loss whose gradient with
        respect to the network output is ``output_grad``.

        Returns gradients in the same layout as :meth:`params`.
        """
        g = np.asarray(output_grad, dtype=np.float64)
        if cache["single"]:
            g = g[None, :]
        acts = cache["activations"]
        pre = cache["pre"]
        if g.shape != acts[-1].shape:
            raise DimensionMismatch(
                f"output_grad shape {np.shape(output_grad)} != output shape"
            )
        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        delta = g
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * _act_grad(pre[i - 1], acts[i], self.activation)
        return grads

    # -- flat parameter views (finite-difference tests) ----------------------

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for p in self.params():
            n = p.size
            p[...] = flat[offset : offset + n].reshape(p.shape)
            offset += n
        if offset != flat.size:
            raise DimensionMismatch("flat parameter vector has wrong length")


# -- optimizers ----------------------------------------------------------------


@dataclass
class OptimizerState:
    """SGD or Adam over a flat list of parameter arrays."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ValueError("kind must be 'sgd' or 'adam'")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Scale all gradients by min(1, max_norm / ||g||)."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return [g * scale for g in grads]


def optimizer_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState) -> None:
    """Update ``params`` in place with one SGD or Adam step."""
    if len(params) != len(grads):
        raise DimensionMismatch("params/grads length mismatch")
    if state.clip_norm is not None:
        grads = clip_global_norm(grads, state.clip_norm)
    if state.kind == "sgd":
        for p, g in zip(params, grads):
            p -= state.learning_rate * g
        return
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# -- running observation normalization -----------------------------------------


@dataclass
class RunningNorm:
    """Welford running mean/variance z-scoring for raw observations."""

    dim: int
    count: float = 0.0
    mean: np.ndarray = field(default_factory=lambda: np.empty(0))
    m2: np.ndarray = field(default_factory=lambda: np.empty(0))
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.mean.size == 0:
            self.mean = np.zeros(self.dim)
        if self.m2.size == 0:
            self.m2 = np.zeros(self.dim)

    def update(self, x: np.ndarray) -> None:
        if not self.enabled:
            return
        x = np.asarray(x, dtype=np.float64)
        self.count += 1.0
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not self.enabled or self.count < 2.0:
            return x.copy()
        var = self.m2 / self.count
        return (x - self.mean) / np.sqrt(var + 1e-8)

    def state_dict(self) -> dict:
        return {
            "dim": self.dim,
            "count": self.count,
            "mean": [float(v) for v in self.mean],
            "m2": [float(v) for v in self.m2],
            "enabled": self.enabled,
        }

    @classmethod
    def from_state(cls, state: dict) -> "RunningNorm":
        return cls(
            dim=int(state["dim"]),
            count=float(state["count"]),
            mean=np.array(state["mean"], dtype=np.float64),
            m2=np.array(state["m2"], dtype=np.float64),
            enabled=bool(state.get("enabled", True)),
        )


# -- checkpoints ----------------------------------------------------------------


def save_mlp(net: MlpNetwork, path) -> None:
    """Binary format: magic, uint32 layer count, uint32 sizes, then float64
    little-endian parameters in layer order (W then b per layer)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(net.layer_sizes)))
        fh.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_mlp(path, activation: str = "relu") -> MlpNetwork:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an MLP checkpoint")
        (n,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{n}I", fh.read(4 * n))
        weights, biases = [], []
        for i in range(n - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            w = np.frombuffer(fh.read(8 * fan_out * fan_in), dtype="<f8").reshape(fan_out, fan_in)
            b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
            weights.append(w.astype(np.float64))
            biases.append(b.astype(np.float64))
        trailing = fh.read(1)
        if trailing:
            raise ValueError(f"{path}: trailing bytes in checkpoint")
    return MlpNetwork(tuple(sizes), activation, weights, biases)


def write_checkpoint(directory, nets: dict[str, MlpNetwork], meta: dict) -> None:
    """Write one .mlp file per network plus a meta.json sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    networks = {}
    for name, net in nets.items():
        save_mlp(net, directory / f"{name}.mlp")
        networks[name] = {
            "file": f"{name}.mlp",
            "layer_sizes": list(net.layer_sizes),
            "activation": net.activation,
        }
    payload = dict(meta)
    payload["networks"] = networks
    with open(directory / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_checkpoint(directory) -> tuple[dict[str, MlpNetwork], dict]:
    directory = Path(directory)
    with open(directory / "meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    nets = {}
    for name, entry in meta["networks"].items():
        nets[name] = load_mlp(directory / entry["file"], activation=entry["activation"])
    return nets, meta
