"""Dense MLPs with hand-written backprop, RMSProp and weight clipping.

Everything runs in float64 on plain numpy arrays of shape (batch, features).

Checkpoint file format (``save_mlp`` / ``load_mlp``), little-endian::

    magic    4 bytes  b"SGCK"
    version  u32      currently 1
    meta_len u32
    meta     meta_len bytes of UTF-8 JSON: layer shapes and activations
             under "layers", plus any caller metadata (epoch, spec,
             generator rng state) under "extra"
    params   for each layer in order: W (out*in float64, row-major),
             then b (out float64)

Floats are stored as raw IEEE-754 bytes so a load reproduces the saved
parameters bit for bit, and the JSON is written with sorted keys so equal
networks give equal files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CKPT_MAGIC = b"SGCK"
CKPT_VERSION = 1


@dataclass(frozen=True)
class Activation:
    kind: str  # "leaky_relu", "relu", "tanh", "identity"
    slope: float = 0.2

    def __post_init__(self):
        if self.kind not in ("leaky_relu", "relu", "tanh", "identity"):
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError("leaky slope must lie in (0, 1)")

    def __call__(self, z):
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z > 0, z, self.slope * z)
        if self.kind == "tanh":
            return np.tanh(z)
        return z

    def grad(self, z, a):
        """Local derivative given pre-activation ``z`` and output ``a``."""
        if self.kind == "relu":
            return (z > 0).astype(z.dtype)
        if self.kind == "leaky_relu":
            return np.where(z > 0, 1.0, self.slope)
        if self.kind == "tanh":
            return 1.0 - a * a
        return np.ones_like(z)

    def to_json(self):
        return {"kind": self.kind, "slope": self.slope}


LEAKY_RELU = Activation("leaky_relu", 0.2)
RELU = Activation("relu")
TANH = Activation("tanh")
IDENTITY = Activation("identity")


@dataclass
class Linear:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"inconsistent layer shapes W{self.W.shape} b{self.b.shape}")

    @property
    def fan_in(self) -> int:
        return self.W.shape[1]

    @property
    def fan_out(self) -> int:
        return self.W.shape[0]


@dataclass
class MLP:
    layers: list[tuple[Linear, Activation]]

    def __post_init__(self):
        for (a, _), (b, _) in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ValueError(f"layer widths do not chain: {a.fan_out} -> {b.fan_in}")

    @property
    def in_features(self) -> int:
        return self.layers[0][0].fan_in

    @property
    def out_features(self) -> int:
        return self.layers[-1][0].fan_out

    def params(self) -> list[np.ndarray]:
        out = []
        for lin, _ in self.layers:
            out.extend((lin.W, lin.b))
        return out

    def copy(self) -> MLP:
        return MLP([(Linear(l.W.copy(), l.b.copy()), act) for l, act in self.layers])

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Cache:
    net_id: int
    inputs: list  # input to each layer
    pre: list  # pre-activations
    post: list  # activations


def _check_finite(arr, where):
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values at {where}")


def forward(net: MLP, x) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_features:
        raise ValueError(f"input shape {x.shape} does not match in_features {net.in_features}")
    _check_finite(x, "input")
    cache = Cache(id(net), [], [], [])
    h = x
    for i, (lin, act) in enumerate(net.layers):
        cache.inputs.append(h)
        z = h @ lin.W.T + lin.b
        h = act(z)
        cache.pre.append(z)
        cache.post.append(h)
    _check_finite(h, f"output of layer {len(net.layers) - 1}")
    return h, cache


def backward(net: MLP, cache: Cache, dy) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse-mode pass; returns grads aligned with ``net.params()`` and dL/dx."""
    if cache.net_id != id(net) or len(cache.inputs) != len(net.layers):
        raise ValueError("cache does not belong to this network")
    g = np.asarray(dy, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache.post[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        lin, act = net.layers[i]
        g = g * act.grad(cache.pre[i], cache.post[i])
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ lin.W
    return grads, g


def init_mlp(sizes, activations, rng: np.random.Generator) -> MLP:
    """Uniform(+-sqrt(1/fan_in)) weights and zero biases."""
    sizes = list(sizes)
    activations = list(activations)
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per linear layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes, sizes[1:], activations):
        bound = np.sqrt(1.0 / fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append((Linear(W, np.zeros(fan_out)), act))
    return MLP(layers)


def clip_weights(net: MLP, c: float) -> None:
    """Project every parameter into [-c, c] in place."""
    if c <= 0:
        raise ValueError("clip value must be positive")
    for p in net.params():
        np.clip(p, -c, c, out=p)


@dataclass
class RMSProp:
    """v <- a*v + (1-a)*g^2 ;  p <- p - lr * g / (sqrt(v) + eps)."""

    lr: float
    alpha: float = 0.99
    eps: float = 1e-8
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    def step(self, params, grads) -> None:
        if not self.v:
            self.v = [np.zeros_like(p) for p in params]
        if len(grads) != len(params):
            raise ValueError("params/grads length mismatch")
        for p, g, v in zip(params, grads, self.v):
            if p.shape != g.shape:
                raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
            v *= self.alpha
            v += (1.0 - self.alpha) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)


def rmsprop_step(params, grads, state: RMSProp) -> None:
    state.step(params, grads)


@dataclass(frozen=True)
class StepLR:
    base_lr: float
    step_size: int = 50
    gamma: float = 0.5

    def __post_init__(self):
        if self.step_size < 1 or not 0.0 < self.gamma <= 1.0:
            raise ValueError("bad step schedule")

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.gamma ** (epoch // self.step_size)


def mlp_to_bytes(net: MLP, extra: dict | None = None) -> bytes:
    meta = {
        "layers": [
            {"in": lin.fan_in, "out": lin.fan_out, "activation": act.to_json()}
            for lin, act in net.layers
        ],
        "extra": extra or {},
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(blob)), blob]
    for lin, _ in net.layers:
        parts.append(np.ascontiguousarray(lin.W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(lin.b, dtype="<f8").tobytes())
    return b"".join(parts)


def mlp_from_bytes(buf: bytes) -> tuple[MLP, dict]:
    if buf[:4] != CKPT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version, meta_len = struct.unpack_from("<II", buf, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12 + meta_len
    meta = json.loads(buf[12:off].decode())
    layers = []
    for spec in meta["layers"]:
        n_w = spec["out"] * spec["in"]
        W = np.frombuffer(buf, dtype="<f8", count=n_w, offset=off).reshape(spec["out"], spec["in"]).astype(np.float64)
        off += 8 * n_w
        b = np.frombuffer(buf, dtype="<f8", count=spec["out"], offset=off).astype(np.float64)
        off += 8 * spec["out"]
        a = spec["activation"]
        layers.append((Linear(W, b), Activation(a["kind"], a["slope"])))
    if off != len(buf):
        raise ValueError("trailing bytes in checkpoint")
    return MLP(layers), meta["extra"]


def save_mlp(net: MLP, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(mlp_to_bytes(net, extra))
    return path


def load_mlp(path) -> tuple[MLP, dict]:
    return mlp_from_bytes(Path(path).read_bytes())
