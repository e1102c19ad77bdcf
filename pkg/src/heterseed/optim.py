"""Parameter initialization, Adam, and the flat binary checkpoint format."""
from __future__ import annotations

import struct

import numpy as np

from .autodiff import ShapeMismatchError, Tensor

CHECKPOINT_MAGIC = b"HSD1"
CHECKPOINT_VERSION = 1


def xavier_uniform_init(shape, rng_seed, dtype=np.float32):
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), deterministic per seed.

    `rng_seed` may be an int seed or an existing numpy Generator.
    """
    if len(shape) != 2:
        raise ShapeMismatchError(f"xavier init needs a 2-D shape, got {shape}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    fan_in, fan_out = shape
    a = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-a, a, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params, grads, state):
    """One Adam update with bias correction; params are updated in place."""
    if len(params) != len(grads):
        raise ShapeMismatchError("params/grads length mismatch")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ShapeMismatchError(f"grad shape {g.shape} vs param {p.data.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data = p.data - (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.data.dtype, copy=False
        )
    return params, state


class Adam:
    """Thin object wrapper: step() reads .grad off each parameter."""

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = list(named_params.keys())
        self.params = [named_params[n] for n in self.names]
        self.state = AdamState(self.params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data)
            for p in self.params
        ]
        adam_step(self.params, grads, self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def save_params(named_params, path):
    """Flat binary checkpoint: magic, version, count, then per-tensor records.

    Record layout: name length (u32) + utf-8 name, rank (u32), dims (u64 each),
    row-major float32 payload, all little-endian.
    """
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(named_params)))
        for name, p in named_params.items():
            arr = np.asarray(p.data if isinstance(p, Tensor) else p, dtype="<f4")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(arr.tobytes(order="C"))


def load_params(path):
    """Read a checkpoint back as an ordered {name: float32 ndarray} dict."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise IOError(f"bad checkpoint magic {magic!r}")
        version, count = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise IOError(f"unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = tuple(
                struct.unpack("<Q", f.read(8))[0] for _ in range(rank)
            )
            n = int(np.prod(shape)) if shape else 1
            payload = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(shape)
            out[name] = payload.astype(np.float32)
    return out
