"""Joint policy/value MLP with hand-written backprop, plus an Adam optimizer.

All learnable weights live in one flat float64 vector. A network is
described by :class:`NetworkArch`; the flat layout is

    [W_1, b_1, ..., W_k, b_k, W_pi, b_pi, W_v, b_v]

with each ``W`` stored row-major with shape ``(fan_in, fan_out)``.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericError, UsageError

CHECKPOINT_MAGIC = "coil-mlp/1"
TINY = 1e-30  # Adam moments below this are flushed to zero


class CheckpointError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class NetworkArch:
    input_dim: int
    num_actions: int
    hidden_dims: tuple = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim <= 0 or any(h <= 0 for h in self.hidden_dims):
            raise ConfigError(f"all layer sizes must be positive: {self}")
        if self.num_actions < 2:
            raise ConfigError(f"num_actions must be >= 2, got {self.num_actions}")

    @property
    def num_params(self) -> int:
        return _layout(self)[-1][2]


@functools.lru_cache(maxsize=None)
def _layout(arch: NetworkArch):
    """List of (shape, start, stop) for every weight and bias block."""
    dims = (arch.input_dim,) + arch.hidden_dims
    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    shapes += [(dims[-1], arch.num_actions), (arch.num_actions,), (dims[-1], 1), (1,)]
    blocks, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        blocks.append((shape, offset, offset + size))
        offset += size
    return tuple(blocks)


def unpack(params: np.ndarray, arch: NetworkArch) -> list:
    """Views into ``params`` in layout order (writes go through)."""
    return [params[a:b].reshape(shape) for shape, a, b in _layout(arch)]


def init_params(arch: NetworkArch, seed: int) -> np.ndarray:
    """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights and zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(arch.num_params)
    for block in unpack(params, arch):
        if block.ndim == 2:
            bound = np.sqrt(6.0 / (block.shape[0] + block.shape[1]))
            block[...] = rng.uniform(-bound, bound, size=block.shape)
    return params


@dataclasses.dataclass
class ForwardCache:
    arch: NetworkArch
    weights: list
    activations: list  # input followed by each tanh layer output
    single: bool
    consumed: bool = False


def forward(params: np.ndarray, arch: NetworkArch, obs: np.ndarray):
    """Return ``(logits, value, cache)`` for one observation or a batch.

    A 1-D ``obs`` gives logits of shape ``(num_actions,)`` and a scalar value;
    a 2-D batch gives ``(B, num_actions)`` and ``(B,)``.
    """
    obs = np.asarray(obs, dtype=np.float64)
    single = obs.ndim == 1
    x = obs[None, :] if single else obs
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise UsageError(f"observation shape {obs.shape} does not match input_dim {arch.input_dim}")
    weights = unpack(params, arch)
    acts = [x]
    for i in range(len(arch.hidden_dims)):
        x = np.tanh(x @ weights[2 * i] + weights[2 * i + 1])
        acts.append(x)
    w_pi, b_pi, w_v, b_v = weights[-4:]
    logits = x @ w_pi + b_pi
    value = (x @ w_v)[:, 0] + b_v[0]
    cache = ForwardCache(arch, weights, acts, single)
    if single:
        return logits[0], value[0], cache
    return logits, value, cache


def backward(cache: ForwardCache, d_logits, d_value) -> np.ndarray:
    """Gradient of ``sum(d_logits * logits) + sum(d_value * value)`` w.r.t. params."""
    if cache.consumed:
        raise UsageError("ForwardCache already consumed by a backward pass")
    cache.consumed = True
    arch = cache.arch
    d_logits = np.asarray(d_logits, dtype=np.float64).reshape(-1, arch.num_actions)
    d_value = np.asarray(d_value, dtype=np.float64).reshape(-1)
    grad = np.zeros(arch.num_params)
    g = unpack(grad, arch)
    w = cache.weights
    h = cache.activations[-1]

    g[-4][...] = h.T @ d_logits
    g[-3][...] = d_logits.sum(axis=0)
    g[-2][...] = h.T @ d_value[:, None]
    g[-1][0] = d_value.sum()
    dh = d_logits @ w[-4].T + d_value[:, None] @ w[-2].T

    for i in reversed(range(len(arch.hidden_dims))):
        out = cache.activations[i + 1]
        dz = dh * (1.0 - out * out)
        g[2 * i][...] = cache.activations[i].T @ dz
        g[2 * i + 1][...] = dz.sum(axis=0)
        if i:
            dh = dz @ w[2 * i].T
    return grad


def _check_finite(logits):
    if not np.all(np.isfinite(logits)):
        raise NumericError(f"non-finite logits: {logits}")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    _check_finite(logits)
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def entropy(logits: np.ndarray):
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1)


def sample_action(logits: np.ndarray, rng: np.random.Generator):
    """Draw from the categorical distribution; returns ``(action, log_prob)``.

    Scalar Python arithmetic: for a handful of actions it is several times
    faster than the equivalent array ops.
    """
    z = [float(v) for v in logits]
    if not all(math.isfinite(v) for v in z):
        raise NumericError(f"non-finite logits: {z}")
    top = max(z)
    p = [math.exp(v - top) for v in z]
    total = sum(p)
    u = rng.random() * total
    a, acc = len(p) - 1, 0.0
    for i, pi in enumerate(p):
        acc += pi
        if u < acc:
            a = i
            break
    return a, z[a] - top - math.log(total)


def policy_value(weights: list, obs: np.ndarray):
    """Logits and value for one observation given pre-unpacked ``weights``.

    Skips validation and caching; meant for rollout loops that call
    :func:`unpack` once per parameter vector.
    """
    x = obs
    for i in range(0, len(weights) - 4, 2):
        x = np.tanh(x @ weights[i] + weights[i + 1])
    w_pi, b_pi, w_v, b_v = weights[-4:]
    return x @ w_pi + b_pi, float(x @ w_v[:, 0] + b_v[0])


@dataclasses.dataclass
class OptState:
    """Adam moments and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 7e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scratch: Optional[np.ndarray] = dataclasses.field(default=None, repr=False, compare=False)

    @classmethod
    def zeros(cls, n: int, lr: float = 7e-4, **kw) -> "OptState":
        return cls(np.zeros(n), np.zeros(n), lr=lr, **kw)


def opt_step(params: np.ndarray, grads: np.ndarray, opt: OptState):
    """One bias-corrected Adam step.

    Returns ``(new_params, opt)``. ``params`` and ``grads`` are untouched; the
    moment buffers of ``opt`` are advanced in place (fresh large arrays cost
    page faults on every step, which dominated training time).
    """
    if grads.shape != params.shape or opt.m.shape != params.shape:
        raise UsageError(f"shape mismatch: params {params.shape}, grads {grads.shape}")
    if not np.isfinite(grads).all():
        idx = np.flatnonzero(~np.isfinite(grads))
        raise NumericError(f"{idx.size} non-finite gradient entries (first at index {idx[0]})")
    opt.t += 1
    b1, b2, m, v = opt.beta1, opt.beta2, opt.m, opt.v
    if opt.scratch is None or opt.scratch.shape != m.shape:
        opt.scratch = np.empty_like(m)
    tmp = opt.scratch
    m *= b1
    np.multiply(grads, 1.0 - b1, out=tmp)
    m += tmp
    v *= b2
    np.multiply(grads, grads, out=tmp)
    tmp *= 1.0 - b2
    v += tmp
    # moments decaying toward zero turn subnormal and slow every later op
    np.abs(m, out=tmp)
    m[tmp < TINY] = 0.0
    v[v < TINY] = 0.0
    np.sqrt(v, out=tmp)
    tmp *= 1.0 / np.sqrt(1.0 - b2**opt.t)
    tmp += opt.eps
    new_params = np.divide(m, tmp)
    new_params *= -opt.lr / (1.0 - b1**opt.t)
    new_params += params
    return new_params, opt


def save_params(path, params: np.ndarray, arch: NetworkArch) -> None:
    """Write an ASCII arch line followed by little-endian float64 parameters."""
    hidden = ",".join(str(h) for h in arch.hidden_dims)
    header = (
        f"{CHECKPOINT_MAGIC} input_dim={arch.input_dim} hidden={hidden} "
        f"num_actions={arch.num_actions} count={arch.num_params}\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.asarray(params, dtype="<f8").tobytes())


def load_params(path):
    """Inverse of :func:`save_params`; returns ``(params, arch)``."""
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    try:
        fields = data[:nl].decode("ascii").split()
        if nl < 0 or fields[0] != CHECKPOINT_MAGIC:
            raise ValueError("bad magic")
        kv = dict(f.split("=", 1) for f in fields[1:])
        arch = NetworkArch(
            input_dim=int(kv["input_dim"]),
            num_actions=int(kv["num_actions"]),
            hidden_dims=tuple(int(h) for h in kv["hidden"].split(",")),
        )
        count = int(kv["count"])
    except (ValueError, KeyError, UnicodeDecodeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header ({exc})") from None
    body = data[nl + 1 :]
    if count != arch.num_params or len(body) != 8 * count:
        raise CheckpointError(
            f"{path}: expected {arch.num_params} parameters, found {len(body) // 8}"
        )
    return np.frombuffer(body, dtype="<f8").astype(np.float64), arch


def greedy_action(params: np.ndarray, arch: NetworkArch, obs: np.ndarray) -> int:
    logits, _, _ = forward(params, arch, obs)
    return int(np.argmax(logits))
