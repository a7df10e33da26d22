"""Replay buffers of (obs, action, return) and the clipped-advantage imitation loss.

The same loss drives self-imitation (batches from the agent's own buffer)
and co-imitation (batches from the peer's buffer); only the data source
differs.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import nn
from .errors import ConfigError, UsageError
from .rl_core import EpisodeBuffer, compute_returns

REPLAY_MAGIC = "coil-replay/1"
PRIORITY_FLOOR = 1e-6


class ReplayBatch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    returns: np.ndarray


def _record_dtype(obs_dim):
    return np.dtype([("obs", "u1", (obs_dim,)), ("action", "<i8"), ("ret", "<f8")])


class ReplayBuffer:
    """Bounded FIFO store; once full, each insert evicts the oldest entry.

    Observations are stored as uint8, so they must be 0/1 (or small
    non-negative integer) feature vectors.
    """

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ConfigError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self._obs = np.zeros((self.capacity, self.obs_dim), dtype=np.uint8)
        self._actions = np.zeros(self.capacity, dtype=np.int64)
        self._rets = np.zeros(self.capacity, dtype=np.float64)
        self._next = 0
        self.size = 0
        self.inserted = 0

    def __len__(self):
        return self.size

    def add(self, obs, actions, rets) -> None:
        obs = np.asarray(obs)
        packed = obs.astype(np.uint8)
        if not np.array_equal(packed, obs):
            raise UsageError("replay observations must be exactly representable as uint8")
        actions = np.asarray(actions, dtype=np.int64)
        rets = np.asarray(rets, dtype=np.float64)
        if not np.all(np.isfinite(rets)):
            raise UsageError("replay returns must be finite")
        n = len(actions)
        if n > self.capacity:  # only the newest `capacity` survive
            packed, actions, rets = packed[-self.capacity :], actions[-self.capacity :], rets[-self.capacity :]
            self.inserted += n - self.capacity
            n = self.capacity
        idx = (self._next + np.arange(n)) % self.capacity
        self._obs[idx] = packed
        self._actions[idx] = actions
        self._rets[idx] = rets
        self._next = (self._next + n) % self.capacity
        self.size = min(self.size + n, self.capacity)
        self.inserted += n

    def insert_episode(self, episode: EpisodeBuffer, gamma: float) -> None:
        """Append every step of a finished episode with its Monte-Carlo return."""
        self.add(*episode_entries(episode, gamma))

    def _order(self):
        start = (self._next - self.size) % self.capacity
        return (start + np.arange(self.size)) % self.capacity

    def entries(self) -> ReplayBatch:
        """All stored entries, oldest first."""
        idx = self._order()
        return ReplayBatch(self._obs[idx].astype(np.float64), self._actions[idx], self._rets[idx])

    def _gather(self, idx) -> ReplayBatch:
        return ReplayBatch(self._obs[idx].astype(np.float64), self._actions[idx], self._rets[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Optional[ReplayBatch]:
        """Uniform sample with replacement, or ``None`` when the buffer is empty."""
        if self.size == 0:
            return None
        return self._gather(rng.integers(0, self.size, size=batch_size))

    def sample_prioritized(self, batch_size, rng, values) -> Optional[ReplayBatch]:
        """Sample proportionally to (R - V)_+ + PRIORITY_FLOOR.

        ``values`` are the current value estimates of the stored entries in
        storage-slot order (``values[i]`` belongs to slot ``i`` for ``i < size``).
        """
        if self.size == 0:
            return None
        prio = np.maximum(self._rets[: self.size] - values, 0.0) + PRIORITY_FLOOR
        cdf = np.cumsum(prio)
        idx = np.searchsorted(cdf, rng.random(batch_size) * cdf[-1], side="right")
        return self._gather(np.minimum(idx, self.size - 1))

    def dump(self, path) -> None:
        """Header line with the entry count, then fixed-width records oldest first."""
        idx = self._order()
        rec = np.zeros(self.size, dtype=_record_dtype(self.obs_dim))
        rec["obs"] = self._obs[idx]
        rec["action"] = self._actions[idx]
        rec["ret"] = self._rets[idx]
        header = (
            f"{REPLAY_MAGIC} count={self.size} obs_dim={self.obs_dim} "
            f"capacity={self.capacity} inserted={self.inserted}\n"
        )
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(rec.tobytes())

    @classmethod
    def restore(cls, path) -> "ReplayBuffer":
        data = Path(path).read_bytes()
        nl = data.find(b"\n")
        fields = data[:nl].decode("ascii", errors="replace").split()
        if nl < 0 or not fields or fields[0] != REPLAY_MAGIC:
            raise UsageError(f"{path}: not a replay buffer dump")
        kv = dict(f.split("=", 1) for f in fields[1:])
        count, obs_dim = int(kv["count"]), int(kv["obs_dim"])
        dtype = _record_dtype(obs_dim)
        body = data[nl + 1 :]
        if len(body) != count * dtype.itemsize:
            raise UsageError(f"{path}: truncated replay dump")
        rec = np.frombuffer(body, dtype=dtype)
        buf = cls(int(kv["capacity"]), obs_dim)
        buf.add(rec["obs"], rec["action"], rec["ret"])
        buf.inserted = int(kv["inserted"])
        return buf


def episode_entries(episode: EpisodeBuffer, gamma: float):
    """``(obs, actions, returns)`` arrays for a finished episode."""
    if not episode.done:
        raise UsageError("only completed episodes can enter the replay buffer")
    ts = episode.transitions
    rets = compute_returns(episode.rewards(), [t.done for t in ts], gamma, 0.0)
    return np.stack([t.obs for t in ts]), np.array([t.action for t in ts], dtype=np.int64), rets


def utility(ret, value_est):
    """Potential utility of a stored (state, action): return minus own value estimate."""
    return np.subtract(ret, value_est)


def imitation_loss(batch: ReplayBatch, params, arch: nn.NetworkArch, beta_co: float = 0.01):
    """Clipped imitation loss and its gradient.

    Per sample ``A+ = max(R - V(s), 0)``; the loss is
    ``mean[-log pi(a|s) * A+] + beta_co * mean[A+^2 / 2]``. ``A+`` is held
    constant in the policy term, while the value term differentiates through
    ``V``. Samples with ``R <= V(s)`` contribute nothing.

    Returns ``(loss, grad, stats)``; ``stats["valid_ratio"]`` is the fraction
    of samples with positive utility.
    """
    n = len(batch.actions)
    if n == 0:
        raise UsageError("imitation batch is empty")
    logits, values, cache = nn.forward(params, arch, batch.obs)
    logp = nn.log_softmax(logits)
    adv = utility(batch.returns, values)
    clipped = np.maximum(adv, 0.0)
    logp_a = logp[np.arange(n), batch.actions]
    policy_loss = float(np.mean(-logp_a * clipped))
    value_loss = float(np.mean(0.5 * clipped * clipped))
    loss = policy_loss + beta_co * value_loss

    onehot = np.zeros_like(logp)
    onehot[np.arange(n), batch.actions] = 1.0
    d_logits = clipped[:, None] * (np.exp(logp) - onehot) / n
    d_value = -beta_co * clipped / n
    grad = nn.backward(cache, d_logits, d_value)
    stats = {
        "valid_ratio": float(np.mean(adv > 0.0)),
        "policy_loss": policy_loss,
        "value_loss": value_loss,
    }
    return loss, grad, stats


def sample_minibatch(buffer: ReplayBuffer, batch_size: int, rng, params=None, arch=None,
                     mode: str = "uniform") -> Optional[ReplayBatch]:
    """Draw an imitation minibatch; prioritized mode scores entries with the learner's V."""
    if mode == "uniform":
        return buffer.sample(batch_size, rng)
    if mode != "prioritized":
        raise ConfigError(f"unknown sampling mode {mode!r}")
    if buffer.size == 0:
        return None
    stored = buffer._obs[: buffer.size].astype(np.float64)
    _, values, _ = nn.forward(params, arch, stored)
    return buffer.sample_prioritized(batch_size, rng, values)
