"""Rollout collection, returns/advantages, and the A2C and PPO base losses."""

from __future__ import annotations

import dataclasses
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import nn
from .errors import ConfigError, UsageError


@dataclasses.dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    log_prob: float
    value_est: float
    done: bool


class EpisodeBuffer:
    """Transitions of one episode, in order. Only the last one may be terminal."""

    def __init__(self):
        self.transitions: list[Transition] = []
        self.success = False

    def __len__(self):
        return len(self.transitions)

    def append(self, t: Transition) -> None:
        if self.done:
            raise UsageError("cannot append to a finished episode")
        self.transitions.append(t)

    @property
    def done(self) -> bool:
        return bool(self.transitions) and self.transitions[-1].done

    @property
    def total_reward(self) -> float:
        return float(sum(t.reward for t in self.transitions))

    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions], dtype=np.float64)


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    returns: np.ndarray
    advantages: np.ndarray
    log_probs: np.ndarray

    def take(self, idx) -> "Batch":
        return Batch(*(field[idx] for field in self))


@dataclasses.dataclass
class Rollout:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap: float
    returns: Optional[np.ndarray] = None
    advantages: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.actions)

    def batch(self, normalize: bool = True) -> Batch:
        if self.advantages is None:
            raise UsageError("compute_advantages() must run before batch()")
        adv = normalize_advantages(self.advantages) if normalize else self.advantages
        return Batch(self.obs, self.actions, self.returns, adv, self.log_probs)


class Collector:
    """Steps one environment for one agent; episodes carry over between calls.

    ``on_visit`` is called with the agent position before every step.
    """

    def __init__(self, env, arch: nn.NetworkArch, on_visit: Optional[Callable] = None):
        self.env = env
        self.arch = arch
        self.on_visit = on_visit
        self.obs = env.reset()
        self.episode = EpisodeBuffer()
        self.env_steps = 0

    def collect(self, params: np.ndarray, rng: np.random.Generator, horizon: int):
        """Run ``horizon`` steps; returns ``(Rollout, completed_episodes)``."""
        if horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {horizon}")
        env, arch = self.env, self.arch
        obs_l, act_l, rew_l, logp_l, val_l, done_l = [], [], [], [], [], []
        completed = []
        weights = nn.unpack(np.asarray(params, dtype=np.float64), arch)
        for _ in range(horizon):
            if self.on_visit is not None:
                self.on_visit(env.agent_pos)
            logits, value = nn.policy_value(weights, self.obs)
            action, logp = nn.sample_action(logits, rng)
            res = env.step(action)
            self.episode.append(Transition(self.obs, action, res.reward, logp, value, res.done))
            obs_l.append(self.obs)
            act_l.append(action)
            rew_l.append(res.reward)
            logp_l.append(logp)
            val_l.append(value)
            done_l.append(res.done)
            if res.done:
                self.episode.success = bool(res.info.get("success", False))
                completed.append(self.episode)
                self.episode = EpisodeBuffer()
                self.obs = env.reset()
            else:
                self.obs = res.observation
        self.env_steps += horizon
        _, bootstrap = nn.policy_value(weights, self.obs)
        rollout = Rollout(
            obs=np.array(obs_l),
            actions=np.array(act_l, dtype=np.int64),
            rewards=np.array(rew_l, dtype=np.float64),
            log_probs=np.array(logp_l),
            values=np.array(val_l),
            dones=np.array(done_l, dtype=bool),
            bootstrap=float(bootstrap),
        )
        return rollout, completed


def _check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise ConfigError(f"gamma must be in [0, 1), got {gamma}")


def compute_returns(rewards, dones, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """Discounted returns R_t = r_t + gamma * R_{t+1} * (1 - done_t)."""
    _check_gamma(gamma)
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape != dones.shape:
        raise UsageError(f"length mismatch: {rewards.shape} vs {dones.shape}")
    out = np.empty_like(rewards)
    running = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running * (0.0 if dones[t] else 1.0)
        out[t] = running
    return out


def compute_gae(rewards, values, dones, gamma: float, lam: float, bootstrap: float = 0.0) -> np.ndarray:
    """Generalized advantage estimates (unnormalized)."""
    _check_gamma(gamma)
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    adv = np.empty_like(rewards)
    last = 0.0
    next_value = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
        next_value = values[t]
    return adv


def compute_advantages(rollout: Rollout, gamma: float, lam: float) -> np.ndarray:
    """Fill ``rollout.advantages`` (GAE) and ``rollout.returns`` (advantage + value)."""
    adv = compute_gae(rollout.rewards, rollout.values, rollout.dones, gamma, lam, rollout.bootstrap)
    rollout.advantages = adv
    rollout.returns = adv + rollout.values
    return adv


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size < 2:
        return adv.copy()
    if np.ptp(adv) == 0.0:
        return np.zeros_like(adv)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _heads(params, arch, obs, actions):
    logits, values, cache = nn.forward(params, arch, obs)
    logp = nn.log_softmax(logits)
    p = np.exp(logp)
    ent = -(p * logp).sum(axis=1)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(actions)), actions] = 1.0
    return values, cache, logp, p, ent, onehot


def _entropy_grad(p, logp, ent, coef, n):
    # d(-coef * mean H)/d logits
    return coef * p * (logp + ent[:, None]) / n


def a2c_loss(batch: Batch, params, arch, c_v: float = 0.5, c_e: float = 0.01):
    """mean[-log pi(a|s) A] + c_v mean[(R - V)^2 / 2] - c_e mean[H]; A is a constant."""
    n = len(batch.actions)
    values, cache, logp, p, ent, onehot = _heads(params, arch, batch.obs, batch.actions)
    logp_a = logp[np.arange(n), batch.actions]
    adv = batch.advantages
    err = batch.returns - values
    policy_loss = -np.mean(logp_a * adv)
    value_loss = 0.5 * np.mean(err * err)
    mean_ent = float(np.mean(ent))
    loss = policy_loss + c_v * value_loss - c_e * mean_ent

    d_logits = adv[:, None] * (p - onehot) / n + _entropy_grad(p, logp, ent, c_e, n)
    d_value = -c_v * err / n
    grad = nn.backward(cache, d_logits, d_value)
    stats = {"policy_loss": float(policy_loss), "value_loss": float(value_loss), "entropy": mean_ent}
    return float(loss), grad, stats


def ppo_loss(batch: Batch, params, arch, old_log_probs=None, epsilon: float = 0.2,
             c_v: float = 0.5, c_e: float = 0.01):
    """Clipped-surrogate PPO loss with the same value and entropy terms as A2C."""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if old_log_probs is None:
        old_log_probs = batch.log_probs
    n = len(batch.actions)
    values, cache, logp, p, ent, onehot = _heads(params, arch, batch.obs, batch.actions)
    logp_a = logp[np.arange(n), batch.actions]
    adv = batch.advantages
    ratio = np.exp(logp_a - old_log_probs)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv
    unclipped = surr1 <= surr2
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    err = batch.returns - values
    value_loss = 0.5 * np.mean(err * err)
    mean_ent = float(np.mean(ent))
    loss = policy_loss + c_v * value_loss - c_e * mean_ent

    coef = np.where(unclipped, adv * ratio, 0.0)
    d_logits = coef[:, None] * (p - onehot) / n + _entropy_grad(p, logp, ent, c_e, n)
    d_value = -c_v * err / n
    grad = nn.backward(cache, d_logits, d_value)
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": mean_ent,
        "clip_fraction": float(np.mean(~unclipped)),
    }
    return float(loss), grad, stats


def a2c_update(params, opt, batch: Batch, arch, c_v=0.5, c_e=0.01):
    loss, grad, stats = a2c_loss(batch, params, arch, c_v, c_e)
    params, opt = nn.opt_step(params, grad, opt)
    return params, opt, loss, stats


def ppo_update(params, opt, batch: Batch, arch, rng, epsilon=0.2, epochs=4,
               minibatch=64, c_v=0.5, c_e=0.01):
    """``epochs`` passes of shuffled minibatches; returns the mean minibatch loss."""
    n = len(batch.actions)
    losses = []
    stats = {}
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, minibatch):
            mb = batch.take(perm[start : start + minibatch])
            loss, grad, stats = ppo_loss(mb, params, arch, mb.log_probs, epsilon, c_v, c_e)
            params, opt = nn.opt_step(params, grad, opt)
            losses.append(loss)
    return params, opt, float(np.mean(losses)), stats
