"""Two-agent co-imitation training loop, with SIL and plain actor-critic baselines.

One iteration runs, in this order:

1. each agent collects ``horizon`` environment steps with its own policy;
2. Monte-Carlo returns are computed for every finished episode and the
   episodes are appended to the collecting agent's replay buffer;
3. each agent takes its base A2C/PPO update on its own rollout;
4. ``M`` rounds of imitation: in CoIL agent 2 learns from agent 1's buffer
   and then agent 1 learns from agent 2's; in SIL each agent learns from
   its own buffer.

Imitation updates never touch the environment.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import pickle
from typing import Callable, Optional

import numpy as np

from . import nn
from .env import NUM_ACTIONS, GridSpec, Kind, SeedMode, make_env, wrap_delayed
from .errors import ConfigError, NumericError, TrainingAborted
from .imitation import ReplayBuffer, episode_entries, imitation_loss, sample_minibatch
from .metrics import CurveRecord, VisitationCounts
from .rl_core import Collector, a2c_update, compute_advantages, ppo_update

log = logging.getLogger(__name__)

ALGOS = ("Baseline", "SIL", "CoIL")
BASES = ("A2C", "PPO")
SAMPLING_MODES = ("uniform", "prioritized")
SCHEDULES = ("sequential", "simultaneous")
_EVAL_TAG = 0xE7A1


def _canonical(value, choices, key):
    for c in choices:
        if str(value).lower() == c.lower():
            return c
    raise ConfigError(f"{key} must be one of {choices}, got {value!r}")


@dataclasses.dataclass
class TrainConfig:
    """Full experiment description. ``None`` fields resolve from ``base``/``algo``."""

    algo: str = "CoIL"
    base: str = "A2C"
    # environment
    env_kind: str = "DoorKey"
    width: int = 6
    height: int = 6
    max_steps: int = 0  # 0 -> kind default
    num_rooms: int = 4
    seed_mode: str = "PerEpisodeLayout"
    chain_length: int = 40
    delay_period: int = 0  # 0 -> no delay wrapper
    # learning
    gamma: float = 0.99
    gae_lambda: float = 0.95
    M: Optional[int] = None
    horizon: int = 128
    imitation_batch: int = 64
    beta_co: float = 0.01
    c_v: float = 0.5
    c_e: float = 0.01
    lr: Optional[float] = None
    ppo_epsilon: float = 0.2
    ppo_epochs: int = 4
    ppo_minibatch: int = 64
    hidden: tuple = (64, 64)
    buffer_capacity: int = 100_000
    sampling: str = "uniform"
    imitation_schedule: str = "sequential"
    # run
    total_steps: int = 200_000
    eval_every: int = 10_000
    eval_episodes: int = 32
    seed_agent1: int = 1
    seed_agent2: int = 2
    num_agents: Optional[int] = None

    def __post_init__(self):
        self.algo = _canonical(self.algo, ALGOS, "algo")
        self.base = _canonical(self.base, BASES, "base")
        self.sampling = _canonical(self.sampling, SAMPLING_MODES, "sampling")
        self.imitation_schedule = _canonical(self.imitation_schedule, SCHEDULES, "imitation_schedule")
        # enum-owned strings keep pickled snapshots independent of where a value was parsed
        try:
            self.env_kind = Kind(self.env_kind).value
            self.seed_mode = SeedMode(self.seed_mode).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if isinstance(self.hidden, str):
            self.hidden = tuple(int(h) for h in self.hidden.split(",") if h.strip())
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.M is None:
            self.M = 10 if self.base == "A2C" else 4
        if self.lr is None:
            self.lr = 7e-4 if self.base == "A2C" else 3e-4
        if self.num_agents is None:
            self.num_agents = 2 if self.algo == "CoIL" else 1
        self.validate()

    def validate(self):
        if self.algo == "CoIL" and self.num_agents != 2:
            raise ConfigError("CoIL requires exactly two agents (num_agents=2)")
        if self.num_agents not in (1, 2):
            raise ConfigError(f"num_agents must be 1 or 2, got {self.num_agents}")
        checks = [
            (self.M >= 0, "M must be >= 0"),
            (self.total_steps > 0, "total_steps must be > 0"),
            (self.horizon >= 1, "horizon must be >= 1"),
            (0.0 <= self.gamma < 1.0, "gamma must be in [0, 1)"),
            (0.0 <= self.gae_lambda <= 1.0, "gae_lambda must be in [0, 1]"),
            (0.0 < self.ppo_epsilon < 1.0, "ppo_epsilon must be in (0, 1)"),
            (self.ppo_epochs >= 1 and self.ppo_minibatch >= 1, "ppo_epochs and ppo_minibatch must be >= 1"),
            (self.imitation_batch >= 1, "imitation_batch must be >= 1"),
            (self.beta_co >= 0 and self.c_v >= 0 and self.c_e >= 0, "loss coefficients must be >= 0"),
            (self.lr > 0, "lr must be > 0"),
            (self.eval_every >= 1 and self.eval_episodes >= 1, "eval_every and eval_episodes must be >= 1"),
            (self.buffer_capacity >= 1, "buffer_capacity must be >= 1"),
            (self.delay_period >= 0 and self.max_steps >= 0, "delay_period and max_steps must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        self.grid_spec  # validates the environment fields

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec(
            kind=Kind(self.env_kind),
            width=self.width,
            height=self.height,
            max_steps=self.max_steps or None,
            num_rooms=self.num_rooms,
            seed_mode=SeedMode(self.seed_mode),
            length=self.chain_length,
        )

    @property
    def seeds(self) -> tuple:
        return (self.seed_agent1, self.seed_agent2)[: self.num_agents]

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**values)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _derive_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def agent_streams(seed: int):
    """(init seed, env seed, action/sampling rng) for one agent."""
    init_seq, env_seq, act_seq = np.random.SeedSequence(seed).spawn(3)
    return _derive_seed(init_seq), _derive_seed(env_seq), np.random.default_rng(act_seq)


def eval_seed(config: TrainConfig) -> int:
    if config.grid_spec.seed_mode is SeedMode.FIXED:
        return agent_streams(config.seed_agent1)[1]
    return _derive_seed(np.random.SeedSequence([config.seed_agent1, _EVAL_TAG]))


def build_env(spec: GridSpec, seed: int, delay_period: int = 0):
    env = make_env(spec, seed)
    return wrap_delayed(env, delay_period) if delay_period else env


@dataclasses.dataclass
class AgentHandle:
    agent_id: int
    params: np.ndarray
    opt: nn.OptState
    collector: Collector
    replay: Optional[ReplayBuffer]
    rng: np.random.Generator
    visits: VisitationCounts
    env_seed: int

    @property
    def env(self):
        return self.collector.env


@dataclasses.dataclass
class EpisodeRecord:
    total_env_steps: int
    agent_id: int
    ret: float
    success: bool
    length: int


@dataclasses.dataclass
class RunLog:
    records: list = dataclasses.field(default_factory=list)  # CurveRecord
    episodes: list = dataclasses.field(default_factory=list)  # EpisodeRecord
    visits: list = dataclasses.field(default_factory=list)  # VisitationCounts per agent
    room_maps: list = dataclasses.field(default_factory=list)


def evaluate(params, arch: nn.NetworkArch, env_spec: GridSpec, episodes: int, seed: int,
             delay_period: int = 0):
    """Greedy-policy rollouts; returns ``(mean_return, success_rate)``."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    env = build_env(env_spec, seed, delay_period)
    weights = nn.unpack(np.asarray(params, dtype=np.float64), arch)
    total, wins = 0.0, 0
    for _ in range(episodes):
        obs = env.reset()
        done = False
        while not done:
            logits, _ = nn.policy_value(weights, obs)
            obs, reward, done, info = env.step(int(np.argmax(logits)))
            total += reward
        wins += bool(info["success"])
    return total / episodes, wins / episodes


class Trainer:
    """Stateful runner; ``trace`` (a list) receives one tuple per executed phase."""

    def __init__(self, config: TrainConfig, trace: Optional[list] = None):
        self.config = config
        self.trace = trace
        self.spec = config.grid_spec
        self.arch = nn.NetworkArch(self.spec.obs_dim, NUM_ACTIONS, config.hidden)
        self.iteration = 0
        self.total_env_steps = 0
        self.log = RunLog()
        self._eval_seed = eval_seed(config)
        self._next_eval = config.eval_every
        self._pending = [self._fresh_accum() for _ in range(config.num_agents)]
        fixed_layout_seed = agent_streams(config.seed_agent1)[1]
        self.agents = []
        for i, seed in enumerate(config.seeds, start=1):
            init_seed, env_seed, rng = agent_streams(seed)
            if self.spec.seed_mode is SeedMode.FIXED:
                env_seed = fixed_layout_seed
            env = build_env(self.spec, env_seed, config.delay_period)
            visits = VisitationCounts(self.spec.shape)
            replay = None
            if config.algo != "Baseline":
                replay = ReplayBuffer(config.buffer_capacity, self.spec.obs_dim)
            self.agents.append(
                AgentHandle(
                    agent_id=i,
                    params=nn.init_params(self.arch, init_seed),
                    opt=nn.OptState.zeros(self.arch.num_params, lr=config.lr),
                    collector=Collector(env, self.arch, on_visit=visits.record_visit),
                    replay=replay,
                    rng=rng,
                    visits=visits,
                    env_seed=env_seed,
                )
            )
        self.log.visits = [a.visits for a in self.agents]
        self.log.room_maps = [a.env.room_map for a in self.agents]

    @staticmethod
    def _fresh_accum():
        return {"loss_rl": [], "loss_imitation": [], "valid": []}

    def _mark(self, *event):
        if self.trace is not None:
            self.trace.append(event)

    def _abort(self, agent, phase, detail):
        raise TrainingAborted(
            self.iteration,
            {"agent_id": agent.agent_id, "phase": phase, "detail": str(detail),
             "total_env_steps": self.total_env_steps},
        )

    @property
    def done(self) -> bool:
        return self.total_env_steps >= self.config.total_steps

    def imitation_pairs(self):
        """(source buffer owner, learner) pairs for one round, in update order."""
        a = self.agents
        if self.config.algo == "CoIL":
            return [(a[0], a[1]), (a[1], a[0])]
        return [(ag, ag) for ag in a]

    def run_iteration(self) -> None:
        # non-finite values are caught explicitly and turned into TrainingAborted
        with np.errstate(over="ignore", invalid="ignore"):
            self._iterate()

    def _iterate(self) -> None:
        cfg = self.config
        self.iteration += 1

        rollouts = []
        finished = []
        for ag in self.agents:
            self._mark("collect", ag.agent_id)
            try:
                rollout, episodes = ag.collector.collect(ag.params, ag.rng, cfg.horizon)
            except NumericError as exc:
                self._abort(ag, "collect", exc)
            rollouts.append(rollout)
            finished.append(episodes)
        self.total_env_steps += cfg.horizon * len(self.agents)
        for ag, episodes in zip(self.agents, finished):
            for ep in episodes:
                self.log.episodes.append(
                    EpisodeRecord(self.total_env_steps, ag.agent_id, ep.total_reward, ep.success, len(ep))
                )

        if cfg.algo != "Baseline":
            entries = []
            for ag, episodes in zip(self.agents, finished):
                self._mark("returns", ag.agent_id)
                entries.append([episode_entries(ep, cfg.gamma) for ep in episodes])
            for ag, new in zip(self.agents, entries):
                self._mark("buffer", ag.agent_id)
                for obs, actions, rets in new:
                    ag.replay.add(obs, actions, rets)

        for ag, rollout, acc in zip(self.agents, rollouts, self._pending):
            self._mark("rl", ag.agent_id)
            compute_advantages(rollout, cfg.gamma, cfg.gae_lambda)
            batch = rollout.batch(normalize=True)
            try:
                if cfg.base == "A2C":
                    ag.params, ag.opt, loss, _ = a2c_update(ag.params, ag.opt, batch, self.arch, cfg.c_v, cfg.c_e)
                else:
                    ag.params, ag.opt, loss, _ = ppo_update(
                        ag.params, ag.opt, batch, self.arch, ag.rng, cfg.ppo_epsilon,
                        cfg.ppo_epochs, cfg.ppo_minibatch, cfg.c_v, cfg.c_e,
                    )
            except NumericError as exc:
                self._abort(ag, "rl", exc)
            if not math.isfinite(loss):
                self._abort(ag, "rl", f"loss={loss}")
            acc["loss_rl"].append(loss)

        if cfg.algo != "Baseline":
            for _ in range(cfg.M):
                self._imitation_round()

        if self.total_env_steps >= self._next_eval or self.done:
            self.record()
            while self._next_eval <= self.total_env_steps:
                self._next_eval += cfg.eval_every

    def _imitation_round(self) -> None:
        cfg = self.config
        staged = []
        for source, learner in self.imitation_pairs():
            batch = sample_minibatch(
                source.replay, cfg.imitation_batch, learner.rng, learner.params, self.arch, cfg.sampling
            )
            if batch is None:
                self._mark("skip", source.agent_id, learner.agent_id)
                continue
            self._mark("imitate", source.agent_id, learner.agent_id)
            loss, grad, stats = imitation_loss(batch, learner.params, self.arch, cfg.beta_co)
            if not math.isfinite(loss):
                self._abort(learner, "imitation", f"loss={loss}")
            acc = self._pending[learner.agent_id - 1]
            acc["loss_imitation"].append(loss)
            acc["valid"].append(stats["valid_ratio"])
            if cfg.imitation_schedule == "simultaneous":
                staged.append((learner, grad))
                continue
            try:
                learner.params, learner.opt = nn.opt_step(learner.params, grad, learner.opt)
            except NumericError as exc:
                self._abort(learner, "imitation", exc)
        for learner, grad in staged:
            try:
                learner.params, learner.opt = nn.opt_step(learner.params, grad, learner.opt)
            except NumericError as exc:
                self._abort(learner, "imitation", exc)

    def record(self) -> list:
        """Evaluate every agent greedily and append one curve row each."""
        cfg = self.config
        rows = []
        for ag, acc in zip(self.agents, self._pending):
            mean_return, success = evaluate(
                ag.params, self.arch, self.spec, cfg.eval_episodes, self._eval_seed, cfg.delay_period
            )
            rows.append(
                CurveRecord(
                    total_env_steps=self.total_env_steps,
                    iteration=self.iteration,
                    agent_id=ag.agent_id,
                    mean_return=float(mean_return),
                    success_rate=float(success),
                    valid_sample_ratio=_mean(acc["valid"]),
                    loss_rl=_mean(acc["loss_rl"]),
                    loss_imitation=_mean(acc["loss_imitation"]),
                )
            )
        self._pending = [self._fresh_accum() for _ in self.agents]
        self.log.records.extend(rows)
        log.info(
            "step %d iter %d: %s", self.total_env_steps, self.iteration,
            " | ".join(f"agent{r.agent_id} ret={r.mean_return:.3f} succ={r.success_rate:.2f}" for r in rows),
        )
        return rows

    def run(self, callback: Optional[Callable] = None):
        """Iterate until the step budget is spent or ``callback(self)`` returns truthy."""
        while not self.done:
            self.run_iteration()
            if callback is not None and callback(self):
                break
        return [ag.params for ag in self.agents], self.log

    def save(self, path) -> None:
        """Snapshot the whole trainer (agents, envs, buffers, rng streams) for exact resume."""
        trace, self.trace = self.trace, None
        try:
            with open(path, "wb") as f:
                pickle.dump(self, f, protocol=pickle.HIGHEST_PROTOCOL)
        finally:
            self.trace = trace

    @staticmethod
    def load(path) -> "Trainer":
        with open(path, "rb") as f:
            return pickle.load(f)


def _mean(values) -> float:
    return float(np.mean(values)) if values else math.nan


def train(config: TrainConfig, trace: Optional[list] = None, callback: Optional[Callable] = None):
    """Run a full experiment; returns ``(params per agent, RunLog)``."""
    return Trainer(config, trace=trace).run(callback)


@dataclasses.dataclass
class Curve:
    steps: np.ndarray
    mean_return: np.ndarray
    success_rate: np.ndarray


def _curve(rows) -> Curve:
    return Curve(
        np.array([r.total_env_steps for r in rows], dtype=np.int64),
        np.array([r.mean_return for r in rows], dtype=np.float64),
        np.array([r.success_rate for r in rows], dtype=np.float64),
    )


def fairness_accounting(log) -> tuple:
    """Curves indexed by environment steps summed over all agents.

    Returns ``(combined, per_agent)``: ``combined`` averages the agents at each
    step count; ``per_agent`` maps agent id to that agent's own curve.
    """
    records = getattr(log, "records", log)
    if not records:
        raise ConfigError("cannot normalize an empty log")
    per_agent = {}
    for aid in sorted({r.agent_id for r in records}):
        per_agent[aid] = _curve([r for r in records if r.agent_id == aid])
    steps = sorted({r.total_env_steps for r in records})
    ret, succ = [], []
    for s in steps:
        rows = [r for r in records if r.total_env_steps == s]
        ret.append(np.mean([r.mean_return for r in rows]))
        succ.append(np.mean([r.success_rate for r in rows]))
    combined = Curve(np.array(steps, dtype=np.int64), np.array(ret), np.array(succ))
    return combined, per_agent


def resample(curve: Curve, grid) -> Curve:
    """Step-hold ``curve`` onto ``grid`` (last value at or before each x; NaN before the first)."""
    grid = np.asarray(grid, dtype=np.int64)
    idx = np.searchsorted(curve.steps, grid, side="right") - 1
    valid = idx >= 0
    safe = np.maximum(idx, 0)

    def pick(values):
        return np.where(valid, values[safe], np.nan) if len(values) else np.full(len(grid), np.nan)

    return Curve(grid, pick(curve.mean_return), pick(curve.success_rate))
