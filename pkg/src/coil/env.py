"""Sparse-reward gridworlds with deterministic, seeded dynamics.

Four MiniGrid-style layouts (Empty, DoorKey, MultiRoom, FourRooms) plus a
one-dimensional Chain used as a dense-reward testbed for the delayed-reward
wrapper. Observations are full-observability one-hot vectors.

Coordinates are ``(x, y)`` with ``x`` the column; grids are stored as
``(height, width)`` arrays indexed ``grid[y, x]``.
"""

from __future__ import annotations

import dataclasses
import functools
from enum import Enum, IntEnum
from typing import Any, NamedTuple, Optional

import numpy as np

from .errors import ConfigError, UsageError


class Kind(str, Enum):
    EMPTY = "Empty"
    DOORKEY = "DoorKey"
    MULTIROOM = "MultiRoom"
    FOURROOMS = "FourRooms"
    CHAIN = "Chain"


class SeedMode(str, Enum):
    FIXED = "FixedLayout"
    PER_EPISODE = "PerEpisodeLayout"


class Action(IntEnum):
    TURN_LEFT = 0
    TURN_RIGHT = 1
    FORWARD = 2
    PICKUP = 3
    TOGGLE = 4


NUM_ACTIONS = len(Action)


class Cell(IntEnum):
    FLOOR = 0
    WALL = 1
    DOOR = 2  # closed
    OPEN_DOOR = 3
    KEY = 4
    GOAL = 5


NUM_CELL_TYPES = len(Cell)

_LEFT, _RIGHT, _FORWARD, _PICKUP = (int(a) for a in Action if a is not Action.TOGGLE)
_FLOOR, _DOOR, _OPEN_DOOR, _KEY, _GOAL = (
    int(c) for c in (Cell.FLOOR, Cell.DOOR, Cell.OPEN_DOOR, Cell.KEY, Cell.GOAL)
)
_PASSABLE = frozenset((_FLOOR, _OPEN_DOOR, _GOAL))


def _check_action(action) -> int:
    a = int(action)
    if not 0 <= a < NUM_ACTIONS or a != action:
        raise UsageError(f"invalid action {action!r}; expected an integer in [0, {NUM_ACTIONS})")
    return a

# N, E, S, W
DIR_VEC = ((0, -1), (1, 0), (0, 1), (-1, 0))
EAST = 1

ROOM_MIN, ROOM_MAX = 4, 5  # room side length including walls
_LAYOUT_TRIES = 500


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Static description of an environment family.

    ``length`` is only read for ``Kind.CHAIN`` and ``num_rooms`` only for
    ``Kind.MULTIROOM``. ``max_steps=None`` resolves to ``4 * width * height``
    for grids and 100 for the chain.
    """

    kind: Kind = Kind.EMPTY
    width: int = 8
    height: int = 8
    max_steps: Optional[int] = None
    num_rooms: int = 4
    seed_mode: SeedMode = SeedMode.PER_EPISODE
    length: int = 40

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", Kind(self.kind))
            object.__setattr__(self, "seed_mode", SeedMode(self.seed_mode))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.max_steps is not None and self.max_steps <= 0:
            raise ConfigError(f"max_steps must be positive, got {self.max_steps}")
        if self.kind is Kind.CHAIN:
            if self.length < 3:
                raise ConfigError(f"Chain needs length >= 3, got {self.length}")
            return
        min_side = 5 if self.kind in (Kind.DOORKEY, Kind.FOURROOMS) else 4
        if self.width < min_side or self.height < min_side:
            raise ConfigError(
                f"{self.kind.value} needs width and height >= {min_side}, "
                f"got {self.width}x{self.height}"
            )
        if self.kind is Kind.MULTIROOM and not 2 <= self.num_rooms <= 6:
            raise ConfigError(f"num_rooms must be in [2, 6], got {self.num_rooms}")

    @property
    def steps_cap(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        if self.kind is Kind.CHAIN:
            return 100
        return 4 * self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) of the visitation grid."""
        if self.kind is Kind.CHAIN:
            return (1, self.length)
        return (self.height, self.width)

    @property
    def obs_dim(self) -> int:
        if self.kind is Kind.CHAIN:
            return self.length
        n = self.width * self.height
        return NUM_CELL_TYPES * n + n + 4 + 1


@dataclasses.dataclass
class GridWorldState:
    grid: np.ndarray
    agent_pos: tuple[int, int]
    agent_dir: int
    carrying_key: bool = False
    step_count: int = 0
    done: bool = False

    def copy(self) -> "GridWorldState":
        return dataclasses.replace(self, grid=self.grid.copy())


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


@functools.lru_cache(maxsize=None)
def _cell_offsets(n: int) -> np.ndarray:
    return np.arange(n)


def encode_observation(state: GridWorldState) -> np.ndarray:
    """One-hot cell channels, agent-position plane, direction, key bit."""
    h, w = state.grid.shape
    n = h * w
    obs = np.zeros(NUM_CELL_TYPES * n + n + 5)
    obs[state.grid.ravel().astype(np.intp) * n + _cell_offsets(n)] = 1.0
    x, y = state.agent_pos
    obs[NUM_CELL_TYPES * n + y * w + x] = 1.0
    obs[7 * n + state.agent_dir] = 1.0
    obs[7 * n + 4] = float(state.carrying_key)
    return obs


def _walled(width, height):
    grid = np.full((height, width), Cell.FLOOR, dtype=np.int8)
    grid[0, :] = grid[-1, :] = Cell.WALL
    grid[:, 0] = grid[:, -1] = Cell.WALL
    return grid


def _random_free(grid, rng, x_range=None, exclude=()):
    h, w = grid.shape
    lo, hi = x_range if x_range is not None else (0, w)
    cells = [
        (x, y)
        for y in range(h)
        for x in range(lo, hi)
        if grid[y, x] == Cell.FLOOR and (x, y) not in exclude
    ]
    return cells[rng.integers(len(cells))]


def _gen_empty(spec, rng):
    grid = _walled(spec.width, spec.height)
    grid[spec.height - 2, spec.width - 2] = Cell.GOAL
    return grid, (1, 1), EAST, None


def _gen_doorkey(spec, rng):
    w, h = spec.width, spec.height
    grid = _walled(w, h)
    grid[h - 2, w - 2] = Cell.GOAL
    split = int(rng.integers(2, w - 2))
    grid[:, split] = Cell.WALL
    grid[int(rng.integers(1, h - 1)), split] = Cell.DOOR
    agent = _random_free(grid, rng, x_range=(1, split))
    kx, ky = _random_free(grid, rng, x_range=(1, split), exclude=(agent,))
    grid[ky, kx] = Cell.KEY
    return grid, agent, int(rng.integers(4)), None


def _gen_fourrooms(spec, rng):
    w, h = spec.width, spec.height
    grid = _walled(w, h)
    mx, my = w // 2, h // 2
    grid[:, mx] = Cell.WALL
    grid[my, :] = Cell.WALL
    grid[int(rng.integers(1, my)), mx] = Cell.FLOOR
    grid[int(rng.integers(my + 1, h - 1)), mx] = Cell.FLOOR
    grid[my, int(rng.integers(1, mx))] = Cell.FLOOR
    grid[my, int(rng.integers(mx + 1, w - 1))] = Cell.FLOOR
    gx, gy = _random_free(grid, rng)
    grid[gy, gx] = Cell.GOAL
    agent = _random_free(grid, rng)
    return grid, agent, int(rng.integers(4)), None


def _overlaps(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def _interior(room):
    x, y, w, h = room
    return (x + 1, y + 1, w - 2, h - 2)


def _place_rooms(spec, rng):
    """Chain of rooms, each attached to the previous one through a door."""
    W, H = spec.width, spec.height
    w, h = (int(v) for v in rng.integers(ROOM_MIN, ROOM_MAX + 1, size=2))
    if w > W or h > H:
        return None
    rooms = [(int(rng.integers(0, W - w + 1)), int(rng.integers(0, H - h + 1)), w, h)]
    doors = []
    entry = -1
    for _ in range(spec.num_rooms - 1):
        px, py, pw, ph = rooms[-1]
        for _attempt in range(40):
            side = int(rng.integers(4))
            if side == entry:
                continue
            w, h = (int(v) for v in rng.integers(ROOM_MIN, ROOM_MAX + 1, size=2))
            if side in (1, 3):
                dy = int(rng.integers(py + 1, py + ph - 1))
                dx = px + pw - 1 if side == 1 else px
                nx = dx if side == 1 else dx - w + 1
                ny = int(rng.integers(dy - h + 2, dy))
            else:
                dx = int(rng.integers(px + 1, px + pw - 1))
                dy = py + ph - 1 if side == 2 else py
                ny = dy if side == 2 else dy - h + 1
                nx = int(rng.integers(dx - w + 2, dx))
            new = (nx, ny, w, h)
            if nx < 0 or ny < 0 or nx + w > W or ny + h > H:
                continue
            if any(
                _overlaps(_interior(new), r) or _overlaps(new, _interior(r)) for r in rooms
            ):
                continue
            rooms.append(new)
            doors.append((dx, dy))
            entry = (side + 2) % 4
            break
        else:
            return None
    return rooms, doors


def _gen_multiroom(spec, rng):
    for _ in range(_LAYOUT_TRIES):
        placed = _place_rooms(spec, rng)
        if placed is not None:
            break
    else:
        raise ConfigError(
            f"cannot fit {spec.num_rooms} rooms into a {spec.width}x{spec.height} grid"
        )
    rooms, doors = placed
    grid = np.full((spec.height, spec.width), Cell.WALL, dtype=np.int8)
    room_map = np.full((spec.height, spec.width), -1, dtype=np.int64)
    for i, room in enumerate(rooms):
        x, y, w, h = _interior(room)
        grid[y : y + h, x : x + w] = Cell.FLOOR
        room_map[y : y + h, x : x + w] = i
    for dx, dy in doors:
        grid[dy, dx] = Cell.DOOR
    goal_mask = (room_map == len(rooms) - 1) & (grid == Cell.FLOOR)
    gys, gxs = np.nonzero(goal_mask)
    k = int(rng.integers(len(gxs)))
    grid[gys[k], gxs[k]] = Cell.GOAL
    ays, axs = np.nonzero((room_map == 0) & (grid == Cell.FLOOR))
    k = int(rng.integers(len(axs)))
    return grid, (int(axs[k]), int(ays[k])), int(rng.integers(4)), room_map


_GENERATORS = {
    Kind.EMPTY: _gen_empty,
    Kind.DOORKEY: _gen_doorkey,
    Kind.FOURROOMS: _gen_fourrooms,
    Kind.MULTIROOM: _gen_multiroom,
}


class GridWorld:
    """A single-owner gridworld instance. Call :meth:`reset` before stepping."""

    num_actions = NUM_ACTIONS

    def __init__(self, spec: GridSpec, seed: int):
        if spec.kind is Kind.CHAIN:
            raise ConfigError("use ChainEnv (or make_env) for Kind.CHAIN")
        self.spec = spec
        self.seed = seed
        self.max_steps = spec.steps_cap
        self.obs_dim = spec.obs_dim
        self.shape = spec.shape
        self._rng = np.random.default_rng(seed)
        self.room_map: Optional[np.ndarray] = None
        self._fixed: Optional[GridWorldState] = None
        self._state: Optional[GridWorldState] = None
        if spec.seed_mode is SeedMode.FIXED:
            self._fixed = self._generate()

    def _generate(self) -> GridWorldState:
        grid, pos, direction, room_map = _GENERATORS[self.spec.kind](self.spec, self._rng)
        self.room_map = room_map
        return GridWorldState(grid=grid, agent_pos=pos, agent_dir=direction)

    @property
    def state(self) -> GridWorldState:
        if self._state is None:
            raise UsageError("environment has not been reset")
        return self._state

    @property
    def agent_pos(self) -> tuple[int, int]:
        return self.state.agent_pos

    def get_state(self) -> GridWorldState:
        return self.state.copy()

    def set_state(self, state: GridWorldState) -> None:
        self._state = state.copy()

    def observation(self) -> np.ndarray:
        return encode_observation(self.state)

    def reset(self) -> np.ndarray:
        if self._fixed is not None:
            self._state = self._fixed.copy()
        else:
            self._state = self._generate()
        return self.observation()

    def step(self, action: int) -> StepResult:
        s = self.state
        if s.done:
            raise UsageError("step() called on a finished episode; call reset()")
        action = _check_action(action)
        s.step_count += 1
        dx, dy = DIR_VEC[s.agent_dir]
        fx, fy = s.agent_pos[0] + dx, s.agent_pos[1] + dy
        front = int(s.grid[fy, fx])
        reward, success = 0.0, False

        # plain-int comparisons: enum lookups cost more than the step itself
        if action == _LEFT:
            s.agent_dir = (s.agent_dir - 1) % 4
        elif action == _RIGHT:
            s.agent_dir = (s.agent_dir + 1) % 4
        elif action == _FORWARD:
            if front in _PASSABLE:
                s.agent_pos = (fx, fy)
                success = front == _GOAL
        elif action == _PICKUP:
            if front == _KEY and not s.carrying_key:
                s.carrying_key = True
                s.grid[fy, fx] = _FLOOR
        elif front == _DOOR:  # toggle
            if s.carrying_key or self.spec.kind is not Kind.DOORKEY:
                s.grid[fy, fx] = _OPEN_DOOR
        elif front == _OPEN_DOOR:
            s.grid[fy, fx] = _DOOR

        if success:
            reward = 1.0 - 0.9 * (s.step_count / self.max_steps)
            s.done = True
        elif s.step_count >= self.max_steps:
            s.done = True
        return StepResult(self.observation(), reward, s.done, {"success": success})


class ChainEnv:
    """Line of ``length`` states; +0.1 for every step to the right.

    ``FORWARD`` moves right, ``TURN_LEFT`` moves left, the remaining actions
    are no-ops. Reaching the right end terminates the episode successfully.
    """

    num_actions = NUM_ACTIONS
    step_reward = 0.1

    def __init__(self, spec: GridSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.max_steps = spec.steps_cap
        self.obs_dim = spec.obs_dim
        self.shape = spec.shape
        self.room_map = None
        self._pos: Optional[int] = None
        self._t = 0
        self._done = False

    @property
    def agent_pos(self) -> tuple[int, int]:
        if self._pos is None:
            raise UsageError("environment has not been reset")
        return (self._pos, 0)

    def observation(self) -> np.ndarray:
        obs = np.zeros(self.spec.length)
        obs[self._pos] = 1.0
        return obs

    def reset(self) -> np.ndarray:
        self._pos, self._t, self._done = 0, 0, False
        return self.observation()

    def step(self, action: int) -> StepResult:
        if self._pos is None or self._done:
            raise UsageError("step() called on a finished episode; call reset()")
        action = _check_action(action)
        self._t += 1
        reward = 0.0
        if action == _FORWARD:
            self._pos += 1
            reward = self.step_reward
        elif action == _LEFT and self._pos > 0:
            self._pos -= 1
        success = self._pos == self.spec.length - 1
        self._done = success or self._t >= self.max_steps
        return StepResult(self.observation(), reward, self._done, {"success": success})


class DelayedReward:
    """Accumulates rewards and pays them out every ``period`` steps and at episode end."""

    def __init__(self, env, period: int):
        if period < 1:
            raise ConfigError(f"delay period must be >= 1, got {period}")
        self.env = env
        self.period = period
        self._acc = 0.0
        self._t = 0

    def __getattr__(self, name: str) -> Any:
        return getattr(self.env, name)

    def reset(self) -> np.ndarray:
        self._acc, self._t = 0.0, 0
        return self.env.reset()

    def step(self, action: int) -> StepResult:
        res = self.env.step(action)
        self._acc += res.reward
        self._t += 1
        if self._t % self.period == 0 or res.done:
            reward, self._acc = self._acc, 0.0
        else:
            reward = 0.0
        return res._replace(reward=reward)


def make_env(spec: GridSpec, seed: int):
    """Build an environment whose layouts and randomness depend only on (spec, seed)."""
    if spec.kind is Kind.CHAIN:
        return ChainEnv(spec, seed)
    return GridWorld(spec, seed)


def wrap_delayed(env, period: int) -> DelayedReward:
    return DelayedReward(env, period)
