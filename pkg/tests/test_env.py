import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coil.env import (
    Action,
    Cell,
    ChainEnv,
    GridSpec,
    GridWorld,
    Kind,
    SeedMode,
    make_env,
    wrap_delayed,
)
from coil.errors import ConfigError, UsageError

from oracles import shortest_solution

GRID_SPECS = [
    GridSpec(Kind.EMPTY, 5, 5),
    GridSpec(Kind.DOORKEY, 6, 6),
    GridSpec(Kind.DOORKEY, 8, 8),
    GridSpec(Kind.FOURROOMS, 9, 9),
    GridSpec(Kind.MULTIROOM, 12, 12, num_rooms=3),
    GridSpec(Kind.MULTIROOM, 15, 15, num_rooms=4),
]


def rollout(env, actions):
    out = []
    for a in actions:
        res = env.step(a)
        out.append((res.observation.tobytes(), res.reward, res.done))
        if res.done:
            env.reset()
    return out


@pytest.mark.parametrize("spec", GRID_SPECS, ids=lambda s: f"{s.kind.value}{s.width}")
@pytest.mark.parametrize("seed", range(8))
def test_every_layout_is_solvable(spec, seed):
    env = make_env(spec, seed)
    env.reset()
    assert shortest_solution(env) is not None


def test_empty_layout_optimal_length():
    env = make_env(GridSpec(Kind.EMPTY, 5, 5), 0)
    env.reset()
    # start (1,1) facing east, goal (3,3): two forward, turn, two forward
    assert shortest_solution(env) == 5


def test_goal_reward_scales_with_elapsed_steps():
    spec = GridSpec(Kind.EMPTY, 5, 5)
    env = make_env(spec, 0)
    env.reset()
    for a in (Action.FORWARD, Action.FORWARD, Action.TURN_RIGHT, Action.FORWARD):
        assert env.step(a).reward == 0.0
    res = env.step(Action.FORWARD)
    assert res.done and res.info["success"]
    assert res.reward == pytest.approx(1 - 0.9 * 5 / spec.steps_cap)
    assert spec.steps_cap == 4 * 5 * 5


def test_timeout_ends_episode_without_reward():
    env = make_env(GridSpec(Kind.EMPTY, 5, 5, max_steps=3), 0)
    env.reset()
    results = [env.step(Action.TURN_LEFT) for _ in range(3)]
    assert [r.done for r in results] == [False, False, True]
    assert results[-1].reward == 0.0 and not results[-1].info["success"]
    with pytest.raises(UsageError):
        env.step(Action.TURN_LEFT)


def test_step_before_reset_is_rejected():
    with pytest.raises(UsageError):
        make_env(GridSpec(Kind.EMPTY, 5, 5), 0).step(0)
    with pytest.raises(UsageError):
        make_env(GridSpec(Kind.CHAIN, length=5), 0).step(0)


@pytest.mark.parametrize("bad", [-1, 5, 2.5])
def test_invalid_actions_are_rejected(bad):
    env = make_env(GridSpec(Kind.EMPTY, 5, 5), 0)
    env.reset()
    with pytest.raises(UsageError):
        env.step(bad)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind=Kind.DOORKEY, width=4, height=6),
        dict(kind=Kind.EMPTY, width=3, height=3),
        dict(kind=Kind.MULTIROOM, width=15, height=15, num_rooms=1),
        dict(kind=Kind.MULTIROOM, width=15, height=15, num_rooms=7),
        dict(kind=Kind.CHAIN, length=2),
    ],
)
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        GridSpec(**kwargs)


def test_multiroom_that_cannot_fit_raises():
    with pytest.raises(ConfigError):
        make_env(GridSpec(Kind.MULTIROOM, 6, 6, num_rooms=6), 0).reset()


def test_door_needs_key_only_in_doorkey():
    spec = GridSpec(Kind.DOORKEY, 6, 6)
    env = make_env(spec, 3)
    env.reset()
    state = env.get_state()
    door = tuple(int(v) for v in np.argwhere(state.grid == Cell.DOOR)[0])
    dy, dx = door
    state.agent_pos, state.agent_dir = (dx - 1, dy), 1  # west of the door, facing east
    env.set_state(state)
    env.step(Action.TOGGLE)
    assert env.get_state().grid[dy, dx] == Cell.DOOR
    state.carrying_key = True
    env.set_state(state)
    env.step(Action.TOGGLE)
    assert env.get_state().grid[dy, dx] == Cell.OPEN_DOOR
    env.step(Action.TOGGLE)
    assert env.get_state().grid[dy, dx] == Cell.DOOR


def test_pickup_consumes_key_once():
    env = make_env(GridSpec(Kind.DOORKEY, 8, 8), 5)
    env.reset()
    state = env.get_state()
    ky, kx = (int(v) for v in np.argwhere(state.grid == Cell.KEY)[0])
    for d, (ox, oy) in enumerate(((0, 1), (-1, 0), (0, -1), (1, 0))):
        x, y = kx + ox, ky + oy
        if state.grid[y, x] == Cell.FLOOR:
            state.agent_pos, state.agent_dir = (x, y), d
            break
    env.set_state(state)
    obs = env.step(Action.PICKUP).observation
    after = env.get_state()
    assert after.carrying_key and after.grid[ky, kx] == Cell.FLOOR
    assert obs[-1] == 1.0
    env.step(Action.PICKUP)
    assert env.get_state().carrying_key


def test_walls_block_movement():
    env = make_env(GridSpec(Kind.EMPTY, 5, 5), 0)
    env.reset()
    env.step(Action.TURN_LEFT)  # face north, wall ahead
    env.step(Action.FORWARD)
    assert env.agent_pos == (1, 1)


def test_observation_layout():
    spec = GridSpec(Kind.DOORKEY, 6, 6)
    env = make_env(spec, 0)
    obs = env.reset()
    n = 36
    assert obs.shape == (spec.obs_dim,) == (7 * n + 5,)
    cells = obs[: 6 * n].reshape(6, n)
    assert np.all(cells.sum(axis=0) == 1)  # one cell type per position
    state = env.get_state()
    assert np.array_equal(cells.argmax(axis=0), state.grid.ravel())
    x, y = state.agent_pos
    assert obs[6 * n : 7 * n].argmax() == y * 6 + x
    assert obs[7 * n + state.agent_dir] == 1 and obs[7 * n : 7 * n + 4].sum() == 1


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    actions=st.lists(st.integers(0, 4), min_size=1, max_size=150),
    kind=st.sampled_from([Kind.DOORKEY, Kind.FOURROOMS, Kind.MULTIROOM]),
)
def test_same_seed_same_trajectory(seed, actions, kind):
    spec = GridSpec(kind, 12, 12, num_rooms=3)
    a, b = make_env(spec, seed), make_env(spec, seed)
    assert a.reset().tobytes() == b.reset().tobytes()
    assert rollout(a, actions) == rollout(b, actions)


def test_fixed_layout_repeats_and_per_episode_varies():
    fixed = make_env(GridSpec(Kind.DOORKEY, 8, 8, seed_mode=SeedMode.FIXED), 11)
    first = fixed.reset()
    for _ in range(5):
        assert np.array_equal(fixed.reset(), first)
    varying = make_env(GridSpec(Kind.DOORKEY, 8, 8), 11)
    layouts = {varying.reset().tobytes() for _ in range(10)}
    assert len(layouts) > 1


def test_state_roundtrip_is_independent_copy():
    env = make_env(GridSpec(Kind.DOORKEY, 6, 6), 2)
    env.reset()
    snap = env.get_state()
    env.step(Action.FORWARD)
    snap.grid[:] = Cell.WALL  # mutating the snapshot must not leak back
    env.set_state(env.get_state())
    assert (env.get_state().grid != Cell.WALL).any()


def test_multiroom_room_map_marks_interiors():
    env = make_env(GridSpec(Kind.MULTIROOM, 15, 15, num_rooms=4, seed_mode=SeedMode.FIXED), 4)
    env.reset()
    state = env.get_state()
    rooms = env.room_map
    assert set(np.unique(rooms)) == {-1, 0, 1, 2, 3}
    assert np.all(state.grid[rooms >= 0] != Cell.WALL)
    assert rooms[state.agent_pos[1], state.agent_pos[0]] == 0
    gy, gx = np.argwhere(state.grid == Cell.GOAL)[0]
    assert rooms[gy, gx] == 3


def test_chain_dynamics():
    env = ChainEnv(GridSpec(Kind.CHAIN, length=5), 0)
    obs = env.reset()
    assert obs.tolist() == [1, 0, 0, 0, 0]
    assert env.step(Action.TURN_LEFT).reward == 0.0  # already at the left end
    assert env.agent_pos == (0, 0)
    rewards = []
    for _ in range(4):
        res = env.step(Action.FORWARD)
        rewards.append(res.reward)
    assert rewards == [0.1] * 4 and res.done and res.info["success"]
    assert res.observation.argmax() == 4
    env.reset()
    env.step(Action.FORWARD)
    env.step(Action.TURN_LEFT)
    assert env.agent_pos == (0, 0)
    assert env.step(Action.PICKUP).reward == 0.0


def test_delayed_reward_preserves_total_and_pays_on_schedule():
    base = make_env(GridSpec(Kind.CHAIN, length=30), 0)
    env = wrap_delayed(make_env(GridSpec(Kind.CHAIN, length=30), 0), 4)
    base.reset()
    env.reset()
    rng = np.random.default_rng(0)
    raw, delayed, paid_at = [], [], []
    for t in range(1, 101):
        a = int(rng.choice([Action.FORWARD, Action.FORWARD, Action.TURN_LEFT]))
        r0, r1 = base.step(a), env.step(a)
        raw.append(r0.reward)
        delayed.append(r1.reward)
        if r1.reward:
            paid_at.append(t)
        assert r1.done == r0.done
        if r1.done:
            break
    assert sum(delayed) == pytest.approx(sum(raw))
    assert all(t % 4 == 0 or t == len(raw) for t in paid_at)
    assert env.obs_dim == 30  # attribute delegation


def test_delay_period_must_be_positive():
    with pytest.raises(ConfigError):
        wrap_delayed(make_env(GridSpec(Kind.CHAIN, length=5), 0), 0)


def test_gridworld_rejects_chain_spec():
    with pytest.raises(ConfigError):
        GridWorld(GridSpec(Kind.CHAIN, length=5), 0)
