"""Tour of the environments: layouts, observations and the reward shape."""

# %% imports
import numpy as np

from coil.env import Action, Cell, GridSpec, Kind, SeedMode, make_env, wrap_delayed

GLYPH = {Cell.FLOOR: ".", Cell.WALL: "#", Cell.DOOR: "D", Cell.OPEN_DOOR: "_",
         Cell.KEY: "k", Cell.GOAL: "G"}
ARROW = "^>v<"  # N, E, S, W


def show(env):
    state = env.get_state()
    rows = []
    for y, row in enumerate(state.grid):
        chars = [GLYPH[Cell(c)] for c in row]
        if y == state.agent_pos[1]:
            chars[state.agent_pos[0]] = ARROW[state.agent_dir]
        rows.append(" ".join(chars))
    print("\n".join(rows), end="\n\n")


# %% one layout of each kind
for spec in (GridSpec(Kind.EMPTY, 6, 6), GridSpec(Kind.DOORKEY, 6, 6),
             GridSpec(Kind.FOURROOMS, 9, 9), GridSpec(Kind.MULTIROOM, 12, 12, num_rooms=4)):
    env = make_env(spec, seed=3)
    obs = env.reset()
    print(f"{spec.kind.value} {spec.width}x{spec.height}: obs_dim={obs.size}, step cap={env.max_steps}")
    show(env)

# %% per-episode layouts change on reset, fixed layouts never do
per_episode = make_env(GridSpec(Kind.DOORKEY, 6, 6), seed=0)
fixed = make_env(GridSpec(Kind.DOORKEY, 6, 6, seed_mode=SeedMode.FIXED), seed=0)
print("distinct per-episode layouts in 20 resets:", len({per_episode.reset().tobytes() for _ in range(20)}))
print("distinct fixed layouts in 20 resets:      ", len({fixed.reset().tobytes() for _ in range(20)}))

# %% the goal pays 1 - 0.9 * t / cap, so faster solutions earn more
env = make_env(GridSpec(Kind.EMPTY, 5, 5), seed=0)
env.reset()
for a in (Action.FORWARD, Action.FORWARD, Action.TURN_RIGHT, Action.FORWARD, Action.FORWARD):
    res = env.step(a)
print(f"\nEmpty 5x5 solved in 5 steps: reward={res.reward:.3f} success={res.info['success']}")

# %% chain with delayed payouts: same total, lumped every 20 steps
chain = wrap_delayed(make_env(GridSpec(Kind.CHAIN, length=40), seed=0), period=20)
chain.reset()
rewards = [chain.step(Action.FORWARD).reward for _ in range(39)]
paid = [(t + 1, round(r, 2)) for t, r in enumerate(rewards) if r]
print("chain-40 delay-20 payouts (step, amount):", paid, " total:", round(float(np.sum(rewards)), 2))
