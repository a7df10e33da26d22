"""Baseline A2C, self-imitation and co-imitation on a small DoorKey task.

Usage: python demos/03_coil_vs_baselines.py [TOTAL_STEPS]

Every curve is indexed by environment steps summed over all agents, so
the two co-imitation agents together get the same budget as one baseline
agent. The default budget runs in about a minute on one core; the learning
gap only shows clearly at a few hundred thousand steps and beyond.
"""

# %% imports
import sys

import numpy as np

from coil import TrainConfig, Trainer, fairness_accounting
from coil.trainer import resample

total = int(sys.argv[1]) if len(sys.argv) > 1 else 300_000
common = dict(env_kind="DoorKey", width=5, height=5, total_steps=total,
              eval_every=total // 10, eval_episodes=32, seed_agent1=1, seed_agent2=2)

# %% train the three methods under the same total budget
curves = {}
for algo in ("Baseline", "SIL", "CoIL"):
    trainer = Trainer(TrainConfig(algo=algo, **common))
    _, log = trainer.run()
    combined, per_agent = fairness_accounting(log)
    curves[algo] = combined
    replay = [len(ag.replay) if ag.replay is not None else 0 for ag in trainer.agents]
    print(f"{algo:8s} done: {trainer.iteration} iterations, replay sizes {replay}")

# %% greedy success rate on a shared step grid
# each method evaluates at slightly different step counts; step-hold onto ten even points
grid = np.linspace(total // 10, total, 10).astype(int)
aligned = {algo: resample(c, grid) for algo, c in curves.items()}
print("\n total steps   " + "  ".join(f"{a:>8s}" for a in curves))
for i, step in enumerate(grid):
    print(f"{step:12d}   " + "  ".join(f"{aligned[a].success_rate[i]:8.2f}" for a in curves))
print("(nan: no evaluation yet at that step)")
