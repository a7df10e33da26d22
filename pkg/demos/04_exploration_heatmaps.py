"""Where do the agents go? Visitation heatmaps on a fixed MultiRoom layout.

Usage: python demos/04_exploration_heatmaps.py [TOTAL_STEPS] [OUT_DIR]

Writes one PGM and one SVG heatmap per agent and prints which rooms each
method reached.
"""

# %% imports
import sys
from pathlib import Path

from coil import TrainConfig, Trainer
from coil.metrics import emit_heatmap, rooms_covered

total = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
out = Path(sys.argv[2] if len(sys.argv) > 2 else "heatmaps")
out.mkdir(parents=True, exist_ok=True)
common = dict(env_kind="MultiRoom", width=12, height=12, num_rooms=4, seed_mode="FixedLayout",
              total_steps=total, eval_every=total, eval_episodes=4, seed_agent1=1, seed_agent2=2)

# %% same layout for every agent (fixed-layout mode derives it from the first seed)
for algo in ("Baseline", "CoIL"):
    trainer = Trainer(TrainConfig(algo=algo, **common))
    _, log = trainer.run()
    room_map = log.room_maps[0]
    union = set()
    for ag in trainer.agents:
        rooms = rooms_covered(ag.visits, room_map)
        union |= rooms
        pgm, svg = emit_heatmap(ag.visits, out / f"{algo}_agent{ag.agent_id}")
        print(f"{algo} agent {ag.agent_id}: {int(ag.visits.support().sum())} cells visited, "
              f"rooms {sorted(rooms)} -> {svg}")
    print(f"{algo} rooms reached by any agent: {len(union)} of {int(room_map.max()) + 1}\n")
