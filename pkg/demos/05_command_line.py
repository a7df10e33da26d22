"""The command-line workflow end to end: train, evaluate, compare, re-render.

Usage: python demos/05_command_line.py [WORK_DIR]

Equivalent shell commands are printed before each step.
"""

# %% imports
import sys
from pathlib import Path

from coil import cli

work = Path(sys.argv[1] if len(sys.argv) > 1 else "cli_demo")
work.mkdir(parents=True, exist_ok=True)


def run(*argv):
    print("$ coil " + " ".join(argv))
    code = cli.main(list(argv))
    print(f"(exit {code})\n")
    return code


# %% an experiment file is flat key = value text
exp = work / "doorkey.cfg"
exp.write_text(
    "# co-imitation on DoorKey 6x6\n"
    "algo = CoIL\n"
    "env_kind = DoorKey\n"
    "total_steps = 40000\n"
    "eval_every = 10000\n"
    "eval_episodes = 16\n"
    "run_id = coil\n"
    "milestones = 20000\n"
)
runs = str(work / "runs")

# %% train CoIL, then a baseline that only overrides two keys
run("train", str(exp), "--output-dir", runs)
run("train", str(exp), "--output-dir", runs, "--set", "algo=Baseline", "--set", "run_id=baseline")

# %% greedy evaluation of a saved checkpoint
run("eval", f"{runs}/coil/checkpoints/agent1.params", "--config", f"{runs}/coil", "--episodes", "20")

# %% merged curves on the total-step axis
run("compare", f"{runs}/coil", f"{runs}/baseline", "--out", str(work / "comparison"))
print((work / "comparison" / "compare.csv").read_text())

# %% re-render a visitation dump written at the 20000-step milestone
run("heatmap", f"{runs}/coil/counts/coil_agent1_step20000.counts", "--out", str(work / "agent1_20k"))
