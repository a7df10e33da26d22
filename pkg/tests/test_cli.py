import csv

import pytest

from coil import cli
from coil.errors import ConfigError

BASE_CONFIG = """\
# tiny smoke experiment
algo = CoIL
env_kind = Empty
width = 5
height = 5
max_steps = 12
horizon = 32
total_steps = 640   # ten iterations
eval_every = 320
eval_episodes = 2
imitation_batch = 8
M = 2
run_id = smoke
milestones = 320
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(BASE_CONFIG)
    return path


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_parse_pairs_reports_line_of_unknown_key():
    with pytest.raises(ConfigError, match=r"exp:3: unknown key 'colour'"):
        cli.parse_pairs(["algo = SIL", "", "colour = red"], "exp")
    with pytest.raises(ConfigError, match="duplicate"):
        cli.parse_pairs(["M = 1", "M = 2"])
    with pytest.raises(ConfigError, match="expected"):
        cli.parse_pairs(["just words"])


def test_build_config_converts_types():
    raw = cli.parse_pairs(["M = 3", "lr = 1e-3", "hidden = 32,16", "total_steps = 1_000", "base = auto"])
    config, run = cli.build_config(raw)
    assert (config.M, config.lr, config.hidden, config.total_steps) == (3, 1e-3, (32, 16), 1000)
    assert config.base == "A2C" and run["run_id"] == "run"
    with pytest.raises(ConfigError):
        cli.build_config({"M": "three"})


def test_output_root_from_environment(monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, "/somewhere")
    _, run = cli.build_config({})
    assert run["output_dir"] == "/somewhere"


def test_train_writes_expected_tree(config_file, tmp_path):
    out = tmp_path / "runs"
    assert cli.main(["train", str(config_file), "--output-dir", str(out)]) == 0
    files = set(tree(out / "smoke"))
    assert {
        "config.resolved", "curves.csv", "episodes.csv",
        "counts/smoke_agent1_step320.counts", "counts/smoke_agent2_step640.counts",
        "heatmaps/smoke_agent1_step320.svg", "heatmaps/smoke_agent2_step640.pgm",
        "checkpoints/agent1.params", "checkpoints/agent2.replay", "checkpoints/trainer.state",
    } <= files
    rows = list(csv.DictReader(open(out / "smoke" / "curves.csv")))
    assert [r["total_env_steps"] for r in rows] == ["320", "320", "640", "640"]


def test_train_is_byte_deterministic(config_file, tmp_path):
    for name in ("a", "b"):
        assert cli.main(["train", str(config_file), "--output-dir", str(tmp_path / name)]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_resolved_config_reproduces_the_run(config_file, tmp_path):
    cli.main(["train", str(config_file), "--output-dir", str(tmp_path / "a")])
    resolved = tmp_path / "a" / "smoke" / "config.resolved"
    assert cli.main(["train", str(resolved), "--output-dir", str(tmp_path / "b")]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_resume_extends_a_finished_run(config_file, tmp_path):
    out = tmp_path / "r"
    cli.main(["train", str(config_file), "--output-dir", str(out), "--set", "total_steps=320"])
    assert cli.main(["train", str(config_file), "--output-dir", str(out), "--resume"]) == 0
    cli.main(["train", str(config_file), "--output-dir", str(tmp_path / "s")])
    resumed, straight = tree(out / "smoke"), tree(tmp_path / "s" / "smoke")
    for name in ("curves.csv", "checkpoints/agent1.params", "checkpoints/agent2.params"):
        assert resumed[name] == straight[name]


def test_unknown_key_exits_with_config_error(config_file, tmp_path, capsys):
    code = cli.main(["train", str(config_file), "--output-dir", str(tmp_path), "--set", "colour=red"])
    assert code == cli.EXIT_CONFIG
    assert "unknown key 'colour'" in capsys.readouterr().err


def test_missing_file_exits_with_io_error(tmp_path):
    assert cli.main(["train", str(tmp_path / "nope.cfg")]) == cli.EXIT_IO
    assert cli.main(["heatmap", str(tmp_path / "nope.counts")]) == cli.EXIT_IO


def test_abort_exit_code_and_partial_outputs(config_file, tmp_path):
    # an absurd learning rate drives the networks to non-finite values
    code = cli.main(["train", str(config_file), "--output-dir", str(tmp_path),
                     "--set", "lr=1e300", "--set", "base=PPO"])
    assert code == cli.EXIT_ABORT
    assert (tmp_path / "smoke" / "abort.txt").read_text().startswith("iteration=")
    assert (tmp_path / "smoke" / "curves.csv").exists()


def test_eval_and_mismatch(config_file, tmp_path, capsys):
    cli.main(["train", str(config_file), "--output-dir", str(tmp_path)])
    capsys.readouterr()
    run = tmp_path / "smoke"
    ckpt = str(run / "checkpoints" / "agent1.params")
    assert cli.main(["eval", ckpt, "--config", str(run), "--episodes", "3"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("mean_return=") and "success_rate=" in out
    assert cli.main(["eval", ckpt, "--config", str(run), "--set", "width=6"]) == cli.EXIT_CONFIG
    (run / "bad.params").write_bytes(b"garbage")
    assert cli.main(["eval", str(run / "bad.params"), "--config", str(run)]) == cli.EXIT_IO


def test_compare_merges_runs_and_warns_on_env_mismatch(config_file, tmp_path):
    cli.main(["train", str(config_file), "--output-dir", str(tmp_path)])
    cli.main(["train", str(config_file), "--output-dir", str(tmp_path),
              "--set", "run_id=sil", "--set", "algo=SIL", "--set", "eval_every=160"])
    cli.main(["train", str(config_file), "--output-dir", str(tmp_path),
              "--set", "run_id=wide", "--set", "width=6"])
    out = tmp_path / "cmp"
    runs = [str(tmp_path / r) for r in ("smoke", "sil", "wide")]
    assert cli.main(["compare", *runs, "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "compare.csv")))
    assert rows[0] == ["total_env_steps", "smoke:mean_return", "smoke:success_rate",
                       "sil:mean_return", "sil:success_rate", "wide:mean_return", "wide:success_rate"]
    assert [r[0] for r in rows[1:]] == ["160", "320", "480", "640"]
    assert rows[1][1] == ""  # smoke has no point at 160 yet
    assert (out / "compare_warnings.txt").read_text() == "wide: environment differs from smoke\n"
    assert (out / "compare_success.svg").read_text().startswith("<svg")


def test_heatmap_rerenders_dump(config_file, tmp_path):
    cli.main(["train", str(config_file), "--output-dir", str(tmp_path)])
    counts = tmp_path / "smoke" / "counts" / "smoke_agent1_step640.counts"
    assert cli.main(["heatmap", str(counts), "--out", str(tmp_path / "again")]) == 0
    original = tmp_path / "smoke" / "heatmaps" / "smoke_agent1_step640.svg"
    assert (tmp_path / "again.svg").read_bytes() == original.read_bytes()
