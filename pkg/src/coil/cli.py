"""Command-line front end: ``coil train | eval | compare | heatmap``.

Experiment files are flat ``key = value`` text (``#`` starts a comment).
Keys are the :class:`~coil.trainer.TrainConfig` fields plus ``run_id``,
``output_dir`` and ``milestones`` (comma-separated total-step counts at
which heatmaps are written). ``--set key=value`` overrides any key.

Exit codes: 0 success, 1 configuration error, 2 training aborted,
3 I/O or checkpoint error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import typing
from pathlib import Path

import numpy as np

from . import metrics, nn
from .errors import ConfigError, TrainingAborted, UsageError
from .trainer import TrainConfig, Trainer, evaluate, fairness_accounting, resample

log = logging.getLogger("coil")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "COIL_OUTPUT_ROOT"
RESOLVED_NAME = "config.resolved"
RUN_KEYS = {"run_id": "run", "output_dir": None, "milestones": ""}


def _field_types():
    hints = typing.get_type_hints(TrainConfig)
    out = {}
    for name, hint in hints.items():
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        out[name] = args[0] if args else hint
    return out


def _convert(key, raw, kind):
    if raw.lower() in ("none", "auto", ""):
        return None
    if kind is tuple:
        return tuple(int(v) for v in raw.split(","))
    if kind is int:
        return int(raw.replace("_", ""))
    if kind is float:
        return float(raw)
    return raw


def parse_pairs(lines, source="<config>"):
    """Parse ``key = value`` lines into a raw string dict, rejecting unknown keys."""
    allowed = set(TrainConfig.field_names()) | set(RUN_KEYS)
    out = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (p.strip() for p in text.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def build_config(raw: dict):
    """Turn raw strings into ``(TrainConfig, run_options)``."""
    types = _field_types()
    values, run = {}, dict(RUN_KEYS)
    for key, value in raw.items():
        if key in RUN_KEYS:
            run[key] = value
            continue
        try:
            converted = _convert(key, value, types[key])
        except ValueError:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
        if converted is not None or TrainConfig.__dataclass_fields__[key].default is None:
            values[key] = converted
    run["milestones"] = sorted(int(m) for m in str(run["milestones"]).split(",") if m.strip())
    if not run["output_dir"]:
        run["output_dir"] = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return TrainConfig.from_dict(values), run


def load_config(path, overrides=()):
    path = Path(path)
    if path.is_dir():
        path = path / RESOLVED_NAME
    raw = parse_pairs(path.read_text().splitlines(), str(path))
    raw.update(parse_pairs(overrides, "--set"))
    return build_config(raw)


def config_text(config: TrainConfig, run: dict) -> str:
    lines = []
    for name in TrainConfig.field_names():
        value = getattr(config, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name} = {value}")
    lines.append(f"run_id = {run['run_id']}")
    lines.append(f"milestones = {','.join(str(m) for m in run['milestones'])}")
    return "\n".join(lines) + "\n"


def _write_episodes(episodes, path):
    rows = ["total_env_steps,agent_id,return,success,length"]
    rows += [f"{e.total_env_steps},{e.agent_id},{e.ret!r},{int(e.success)},{e.length}" for e in episodes]
    Path(path).write_text("\n".join(rows) + "\n")


def _emit_visits(trainer, run_dir, run_id, step):
    for ag in trainer.agents:
        stem = f"{run_id}_agent{ag.agent_id}_step{step}"
        ag.visits.dump(run_dir / "counts" / f"{stem}.counts")
        metrics.emit_heatmap(ag.visits, run_dir / "heatmaps" / stem)


def _write_checkpoints(trainer, run_dir):
    ckpt = run_dir / "checkpoints"
    for ag in trainer.agents:
        nn.save_params(ckpt / f"agent{ag.agent_id}.params", ag.params, trainer.arch)
        if ag.replay is not None:
            ag.replay.dump(ckpt / f"agent{ag.agent_id}.replay")
    trainer.save(ckpt / "trainer.state")


def cmd_train(args) -> int:
    config, run = load_config(args.config, args.set)
    if args.output_dir:
        run["output_dir"] = args.output_dir
    run_dir = Path(run["output_dir"]) / run["run_id"]
    for sub in ("counts", "heatmaps", "checkpoints"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    (run_dir / RESOLVED_NAME).write_text(config_text(config, run))

    state = run_dir / "checkpoints" / "trainer.state"
    if args.resume and state.exists():
        trainer = Trainer.load(state)
        trainer.config = config.replace(total_steps=max(config.total_steps, trainer.total_env_steps))
    else:
        trainer = Trainer(config)
    pending = [m for m in run["milestones"] if m > trainer.total_env_steps]

    def on_iteration(tr):
        while pending and tr.total_env_steps >= pending[0]:
            _emit_visits(tr, run_dir, run["run_id"], pending.pop(0))

    try:
        trainer.run(on_iteration)
    except TrainingAborted as exc:
        metrics.emit_curves(trainer.log, run_dir / "curves.csv")
        (run_dir / "abort.txt").write_text(f"iteration={exc.iteration}\n{exc.diagnostic}\n")
        print(f"training aborted at iteration {exc.iteration}: {exc.diagnostic}", file=sys.stderr)
        return EXIT_ABORT

    metrics.emit_curves(trainer.log, run_dir / "curves.csv")
    _write_episodes(trainer.log.episodes, run_dir / "episodes.csv")
    _emit_visits(trainer, run_dir, run["run_id"], trainer.total_env_steps)
    _write_checkpoints(trainer, run_dir)
    print(f"run written to {run_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, arch = nn.load_params(args.checkpoint)
    config, _ = load_config(args.config, args.set)
    spec = config.grid_spec
    if arch.input_dim != spec.obs_dim:
        raise ConfigError(
            f"checkpoint expects {arch.input_dim} inputs but {spec.kind.value} "
            f"{spec.width}x{spec.height} produces {spec.obs_dim}"
        )
    seed = args.seed if args.seed is not None else config.seed_agent1
    mean_return, success = evaluate(params, arch, spec, args.episodes, seed, config.delay_period)
    print(f"mean_return={mean_return!r}")
    print(f"success_rate={success!r}")
    return EXIT_OK


def _env_signature(config: TrainConfig):
    return (config.grid_spec, config.delay_period)


def _svg_plot(series, path, title):
    """Static line chart: ``series`` is a list of (label, xs, ys)."""
    w, h, pad = 640, 360, 50
    xs_all = np.concatenate([np.asarray(xs, dtype=float) for _, xs, _ in series]) if series else np.zeros(1)
    ys_all = np.concatenate([np.asarray(ys, dtype=float) for _, _, ys in series]) if series else np.zeros(1)
    ys_all = ys_all[np.isfinite(ys_all)]
    x_hi = max(float(xs_all.max()), 1.0)
    y_lo = min(float(ys_all.min()), 0.0) if ys_all.size else 0.0
    y_hi = max(float(ys_all.max()), 1e-9) if ys_all.size else 1.0
    colors = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")

    def sx(x):
        return pad + (w - 2 * pad) * x / x_hi

    def sy(y):
        return h - pad - (h - 2 * pad) * (y - y_lo) / (y_hi - y_lo or 1.0)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<text x="{w / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>',
        f'<text x="{w - pad}" y="{h - pad + 20}" text-anchor="end" font-size="11">{int(x_hi)} total env steps</text>',
        f'<text x="{pad - 5}" y="{pad}" text-anchor="end" font-size="11">{y_hi:.3g}</text>',
        f'<text x="{pad - 5}" y="{h - pad}" text-anchor="end" font-size="11">{y_lo:.3g}</text>',
    ]
    for k, (label, xs, ys) in enumerate(series):
        color = colors[k % len(colors)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        out.append(f'<text x="{w - pad + 4}" y="{pad + 14 * k}" font-size="11" fill="{color}">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def cmd_compare(args) -> int:
    runs = []
    for d in args.run_dirs:
        d = Path(d)
        config, run = load_config(d)
        records = metrics.read_curves(d / "curves.csv")
        combined, _ = fairness_accounting(records)
        runs.append((run["run_id"], config, combined))
    labels, seen = [], {}
    for run_id, _, _ in runs:
        seen[run_id] = seen.get(run_id, 0) + 1
        labels.append(run_id if seen[run_id] == 1 else f"{run_id}#{seen[run_id]}")

    warnings = []
    ref = _env_signature(runs[0][1])
    for label, (_, config, _) in zip(labels[1:], runs[1:]):
        if _env_signature(config) != ref:
            warnings.append(f"{label}: environment differs from {labels[0]}")
    for msg in warnings:
        log.warning(msg)

    grid = np.unique(np.concatenate([c.steps for _, _, c in runs]))
    aligned = [resample(c, grid) for _, _, c in runs]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["total_env_steps"]
    for label in labels:
        header += [f"{label}:mean_return", f"{label}:success_rate"]
    lines = [",".join(header)]
    for i, step in enumerate(grid):
        row = [str(int(step))]
        for c in aligned:
            row += ["" if np.isnan(c.mean_return[i]) else repr(float(c.mean_return[i])),
                    "" if np.isnan(c.success_rate[i]) else repr(float(c.success_rate[i]))]
        lines.append(",".join(row))
    (out_dir / "compare.csv").write_text("\n".join(lines) + "\n")
    (out_dir / "compare_warnings.txt").write_text("".join(m + "\n" for m in warnings))
    _svg_plot([(lb, c.steps, c.success_rate) for lb, (_, _, c) in zip(labels, runs)],
              out_dir / "compare_success.svg", "greedy success rate")
    _svg_plot([(lb, c.steps, c.mean_return) for lb, (_, _, c) in zip(labels, runs)],
              out_dir / "compare_return.svg", "greedy mean return")
    print(f"comparison written to {out_dir}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    counts = metrics.VisitationCounts.load(args.counts)
    out = args.out or Path(args.counts).with_suffix("")
    pgm, svg = metrics.emit_heatmap(counts, out)
    print(f"wrote {pgm} and {svg}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coil", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--output-dir", help=f"output root (default ${OUTPUT_ROOT_ENV} or ./runs)")
    p.add_argument("--resume", action="store_true", help="continue from checkpoints/trainer.state")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a parameter checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--config", required=True, help="experiment file or run directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="merge learning curves of several runs")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", default="comparison")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("heatmap", help="re-render a saved visitation-count dump")
    p.add_argument("counts")
    p.add_argument("--out")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, nn.CheckpointError, UsageError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
