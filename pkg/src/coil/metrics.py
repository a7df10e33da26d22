"""Visitation counts, heatmap rendering, and learning-curve tables.

Every emitter here is byte-deterministic: identical inputs give identical
files.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import UsageError

COUNTS_MAGIC = "coil-counts/1"
CURVE_COLUMNS = (
    "total_env_steps",
    "iteration",
    "agent_id",
    "mean_return",
    "success_rate",
    "valid_sample_ratio",
    "loss_rl",
    "loss_imitation",
)


class VisitationCounts:
    """Per-cell visit tally N(s) for one agent."""

    def __init__(self, shape):
        self.counts = np.zeros(tuple(shape), dtype=np.int64)
        self.total = 0

    @property
    def shape(self):
        return self.counts.shape

    def record_visit(self, pos) -> None:
        x, y = pos
        h, w = self.counts.shape
        if not (0 <= x < w and 0 <= y < h):
            raise UsageError(f"position {pos} outside a {w}x{h} grid")
        self.counts[y, x] += 1
        self.total += 1

    __call__ = record_visit

    def support(self) -> np.ndarray:
        return self.counts > 0

    def copy(self) -> "VisitationCounts":
        out = VisitationCounts(self.shape)
        out.counts[...] = self.counts
        out.total = self.total
        return out

    def dump(self, path) -> None:
        h, w = self.counts.shape
        lines = [f"{COUNTS_MAGIC} height={h} width={w} total={self.total}"]
        lines += [" ".join(str(int(v)) for v in row) for row in self.counts]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "VisitationCounts":
        lines = Path(path).read_text().splitlines()
        head = lines[0].split() if lines else []
        if not head or head[0] != COUNTS_MAGIC:
            raise UsageError(f"{path}: not a visitation-count dump")
        kv = dict(f.split("=", 1) for f in head[1:])
        out = cls((int(kv["height"]), int(kv["width"])))
        out.counts[...] = np.array([[int(v) for v in ln.split()] for ln in lines[1:]], dtype=np.int64)
        out.total = int(kv["total"])
        return out


def rooms_covered(counts, room_map) -> set:
    """Room indices containing at least one visited cell."""
    grid = counts.counts if isinstance(counts, VisitationCounts) else np.asarray(counts)
    rooms = room_map[(grid > 0) & (room_map >= 0)]
    return set(int(r) for r in np.unique(rooms))


def heat_intensity(counts) -> np.ndarray:
    """log(1 + N) rescaled so the most visited cell is 255."""
    grid = counts.counts if isinstance(counts, VisitationCounts) else np.asarray(counts)
    top = grid.max() if grid.size else 0
    if top <= 0:
        return np.zeros(grid.shape, dtype=np.int64)
    return np.rint(255.0 * np.log1p(grid) / np.log1p(top)).astype(np.int64)


# white -> amber -> dark red
_RAMP = ((255, 255, 255), (253, 174, 97), (165, 0, 38))


def _ramp_color(level: int) -> str:
    t = level / 255.0
    if t <= 0.5:
        a, b, u = _RAMP[0], _RAMP[1], t / 0.5
    else:
        a, b, u = _RAMP[1], _RAMP[2], (t - 0.5) / 0.5
    rgb = [int(round(ca + (cb - ca) * u)) for ca, cb in zip(a, b)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def emit_heatmap(counts, path, cell: int = 20):
    """Write ``<path>.pgm`` (plain graymap) and ``<path>.svg``; returns both paths."""
    grid = counts.counts if isinstance(counts, VisitationCounts) else np.asarray(counts)
    level = heat_intensity(grid)
    h, w = grid.shape
    base = Path(path)
    if base.suffix in (".pgm", ".svg"):
        base = base.with_suffix("")
    pgm, svg = base.with_suffix(".pgm"), base.with_suffix(".svg")

    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in level)
    pgm.write_text(f"P2\n{w} {h}\n255\n{rows}\n")

    legend_h = 40
    width_px, height_px = w * cell, h * cell + legend_h
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" '
        f'viewBox="0 0 {width_px} {height_px}">',
        "<defs><linearGradient id=\"ramp\">"
        + "".join(
            f'<stop offset="{k / 4:.2f}" stop-color="{_ramp_color(round(255 * k / 4))}"/>'
            for k in range(5)
        )
        + "</linearGradient></defs>",
    ]
    for y in range(h):
        for x in range(w):
            out.append(
                f'<rect x="{x * cell}" y="{y * cell}" width="{cell}" height="{cell}" '
                f'fill="{_ramp_color(int(level[y, x]))}"><title>N={int(grid[y, x])}</title></rect>'
            )
    bar_y = h * cell + 8
    bar_w = max(width_px - 80, 20)
    out += [
        f'<rect x="40" y="{bar_y}" width="{bar_w}" height="12" fill="url(#ramp)" stroke="#444"/>',
        f'<text x="4" y="{bar_y + 11}" font-size="11" font-family="monospace">0</text>',
        f'<text x="{44 + bar_w}" y="{bar_y + 11}" font-size="11" font-family="monospace">'
        f"{int(grid.max()) if grid.size else 0}</text>",
        f'<text x="40" y="{bar_y + 28}" font-size="10" font-family="monospace">visits (log scale)</text>',
        "</svg>",
    ]
    svg.write_text("\n".join(out) + "\n")
    return pgm, svg


@dataclasses.dataclass
class CurveRecord:
    total_env_steps: int
    iteration: int
    agent_id: int
    mean_return: float
    success_rate: float
    valid_sample_ratio: float
    loss_rl: float
    loss_imitation: float


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def emit_curves(log, path) -> Path:
    """Write one CSV row per (iteration, agent); floats use shortest round-trip repr."""
    records: Iterable[CurveRecord] = getattr(log, "records", log)
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, col)) for col in CURVE_COLUMNS])
    return path


def read_curves(path) -> list:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CURVE_COLUMNS:
            raise UsageError(f"{path}: unexpected curve header {header}")
        out = []
        for row in reader:
            out.append(
                CurveRecord(
                    int(row[0]), int(row[1]), int(row[2]), *(float(v) for v in row[3:])
                )
            )
    return out


def first_crossing(steps, values, threshold) -> float:
    """Smallest x whose value reaches ``threshold``; ``inf`` if never."""
    for x, v in zip(steps, values):
        if not math.isnan(v) and v >= threshold:
            return x
    return math.inf
