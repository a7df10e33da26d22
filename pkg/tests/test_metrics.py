import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coil.errors import UsageError
from coil.metrics import (
    CURVE_COLUMNS,
    CurveRecord,
    VisitationCounts,
    emit_curves,
    emit_heatmap,
    first_crossing,
    heat_intensity,
    read_curves,
    rooms_covered,
)


def test_record_visit_and_bounds():
    vc = VisitationCounts((3, 4))
    vc.record_visit((3, 2))
    vc((3, 2))
    vc((0, 0))
    assert vc.counts[2, 3] == 2 and vc.total == 3
    assert vc.support().sum() == 2
    with pytest.raises(UsageError):
        vc.record_visit((4, 0))
    with pytest.raises(UsageError):
        vc.record_visit((0, -1))


def test_counts_dump_roundtrip(tmp_path):
    vc = VisitationCounts((2, 3))
    for pos in [(0, 0), (2, 1), (2, 1), (1, 0)]:
        vc(pos)
    vc.dump(tmp_path / "c.counts")
    assert (tmp_path / "c.counts").read_text() == "coil-counts/1 height=2 width=3 total=4\n1 1 0\n0 0 2\n"
    back = VisitationCounts.load(tmp_path / "c.counts")
    assert np.array_equal(back.counts, vc.counts) and back.total == 4


def test_heat_intensity_is_log_scaled():
    level = heat_intensity(np.array([[0, 1], [9, 99]]))
    expected = np.rint(255 * np.log1p([[0, 1], [9, 99]]) / np.log(100))
    assert np.array_equal(level, expected)
    assert level[1, 1] == 255 and level[0, 0] == 0
    assert np.all(heat_intensity(np.zeros((2, 2), dtype=int)) == 0)


def test_heatmap_golden(tmp_path):
    counts = np.array([[0, 3], [1, 0], [0, 0]])
    pgm, svg = emit_heatmap(counts, tmp_path / "h")
    # log(2)/log(4) = 0.5 -> 127.5 rounds to the even 128
    assert pgm.read_text() == "P2\n2 3\n255\n0 255\n128 0\n0 0\n"
    text = svg.read_text()
    assert text.startswith('<svg xmlns="http://www.w3.org/2000/svg" width="40" height="100"')
    assert text.count("<rect") == 6 + 1
    assert 'fill="#a50026"><title>N=3</title>' in text  # hottest cell is the darkest ramp colour
    assert 'fill="#ffffff"><title>N=0</title>' in text


def test_heatmap_is_byte_deterministic(tmp_path):
    counts = np.random.default_rng(0).integers(0, 50, (6, 7))
    a = emit_heatmap(counts, tmp_path / "a.svg")
    b = emit_heatmap(counts, tmp_path / "b")
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_rooms_covered():
    room_map = np.array([[-1, 0, 0], [1, -1, 2]])
    vc = VisitationCounts((2, 3))
    vc((2, 0))
    vc((1, 1))  # wall/door cell, no room
    assert rooms_covered(vc, room_map) == {0}
    vc((0, 1))
    assert rooms_covered(vc.counts, room_map) == {0, 1}


records = st.builds(
    CurveRecord,
    total_env_steps=st.integers(0, 10**7),
    iteration=st.integers(0, 10**5),
    agent_id=st.integers(1, 2),
    mean_return=st.floats(-5, 5),
    success_rate=st.floats(0, 1),
    valid_sample_ratio=st.one_of(st.just(math.nan), st.floats(0, 1)),
    loss_rl=st.floats(-10, 10),
    loss_imitation=st.one_of(st.just(math.nan), st.floats(0, 10)),
)


@settings(max_examples=40, deadline=None)
@given(rows=st.lists(records, max_size=10))
def test_curves_roundtrip_exactly(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("c") / "curves.csv"
    emit_curves(rows, path)
    back = read_curves(path)
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        for col in CURVE_COLUMNS:
            x, y = getattr(a, col), getattr(b, col)
            assert (math.isnan(x) and math.isnan(y)) or x == y
    assert path.read_text().splitlines()[0] == ",".join(CURVE_COLUMNS)


def test_read_curves_rejects_foreign_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(UsageError):
        read_curves(tmp_path / "x.csv")


def test_first_crossing():
    assert first_crossing([10, 20, 30], [0.1, 0.85, 0.9], 0.8) == 20
    assert first_crossing([10, 20], [math.nan, 0.8], 0.8) == 20
    assert first_crossing([10, 20], [0.1, 0.2], 0.8) == math.inf
