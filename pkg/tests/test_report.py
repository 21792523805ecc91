import xml.etree.ElementTree as ET

import numpy as np

from cgad.config import TEConfig
from cgad.report import (causal_events, causal_events_figure, collective_figure, degree_figure,
                         node_scores_figure, write_svg)
from cgad.scoring import ScoreSeries, detect


def _scores():
    rng = np.random.default_rng(0)
    per_node = rng.normal(size=(3, 200))
    collective = per_node.max(axis=0)
    return ScoreSeries(per_node, collective, 2.5, detect(collective, 2.5), np.zeros(3), np.ones(3),
                       ("a", "b", "c"), np.arange(15, 215))


def _binary_copy(length):
    rng = np.random.default_rng(1)
    source = rng.integers(0, 2, length).astype(float)
    target = np.zeros(length)
    target[1:] = source[:-1]
    return target, source


def test_threshold_line_sits_at_tau():
    fig = collective_figure(_scores())
    lines = [line for line in fig.axes[0].get_lines() if line.get_gid() == "threshold"]
    assert len(lines) == 1
    np.testing.assert_allclose(lines[0].get_ydata(), [2.5, 2.5])


def test_svgs_are_well_formed(tmp_path):
    labels = np.zeros(200, dtype=int)
    labels[50:60] = 1
    paths = [
        write_svg(collective_figure(_scores(), labels), tmp_path / "collective.svg"),
        write_svg(node_scores_figure(_scores(), labels), tmp_path / "nodes.svg"),
        write_svg(degree_figure({"causal": {0: 2, 1: 1}, "top-1": {1: 3}}), tmp_path / "deg.svg"),
    ]
    for path in paths:
        assert ET.parse(path).getroot().tag.endswith("svg")


def test_svg_output_is_reproducible(tmp_path):
    write_svg(collective_figure(_scores()), tmp_path / "1.svg")
    write_svg(collective_figure(_scores()), tmp_path / "2.svg")
    assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()


def test_coupled_blocks_are_highlighted():
    target, source = _binary_copy(5000)
    # decouple everything outside the fourth block
    rng = np.random.default_rng(2)
    mask = np.ones(5000, dtype=bool)
    mask[1500:2000] = False
    target[mask] = rng.integers(0, 2, mask.sum())
    starts, te, highlighted, events = causal_events(target, source, TEConfig(bin_count=2), 500, 10)
    np.testing.assert_array_equal(highlighted, [1500])
    assert te[3] > 0.8
    assert len(events) == 10 * len(starts)


def test_causal_events_svg(tmp_path):
    target, source = _binary_copy(2000)
    fig = causal_events_figure(target, source, ("x0", "x1"), TEConfig(bin_count=2), 500, 10)
    path = write_svg(fig, tmp_path / "events.svg")
    assert ET.parse(path).getroot().tag.endswith("svg")
