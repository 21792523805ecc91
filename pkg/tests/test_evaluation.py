import numpy as np
import pytest
from hypothesis import given, strategies as st

from cgad.errors import DataError, DimensionError
from cgad.evaluation import (CSV_FIELDS, LabeledRun, evaluate, event_recall, f1_composite,
                             f1_point_adjusted, f1_pointwise, grid_search_threshold, load_report,
                             point_adjust, save_report, segments)

binary_pairs = st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=300)


def _run(decisions, labels):
    return LabeledRun(np.array(decisions), np.array(labels))


def _hit_at_4():
    labels = np.zeros(10, dtype=int)
    labels[3:7] = 1
    decisions = np.zeros(10, dtype=int)
    decisions[4] = 1
    return _run(decisions, labels)


@pytest.mark.parametrize("labels, expected", [
    ([0, 1, 1, 0, 1], [(1, 2), (4, 4)]),
    ([0, 0, 0], []),
    ([1, 1, 1, 1, 1], [(0, 4)]),
])
def test_segments(labels, expected):
    assert segments(labels) == expected


@given(st.lists(st.integers(0, 1), max_size=300))
def test_segments_rebuild_labels(labels):
    rebuilt = np.zeros(len(labels), dtype=int)
    for s, e in segments(labels):
        rebuilt[s:e + 1] = 1
    np.testing.assert_array_equal(rebuilt, labels)


def test_pointwise_examples():
    assert f1_pointwise(_run([0, 1, 0], [0, 1, 0]))["f1"] == 1.0
    assert f1_pointwise(_run([0, 0, 0], [0, 1, 1]))["f1"] == 0.0
    point = f1_pointwise(_run([1, 1, 0, 0], [1, 0, 1, 0]))
    assert (point["precision"], point["recall"], point["f1"]) == (0.5, 0.5, 0.5)
    assert (point["tp"], point["fp"], point["fn"], point["tn"]) == (1, 1, 1, 1)


def test_length_mismatch():
    with pytest.raises(DimensionError):
        _run([0, 1], [0, 1, 0])


def test_non_binary_values():
    with pytest.raises(DataError):
        _run([0, 2], [0, 1])


def test_composite_examples():
    assert f1_composite(_hit_at_4()) == 1.0
    assert f1_composite(_run([1, 1, 1], [0, 0, 1])) == pytest.approx(0.5)
    assert f1_composite(_run([0, 0, 0, 0], [0, 1, 1, 0])) == 0.0


def test_composite_without_events_is_zero(caplog):
    assert f1_composite(_run([1, 0, 0], [0, 0, 0])) == 0.0
    assert "no ground-truth events" in caplog.text


def test_point_adjust_examples():
    np.testing.assert_array_equal(point_adjust(_hit_at_4()), [0, 0, 0, 1, 1, 1, 1, 0, 0, 0])
    fp_outside = _run([1, 0, 0, 1, 0], [0, 0, 1, 1, 0])
    np.testing.assert_array_equal(point_adjust(fp_outside), [1, 0, 1, 1, 0])
    np.testing.assert_array_equal(point_adjust(_run([0, 0, 0], [0, 1, 1])), [0, 0, 0])


def test_point_adjusted_f1_examples():
    assert f1_point_adjusted(_hit_at_4()) == 1.0
    assert f1_point_adjusted(_run([0, 0, 0], [0, 1, 1])) == 0.0


@given(binary_pairs)
def test_point_adjusted_never_below_pointwise(pairs):
    run = _run([p[0] for p in pairs], [p[1] for p in pairs])
    assert f1_point_adjusted(run) >= f1_pointwise(run)["f1"] - 1e-12


def test_point_adjusted_dominates_on_random_runs():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        run = _run(rng.integers(0, 2, 40), (rng.random(40) < 0.3).astype(int))
        assert f1_point_adjusted(run) >= f1_pointwise(run)["f1"] - 1e-12


def test_evaluate_full_report():
    report = evaluate([0, 0, 0, 0, 1, 0, 0, 0, 0, 0], [0, 0, 0, 1, 1, 1, 1, 0, 0, 0])
    assert report.gt_event_count == 1 and report.detected_event_count == 1
    assert report.f1_point_adjusted == 1.0
    assert report.f1_composite == 1.0
    assert report.recall == 0.25
    assert not report.no_gt_events


def test_grid_search_finds_a_clean_threshold():
    rng = np.random.default_rng(0)
    calibration = rng.exponential(size=5000)
    collective = rng.exponential(size=1000)
    collective[500:510] = 50.0
    labels = np.zeros(1000, dtype=int)
    labels[500:510] = 1
    cfg, tau, report = grid_search_threshold(calibration, collective, labels)
    assert cfg.risk_q in (1e-2, 1e-3, 1e-4, 1e-5)
    assert tau < 50.0
    assert report.f1_point_adjusted >= 0.9


def test_grid_search_with_nothing_fittable():
    with pytest.raises(DataError):
        grid_search_threshold(np.ones(50), np.ones(10), np.zeros(10, dtype=int))


def test_report_files(tmp_path):
    report = evaluate([0, 1, 1, 0], [0, 1, 0, 0])
    save_report(report, tmp_path / "r.json", tmp_path / "eval.csv", "run-a", "h")
    save_report(report, tmp_path / "r.json", tmp_path / "eval.csv", "run-b", "h")
    assert load_report(tmp_path / "r.json") == report
    lines = (tmp_path / "eval.csv").read_text().splitlines()
    assert lines[0].split(",") == ["run"] + CSV_FIELDS
    assert [line.split(",")[0] for line in lines[1:]] == ["run-a", "run-b"]
