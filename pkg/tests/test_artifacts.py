import numpy as np
import pytest

from cgad.artifacts import (RunPaths, load_matrix, load_normalization, load_series, save_degree_table,
                            save_matrix, save_normalization, save_series)
from cgad.errors import FormatError, ParseError
from cgad.series import NormalizationSpec


def test_run_paths_layout(tmp_path):
    paths = RunPaths(tmp_path)
    assert paths.graph == tmp_path / "graph.json"
    assert paths.figures == tmp_path / "report"


def test_normalization_round_trip(tmp_path):
    spec = NormalizationSpec(np.array([0.1, -2.0]), np.array([0.7, 3.0]))
    save_normalization(spec, ("a", "b"), tmp_path / "n.json", "h")
    back, names = load_normalization(tmp_path / "n.json")
    assert names == ("a", "b")
    np.testing.assert_array_equal(back.per_sensor_min, spec.per_sensor_min)
    np.testing.assert_array_equal(back.per_sensor_max, spec.per_sensor_max)


def test_normalization_wrong_file(tmp_path):
    (tmp_path / "n.json").write_text('{"format": "other"}')
    with pytest.raises(FormatError):
        load_normalization(tmp_path / "n.json")


def test_matrix_round_trip(tmp_path):
    te = np.random.default_rng(0).random((3, 3))
    save_matrix(te, ("a", "b", "c"), tmp_path / "te.csv")
    back, names = load_matrix(tmp_path / "te.csv")
    np.testing.assert_array_equal(back, te)
    assert names == ("a", "b", "c")


def test_degree_table(tmp_path):
    save_degree_table({"causal": {0: 2, 2: 1}, "top-1": {1: 3}}, tmp_path / "deg.csv")
    lines = (tmp_path / "deg.csv").read_text().splitlines()
    assert lines == ["out_degree,causal,top-1", "0,2,0", "1,0,3", "2,1,0"]


def test_series_round_trip(tmp_path):
    values = np.array([0.5, 1.25, 3.0])
    save_series(values, tmp_path / "c.csv")
    np.testing.assert_array_equal(load_series(tmp_path / "c.csv"), values)


def test_matrix_with_text_cell(tmp_path):
    (tmp_path / "m.csv").write_text("target,a,b\na,0,oops\nb,1,0\n")
    with pytest.raises(FormatError):
        load_matrix(tmp_path / "m.csv")


def test_series_with_ragged_row(tmp_path):
    (tmp_path / "s.csv").write_text("collective\n1.0\n2.0,3.0,4.0\n")
    with pytest.raises(ParseError):
        load_series(tmp_path / "s.csv")
