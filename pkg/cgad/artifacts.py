"""
artifacts.py
Run-directory layout and the small files stages hand to each other.

    <out>/graph.json              pruned causal graph
    <out>/te_matrix.csv           unpruned averaged TE (rows = targets)
    <out>/degree_histogram.csv    causal vs reference out-degree counts
    <out>/normalization.json      per-sensor min / max fitted on train
    <out>/model.json              best-validation checkpoint
    <out>/loss_history.csv
    <out>/calibration.csv         collective scores on validation windows
    <out>/scores.csv
    <out>/report.json, eval.csv
    <out>/report/*.svg
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .config import read_core_version
from .errors import DataError, FormatError
from .series import NormalizationSpec, read_table

NORM_FORMAT = "cgad-normalization"


@dataclass(frozen=True)
class RunPaths:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    graph          = property(lambda self: self.root / "graph.json")
    te_matrix      = property(lambda self: self.root / "te_matrix.csv")
    degree_csv     = property(lambda self: self.root / "degree_histogram.csv")
    normalization  = property(lambda self: self.root / "normalization.json")
    model          = property(lambda self: self.root / "model.json")
    loss_history   = property(lambda self: self.root / "loss_history.csv")
    calibration    = property(lambda self: self.root / "calibration.csv")
    scores         = property(lambda self: self.root / "scores.csv")
    report_json    = property(lambda self: self.root / "report.json")
    eval_csv       = property(lambda self: self.root / "eval.csv")
    figures        = property(lambda self: self.root / "report")
    data           = property(lambda self: self.root / "data")


def require(path: Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} {path} not found")
    return path


# ── normalisation ---------------------------------------------------------
def save_normalization(spec: NormalizationSpec, names, path: Path, config_hash: str = "") -> None:
    doc = {
        "format": NORM_FORMAT,
        "version": read_core_version(),
        "config_hash": config_hash,
        "sensors": list(names),
        "min": [f"{v:.17g}" for v in spec.per_sensor_min],
        "max": [f"{v:.17g}" for v in spec.per_sensor_max],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_normalization(path: Path) -> tuple[NormalizationSpec, tuple[str, ...]]:
    path = require(path, "normalization file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("format") != NORM_FORMAT:
            raise FormatError(f"{path}: not a {NORM_FORMAT} file")
        spec = NormalizationSpec(np.array([float(v) for v in doc["min"]]),
                                 np.array([float(v) for v in doc["max"]]))
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: unreadable normalization ({e})") from e
    return spec, tuple(doc.get("sensors", ()))


# ── matrices and single-column score files ----------------------------------
def _floats(frame, path: Path) -> np.ndarray:
    try:
        return frame.to_numpy(dtype=float)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: non-numeric entry ({e})") from e


def save_matrix(matrix: np.ndarray, names, path: Path) -> None:
    df = pd.DataFrame(np.asarray(matrix), index=list(names), columns=list(names))
    df.index.name = "target"
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, float_format="%.17g", lineterminator="\n")


def load_matrix(path: Path) -> tuple[np.ndarray, tuple[str, ...]]:
    df = read_table(require(path, "matrix file"), index_col=0, float_precision="round_trip")
    if list(df.index) != list(df.columns):
        raise FormatError(f"{path}: row and column names differ")
    return _floats(df, path), tuple(df.columns)


def save_degree_table(histograms: dict[str, dict[int, int]], path: Path) -> None:
    degrees = sorted({d for h in histograms.values() for d in h})
    df = pd.DataFrame({"out_degree": degrees})
    for name, hist in histograms.items():
        df[name] = [hist.get(d, 0) for d in degrees]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")


def save_series(values, path: Path, column: str = "collective") -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({column: np.asarray(values, dtype=float)}).to_csv(
        path, index=False, float_format="%.17g", lineterminator="\n")


def load_series(path: Path, column: str = "collective") -> np.ndarray:
    df = read_table(require(path, "series file"), float_precision="round_trip")
    if column not in df.columns:
        raise FormatError(f"{path}: missing column {column!r}")
    return _floats(df[column], path)
