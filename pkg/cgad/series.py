"""
series.py
Multivariate time-series data model shared by every stage.
  • CSV ingestion (header of sensor names, one row per timestamp)
  • min-max normalisation fitted on training data only
  • contiguous train / validation split
  • sliding-window extraction for single-step forecasting
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, DataError, DimensionError, ParseError


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class MultivariateSeries:
    """N sensors x T timestamps, optional 0/1 labels per timestamp."""
    values: np.ndarray
    sensor_names: tuple[str, ...]
    labels: np.ndarray | None = None
    t0: float | None = None

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2:
            raise DimensionError(f"values must be N x T, got shape {values.shape}")
        n, t = values.shape
        if n < 1 or t < 1:
            raise DimensionError(f"series needs N >= 1 and T >= 1, got {values.shape}")
        if not np.isfinite(values).all():
            raise DataError("series contains non-finite values")
        names = tuple(str(s) for s in self.sensor_names)
        if len(names) != n:
            raise DimensionError(f"{len(names)} sensor names for {n} rows")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sensor_names", names)
        if self.labels is not None:
            labels = _frozen(self.labels, dtype=np.int64)
            if labels.shape != (t,):
                raise DimensionError(f"labels have length {labels.size}, series has T={t}")
            if not np.isin(labels, (0, 1)).all():
                raise DataError("labels must be 0 or 1")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> MultivariateSeries:
        labels = None if self.labels is None else self.labels[start:stop]
        return MultivariateSeries(self.values[:, start:stop], self.sensor_names, labels, self.t0)

    def with_values(self, values: np.ndarray) -> MultivariateSeries:
        return MultivariateSeries(values, self.sensor_names, self.labels, self.t0)


@dataclass(frozen=True, eq=False)
class NormalizationSpec:
    per_sensor_min: np.ndarray
    per_sensor_max: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.per_sensor_min), _frozen(self.per_sensor_max)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("min and max must be equal-length vectors")
        if (lo > hi).any():
            raise ArgumentError("per_sensor_min must not exceed per_sensor_max")
        object.__setattr__(self, "per_sensor_min", lo)
        object.__setattr__(self, "per_sensor_max", hi)


@dataclass(frozen=True, eq=False)
class WindowBatch:
    inputs: np.ndarray      # B x N x w
    targets: np.ndarray     # B x N
    end_times: np.ndarray   # B, 0-based index of the target timestamp

    def __len__(self) -> int:
        return self.targets.shape[0]


# ── ingestion ----------------------------------------------------------------
def read_table(path: Path, **kwargs) -> pd.DataFrame:
    """pd.read_csv with pandas / decoding failures raised as ParseError."""
    try:
        return pd.read_csv(path, **kwargs)
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path}: empty file") from e
    except pd.errors.ParserError as e:
        raise ParseError(f"{path}: malformed row: {e}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not UTF-8 text (byte {e.start})") from e


def load_labels(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"label file {path} not found")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not UTF-8 text (byte {e.start})") from e
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        token = line.strip()
        if not token:
            continue
        if token not in ("0", "1"):
            raise ParseError(f"label {token!r} is not 0 or 1", row=i)
        out.append(int(token))
    return np.asarray(out, dtype=np.int64)


def load_csv(path: Path, label_path: Path | None = None) -> MultivariateSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file {path} not found")
    df = read_table(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    if df.empty:
        raise ParseError(f"{path}: no data rows")

    raw = df.to_numpy(dtype=object)
    numeric = df.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(numeric) | pd.isna(raw)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        cell = raw[r, c]
        # file line = data row + header line, 1-based
        raise ParseError(f"{path}: non-numeric or missing cell {cell!r}",
                         row=int(r) + 2, column=str(df.columns[c]))
    if numeric.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {numeric.shape[0]}")

    labels = None
    if label_path is not None:
        labels = load_labels(label_path)
        if labels.size != numeric.shape[0]:
            raise DimensionError(
                f"label file has {labels.size} rows, data has {numeric.shape[0]}")
    # exact parse: save_csv output loads back bit-for-bit
    return MultivariateSeries(raw.astype(float).T, tuple(df.columns), labels)


def save_csv(series: MultivariateSeries, path: Path, label_path: Path | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(series.values.T, columns=list(series.sensor_names))
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    if label_path is not None and series.labels is not None:
        Path(label_path).write_text("".join(f"{int(v)}\n" for v in series.labels))


# ── normalisation ------------------------------------------------------------
def fit_minmax(train: MultivariateSeries) -> NormalizationSpec:
    return NormalizationSpec(train.values.min(axis=1), train.values.max(axis=1))


def apply_minmax(series: MultivariateSeries, spec: NormalizationSpec) -> MultivariateSeries:
    if spec.per_sensor_min.size != series.n:
        raise DimensionError(
            f"normalisation fitted on {spec.per_sensor_min.size} sensors, series has {series.n}")
    lo = spec.per_sensor_min[:, None]
    span = (spec.per_sensor_max - spec.per_sensor_min)[:, None]
    # constant sensors map to 0; no clamping of out-of-range test values
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (series.values - lo) / safe, 0.0)
    return series.with_values(scaled)


# ── splitting and windowing --------------------------------------------------
def split_train_val(series: MultivariateSeries, val_fraction: float
                    ) -> tuple[MultivariateSeries, MultivariateSeries]:
    if not 0 < val_fraction < 1:
        raise ArgumentError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n_train = math.floor(round((1 - val_fraction) * series.t, 9))
    if n_train < 1 or n_train >= series.t:
        raise ArgumentError(f"split of T={series.t} at {val_fraction} leaves an empty part")
    return series.slice(0, n_train), series.slice(n_train, series.t)


def window_arrays(series: MultivariateSeries, w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (input, target, end_time) triples: inputs T-w x N x w, targets T-w x N."""
    if not 1 <= w < series.t:
        raise ArgumentError(f"window size w={w} must satisfy 1 <= w < T={series.t}")
    views = sliding_window_view(series.values, w, axis=1)      # N x (T-w+1) x w
    inputs = np.ascontiguousarray(views[:, :-1, :].transpose(1, 0, 2))
    targets = np.ascontiguousarray(series.values[:, w:].T)
    return inputs, targets, np.arange(w, series.t)


def batches_of(inputs: np.ndarray, targets: np.ndarray, end_times: np.ndarray,
               batch_size: int, order: Sequence[int] | None = None) -> Iterator[WindowBatch]:
    if batch_size < 1:
        raise ArgumentError("batch_size must be >= 1")
    idx = np.arange(len(targets)) if order is None else np.asarray(order)
    for start in range(0, len(idx), batch_size):
        sel = idx[start:start + batch_size]
        yield WindowBatch(inputs[sel], targets[sel], end_times[sel])


def make_windows(series: MultivariateSeries, w: int, batch_size: int) -> list[WindowBatch]:
    return list(batches_of(*window_arrays(series, w), batch_size))
