"""
evaluation.py
Detection metrics from decision / label sequences.
  • point-wise F1 with confusion counts
  • composite F1c = harmonic mean of point-wise precision and event-wise recall
  • point-adjusted F1PA (any hit inside a labelled segment marks all of it)
Zero denominators give 0 throughout.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import PotConfig, read_core_version
from .errors import ConfigError, DataError, DimensionError, FormatError
from .scoring import detect, pot_threshold


@dataclass(frozen=True, eq=False)
class LabeledRun:
    decisions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.decisions).astype(np.int64).ravel()
        y = np.asarray(self.labels).astype(np.int64).ravel()
        if d.shape != y.shape:
            raise DimensionError(f"{d.size} decisions for {y.size} labels")
        if not (np.isin(d, (0, 1)).all() and np.isin(y, (0, 1)).all()):
            raise DataError("decisions and labels must be 0 or 1")
        object.__setattr__(self, "decisions", d)
        object.__setattr__(self, "labels", y)


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    event_recall: float
    f1_composite: float
    f1_point_adjusted: float
    gt_event_count: int
    detected_event_count: int
    no_gt_events: bool = False


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


def _f1(p: float, r: float) -> float:
    return _ratio(2 * p * r, p + r)


def segments(labels) -> list[tuple[int, int]]:
    """Maximal runs of 1s as inclusive (start, end) pairs."""
    y = np.asarray(labels).astype(np.int8).ravel()
    edges = np.diff(np.concatenate([[0], y, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return [(int(s), int(e)) for s, e in zip(starts, ends)]


def confusion(run: LabeledRun) -> tuple[int, int, int, int]:
    d, y = run.decisions, run.labels
    tp = int(((d == 1) & (y == 1)).sum())
    fp = int(((d == 1) & (y == 0)).sum())
    fn = int(((d == 0) & (y == 1)).sum())
    tn = int(((d == 0) & (y == 0)).sum())
    return tp, fp, fn, tn


def f1_pointwise(run: LabeledRun) -> dict:
    tp, fp, fn, tn = confusion(run)
    p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "precision": p, "recall": r, "f1": _f1(p, r)}


def event_recall(run: LabeledRun) -> float:
    events = segments(run.labels)
    hits = sum(1 for s, e in events if run.decisions[s:e + 1].any())
    return _ratio(hits, len(events))


def f1_composite(run: LabeledRun) -> float:
    if not segments(run.labels):
        logging.warning("[eval] no ground-truth events; F1c defined as 0")
        return 0.0
    return _f1(f1_pointwise(run)["precision"], event_recall(run))


def point_adjust(run: LabeledRun) -> np.ndarray:
    adjusted = run.decisions.copy()
    for s, e in segments(run.labels):
        if adjusted[s:e + 1].any():
            adjusted[s:e + 1] = 1
    return adjusted


def f1_point_adjusted(run: LabeledRun) -> float:
    return f1_pointwise(LabeledRun(point_adjust(run), run.labels))["f1"]


def evaluate(decisions, labels) -> EvalReport:
    run = LabeledRun(decisions, labels)
    point = f1_pointwise(run)
    gt = segments(run.labels)
    return EvalReport(
        **point,
        event_recall=event_recall(run),
        f1_composite=f1_composite(run),
        f1_point_adjusted=f1_point_adjusted(run),
        gt_event_count=len(gt),
        detected_event_count=len(segments(run.decisions)),
        no_gt_events=not gt,
    )


# ── threshold grid ----------------------------------------------------------
def grid_search_threshold(calibration, collective, labels,
                          quantiles: Iterable[float] = (0.95, 0.97, 0.98, 0.99),
                          risks: Iterable[float] = (1e-2, 1e-3, 1e-4, 1e-5),
                          min_peaks: int = 10) -> tuple[PotConfig, float, EvalReport]:
    """Best-F1PA POT setting over a (initial_quantile, risk_q) grid.

    Settings that cannot be fitted (too few peaks) are skipped.
    """
    best = None
    for q in quantiles:
        for risk in risks:
            cfg = PotConfig(initial_quantile=q, risk_q=risk, min_peaks=min_peaks)
            try:
                tau = pot_threshold(calibration, cfg)
            except ConfigError as e:
                logging.debug("[eval] grid point q=%g risk=%g skipped: %s", q, risk, e)
                continue
            report = evaluate(detect(collective, tau), labels)
            if best is None or report.f1_point_adjusted > best[2].f1_point_adjusted:
                best = (cfg, tau, report)
    if best is None:
        raise DataError("no grid point could be fitted")
    return best


# ── report files --------------------------------------------------------------
CSV_FIELDS = [f for f in EvalReport.__dataclass_fields__]


def save_report(report: EvalReport, json_path: Path, csv_path: Path | None = None,
                run_name: str = "", config_hash: str = "") -> None:
    doc = {"format": "cgad-eval", "version": read_core_version(),
           "config_hash": config_hash, "run": run_name, **asdict(report)}
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    if csv_path is not None:
        csv_path = Path(csv_path)
        new = not csv_path.exists()
        with csv_path.open("a", encoding="utf-8") as f:
            if new:
                f.write(",".join(["run"] + CSV_FIELDS) + "\n")
            row = [run_name] + [str(getattr(report, k)) for k in CSV_FIELDS]
            f.write(",".join(row) + "\n")


def load_report(path: Path) -> EvalReport:
    path = Path(path)
    if not path.exists():
        raise DataError(f"report file {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return EvalReport(**{k: doc[k] for k in CSV_FIELDS})
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{path}: not a report file ({e})") from e
