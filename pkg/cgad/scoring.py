"""
scoring.py
Forecast errors -> anomaly decisions.
  • absolute error per node and timestamp
  • modified z-score with per-node median / MAD
  • collective score = max over nodes
  • peaks-over-threshold: GPD fit on excesses (Grimshaw MLE checked against
    scipy's genpareto fit, moments fallback)
  • strict decision rule  y_t = 1  iff  s_t > τ
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.stats import chi2, genpareto

from .config import PotConfig, read_core_version
from .errors import ConfigError, DataError, DimensionError, FormatError, ParseError
from .series import read_table

MAD_FLOOR = 1e-9
XI_ZERO = 1e-8
EXP_TAIL_LEVEL = 0.99


@dataclass(frozen=True, eq=False)
class ScoreSeries:
    per_node_scores: np.ndarray     # N x Tt
    collective: np.ndarray          # Tt
    threshold: float
    decisions: np.ndarray           # Tt, 0/1
    per_node_median: np.ndarray     # N
    per_node_mad: np.ndarray        # N
    node_names: tuple[str, ...] = ()
    time_index: np.ndarray | None = None


@dataclass(frozen=True)
class PotFit:
    initial_threshold: float
    xi: float
    sigma: float
    n_peaks: int
    n_obs: int
    threshold: float
    method: str


# ── errors and robust scores ------------------------------------------------
def forecast_errors(pred, actual) -> np.ndarray:
    pred, actual = np.asarray(pred, dtype=float), np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise DimensionError(f"prediction {pred.shape} and actual {actual.shape} differ")
    return np.abs(pred - actual)


def robust_stats(errors) -> tuple[np.ndarray, np.ndarray]:
    """Per-row median and MAD (floored at MAD_FLOOR)."""
    e = np.atleast_2d(np.asarray(errors, dtype=float))
    med = np.median(e, axis=1)
    mad = np.median(np.abs(e - med[:, None]), axis=1)
    return med, np.maximum(mad, MAD_FLOOR)


def zscore(errors, med, mad) -> np.ndarray:
    e = np.atleast_2d(np.asarray(errors, dtype=float))
    med, mad = np.asarray(med, dtype=float), np.asarray(mad, dtype=float)
    if med.shape != (e.shape[0],) or mad.shape != (e.shape[0],):
        raise DimensionError(f"statistics for {med.size} nodes, errors have {e.shape[0]}")
    return (e - med[:, None]) / mad[:, None]


def mad_zscore(errors) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    med, mad = robust_stats(errors)
    return zscore(errors, med, mad), med, mad


def collective_score(per_node_scores) -> np.ndarray:
    a = np.atleast_2d(np.asarray(per_node_scores, dtype=float))
    return a.max(axis=0)


def detect(collective, tau: float) -> np.ndarray:
    return (np.asarray(collective, dtype=float) > tau).astype(np.int64)


# ── peaks over threshold ------------------------------------------------------
def _gpd_loglik(y: np.ndarray, xi: float, sigma: float) -> float:
    n = y.size
    if sigma <= 0:
        return -np.inf
    if abs(xi) < XI_ZERO:
        return -n * np.log(sigma) - y.sum() / sigma
    z = 1.0 + xi * y / sigma
    if (z <= 0).any():
        return -np.inf
    return float(-n * np.log(sigma) - (1.0 + 1.0 / xi) * np.log(z).sum())


def _roots(fun, grid: np.ndarray) -> np.ndarray:
    """Zeros of fun bracketed by sign changes over an increasing grid."""
    values = fun(grid)
    zeros = []
    for i in np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0):
        zeros.append(brentq(lambda t: float(fun(np.array([t]))[0]), grid[i], grid[i + 1]))
    return np.array(zeros)


def _grimshaw(y: np.ndarray, eps: float = 1e-8, n_points: int = 200) -> tuple[float, float]:
    """GPD (xi, sigma) by Grimshaw's reduction to a one-dimensional root search.

    Roots of w(t) are bracketed on log-spaced grids over (-1/y_max, 0) and
    (0, 2(ȳ - y_min)/y_min²]; every candidate, the exponential fit and
    scipy's GPD fit are compared by log-likelihood. The exponential fit is
    kept unless a likelihood-ratio test at EXP_TAIL_LEVEL rejects xi = 0.
    """
    def u(s):
        return 1.0 + np.log(s).mean()

    def w(t):
        t = np.atleast_1d(t)
        s = 1.0 + t[:, None] * y[None, :]
        return (1.0 + np.log(s).mean(axis=1)) * np.mean(1.0 / s, axis=1) - 1.0

    y_min, y_max, y_mean = y.min(), y.max(), y.mean()
    if y_min <= 0:
        raise FloatingPointError("excesses must be strictly positive")
    lo = eps / y_max
    neg_hi = 1.0 / y_max * (1.0 - eps)
    pos_hi = max(2 * (y_mean - y_min) / (y_min ** 2), 10 * lo)
    zeros = np.concatenate([
        _roots(w, -np.geomspace(neg_hi, lo, n_points)),
        _roots(w, np.geomspace(lo, pos_hi, n_points)),
    ])

    candidates = [(0.0, y_mean)]
    for z in zeros:
        if z == 0 or (1.0 + z * y <= 0).any():
            continue
        xi = u(1.0 + z * y) - 1.0
        candidates.append((xi, xi / z))
    shape, _, scale = genpareto.fit(y, floc=0)
    candidates.append((shape, scale))

    best_xi, best_sigma, best_ll = 0.0, y_mean, -np.inf
    for xi, sigma in candidates:
        ll = _gpd_loglik(y, xi, sigma)
        if np.isfinite(ll) and ll > best_ll:
            best_xi, best_sigma, best_ll = xi, sigma, ll
    if not (np.isfinite(best_ll) and np.isfinite(best_xi) and best_sigma > 0):
        raise FloatingPointError("no finite likelihood maximum")
    # keep the exponential tail unless the likelihood-ratio test rejects xi = 0
    if 2.0 * (best_ll - _gpd_loglik(y, 0.0, y_mean)) < chi2.ppf(EXP_TAIL_LEVEL, df=1):
        return 0.0, float(y_mean)
    return float(best_xi), float(best_sigma)


def _moments(y: np.ndarray) -> tuple[float, float]:
    m, var = y.mean(), y.var()
    if var <= 0:
        return 0.0, float(max(m, MAD_FLOOR))
    ratio = m * m / var
    return float(0.5 * (1.0 - ratio)), float(max(0.5 * m * (1.0 + ratio), MAD_FLOOR))


def min_scores(cfg: PotConfig) -> int:
    """Smallest population fit_pot accepts at cfg.initial_quantile."""
    return int(np.ceil(cfg.min_peaks / (1.0 - cfg.initial_quantile)))


def fit_pot(scores, cfg: PotConfig) -> PotFit:
    cfg.validate()
    s = np.asarray(scores, dtype=float).ravel()
    needed = min_scores(cfg)
    if s.size < needed:
        raise ConfigError(
            f"POT needs at least {needed} scores at initial_quantile="
            f"{cfg.initial_quantile}, got {s.size}; lower pot.initial_quantile")
    u = float(np.quantile(s, cfg.initial_quantile))
    peaks = s[s > u] - u
    if peaks.size < cfg.min_peaks:
        raise ConfigError(
            f"only {peaks.size} excesses over the {cfg.initial_quantile} quantile "
            f"(need {cfg.min_peaks}); lower pot.initial_quantile")
    try:
        with np.errstate(all="ignore"):
            xi, sigma = _grimshaw(peaks)
        method = "grimshaw"
    except (FloatingPointError, ValueError, RuntimeError) as e:
        logging.warning("[pot] likelihood search failed (%s); using method of moments", e)
        xi, sigma = _moments(peaks)
        method = "moments"

    r = cfg.risk_q * s.size / peaks.size
    if abs(xi) < XI_ZERO:
        tau = u - sigma * np.log(r)
    else:
        tau = u + sigma / xi * (r ** (-xi) - 1.0)
    logging.info("[pot] u=%.6g xi=%.4g sigma=%.4g peaks=%d tau=%.6g (%s)",
                 u, xi, sigma, peaks.size, tau, method)
    return PotFit(u, xi, sigma, int(peaks.size), int(s.size), float(tau), method)


def pot_threshold(scores, cfg: PotConfig) -> float:
    return fit_pot(scores, cfg).threshold


# ── pipeline --------------------------------------------------------------------
def score_forecasts(pred, actual, cfg: PotConfig, calibration: tuple | None = None,
                    node_names=(), time_index=None) -> ScoreSeries:
    """Errors, MAD z-scores, collective score, POT threshold and decisions.

    pred and actual are T x N (window x node). `calibration` is an optional
    (pred, actual) pair from clean validation windows; it feeds the med/MAD
    statistics when cfg.mad_source is "validation" and the POT fit when
    cfg.calibration is "validation"; a validation population too small for POT
    falls back to the test scores with a warning.
    """
    cfg.validate()
    errors = forecast_errors(pred, actual).T
    cal_errors = None if calibration is None else forecast_errors(*calibration).T
    if cal_errors is None and "validation" in (cfg.mad_source, cfg.calibration):
        raise ConfigError("validation calibration requested but no validation forecasts given")

    med, mad = robust_stats(cal_errors if cfg.mad_source == "validation" else errors)
    per_node = zscore(errors, med, mad)
    collective = collective_score(per_node)
    reference = collective
    if cfg.calibration == "validation":
        reference = collective_score(zscore(cal_errors, med, mad))
        if reference.size < min_scores(cfg) <= collective.size:
            logging.warning("[pot] %d validation scores, POT needs %d; fitting on the %d test scores",
                            reference.size, min_scores(cfg), collective.size)
            reference = collective
    tau = pot_threshold(reference, cfg)
    return ScoreSeries(per_node, collective, tau, detect(collective, tau), med, mad,
                       tuple(node_names), None if time_index is None else np.asarray(time_index))


# ── score file ----------------------------------------------------------------------
def save_scores(scores: ScoreSeries, path: Path, config_hash: str = "") -> None:
    n = scores.per_node_scores.shape[0]
    names = list(scores.node_names) or [f"node{i}" for i in range(n)]
    t_index = scores.time_index if scores.time_index is not None else np.arange(scores.collective.size)
    df = pd.DataFrame({"time_index": t_index})
    for name, row in zip(names, scores.per_node_scores):
        df[name] = row
    df["collective"] = scores.collective
    df["decision"] = scores.decisions
    header = [
        f"# cgad-scores version={read_core_version()} config_hash={config_hash}",
        f"# threshold={scores.threshold:.17g}",
        "# median=" + ",".join(f"{v:.17g}" for v in scores.per_node_median),
        "# mad=" + ",".join(f"{v:.17g}" for v in scores.per_node_mad),
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write("\n".join(header) + "\n")
        df.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")


def load_scores(path: Path) -> ScoreSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"score file {path} not found")
    meta = {}
    try:
        with path.open(encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                for token in line[1:].split():
                    if "=" in token:
                        k, v = token.split("=", 1)
                        meta[k] = v
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not UTF-8 text (byte {e.start})") from e
    if "threshold" not in meta:
        raise FormatError(f"{path}: missing '# threshold=' header")
    df = read_table(path, comment="#", float_precision="round_trip")
    if not {"time_index", "collective", "decision"} <= set(df.columns):
        raise FormatError(f"{path}: missing score columns")
    node_cols = [c for c in df.columns if c not in ("time_index", "collective", "decision")]

    def floats(key):
        return np.array([float(v) for v in meta[key].split(",")]) if meta.get(key) else np.zeros(len(node_cols))

    try:
        return ScoreSeries(
            per_node_scores=df[node_cols].to_numpy(dtype=float).T,
            collective=df["collective"].to_numpy(dtype=float),
            threshold=float(meta["threshold"]),
            decisions=df["decision"].to_numpy(dtype=np.int64),
            per_node_median=floats("median"),
            per_node_mad=floats("mad"),
            node_names=tuple(node_cols),
            time_index=df["time_index"].to_numpy(dtype=np.int64),
        )
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: non-numeric score entry ({e})") from e
