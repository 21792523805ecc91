"""
synth.py
Seeded lag-coupled autoregressive benchmark data.

    x[i, t] = ar * x[i, t-1] + sum(gain * x[src, t-lag] for src -> i) + noise

Anomalies (start, end, node, offset) add a level shift to one node inside
the test segment; labels mark exactly those timestamps.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .causal_graph import CausalGraph, save_graph
from .config import SyntheticSpec
from .series import MultivariateSeries, save_csv

BURN_IN = 200


def node_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(n))


def spectral_radius(spec: SyntheticSpec) -> float:
    max_lag = max([1] + [lag for _, _, lag, _ in spec.coupling])
    n = spec.n
    companion = np.zeros((n * max_lag, n * max_lag))
    companion[:n, :n] += spec.ar * np.eye(n)
    for src, dst, lag, gain in spec.coupling:
        companion[dst, (lag - 1) * n + src] += gain
    companion[n:, :-n] = np.eye(n * (max_lag - 1))
    return float(np.abs(np.linalg.eigvals(companion)).max())


def stabilised(spec: SyntheticSpec, limit: float = 0.95) -> SyntheticSpec:
    rho = spectral_radius(spec)
    if rho < limit:
        return spec
    scale = limit / rho
    logging.warning("[synth] spectral radius %.3f >= %.2f; scaling ar and gains by %.3f", rho, limit, scale)
    return replace(spec, ar=spec.ar * scale,
                   coupling=tuple((s, d, lag, g * scale) for s, d, lag, g in spec.coupling))


def random_coupling(n: int, n_edges: int, seed: int, lag: int = 1,
                    gain: tuple[float, float] = (0.4, 0.8)) -> tuple[tuple[int, int, int, float], ...]:
    """`n_edges` distinct directed edges (no self-loops) with uniform gains."""
    rng = np.random.default_rng(seed)
    pairs = [(s, d) for s in range(n) for d in range(n) if s != d]
    pick = rng.choice(len(pairs), size=n_edges, replace=False)
    return tuple((pairs[k][0], pairs[k][1], lag, float(rng.uniform(*gain))) for k in sorted(pick))


def simulate(spec: SyntheticSpec) -> np.ndarray:
    """Clean N x T realisation (no anomalies)."""
    spec = stabilised(spec.validate())
    rng = np.random.default_rng(spec.rng_seed)
    max_lag = max([1] + [lag for _, _, lag, _ in spec.coupling])
    total = spec.t + BURN_IN
    x = np.zeros((spec.n, total + max_lag))
    noise = rng.normal(0.0, spec.noise_sigma, size=(spec.n, total))
    for t in range(max_lag, total + max_lag):
        step = spec.ar * x[:, t - 1] + noise[:, t - max_lag]
        for src, dst, lag, gain in spec.coupling:
            step[dst] += gain * x[src, t - lag]
        x[:, t] = step
    return x[:, max_lag + BURN_IN:]


def generate(spec: SyntheticSpec) -> tuple[MultivariateSeries, MultivariateSeries, CausalGraph]:
    """(train, labelled test, ground-truth graph)."""
    spec = spec.validate()
    values = simulate(spec)
    labels = np.zeros(spec.t, dtype=np.int64)
    for start, end, node, offset in spec.anomaly_spec:
        values[node, start:end + 1] += offset
        labels[start:end + 1] = 1
    names = node_names(spec.n)
    cut = spec.train_length
    train = MultivariateSeries(values[:, :cut], names)
    test = MultivariateSeries(values[:, cut:], names, labels[cut:])

    truth = np.zeros((spec.n, spec.n))
    for src, dst, _, gain in spec.coupling:
        if src != dst:
            truth[dst, src] += abs(gain)
    return train, test, CausalGraph(truth, names)


def write_synthetic(spec: SyntheticSpec, out_dir: Path, config_hash: str = "") -> dict[str, Path]:
    out_dir = Path(out_dir)
    train, test, truth = generate(spec)
    paths = {
        "train_csv": out_dir / "train.csv",
        "test_csv": out_dir / "test.csv",
        "test_labels": out_dir / "test_labels.txt",
        "true_graph": out_dir / "true_graph.json",
    }
    save_csv(train, paths["train_csv"])
    save_csv(test, paths["test_csv"], paths["test_labels"])
    save_graph(truth, paths["true_graph"], config_hash)
    logging.info("[synth] N=%d T=%d (train %d, test %d), %d edges, %d anomaly windows -> %s",
                 spec.n, spec.t, train.t, test.t, len(spec.coupling), len(spec.anomaly_spec), out_dir)
    return paths
