"""
report.py
Static SVG figures for a run directory.
  • out-degree histograms: causal graph vs fully-connected vs top-k
  • per-node anomaly scores
  • collective score with threshold line and labelled anomaly shading
  • causal events for one node pair: block-wise TE, top-decile blocks shaded,
    strongest local-TE timestamps marked
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .causal_graph import local_transfer_entropy, top_events, windowed_te  # noqa: E402
from .config import TEConfig  # noqa: E402
from .evaluation import segments  # noqa: E402
from .scoring import ScoreSeries  # noqa: E402

# reproducible element ids in the SVG output
matplotlib.rcParams["svg.hashsalt"] = "cgad"
MAX_PANELS = 20


def write_svg(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def degree_figure(histograms: Mapping[str, Mapping[int, int]]):
    fig, ax = plt.subplots(figsize=(8, 4))
    degrees = sorted({d for h in histograms.values() for d in h})
    width = 0.8 / max(len(histograms), 1)
    x = np.arange(len(degrees))
    for k, (name, hist) in enumerate(histograms.items()):
        ax.bar(x + k * width, [hist.get(d, 0) for d in degrees], width, label=name)
    ax.set_xticks(x + width * (len(histograms) - 1) / 2)
    ax.set_xticklabels([str(d) for d in degrees])
    ax.set_xlabel("out-degree")
    ax.set_ylabel("nodes")
    ax.legend()
    fig.tight_layout()
    return fig


def _shade_segments(ax, labels, time_index) -> None:
    if labels is None:
        return
    for s, e in segments(labels):
        ax.axvspan(time_index[s], time_index[e], color="tab:red", alpha=0.15, lw=0)


def node_scores_figure(scores: ScoreSeries, labels=None):
    a = scores.per_node_scores
    order = np.argsort(-a.max(axis=1), kind="stable")[:MAX_PANELS]
    names = scores.node_names or tuple(f"node{i}" for i in range(a.shape[0]))
    t = scores.time_index if scores.time_index is not None else np.arange(a.shape[1])
    fig, axes = plt.subplots(len(order), 1, figsize=(10, 1.2 * len(order) + 1), sharex=True, squeeze=False)
    for ax, i in zip(axes[:, 0], order):
        ax.plot(t, a[i], lw=0.7)
        ax.set_ylabel(names[i], rotation=0, ha="right", fontsize=8)
        _shade_segments(ax, labels, t)
    axes[-1, 0].set_xlabel("time index")
    fig.tight_layout()
    return fig


def collective_figure(scores: ScoreSeries, labels=None):
    t = scores.time_index if scores.time_index is not None else np.arange(scores.collective.size)
    fig, ax = plt.subplots(figsize=(10, 3.5))
    ax.plot(t, scores.collective, lw=0.7, label="collective score", gid="collective")
    ax.axhline(scores.threshold, color="tab:red", ls="--", lw=1, label="threshold", gid="threshold")
    _shade_segments(ax, labels, t)
    ax.set_xlabel("time index")
    ax.set_ylabel("score")
    ax.legend(loc="upper right")
    fig.tight_layout()
    return fig


def causal_events(target, source, cfg: TEConfig, block: int = 500, k: int = 10):
    """(block starts, block TE, highlighted block starts, event indices)."""
    starts, te = windowed_te(target, source, block, cfg)
    cut = np.quantile(te, 0.9) if te.size else np.inf
    highlighted = starts[te >= cut]
    events = top_events(local_transfer_entropy(target, source, cfg), block, k)
    return starts, te, highlighted, events


def causal_events_figure(target, source, names: tuple[str, str], cfg: TEConfig,
                         block: int = 500, k: int = 10):
    target, source = np.asarray(target, dtype=float), np.asarray(source, dtype=float)
    starts, te, highlighted, events = causal_events(target, source, cfg, block, k)
    fig, (ax_s, ax_t, ax_te) = plt.subplots(3, 1, figsize=(10, 6), sharex=True)
    t = np.arange(target.size)
    for ax, series, name in ((ax_s, source, names[0]), (ax_t, target, names[1])):
        ax.plot(t, series, lw=0.6)
        ax.set_ylabel(name)
        for s in highlighted:
            ax.axvspan(s, min(s + block, target.size) - 1, color="tab:orange", alpha=0.25, lw=0)
    ax_t.scatter(events, target[events], s=8, color="tab:orange", zorder=3, gid="events")
    ax_te.step(starts, te, where="post", gid="block-te")
    ax_te.set_ylabel("TE (bits)")
    ax_te.set_xlabel("time index")
    ax_s.set_title(f"{names[0]} -> {names[1]}")
    fig.tight_layout()
    return fig
