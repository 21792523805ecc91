"""
causal_graph.py
Directed, weighted causal graph from pairwise transfer entropy.
  • histogram (plug-in) entropies in bits: entropy, joint, conditional
  • TE(J -> I) via histogram plug-in or the k-NN (Kraskov) estimator
  • sampled graph generation: G random chunks, averaged, weak edges pruned
  • diagnostics: out-degree histogram, reference structures, windowed TE,
    edge-ranking AUROC against a known edge set
  • graph file save / load
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.stats import rankdata

from . import ksg
from .config import TEConfig, read_core_version
from .errors import ArgumentError, DataError, DimensionError, FormatError, ParseError
from .series import MultivariateSeries

GRAPH_FORMAT = "cgad-graph"


@dataclass(frozen=True, eq=False)
class HistogramEncoding:
    bin_count: int
    bin_edges: np.ndarray
    symbols: np.ndarray


@dataclass(frozen=True, eq=False)
class CausalGraph:
    """adjacency[i, j] = pruned average TE from node j to node i, in bits."""
    adjacency: np.ndarray
    node_names: tuple[str, ...]

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"adjacency must be square, got {a.shape}")
        if len(self.node_names) != a.shape[0]:
            raise DimensionError(f"{len(self.node_names)} names for {a.shape[0]} nodes")
        if (a < 0).any() or np.diag(a).any():
            raise ArgumentError("adjacency must be nonnegative with a zero diagonal")
        a.flags.writeable = False
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "node_names", tuple(self.node_names))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[str, str, float]]:
        """(source, target, weight) for every nonzero entry, row-major over targets."""
        out = []
        for i, j in zip(*np.nonzero(self.adjacency)):
            out.append((self.node_names[j], self.node_names[i], float(self.adjacency[i, j])))
        return out


# ── histogram encoding and entropies ----------------------------------------
def encode_histogram(series, D: int) -> HistogramEncoding:
    x = np.asarray(series, dtype=float)
    if x.size < 1:
        raise ArgumentError("cannot encode an empty sequence")
    if D < 2:
        raise ArgumentError(f"bin count must be >= 2, got {D}")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return HistogramEncoding(D, lo + np.arange(D + 1, dtype=float), np.zeros(x.size, np.int64))
    edges = np.linspace(lo, hi, D + 1)
    symbols = np.floor((x - lo) / (hi - lo) * D).astype(np.int64)
    return HistogramEncoding(D, edges, np.clip(symbols, 0, D - 1))


def _plugin_entropy(codes: np.ndarray) -> float:
    _, counts = np.unique(codes, return_counts=True)
    p = counts / codes.size
    return float(-(p * np.log2(p)).sum())


def _joint_codes(*columns: np.ndarray) -> np.ndarray:
    """One integer code per row of the stacked symbol columns."""
    code = np.zeros(len(columns[0]), dtype=np.int64)
    for col in columns:
        col = np.asarray(col, dtype=np.int64)
        base = int(col.max()) + 1 if col.size else 1
        if int(code.max(initial=0)) >= np.iinfo(np.int64).max // max(base, 1) - base:
            code = np.unique(code, return_inverse=True)[1].astype(np.int64)
        code = code * base + col
    return code


def _check_symbols(*seqs) -> list[np.ndarray]:
    arrs = [np.asarray(s, dtype=np.int64).ravel() for s in seqs]
    if any(a.size == 0 for a in arrs):
        raise ArgumentError("entropy of an empty sequence is undefined")
    if len({a.size for a in arrs}) != 1:
        raise DimensionError(f"sequence lengths differ: {[a.size for a in arrs]}")
    return arrs


def entropy(symbols, D: int | None = None) -> float:
    (s,) = _check_symbols(symbols)
    if D is not None and (s.min() < 0 or s.max() >= D):
        raise ArgumentError(f"symbols must lie in [0, {D})")
    return _plugin_entropy(s)


def joint_entropy(a, b) -> float:
    a, b = _check_symbols(a, b)
    return _plugin_entropy(_joint_codes(a, b))


def conditional_entropy(a, given) -> float:
    a, b = _check_symbols(a, given)
    return _plugin_entropy(_joint_codes(a, b)) - _plugin_entropy(b)


# ── transfer entropy ---------------------------------------------------------
def _lagged(sym: np.ndarray, lag: int, start: int) -> list[np.ndarray]:
    return [sym[start - s:sym.size - s] for s in range(1, lag + 1)]


def _te_from_symbols(tsym: np.ndarray, ssym: np.ndarray, q: int, o: int) -> float:
    start = max(q, o)
    now = tsym[start:]
    ih = _joint_codes(*_lagged(tsym, q, start))
    ihjh = _joint_codes(ih, *_lagged(ssym, o, start))
    h_given_own = _plugin_entropy(_joint_codes(now, ih)) - _plugin_entropy(ih)
    h_given_both = _plugin_entropy(_joint_codes(now, ihjh)) - _plugin_entropy(ihjh)
    return max(0.0, h_given_own - h_given_both)


def _min_length(cfg: TEConfig) -> int:
    if cfg.estimator == "knn-kraskov":
        return max(cfg.knn_k + 2, max(cfg.q, cfg.o) + cfg.knn_k + 1)
    return cfg.q + cfg.o + 1


def transfer_entropy(target, source, cfg: TEConfig,
                     rng: np.random.Generator | None = None) -> float:
    """TE from `source` to `target` in bits, floored at 0."""
    target = np.asarray(target, dtype=float)
    source = np.asarray(source, dtype=float)
    if target.shape != source.shape or target.ndim != 1:
        raise DimensionError(f"target {target.shape} and source {source.shape} must be equal 1-D")
    if target.size < _min_length(cfg):
        raise ArgumentError(
            f"sequence length {target.size} too short for {cfg.estimator} "
            f"(needs >= {_min_length(cfg)})")
    if cfg.estimator == "knn-kraskov":
        te = ksg.transfer_entropy(target, source, cfg.q, cfg.o, cfg.knn_k, rng)
        if te < 0:
            logging.debug("[graph] negative knn TE %.3g floored at 0", te)
        return max(0.0, te)
    return _te_from_symbols(encode_histogram(target, cfg.bin_count).symbols,
                            encode_histogram(source, cfg.bin_count).symbols, cfg.q, cfg.o)


def local_transfer_entropy(target, source, cfg: TEConfig) -> np.ndarray:
    """Pointwise (local) histogram TE per timestamp; its mean is the plug-in TE.

    Entries before max(q, o) have no history and are NaN.
    """
    tsym = encode_histogram(target, cfg.bin_count).symbols
    ssym = encode_histogram(source, cfg.bin_count).symbols
    start = max(cfg.q, cfg.o)
    now = tsym[start:]
    ih = _joint_codes(*_lagged(tsym, cfg.q, start))
    ihjh = _joint_codes(ih, *_lagged(ssym, cfg.o, start))

    def freq(codes):
        _, inv, counts = np.unique(codes, return_inverse=True, return_counts=True)
        return counts[inv.ravel()].astype(float)

    p_both = freq(_joint_codes(now, ihjh)) / freq(ihjh)
    p_own = freq(_joint_codes(now, ih)) / freq(ih)
    out = np.full(tsym.size, np.nan)
    out[start:] = np.log2(p_both / p_own)
    return out


# ── graph generation ---------------------------------------------------------
def _chunk_window(t: int, cfg: TEConfig) -> int:
    w = cfg.chunk_window if cfg.chunk_window is not None else min(2000, t - 1)
    if w < _min_length(cfg) or t < w + 1:
        raise ArgumentError(f"series of length T={t} too short for chunk_window={w}")
    return w


def _chunk_te(chunk: np.ndarray, cfg: TEConfig, g: int, workers: int) -> np.ndarray:
    n = chunk.shape[0]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    if cfg.estimator == "histogram-plugin":
        symbols = [encode_histogram(row, cfg.bin_count).symbols for row in chunk]

        def one(pair):
            i, j = pair
            return _te_from_symbols(symbols[i], symbols[j], cfg.q, cfg.o)
    else:
        def one(pair):
            i, j = pair
            rng = np.random.default_rng([cfg.rng_seed, g, i, j])
            return transfer_entropy(chunk[i], chunk[j], cfg, rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, pairs))
    else:
        values = [one(p) for p in pairs]
    out = np.zeros((n, n))
    for (i, j), v in zip(pairs, values):
        out[i, j] = v
    return out


def estimate_te_matrix(train: MultivariateSeries, cfg: TEConfig) -> np.ndarray:
    """Unpruned TE matrix averaged over cfg.sample_count random chunks."""
    cfg.validate()
    w = _chunk_window(train.t, cfg)
    acc = np.zeros((train.n, train.n))
    for g in range(cfg.sample_count):
        rng = np.random.default_rng([cfg.rng_seed, g])
        start = int(rng.integers(0, train.t - w))
        logging.info("[graph] chunk %d/%d start=%d window=%d", g + 1, cfg.sample_count, start, w)
        acc += _chunk_te(train.values[:, start:start + w], cfg, g, cfg.workers)
    return acc / cfg.sample_count


def prune(te: np.ndarray, c: float) -> np.ndarray:
    a = np.where(te > c, te, 0.0)
    np.fill_diagonal(a, 0.0)
    return a


def graph_from_te(te: np.ndarray, names, c: float) -> CausalGraph:
    graph = CausalGraph(prune(te, c), tuple(names))
    logging.info("[graph] %d nodes, %d edges after pruning at c=%g",
                 graph.n, int(np.count_nonzero(graph.adjacency)), c)
    return graph


def generate_graph(train: MultivariateSeries, cfg: TEConfig) -> CausalGraph:
    return graph_from_te(estimate_te_matrix(train, cfg), train.sensor_names, cfg.prune_threshold)


# ── diagnostics --------------------------------------------------------------
def degree_histogram(graph: CausalGraph | np.ndarray) -> dict[int, int]:
    a = graph.adjacency if isinstance(graph, CausalGraph) else np.asarray(graph)
    out_degree = np.count_nonzero(a, axis=0)
    return dict(sorted(Counter(int(d) for d in out_degree).items()))


def reference_structures(te: np.ndarray, k: int) -> dict[str, np.ndarray]:
    """Fully-connected and per-target top-k structures over the same TE weights."""
    te = np.asarray(te, dtype=float)
    n = te.shape[0]
    full = te.copy()
    np.fill_diagonal(full, 0.0)
    full = np.where(~np.eye(n, dtype=bool), np.maximum(full, np.finfo(float).tiny), 0.0)
    topk = np.zeros_like(te)
    k = min(k, n - 1)
    for i in range(n):
        row = te[i].copy()
        row[i] = -np.inf
        keep = np.argsort(-row, kind="stable")[:k]
        topk[i, keep] = full[i, keep]
    return {"fully-connected": full, f"top-{k}": topk}


def windowed_te(target, source, block: int, cfg: TEConfig) -> tuple[np.ndarray, np.ndarray]:
    """TE over consecutive blocks; returns (block starts, TE per block)."""
    target = np.asarray(target, dtype=float)
    source = np.asarray(source, dtype=float)
    starts, values = [], []
    for s in range(0, target.size, block):
        if target[s:s + block].size < _min_length(cfg):
            break
        starts.append(s)
        values.append(transfer_entropy(target[s:s + block], source[s:s + block], cfg))
    return np.asarray(starts, dtype=np.int64), np.asarray(values)


def top_events(local_te: np.ndarray, block: int, k: int) -> np.ndarray:
    """Indices of the k largest local TE values inside every block, sorted."""
    local_te = np.nan_to_num(np.asarray(local_te, dtype=float), nan=-np.inf)
    out = []
    for s in range(0, local_te.size, block):
        part = local_te[s:s + block]
        order = np.argsort(-part, kind="stable")[:k]
        out.extend(s + i for i in order if np.isfinite(part[i]))
    return np.sort(np.asarray(out, dtype=np.int64))


def edge_ranking_auroc(te: np.ndarray, true_edges: Iterable[tuple[int, int]]) -> float:
    """AUROC of ranking ordered pairs (source -> target) by te[target, source]."""
    te = np.asarray(te, dtype=float)
    truth = set(true_edges)
    scores, labels = [], []
    for i in range(te.shape[0]):
        for j in range(te.shape[0]):
            if i != j:
                scores.append(te[i, j])
                labels.append((j, i) in truth)
    scores, labels = np.asarray(scores), np.asarray(labels)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ArgumentError("AUROC needs both true and false candidate edges")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


# ── persistence --------------------------------------------------------------
def save_graph(graph: CausalGraph, path: Path, config_hash: str = "") -> None:
    doc = {
        "format": GRAPH_FORMAT,
        "version": read_core_version(),
        "config_hash": config_hash,
        "nodes": list(graph.node_names),
        "edges": [[s, t, f"{w:.17g}"] for s, t, w in graph.edges()],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_graph(path: Path) -> CausalGraph:
    path = Path(path)
    if not path.exists():
        raise DataError(f"graph file {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e.msg}", row=e.lineno, column=e.colno) from e
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not UTF-8 text") from e
    if not isinstance(doc, dict) or doc.get("format") != GRAPH_FORMAT:
        raise FormatError(f"{path}: not a {GRAPH_FORMAT} file")
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or len(set(nodes)) != len(nodes):
        raise ParseError(f"{path}: node list missing or has duplicates")
    index = {name: k for k, name in enumerate(nodes)}
    adj = np.zeros((len(nodes), len(nodes)))
    seen = set()
    for n, edge in enumerate(doc.get("edges", [])):
        if not isinstance(edge, list) or len(edge) != 3:
            raise ParseError(f"{path}: edge entry is not [source, target, weight]", row=n)
        src, dst, weight = edge
        if src not in index or dst not in index:
            raise ParseError(f"{path}: edge {src!r} -> {dst!r} references an unknown node", row=n)
        if (src, dst) in seen:
            raise ParseError(f"{path}: duplicate edge {src!r} -> {dst!r}", row=n)
        if src == dst:
            raise ParseError(f"{path}: self-loop on {src!r}", row=n)
        try:
            w = float(weight)
        except (TypeError, ValueError) as e:
            raise ParseError(f"{path}: bad weight {weight!r}", row=n) from e
        if not np.isfinite(w) or w < 0:
            raise ParseError(f"{path}: weight {weight!r} must be finite and >= 0", row=n)
        seen.add((src, dst))
        adj[index[dst], index[src]] = w
    return CausalGraph(adj, tuple(nodes))


def permuted(graph: CausalGraph, order) -> CausalGraph:
    order = np.asarray(order)
    return replace(graph, adjacency=graph.adjacency[np.ix_(order, order)],
                   node_names=tuple(graph.node_names[k] for k in order))
