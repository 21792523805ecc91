import json
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cgad.causal_graph import (CausalGraph, conditional_entropy, degree_histogram,
                               edge_ranking_auroc, encode_histogram, entropy,
                               estimate_te_matrix, generate_graph, graph_from_te, joint_entropy,
                               load_graph, local_transfer_entropy, permuted, prune,
                               reference_structures, save_graph, top_events, transfer_entropy,
                               windowed_te)
from cgad.config import SyntheticSpec, TEConfig
from cgad.errors import ArgumentError, DataError, FormatError, ParseError
from cgad.series import MultivariateSeries
from cgad.synth import generate, random_coupling

BINARY = TEConfig(bin_count=2)


def _binary_copy(length, seed=1):
    rng = np.random.default_rng(seed)
    source = rng.integers(0, 2, length).astype(float)
    target = np.zeros(length)
    target[1:] = source[:-1]
    return target, source


# ── encoding and entropies ---------------------------------------------------
def test_encode_histogram_equal_width():
    enc = encode_histogram([0.0, 0.25, 0.5, 1.0], 2)
    np.testing.assert_array_equal(enc.symbols, [0, 0, 1, 1])
    np.testing.assert_allclose(enc.bin_edges, [0.0, 0.5, 1.0])


def test_encode_constant_series():
    enc = encode_histogram(np.full(5, 3.0), 4)
    np.testing.assert_array_equal(enc.symbols, np.zeros(5))
    assert enc.bin_edges.size == 5


def test_encode_rejects_bad_bins():
    with pytest.raises(ArgumentError):
        encode_histogram([1.0, 2.0], 1)


def test_entropy_examples():
    assert entropy([0, 1, 0, 1]) == pytest.approx(1.0)
    assert entropy([3, 3, 3]) == 0.0
    assert entropy([0, 1, 2, 3]) == pytest.approx(2.0)


def test_entropy_symbol_range_checked():
    with pytest.raises(ArgumentError):
        entropy([0, 5], D=4)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=200))
def test_entropy_chain_rule(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    assert joint_entropy(a, b) == pytest.approx(entropy(b) + conditional_entropy(a, b), abs=1e-9)
    assert conditional_entropy(a, b) <= entropy(a) + 1e-9


# ── transfer entropy ----------------------------------------------------------
@pytest.mark.slow
def test_binary_copy_channel_carries_one_bit():
    target, source = _binary_copy(100_000)
    assert transfer_entropy(target, source, BINARY) == pytest.approx(1.0, abs=0.05)


@pytest.mark.slow
def test_independent_binary_pair_near_zero():
    rng = np.random.default_rng(2)
    a = rng.integers(0, 2, 100_000).astype(float)
    b = rng.integers(0, 2, 100_000).astype(float)
    assert 0.0 <= transfer_entropy(a, b, BINARY) <= 0.01


def test_te_is_directional():
    target, source = _binary_copy(5000)
    assert transfer_entropy(target, source, BINARY) > 0.9
    assert transfer_entropy(source, target, BINARY) < 0.05


def test_te_never_negative():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=50), rng.normal(size=50)
    assert transfer_entropy(a, b, TEConfig()) >= 0.0
    assert transfer_entropy(a, b, TEConfig(estimator="knn-kraskov")) >= 0.0


def test_knn_te_finds_linear_coupling():
    rng = np.random.default_rng(4)
    source = rng.normal(size=2000)
    target = np.zeros(2000)
    target[1:] = 0.8 * source[:-1] + 0.3 * rng.normal(size=1999)
    cfg = TEConfig(estimator="knn-kraskov")
    assert transfer_entropy(target, source, cfg) > 0.5
    assert transfer_entropy(source, target, cfg) < 0.1


def test_te_short_sequence():
    with pytest.raises(ArgumentError):
        transfer_entropy([1.0, 2.0], [2.0, 1.0], TEConfig())


def test_local_te_averages_to_plugin_te():
    target, source = _binary_copy(2000, seed=5)
    local = local_transfer_entropy(target, source, BINARY)
    assert np.isnan(local[0])
    assert np.nanmean(local) == pytest.approx(transfer_entropy(target, source, BINARY), abs=1e-9)


# ── graph generation -----------------------------------------------------------
def test_copy_pair_graph_has_forward_edge(copy_pair):
    graph = generate_graph(copy_pair, TEConfig(bin_count=4, sample_count=3))
    assert graph.adjacency[1, 0] > 0.3
    assert graph.adjacency[1, 0] > 5 * graph.adjacency[0, 1]
    assert ("x0", "x1") in {(s, t) for s, t, _ in graph.edges()}
    assert np.all(np.diag(graph.adjacency) == 0)


def test_graph_generation_is_seeded(copy_pair):
    cfg = TEConfig(sample_count=2, rng_seed=11)
    np.testing.assert_array_equal(estimate_te_matrix(copy_pair, cfg), estimate_te_matrix(copy_pair, cfg))


def test_workers_match_serial():
    rng = np.random.default_rng(5)
    series = MultivariateSeries(rng.normal(size=(4, 600)), tuple("abcd"))
    serial = estimate_te_matrix(series, TEConfig(sample_count=2))
    pooled = estimate_te_matrix(series, TEConfig(sample_count=2, workers=3))
    np.testing.assert_array_equal(serial, pooled)


def test_node_permutation_permutes_te_matrix():
    rng = np.random.default_rng(6)
    values = rng.normal(size=(4, 800))
    values[2, 1:] += values[0, :-1]
    order = np.array([3, 1, 0, 2])
    cfg = TEConfig(sample_count=2)
    te = estimate_te_matrix(MultivariateSeries(values, tuple("abcd")), cfg)
    te_perm = estimate_te_matrix(MultivariateSeries(values[order], tuple("dbac")), cfg)
    np.testing.assert_allclose(te_perm, te[np.ix_(order, order)])


def test_series_too_short_for_chunk():
    series = MultivariateSeries(np.zeros((2, 10)), ("a", "b"))
    with pytest.raises(ArgumentError):
        estimate_te_matrix(series, TEConfig(chunk_window=50))


@given(arrays(np.float64, (5, 5), elements=st.floats(0, 1)),
       st.floats(0, 1), st.floats(0, 1))
def test_pruning_is_monotone(te, c1, c2):
    lo, hi = sorted((c1, c2))
    kept_lo, kept_hi = prune(te, lo) > 0, prune(te, hi) > 0
    assert not (kept_hi & ~kept_lo).any()
    assert not np.diag(prune(te, lo)).any()


def test_prune_threshold_is_strict():
    te = np.array([[0.0, 0.01], [0.02, 0.0]])
    np.testing.assert_array_equal(prune(te, 0.01), [[0.0, 0.0], [0.02, 0.0]])


@pytest.mark.slow
def test_shuffled_source_carries_no_more_information():
    rng = np.random.default_rng(13)
    length = 100_000
    source = rng.normal(size=length)
    target = np.zeros(length)
    target[1:] = 0.7 * source[:-1] + 0.5 * rng.normal(size=length - 1)
    cfg = TEConfig()
    coupled = transfer_entropy(target, source, cfg)
    shuffled = transfer_entropy(target, rng.permutation(source), cfg)
    assert shuffled <= coupled + 0.02
    assert shuffled < 0.02


def test_graph_from_te_prunes_and_names():
    te = np.array([[0.5, 0.2, 0.005], [0.03, 0.0, 0.0], [0.0, 0.011, 0.0]])
    graph = graph_from_te(te, ("a", "b", "c"), 0.01)
    np.testing.assert_array_equal(graph.adjacency, prune(te, 0.01))
    assert {(s, t) for s, t, _ in graph.edges()} == {("b", "a"), ("a", "b"), ("b", "c")}


@pytest.mark.slow
def test_graph_cost_grows_with_node_pairs():
    cfg = TEConfig(chunk_window=2000, sample_count=2)

    def wall(n):
        series = MultivariateSeries(np.random.default_rng(n).normal(size=(n, 2500)),
                                    tuple(f"x{i}" for i in range(n)))
        best = np.inf
        for _ in range(3):
            start = time.perf_counter()
            estimate_te_matrix(series, cfg)
            best = min(best, time.perf_counter() - start)
        return best

    assert 3.0 <= wall(24) / wall(12) <= 6.0


@pytest.mark.slow
def test_causal_recovery_auroc():
    coupling = random_coupling(8, 10, seed=3)
    spec = SyntheticSpec(n=8, t=10_000, coupling=coupling, noise_sigma=1.0, ar=0.3, rng_seed=3)
    train, _, _ = generate(spec)
    te = estimate_te_matrix(train, TEConfig(bin_count=4, chunk_window=4000, sample_count=3))
    auroc = edge_ranking_auroc(te, [(s, d) for s, d, _, _ in coupling])
    assert auroc >= 0.9


def test_auroc_perfect_ranking():
    te = np.array([[0.0, 0.9, 0.1], [0.2, 0.0, 0.1], [0.1, 0.1, 0.0]])
    assert edge_ranking_auroc(te, [(1, 0)]) == 1.0


# ── diagnostics -----------------------------------------------------------------
def test_degree_histogram_counts_out_degree():
    adj = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.5, 0.0, 0.0]])
    assert degree_histogram(CausalGraph(adj, tuple("abc"))) == {0: 2, 2: 1}


def test_reference_structures():
    rng = np.random.default_rng(8)
    te = rng.random((5, 5))
    refs = reference_structures(te, 2)
    assert set(refs) == {"fully-connected", "top-2"}
    np.testing.assert_array_equal(np.count_nonzero(refs["fully-connected"], axis=1), [4] * 5)
    np.testing.assert_array_equal(np.count_nonzero(refs["top-2"], axis=1), [2] * 5)
    assert not np.diag(refs["top-2"]).any()


def test_windowed_te_blocks():
    target, source = _binary_copy(2000, seed=9)
    starts, values = windowed_te(target, source, 500, BINARY)
    np.testing.assert_array_equal(starts, [0, 500, 1000, 1500])
    assert (values > 0.8).all()


def test_top_events_per_block():
    local = np.array([np.nan, 1.0, 5.0, 2.0, 0.5, 3.0, 4.0, 0.1])
    np.testing.assert_array_equal(top_events(local, 4, 1), [2, 6])
    np.testing.assert_array_equal(top_events(local, 4, 2), [2, 3, 5, 6])


# ── persistence -----------------------------------------------------------------
def test_graph_file_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    adj = prune(rng.random((4, 4)) / 3, 0.1)
    graph = CausalGraph(adj, ("a", "b", "c", "d"))
    save_graph(graph, tmp_path / "g.json", "abc123")
    back = load_graph(tmp_path / "g.json")
    np.testing.assert_array_equal(back.adjacency, graph.adjacency)
    assert back.node_names == graph.node_names
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["config_hash"] == "abc123"


def test_save_graph_is_byte_stable(tmp_path):
    graph = CausalGraph(np.array([[0.0, 0.25], [0.0, 0.0]]), ("a", "b"))
    save_graph(graph, tmp_path / "1.json")
    save_graph(graph, tmp_path / "2.json")
    assert (tmp_path / "1.json").read_bytes() == (tmp_path / "2.json").read_bytes()


def _graph_doc(tmp_path, **changes):
    doc = {"format": "cgad-graph", "version": "0", "config_hash": "",
           "nodes": ["a", "b"], "edges": [["a", "b", "0.5"]]}
    doc.update(changes)
    path = tmp_path / "g.json"
    path.write_text(json.dumps(doc))
    return path


def test_load_graph_duplicate_edge(tmp_path):
    with pytest.raises(ParseError, match="duplicate"):
        load_graph(_graph_doc(tmp_path, edges=[["a", "b", "0.5"], ["a", "b", "0.6"]]))


def test_load_graph_unknown_node(tmp_path):
    with pytest.raises(ParseError, match="unknown node"):
        load_graph(_graph_doc(tmp_path, edges=[["a", "z", "0.5"]]))


def test_load_graph_self_loop(tmp_path):
    with pytest.raises(ParseError):
        load_graph(_graph_doc(tmp_path, edges=[["a", "a", "0.5"]]))


def test_load_graph_wrong_format(tmp_path):
    with pytest.raises(FormatError):
        load_graph(_graph_doc(tmp_path, format="something-else"))


def test_load_graph_missing(tmp_path):
    with pytest.raises(DataError):
        load_graph(tmp_path / "missing.json")


def test_permuted_graph():
    graph = CausalGraph(np.array([[0.0, 0.0], [0.7, 0.0]]), ("a", "b"))
    flipped = permuted(graph, [1, 0])
    assert flipped.node_names == ("b", "a")
    assert flipped.edges() == graph.edges()
