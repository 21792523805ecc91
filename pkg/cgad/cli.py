# cli.py

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import artifacts, report
from .artifacts import RunPaths, require
from .causal_graph import (CausalGraph, degree_histogram, estimate_te_matrix, graph_from_te, load_graph,
                           reference_structures, save_graph)
from .config import ROOT, PipelineConfig, load_config, pipeline_hash
from .errors import CgadError, ConfigError, DataError, DimensionError
from .evaluation import evaluate, grid_search_threshold, save_report
from .forecaster import init_model, load_model, predict, save_model, train
from .log import setup_logging
from .scoring import (collective_score, forecast_errors, load_scores, save_scores,
                      score_forecasts, zscore)
from .series import (apply_minmax, fit_minmax, load_csv, load_labels, make_windows,
                     split_train_val)
from .synth import random_coupling, write_synthetic

CFG_FN = ROOT / "config.json"


class Context:
    """Resolved configuration plus the run directory for one invocation."""

    def __init__(self, cfg: PipelineConfig, args: argparse.Namespace):
        self.cfg = cfg
        self.args = args
        self.paths = RunPaths(cfg.out)
        self.hash = pipeline_hash(cfg)

    def arg(self, name: str, default=None):
        value = getattr(self.args, name, None)
        return default if value is None else value


# ── helpers ------------------------------------------------------------------
def _train_series(ctx: Context):
    path = ctx.cfg.train_csv
    if path is None:
        raise DataError("no training CSV given (--train or train_csv)")
    return load_csv(path)


def _check_names(expected, got, what: str) -> None:
    if tuple(expected) != tuple(got):
        raise DimensionError(f"{what} sensors {list(got)} do not match {list(expected)}")


def _forecast(model, series, cfg):
    windows = make_windows(series, cfg.model.window_w, cfg.train.batch_size)
    actual = np.concatenate([b.targets for b in windows])
    ends = np.concatenate([b.end_times for b in windows])
    return predict(model, windows), actual, ends


def _aligned_labels(labels: np.ndarray, time_index: np.ndarray) -> np.ndarray:
    if labels.size == time_index.size:
        return labels
    if time_index.size and labels.size > time_index.max():
        return labels[time_index]
    raise DimensionError(f"label file has {labels.size} rows, score file covers {time_index.size}")


# ── subcommands --------------------------------------------------------------
def cmd_synth(ctx: Context) -> dict[str, Path]:
    spec = ctx.cfg.synth
    n_edges = ctx.arg("random_edges")
    if n_edges:
        spec = replace(spec, coupling=random_coupling(spec.n, n_edges, spec.rng_seed))
    return write_synthetic(spec, ctx.arg("dest", ctx.paths.data), ctx.hash)


def cmd_build_graph(ctx: Context) -> CausalGraph:
    cfg, paths = ctx.cfg, ctx.paths
    raw = _train_series(ctx)
    series = apply_minmax(raw, fit_minmax(raw))
    te = estimate_te_matrix(series, cfg.te)
    graph = graph_from_te(te, series.sensor_names, cfg.te.prune_threshold)
    save_graph(graph, paths.graph, ctx.hash)
    artifacts.save_matrix(te, series.sensor_names, paths.te_matrix)

    histograms = {"causal": degree_histogram(graph)}
    for name, adj in reference_structures(te, cfg.report.top_k).items():
        histograms[name] = degree_histogram(adj)
    artifacts.save_degree_table(histograms, paths.degree_csv)
    if cfg.report.enabled and cfg.report.degree_histogram:
        report.write_svg(report.degree_figure(histograms), paths.figures / "degree_histogram.svg")
    return graph


def cmd_train(ctx: Context):
    cfg, paths = ctx.cfg, ctx.paths
    raw = _train_series(ctx)
    graph = load_graph(ctx.arg("graph", paths.graph))
    _check_names(raw.sensor_names, graph.node_names, "graph")

    norm = fit_minmax(raw)
    artifacts.save_normalization(norm, raw.sensor_names, paths.normalization, ctx.hash)
    fit, val = split_train_val(apply_minmax(raw, norm), cfg.train.val_fraction)
    w, batch = cfg.model.window_w, cfg.train.batch_size

    model = init_model(cfg.model, graph.adjacency, graph.node_names)
    model, history = train(model, make_windows(fit, w, batch), make_windows(val, w, batch), cfg.train)
    save_model(model, ctx.arg("model", paths.model), ctx.hash)
    history.to_csv(paths.loss_history)
    logging.info("[train] best epoch %d, val mse %.6g", history.best_epoch + 1,
                 history.epochs[history.best_epoch].val_mse if history.epochs else float("nan"))
    return model, history


def cmd_detect(ctx: Context):
    cfg, paths = ctx.cfg, ctx.paths
    if cfg.test_csv is None:
        raise DataError("no test CSV given (--test or test_csv)")
    test = load_csv(cfg.test_csv)
    model = load_model(ctx.arg("model", paths.model), expected_nodes=test.n)
    norm, names = artifacts.load_normalization(paths.normalization)
    _check_names(names, test.sensor_names, "test")

    pred, actual, ends = _forecast(model, apply_minmax(test, norm), cfg)
    calibration = None
    if "validation" in (cfg.pot.calibration, cfg.pot.mad_source):
        _, val = split_train_val(apply_minmax(_train_series(ctx), norm), cfg.train.val_fraction)
        val_pred, val_actual, _ = _forecast(model, val, cfg)
        calibration = (val_pred, val_actual)

    scores = score_forecasts(pred, actual, cfg.pot, calibration, test.sensor_names, ends)
    save_scores(scores, paths.scores, ctx.hash)
    if calibration is not None:
        cal = collective_score(zscore(forecast_errors(*calibration).T,
                                      scores.per_node_median, scores.per_node_mad))
        artifacts.save_series(cal, paths.calibration)
    logging.info("[detect] %d windows, threshold %.6g, %d flagged",
                 scores.collective.size, scores.threshold, int(scores.decisions.sum()))
    return scores


def cmd_evaluate(ctx: Context):
    cfg, paths = ctx.cfg, ctx.paths
    scores = load_scores(ctx.arg("scores", paths.scores))
    if cfg.test_labels is None:
        raise DataError("no label file given (--labels or test_labels)")
    labels = _aligned_labels(load_labels(cfg.test_labels), scores.time_index)

    result = evaluate(scores.decisions, labels)
    run_name = paths.root.name
    save_report(result, paths.report_json, paths.eval_csv, run_name, ctx.hash)
    logging.info("[eval] F1 %.4f  F1c %.4f  F1PA %.4f  (tp=%d fp=%d fn=%d)",
                 result.f1, result.f1_composite, result.f1_point_adjusted,
                 result.tp, result.fp, result.fn)

    if ctx.arg("grid"):
        reference = (artifacts.load_series(paths.calibration) if paths.calibration.exists()
                     else scores.collective)
        pot, tau, best = grid_search_threshold(reference, scores.collective, labels,
                                               min_peaks=cfg.pot.min_peaks)
        logging.info("[eval] grid best q=%g risk=%g tau=%.6g F1PA %.4f",
                     pot.initial_quantile, pot.risk_q, tau, best.f1_point_adjusted)
        save_report(best, paths.root / "report_grid.json", paths.eval_csv,
                    f"{run_name}+grid", ctx.hash)
    return result


def cmd_report(ctx: Context) -> list[Path]:
    cfg, paths = ctx.cfg, ctx.paths
    rcfg = cfg.report
    written = []
    scores = load_scores(require(paths.scores, "score file"))
    labels = None
    if cfg.test_labels is not None:
        labels = _aligned_labels(load_labels(cfg.test_labels), scores.time_index)

    if rcfg.scores:
        written.append(report.write_svg(report.node_scores_figure(scores, labels),
                                        paths.figures / "node_scores.svg"))
        written.append(report.write_svg(report.collective_figure(scores, labels),
                                        paths.figures / "collective.svg"))
    if rcfg.degree_histogram and paths.te_matrix.exists():
        te, _ = artifacts.load_matrix(paths.te_matrix)
        histograms = {"causal": degree_histogram(load_graph(paths.graph))}
        for name, adj in reference_structures(te, rcfg.top_k).items():
            histograms[name] = degree_histogram(adj)
        written.append(report.write_svg(report.degree_figure(histograms),
                                        paths.figures / "degree_histogram.svg"))
    if rcfg.causal_events and cfg.train_csv is not None:
        graph = load_graph(paths.graph)
        pair = rcfg.event_pair
        if pair is None:
            edges = sorted(graph.edges(), key=lambda e: -e[2])
            pair = edges[0][:2] if edges else None
        if pair is None:
            logging.warning("[report] graph has no edges; skipping causal-event view")
        else:
            train_series = _train_series(ctx)
            index = {name: k for k, name in enumerate(train_series.sensor_names)}
            if pair[0] not in index or pair[1] not in index:
                raise ConfigError(f"report.event_pair {pair} names an unknown sensor")
            fig = report.causal_events_figure(
                train_series.values[index[pair[1]]], train_series.values[index[pair[0]]],
                (pair[0], pair[1]), cfg.te, rcfg.event_block, rcfg.top_events)
            written.append(report.write_svg(fig, paths.figures / "causal_events.svg"))
    logging.info("[report] wrote %d figure(s) to %s", len(written), paths.figures)
    return written


def cmd_run(ctx: Context):
    cmd_build_graph(ctx)
    cmd_train(ctx)
    cmd_detect(ctx)
    if ctx.cfg.test_labels is not None:
        cmd_evaluate(ctx)
    if ctx.cfg.report.enabled:
        cmd_report(ctx)


COMMANDS = {
    "synth":       cmd_synth,
    "build-graph": cmd_build_graph,
    "train":       cmd_train,
    "detect":      cmd_detect,
    "evaluate":    cmd_evaluate,
    "report":      cmd_report,
    "run":         cmd_run,
}


# ── argument parsing ---------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config JSON (default: ./config.json of the install)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    common.add_argument("--seed", type=int, help="set every rng_seed")
    common.add_argument("--out", type=Path, help="run directory (output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cgad", description="Causal-graph anomaly detection for multivariate series")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a seeded synthetic benchmark")
    p.add_argument("--random-edges", type=int, help="replace synth.coupling with this many random edges")
    p.add_argument("--dest", type=Path, help="directory for the generated files (default <out>/data)")

    p = sub.add_parser("build-graph", parents=[common], help="transfer-entropy causal graph from training data")
    p.add_argument("--train", type=Path)

    p = sub.add_parser("train", parents=[common], help="fit the forecaster on training data")
    p.add_argument("--train", type=Path)
    p.add_argument("--graph", type=Path)
    p.add_argument("--model", type=Path)

    p = sub.add_parser("detect", parents=[common], help="score the test series")
    p.add_argument("--test", type=Path)
    p.add_argument("--train", type=Path)
    p.add_argument("--model", type=Path)

    p = sub.add_parser("evaluate", parents=[common], help="F1, F1c and F1PA against labels")
    p.add_argument("--scores", type=Path)
    p.add_argument("--labels", type=Path)
    p.add_argument("--grid", action="store_true", help="also grid-search the POT setting")

    p = sub.add_parser("report", parents=[common], help="SVG figures for a run directory")
    p.add_argument("--train", type=Path)
    p.add_argument("--labels", type=Path)

    p = sub.add_parser("run", parents=[common], help="build-graph, train, detect, evaluate, report")
    p.add_argument("--train", type=Path)
    p.add_argument("--test", type=Path)
    p.add_argument("--labels", type=Path)
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    path = args.config if args.config is not None else (CFG_FN if CFG_FN.exists() else None)
    cfg = load_config(path, args.overrides, args.seed)
    flags = {"train_csv": "train", "test_csv": "test", "test_labels": "labels", "output_dir": "out"}
    changes = {key: str(getattr(args, flag)) for key, flag in flags.items()
               if getattr(args, flag, None) is not None}
    return replace(cfg, **changes) if changes else cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except CgadError as e:
        logging.error("%s", e)
        return e.exit_code
    setup_logging(cfg.out, args.command, args.verbose)
    ctx = Context(cfg, args)
    logging.info("output %s, config hash %s", cfg.out, ctx.hash)
    try:
        COMMANDS[args.command](ctx)
    except CgadError as e:
        logging.error("[%s] %s: %s", args.command, type(e).__name__, e)
        return e.exit_code
    except OSError as e:
        logging.error("[%s] %s: %s", args.command, type(e).__name__, e)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
