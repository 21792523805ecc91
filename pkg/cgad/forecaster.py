"""
forecaster.py
Weighted graph + temporal convolution single-step forecaster.

    input lift (1x1, 1 -> C)
    repeat `blocks` times:
        gated inception TC   h = tanh(filter(z) + b1) * sigmoid(gate(z) + b2)
        skip projection      1 x L_b conv, C -> S, summed over blocks
        weighted GCN         ReLU(Ã ReLU(Ã h W0) W1)
        residual             + block input (aligned to the latest steps)
    ReLU(skip sum) -> linear S -> H -> ReLU -> linear H -> 1, per node

Tensors are laid out batch x node x time x channel throughout.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig, TrainConfig, read_core_version
from .errors import ArgumentError, DataError, DimensionError, FormatError, NumericError
from .series import WindowBatch, batches_of

MODEL_FORMAT = "cgad-model"
MODEL_FORMAT_VERSION = 1


# ── graph normalisation --------------------------------------------------------
def normalize_adjacency(A) -> np.ndarray:
    """D̂^-1/2 (A + I) D̂^-1/2 with D̂ = row sums of A + I; weights used as-is."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"adjacency must be square, got {A.shape}")
    if (A < 0).any():
        raise ArgumentError("adjacency has negative entries")
    a_hat = A + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d[:, None] * a_hat * d[None, :]


def receptive_field(m: int, k: int) -> int:
    return m * (k - 1) + 1


# ── layers ------------------------------------------------------------------
_LETTERS = "abdefgmnpr"


def _node_mix(a_norm: np.ndarray, h: Tensor, axis: int) -> Tensor:
    letters = list(_LETTERS[:h.ndim])
    src, dst = letters.copy(), letters.copy()
    src[axis], dst[axis] = "j", "i"
    return ad.einsum(f"ij,{''.join(src)}->{''.join(dst)}", a_norm, h)


def _feature_mix(h: Tensor, w: Tensor) -> Tensor:
    lead = _LETTERS[:h.ndim - 1]
    return ad.einsum(f"{lead}x,xy->{lead}y", h, w)


def gcn_forward(H, a_norm, W0, W1) -> Tensor:
    """Two-layer weighted GCN: ReLU(Ã ReLU(Ã H W0) W1).

    H is N x F, or B x N x L x F for the batched model; the node axis is
    0 or 1 respectively.
    """
    H, W0, W1 = ad.lift(H), ad.lift(W0), ad.lift(W1)
    a_norm = np.asarray(a_norm, dtype=float)
    axis = 0 if H.ndim == 2 else 1
    if H.shape[axis] != a_norm.shape[0]:
        raise DimensionError(f"features have {H.shape[axis]} nodes, adjacency has {a_norm.shape[0]}")
    if H.shape[-1] != W0.shape[0] or W0.shape[1] != W1.shape[0]:
        raise DimensionError(f"GCN weights {W0.shape}, {W1.shape} do not fit features {H.shape}")
    hidden = ad.relu(_feature_mix(_node_mix(a_norm, H, axis), W0))
    return ad.relu(_feature_mix(_node_mix(a_norm, hidden, axis), W1))


def causal_conv(z: Tensor, f: Tensor) -> Tensor:
    """(z * f)(t) = sum_s f[s] z[t - s] over the time axis (2), valid positions only.

    z: B x N x L x Cin, f: k x Cin x Cout -> B x N x (L - k + 1) x Cout.
    """
    k, length = f.shape[0], z.shape[2]
    if length < k:
        raise ArgumentError(f"time length {length} shorter than kernel {k}")
    out = None
    for s in range(k):
        term = ad.einsum("bnlc,co->bnlo", z[:, :, k - 1 - s:length - s, :], f[s])
        out = term if out is None else out + term
    return out


def inception_forward(z, filters: dict[int, Tensor]) -> Tensor:
    """Concatenate causal convolutions of every kernel size, each cut to the
    shortest branch (aligned on the most recent steps)."""
    z = ad.lift(z)
    kmax = max(filters)
    if z.shape[2] < kmax:
        raise ArgumentError(f"time length {z.shape[2]} shorter than largest kernel {kmax}")
    keep = z.shape[2] - kmax + 1
    branches = []
    for k in sorted(filters):
        branch = causal_conv(z, filters[k])
        branches.append(branch[:, :, branch.shape[2] - keep:, :])
    return ad.concat(branches, axis=3)


def gated_tc_forward(z, filter_bank: dict[int, Tensor], b1, gate_bank: dict[int, Tensor], b2) -> Tensor:
    """h = tanh(θ1 ⋆ z + b1) ⊙ σ(θ2 ⋆ z + b2)."""
    a = inception_forward(z, filter_bank) + b1
    b = inception_forward(z, gate_bank) + b2
    if a.shape != b.shape:
        raise DimensionError(f"filter {a.shape} and gate {b.shape} stacks differ")
    return ad.tanh(a) * ad.sigmoid(b)


# ── model ------------------------------------------------------------------
@dataclass
class ForecastModel:
    config: ModelConfig
    normalized_adjacency: np.ndarray
    parameters: dict[str, Tensor]
    node_names: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.normalized_adjacency.shape[0]

    def zero_grad(self) -> None:
        for p in self.parameters.values():
            p.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.parameters.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.parameters.items():
            p.data = np.array(state[k], dtype=np.float64)


def padded_length(cfg: ModelConfig) -> int:
    return max(cfg.window_w, receptive_field(cfg.blocks, max(cfg.kernel_sizes)))


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], int]]:
    """name -> (shape, fan_in), in initialisation order."""
    c, s, h = cfg.residual_channels, cfg.skip_channels, cfg.output_hidden
    per_branch = c // len(cfg.kernel_sizes)
    kmax = max(cfg.kernel_sizes)
    shapes = {"lift.weight": ((c,), 1), "lift.bias": ((c,), 1)}
    length = padded_length(cfg)
    for b in range(cfg.blocks):
        length -= kmax - 1
        for bank in ("filter", "gate"):
            for k in cfg.kernel_sizes:
                shapes[f"block{b}.{bank}.k{k}"] = ((k, c, per_branch), k * c)
            shapes[f"block{b}.{bank}.bias"] = ((c,), kmax * c)
        shapes[f"block{b}.skip.weight"] = ((length, c, s), length * c)
        shapes[f"block{b}.skip.bias"] = ((s,), length * c)
        shapes[f"block{b}.gcn.w0"] = ((c, cfg.gcn_hidden), c)
        shapes[f"block{b}.gcn.w1"] = ((cfg.gcn_hidden, c), cfg.gcn_hidden)
    shapes["out.w1"] = ((s, h), s)
    shapes["out.b1"] = ((h,), s)
    shapes["out.w2"] = ((h,), h)
    shapes["out.b2"] = ((), h)
    return shapes


def init_model(cfg: ModelConfig, adjacency, node_names: Sequence[str] = ()) -> ForecastModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) parameters from cfg.rng_seed."""
    cfg.validate()
    a_norm = normalize_adjacency(adjacency)
    rng = np.random.default_rng(cfg.rng_seed)
    params = {}
    for name, (shape, fan_in) in parameter_shapes(cfg).items():
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
    names = tuple(node_names) or tuple(str(i) for i in range(a_norm.shape[0]))
    return ForecastModel(cfg, a_norm, params, names)


def model_forward(model: ForecastModel, inputs) -> Tensor:
    """B x N x w windows -> B x N one-step forecasts."""
    cfg, p = model.config, model.parameters
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 3 or x.shape[1] != model.n or x.shape[2] != cfg.window_w:
        raise DimensionError(
            f"inputs must be B x {model.n} x {cfg.window_w}, got {x.shape}")
    pad = padded_length(cfg) - cfg.window_w
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, 0)))

    z = ad.einsum("bnl,c->bnlc", x, p["lift.weight"]) + p["lift.bias"]
    skip = None
    for b in range(cfg.blocks):
        residual = z
        h = gated_tc_forward(
            z,
            {k: p[f"block{b}.filter.k{k}"] for k in cfg.kernel_sizes}, p[f"block{b}.filter.bias"],
            {k: p[f"block{b}.gate.k{k}"] for k in cfg.kernel_sizes}, p[f"block{b}.gate.bias"],
        )
        s = ad.einsum("bnlc,lco->bno", h, p[f"block{b}.skip.weight"]) + p[f"block{b}.skip.bias"]
        skip = s if skip is None else skip + s
        g = gcn_forward(h, model.normalized_adjacency, p[f"block{b}.gcn.w0"], p[f"block{b}.gcn.w1"])
        z = g + residual[:, :, residual.shape[2] - g.shape[2]:, :]

    hidden = ad.relu(ad.einsum("bns,sh->bnh", ad.relu(skip), p["out.w1"]) + p["out.b1"])
    return ad.einsum("bnh,h->bn", hidden, p["out.w2"]) + p["out.b2"]


def predict(model: ForecastModel, batches: Iterable[WindowBatch]) -> np.ndarray:
    """Forecasts for every window, stacked T' x N."""
    out = []
    with ad.no_grad():
        for batch in batches:
            out.append(model_forward(model, batch.inputs).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.n))


def mse_loss(pred, target) -> Tensor:
    """Mean over the batch of the squared L2 norm across nodes."""
    pred, target = ad.lift(pred), ad.lift(target)
    if pred.shape != target.shape or pred.ndim != 2:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ")
    return ad.sum_all(ad.square(pred - target)) * (1.0 / pred.shape[0])


def backward(model: ForecastModel, loss: Tensor) -> dict[str, np.ndarray]:
    """Reverse-mode gradients for every parameter (zero for unused ones)."""
    model.zero_grad()
    ad.backward(loss)
    return {k: p.grad for k, p in model.parameters.items()}


# ── training ---------------------------------------------------------------
@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: float


@dataclass
class LossHistory:
    initial_loss: float = float("nan")
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self, path: Path) -> None:
        lines = ["epoch,train_loss,val_mse"]
        lines += [f"{r.epoch},{r.train_loss:.17g},{r.val_mse:.17g}" for r in self.epochs]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def evaluate_mse(model: ForecastModel, windows: Sequence[WindowBatch]) -> float:
    total, count = 0.0, 0
    with ad.no_grad():
        for batch in windows:
            pred = model_forward(model, batch.inputs).data
            total += float(((pred - batch.targets) ** 2).sum())
            count += len(batch)
    return total / count if count else float("nan")


def train(model: ForecastModel, train_windows: Sequence[WindowBatch],
          val_windows: Sequence[WindowBatch], tcfg: TrainConfig) -> tuple[ForecastModel, LossHistory]:
    """Adam over the training windows; returns the best-validation snapshot."""
    tcfg.validate()
    if not train_windows:
        raise DataError("no training windows")
    inputs = np.concatenate([b.inputs for b in train_windows])
    targets = np.concatenate([b.targets for b in train_windows])
    ends = np.concatenate([b.end_times for b in train_windows])
    if inputs.shape[1:] != (model.n, model.config.window_w):
        raise DimensionError(f"windows {inputs.shape[1:]} do not match model "
                             f"({model.n}, {model.config.window_w})")

    opt = ad.Adam(model.parameters.values(), tcfg.learning_rate,
                  tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps)
    rng = np.random.default_rng(tcfg.rng_seed)
    history = LossHistory(initial_loss=evaluate_mse(model, train_windows))
    best_state, best_val = model.state(), np.inf
    logging.info("[train] %d windows, initial loss %.6g", len(targets), history.initial_loss)

    for epoch in range(tcfg.epochs):
        order = rng.permutation(len(targets)) if tcfg.shuffle else None
        total, count = 0.0, 0
        for n_batch, batch in enumerate(batches_of(inputs, targets, ends, tcfg.batch_size, order)):
            opt.zero_grad()
            loss = mse_loss(model_forward(model, batch.inputs), batch.targets)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {n_batch}")
            ad.backward(loss)
            opt.step()
            total += value * len(batch)
            count += len(batch)
        val = evaluate_mse(model, val_windows) if val_windows else total / count
        history.epochs.append(EpochRecord(epoch, total / count, val))
        logging.info("[train] epoch %d/%d train %.6g val %.6g", epoch + 1, tcfg.epochs, total / count, val)
        if val < best_val:
            best_val, best_state, history.best_epoch = val, model.state(), epoch

    model.load_state(best_state)
    return model, history


# ── persistence ------------------------------------------------------------
def save_model(model: ForecastModel, path: Path, config_hash: str = "") -> None:
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "version": read_core_version(),
        "config_hash": config_hash,
        "config": asdict(model.config),
        "node_names": list(model.node_names),
        "normalized_adjacency": model.normalized_adjacency.tolist(),
        "parameters": {k: {"shape": list(p.shape), "data": p.data.ravel().tolist()}
                       for k, p in model.parameters.items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: Path, expected_nodes: int | None = None) -> ForecastModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise FormatError(f"{path}: truncated or corrupt checkpoint ({e})") from e
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"{path}: checkpoint format {doc.get('format_version')} "
                          f"!= supported {MODEL_FORMAT_VERSION}")
    try:
        raw = dict(doc["config"])
        raw["kernel_sizes"] = tuple(raw["kernel_sizes"])
        cfg = ModelConfig(**raw).validate()
        a_norm = np.asarray(doc["normalized_adjacency"], dtype=float)
        params = {}
        for name, (shape, _) in parameter_shapes(cfg).items():
            entry = doc["parameters"][name]
            data = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if data.shape != shape:
                raise FormatError(f"{path}: parameter {name} has shape {data.shape}, expected {shape}")
            params[name] = Tensor(data, requires_grad=True, name=name)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: incomplete checkpoint ({e})") from e
    if expected_nodes is not None and a_norm.shape[0] != expected_nodes:
        raise DimensionError(f"checkpoint is for {a_norm.shape[0]} sensors, data has {expected_nodes}")
    return ForecastModel(cfg, a_norm, params, tuple(doc.get("node_names", ())))
