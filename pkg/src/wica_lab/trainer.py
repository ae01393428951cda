"""Autoencoder training against reconstruction error plus weighted
independence of the code.

The cost of a minibatch X with weighting points p_1..p_K is

    total = rec_error(X) + beta * wii(normalize(E(X)); p_1..p_K)

and every step minimizes it by exact reverse-mode differentiation
written out by hand: through the decoder, the componentwise
normalization (including its small-sigma guard), the Gaussian log
weights, the weighted covariance and the pair coefficients c_ij.  The
only quantities treated as constants are the weighting points and the
max-shift of the log weights; the shift is exactly gradient-free
because every weighted statistic is invariant to rescaling all weights.

Nothing here calls an autodiff framework; the gradient is validated
against central finite differences in the test suite.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import RngStream, as_data
from .errors import (
    DimensionError,
    FileFormatError,
    InsufficientDataError,
    TrainingDivergedError,
    WeightCollapseError,
)
from .wii import dependence_coefficients, sample_weighting_points

__all__ = [
    "MlpParams",
    "AutoEncoderModel",
    "TrainConfig",
    "TraceRecord",
    "TrainTrace",
    "init_mlp",
    "init_model",
    "mlp_forward",
    "rec_error",
    "wica_cost",
    "cost_gradient",
    "train",
    "encode",
    "save_model",
    "load_model",
    "save_trace",
    "load_trace",
]

_NORMALIZE_FLOOR = 1e-8  # matches core.normalize_componentwise
_MIN_EFFECTIVE_WEIGHT = 1e-12
_COLLAPSE_RETRIES = 5

_ACTIVATIONS = ("tanh", "linear")


@dataclass(eq=False)
class MlpParams:
    """Plain feed-forward parameters; weights[l] maps sizes[l] -> sizes[l+1]."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self) -> None:
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2:
            raise DimensionError("an MLP needs at least input and output sizes")
        if any(s < 1 for s in self.sizes):
            raise DimensionError(f"layer sizes must be positive: {self.sizes}")
        n_layers = len(self.sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise DimensionError(
                f"{n_layers} layers need {n_layers} weight/bias pairs, got "
                f"{len(self.weights)}/{len(self.biases)}"
            )
        if self.hidden_activation not in _ACTIVATIONS or self.output_activation != "linear":
            raise DimensionError(
                f"unsupported activations ({self.hidden_activation}, {self.output_activation})"
            )
        for l in range(n_layers):
            w = np.asarray(self.weights[l], dtype=np.float64)
            b = np.asarray(self.biases[l], dtype=np.float64)
            if w.shape != (self.sizes[l], self.sizes[l + 1]) or b.shape != (self.sizes[l + 1],):
                raise DimensionError(
                    f"layer {l}: expected weight {self.sizes[l]}x{self.sizes[l + 1]} "
                    f"and bias {self.sizes[l + 1]}, got {w.shape} and {b.shape}"
                )
            self.weights[l] = w
            self.biases[l] = b

    @property
    def in_size(self) -> int:
        return self.sizes[0]

    @property
    def out_size(self) -> int:
        return self.sizes[-1]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


@dataclass(eq=False)
class AutoEncoderModel:
    encoder: MlpParams
    decoder: MlpParams

    def __post_init__(self) -> None:
        d = self.encoder.in_size
        if self.encoder.out_size != d or self.decoder.in_size != d or self.decoder.out_size != d:
            raise DimensionError(
                "encoder and decoder must both map d -> d with the same d; got "
                f"encoder {self.encoder.sizes}, decoder {self.decoder.sizes}"
            )

    @property
    def d(self) -> int:
        return self.encoder.in_size


@dataclass(frozen=True)
class TrainConfig:
    """Everything a run depends on; two configs equal means two runs equal.

    num_weighting_points=None resolves to d.  rec_norm picks whether the
    reconstruction term is a batch mean ("mean", default, keeps beta
    comparable across batch sizes) or the raw sum ("sum").
    """

    beta: float = 1.0
    batch_size: int = 256
    steps: int = 5000
    learning_rate: float = 1e-3
    seed: int = 0
    num_weighting_points: int | None = None
    optimizer: str = "adam"
    log_every: int = 50
    hidden_sizes: tuple[int, ...] = (128, 128, 128)
    rec_norm: str = "mean"

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise DimensionError(f"beta must be >= 0, got {self.beta}")
        if self.batch_size < 2:
            raise DimensionError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.steps < 0:
            raise DimensionError(f"steps must be >= 0, got {self.steps}")
        if self.learning_rate <= 0:
            raise DimensionError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.seed < 0:
            raise DimensionError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.num_weighting_points is not None and self.num_weighting_points < 1:
            raise DimensionError(
                f"num_weighting_points must be >= 1 or None, got {self.num_weighting_points}"
            )
        if self.optimizer not in ("adam", "sgd"):
            raise DimensionError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.log_every < 1:
            raise DimensionError(f"log_every must be >= 1, got {self.log_every}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h < 1 for h in self.hidden_sizes):
            raise DimensionError(f"hidden sizes must be positive: {self.hidden_sizes}")
        if self.rec_norm not in ("mean", "sum"):
            raise DimensionError(f"rec_norm must be 'mean' or 'sum', got {self.rec_norm!r}")


class TraceRecord(NamedTuple):
    step: int
    rec_error: float
    wii: float
    total: float


@dataclass(frozen=True)
class TrainTrace:
    records: tuple[TraceRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "records", tuple(TraceRecord(*r) for r in self.records)
        )


# ---------------------------------------------------------------------------
# construction and forward passes


def init_mlp(sizes, rng: RngStream) -> MlpParams:
    """Weights N(0, 1/fan_in), biases zero, drawn in layer order."""
    sizes = tuple(int(s) for s in sizes)
    gen = rng.generator()
    weights = []
    biases = []
    for l in range(len(sizes) - 1):
        fan_in = sizes[l]
        weights.append(gen.standard_normal((fan_in, sizes[l + 1])) / np.sqrt(fan_in))
        biases.append(np.zeros(sizes[l + 1]))
    return MlpParams(sizes, weights, biases)


def init_model(d: int, hidden_sizes, rng: RngStream) -> AutoEncoderModel:
    if d < 2:
        raise DimensionError(f"need d >= 2, got {d}")
    sizes = (d, *tuple(int(h) for h in hidden_sizes), d)
    encoder = init_mlp(sizes, rng.split("encoder"))
    decoder = init_mlp(sizes, rng.split("decoder"))
    return AutoEncoderModel(encoder, decoder)


def _mlp_forward_cached(m: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    # caches activations per layer; tanh' is recovered as 1 - a^2
    acts = [x]
    a = x
    last = len(m.weights) - 1
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        a = a @ w + b
        if l < last:
            a = np.tanh(a)
        acts.append(a)
    return a, acts


def mlp_forward(m: MlpParams, x) -> np.ndarray:
    """Affine / tanh chain with a linear last layer."""
    x = as_data(x, name="input")
    if x.shape[1] != m.in_size:
        raise DimensionError(f"expected {m.in_size} input columns, got {x.shape[1]}")
    out, _ = _mlp_forward_cached(m, x)
    return out


def _mlp_backward(
    m: MlpParams, acts: list[np.ndarray], d_out: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Gradients of all layers plus the gradient w.r.t. the input."""
    grad_w: list[np.ndarray] = [np.empty(0)] * len(m.weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(m.weights)
    last = len(m.weights) - 1
    d_a = d_out
    for l in range(last, -1, -1):
        if l < last:
            d_pre = d_a * (1.0 - acts[l + 1] ** 2)
        else:
            d_pre = d_a
        grad_w[l] = acts[l].T @ d_pre
        grad_b[l] = d_pre.sum(axis=0)
        d_a = d_pre @ m.weights[l].T
    return grad_w, grad_b, d_a


def encode(model: AutoEncoderModel, x) -> np.ndarray:
    """The retrieved signals: encoder forward pass only."""
    return mlp_forward(model.encoder, x)


def rec_error(model: AutoEncoderModel, x, *, rec_norm: str = "mean") -> float:
    """Summed squared reconstruction error, optionally divided by N."""
    x = as_data(x, name="batch")
    recon = mlp_forward(model.decoder, mlp_forward(model.encoder, x))
    sq = float(((recon - x) ** 2).sum())
    return sq / x.shape[0] if rec_norm == "mean" else sq


# ---------------------------------------------------------------------------
# the cost and its exact gradient


@dataclass(eq=False)
class ModelGrad:
    """Cost gradient laid out exactly like the model's parameters."""

    encoder_w: list[np.ndarray]
    encoder_b: list[np.ndarray]
    decoder_w: list[np.ndarray]
    decoder_b: list[np.ndarray]

    def max_abs(self) -> float:
        parts = self.encoder_w + self.encoder_b + self.decoder_w + self.decoder_b
        return max(float(np.abs(p).max()) for p in parts)


def _normalize_cached(e: np.ndarray):
    mu = e.mean(axis=0)
    sigma = e.std(axis=0)
    denom = np.where(sigma < _NORMALIZE_FLOOR, sigma + _NORMALIZE_FLOOR, sigma)
    y = (e - mu) / denom
    return y, e - mu, sigma, denom


def _point_forward(y: np.ndarray, p: np.ndarray):
    """Weights, centered data, covariance and pair coefficients at p."""
    diff = y - p
    lw = -0.5 * np.einsum("ij,ij->i", diff, diff)
    w = np.exp(lw - lw.max())
    total = w.sum()
    if total - 1.0 < _MIN_EFFECTIVE_WEIGHT:
        raise WeightCollapseError(p, float(total - 1.0))
    centered = y - (w @ y) / total
    z = (centered.T * w) @ centered / total
    c = dependence_coefficients(z)
    d = y.shape[1]
    value = float(c.sum() / (d * (d - 1)))
    return value, w, total, centered, z


def _point_backward(
    y: np.ndarray, p: np.ndarray, w: np.ndarray, total: float,
    centered: np.ndarray, z: np.ndarray,
) -> np.ndarray:
    """d(wii at p)/dY, unit upstream.  Mirrors _point_forward exactly."""
    d = y.shape[1]
    scale = 1.0 / (d * (d - 1))
    var = np.diag(z)
    denom = var[:, None] ** 2 + var[None, :] ** 2
    live = denom > 0.0
    np.fill_diagonal(live, False)
    safe = np.where(live, denom, 1.0)

    # dwii/dZ: off-diagonal from c_ij = 2 z_ij^2 / denom, diagonal from
    # the two denominator appearances of each variance
    g = np.where(live, scale * 4.0 * z / safe, 0.0)
    ratio = np.where(live, z * z / (safe * safe), 0.0)
    np.fill_diagonal(g, -scale * 8.0 * var * ratio.sum(axis=1))

    # Z = centered^T diag(w) centered / total
    sym = g + g.T
    d_centered = (w / total)[:, None] * (centered @ sym)
    quad = np.einsum("ia,ab,ib->i", centered, g, centered)
    trace_gz = float(np.sum(g * z))
    h = d_centered.sum(axis=0)
    d_w = (quad - trace_gz) / total - (centered @ h) / total
    d_y = d_centered - np.outer(w, h) / total

    # w_i = exp(lw_i - max lw); the shift is exactly gradient-free
    d_lw = w * d_w
    d_y -= d_lw[:, None] * (y - p)
    return d_y


def _cost_forward_backward(
    model: AutoEncoderModel, x: np.ndarray, points: np.ndarray,
    cfg: TrainConfig, *, need_grad: bool,
):
    n = x.shape[0]
    enc_out, enc_acts = _mlp_forward_cached(model.encoder, x)
    recon, dec_acts = _mlp_forward_cached(model.decoder, enc_out)
    resid = recon - x
    rec = float((resid ** 2).sum())
    if cfg.rec_norm == "mean":
        rec /= n

    y, u, sigma, denom = _normalize_cached(enc_out)

    survivors = []
    last_collapse: WeightCollapseError | None = None
    for p in points:
        try:
            survivors.append((p, _point_forward(y, p)))
        except WeightCollapseError as exc:
            last_collapse = exc
    if not survivors:
        assert last_collapse is not None
        raise last_collapse
    wii_value = float(np.mean([s[1][0] for s in survivors]))
    total = rec + cfg.beta * wii_value
    if not need_grad:
        return total, rec, wii_value, None

    # reconstruction path
    d_recon = 2.0 * resid / (n if cfg.rec_norm == "mean" else 1)
    dec_gw, dec_gb, d_enc_out = _mlp_backward(model.decoder, dec_acts, d_recon)

    # independence path: accumulate dY over surviving points, then pull
    # back through the normalization
    if cfg.beta != 0.0:
        coef = cfg.beta / len(survivors)
        d_y = np.zeros_like(y)
        for p, (_, w, total_w, centered, z) in survivors:
            d_y += coef * _point_backward(y, p, w, total_w, centered, z)
        g_mean = d_y.mean(axis=0)
        g_dot_u = np.einsum("ij,ij->j", d_y, u)
        d_enc_norm = (d_y - g_mean) / denom
        live = sigma > 0.0
        slope = np.where(live, g_dot_u / (n * np.where(live, sigma, 1.0) * denom ** 2), 0.0)
        d_enc_out = d_enc_out + d_enc_norm - u * slope
    enc_gw, enc_gb, _ = _mlp_backward(model.encoder, enc_acts, d_enc_out)

    return total, rec, wii_value, ModelGrad(enc_gw, enc_gb, dec_gw, dec_gb)


def _check_cost_inputs(model: AutoEncoderModel, x, points) -> tuple[np.ndarray, np.ndarray]:
    x = as_data(x, min_cols=2, name="batch")
    points = as_data(points, name="weighting points")
    if x.shape[1] != model.d:
        raise DimensionError(f"model has d={model.d}, batch has {x.shape[1]} columns")
    if points.shape[1] != model.d:
        raise DimensionError(
            f"weighting points must have {model.d} columns, got {points.shape[1]}"
        )
    return x, points


def wica_cost(
    model: AutoEncoderModel, x, points, cfg: TrainConfig
) -> tuple[float, float, float]:
    """(total, rec, wii) of a batch at fixed weighting points."""
    x, points = _check_cost_inputs(model, x, points)
    total, rec, wii_value, _ = _cost_forward_backward(
        model, x, points, cfg, need_grad=False
    )
    return total, rec, wii_value


def cost_gradient(model: AutoEncoderModel, x, points, cfg: TrainConfig) -> ModelGrad:
    """Exact gradient of wica_cost's total w.r.t. every parameter."""
    x, points = _check_cost_inputs(model, x, points)
    _, _, _, grad = _cost_forward_backward(model, x, points, cfg, need_grad=True)
    return grad


# ---------------------------------------------------------------------------
# optimization


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float) -> None:
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class _Sgd:
    def __init__(self, params: list[np.ndarray], lr: float) -> None:
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


def _param_list(model: AutoEncoderModel) -> list[np.ndarray]:
    return (
        model.encoder.weights + model.encoder.biases
        + model.decoder.weights + model.decoder.biases
    )


def _grad_list(grad: ModelGrad) -> list[np.ndarray]:
    return grad.encoder_w + grad.encoder_b + grad.decoder_w + grad.decoder_b


def train(x, cfg: TrainConfig) -> tuple[AutoEncoderModel, TrainTrace]:
    """Run the full minibatch loop; deterministic in (x, cfg).

    Weighting points are redrawn from the current normalized code at
    every step; a step whose points all collapse retries with fresh
    points up to 5 times before giving up.
    """
    x = as_data(x, min_cols=2, name="training data")
    n, d = x.shape
    if cfg.batch_size > n:
        raise InsufficientDataError(
            f"batch_size {cfg.batch_size} exceeds the {n} available rows"
        )
    root = RngStream(cfg.seed)
    model = init_model(d, cfg.hidden_sizes, root.split("init"))
    batch_gen = root.split("batches").generator()
    points_rng = root.split("points")
    num_points = cfg.num_weighting_points or d

    params = _param_list(model)
    opt = (_Adam if cfg.optimizer == "adam" else _Sgd)(params, cfg.learning_rate)
    records: list[TraceRecord] = []
    for step in range(1, cfg.steps + 1):
        idx = batch_gen.choice(n, size=cfg.batch_size, replace=False)
        xb = x[idx]
        outcome = None
        for _ in range(1 + _COLLAPSE_RETRIES):
            code = mlp_forward(model.encoder, xb)
            y, _, _, _ = _normalize_cached(code)
            points = sample_weighting_points(y, num_points, points_rng)
            try:
                outcome = _cost_forward_backward(model, xb, points, cfg, need_grad=True)
                break
            except WeightCollapseError as exc:
                last = exc
        if outcome is None:
            raise last
        total, rec, wii_value, grad = outcome
        if not np.isfinite(total):
            raise TrainingDivergedError(step, total)
        opt.step(params, _grad_list(grad))
        if not model.encoder.all_finite() or not model.decoder.all_finite():
            raise TrainingDivergedError(step, float("nan"))
        if step == 1 or step % cfg.log_every == 0 or step == cfg.steps:
            records.append(TraceRecord(step, float(rec), float(wii_value), float(total)))
    return model, TrainTrace(tuple(records))


# ---------------------------------------------------------------------------
# serialization


def _mlp_to_json(m: MlpParams) -> dict:
    doc: dict = {}
    for l, (w, b) in enumerate(zip(m.weights, m.biases), start=1):
        doc[f"w{l}"] = w.tolist()
        doc[f"b{l}"] = b.tolist()
    return doc


def _config_to_json(cfg: TrainConfig) -> dict:
    return {
        "beta": cfg.beta,
        "batch_size": cfg.batch_size,
        "steps": cfg.steps,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
        "num_weighting_points": cfg.num_weighting_points,
        "optimizer": cfg.optimizer,
        "log_every": cfg.log_every,
        "hidden_sizes": list(cfg.hidden_sizes),
        "rec_norm": cfg.rec_norm,
    }


def save_model(path, model: AutoEncoderModel, cfg: TrainConfig) -> None:
    doc = {
        "d": model.d,
        "config": _config_to_json(cfg),
        "encoder": _mlp_to_json(model.encoder),
        "decoder": _mlp_to_json(model.decoder),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def _mlp_from_json(obj, where: str) -> MlpParams:
    if not isinstance(obj, dict):
        raise FileFormatError(f"{where}: must be an object")
    n_layers = len(obj) // 2
    if n_layers < 1 or len(obj) != 2 * n_layers:
        raise FileFormatError(f"{where}: expected w1/b1..wL/bL fields")
    weights = []
    biases = []
    for l in range(1, n_layers + 1):
        for key, store, ndim in ((f"w{l}", weights, 2), (f"b{l}", biases, 1)):
            if key not in obj:
                raise FileFormatError(f"{where}: missing field {key!r}")
            try:
                arr = np.asarray(obj[key], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise FileFormatError(f"{where}.{key}: {exc}") from None
            if arr.ndim != ndim:
                raise FileFormatError(f"{where}.{key}: expected ndim={ndim}")
            store.append(arr)
    sizes = (weights[0].shape[0], *(w.shape[1] for w in weights))
    try:
        return MlpParams(sizes, weights, biases)
    except DimensionError as exc:
        raise FileFormatError(f"{where}: {exc}") from None


def load_model(path) -> tuple[AutoEncoderModel, TrainConfig]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise FileFormatError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"
        ) from None
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: top level must be an object")
    for name in ("d", "config", "encoder", "decoder"):
        if name not in doc:
            raise FileFormatError(f"{path}: missing field {name!r}")
    raw_cfg = doc["config"]
    if not isinstance(raw_cfg, dict):
        raise FileFormatError(f"{path}: 'config' must be an object")
    try:
        cfg = TrainConfig(
            **{
                **raw_cfg,
                "hidden_sizes": tuple(raw_cfg.get("hidden_sizes", ())),
            }
        )
    except (TypeError, DimensionError) as exc:
        raise FileFormatError(f"{path}: bad config: {exc}") from None
    encoder = _mlp_from_json(doc["encoder"], f"{path}: encoder")
    decoder = _mlp_from_json(doc["decoder"], f"{path}: decoder")
    try:
        model = AutoEncoderModel(encoder, decoder)
    except DimensionError as exc:
        raise FileFormatError(f"{path}: {exc}") from None
    if model.d != doc["d"]:
        raise FileFormatError(f"{path}: 'd' is {doc['d']} but nets have d={model.d}")
    return model, cfg


def save_trace(path, trace: TrainTrace) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "rec_error", "wii", "total"])
        for r in trace.records:
            writer.writerow([r.step, repr(r.rec_error), repr(r.wii), repr(r.total)])


def load_trace(path) -> TrainTrace:
    path = Path(path)
    try:
        with path.open("r", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["step", "rec_error", "wii", "total"]:
                raise FileFormatError(f"{path}: bad trace header {header!r}")
            records = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 4:
                    raise FileFormatError(f"{path}:{lineno}: expected 4 fields")
                try:
                    records.append(
                        TraceRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
                    )
                except ValueError as exc:
                    raise FileFormatError(f"{path}:{lineno}: {exc}") from None
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from None
    return TrainTrace(tuple(records))
