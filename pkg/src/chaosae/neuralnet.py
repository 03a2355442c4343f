"""Dense autoencoder built directly on numpy.

Forward pass, exact backpropagation of the reconstruction + latent-L1
loss, Adam updates, Xavier-uniform initialization, the training loop, and
JSON model serialization all live here. No autodiff framework is used;
the gradient path is checked against finite differences in the tests.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .datapipe import NormParams, WindowedDataset, denormalize, make_windows, stitch_at
from .errors import (
    InvalidInputError,
    ModelFormatError,
    TrainingDivergedError,
    UnsupportedVersionError,
)

MODEL_FORMAT_VERSION = 1

ACTIVATIONS = ("sigmoid", "relu", "linear")


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return expit(z)
    return z


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # derivative wrt the pre-activation z; a is the cached activation output
    if name == "relu":
        return (z > 0.0).astype(float)  # subgradient 0 at the kink
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass(frozen=True)
class LayerSpec:
    input_size: int
    output_size: int
    activation: str

    def __post_init__(self):
        if self.input_size < 1 or self.output_size < 1:
            raise InvalidInputError("layer sizes must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")


@dataclass
class AutoencoderModel:
    """Layer specs plus their weight matrices and bias vectors.

    ``latent_layer_index`` marks the layer whose post-activation output is
    the latent code. ``norm`` remembers how the training series was scaled
    so reconstructions can run from physical units.
    """

    layer_specs: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    latent_layer_index: int
    norm: NormParams | None = None
    train_config_echo: dict | None = None

    def __post_init__(self):
        for k in range(len(self.layer_specs) - 1):
            if self.layer_specs[k].output_size != self.layer_specs[k + 1].input_size:
                raise InvalidInputError(
                    f"layer {k} outputs {self.layer_specs[k].output_size} values but "
                    f"layer {k + 1} expects {self.layer_specs[k + 1].input_size}"
                )
        if self.layer_specs[0].input_size != self.layer_specs[-1].output_size:
            raise InvalidInputError("autoencoder input and output widths must match")
        if not 0 <= self.latent_layer_index < len(self.layer_specs):
            raise InvalidInputError("latent_layer_index out of range")
        for k, (spec, w, b) in enumerate(zip(self.layer_specs, self.weights, self.biases)):
            if w.shape != (spec.input_size, spec.output_size) or b.shape != (spec.output_size,):
                raise InvalidInputError(f"layer {k} weight/bias shapes do not match its spec")

    @property
    def window_size(self) -> int:
        return self.layer_specs[0].input_size

    @property
    def latent_width(self) -> int:
        return self.layer_specs[self.latent_layer_index].output_size

    def copy(self) -> "AutoencoderModel":
        return AutoencoderModel(
            layer_specs=list(self.layer_specs),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            latent_layer_index=self.latent_layer_index,
            norm=self.norm,
            train_config_echo=copy.deepcopy(self.train_config_echo),
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 7500
    batch_size: int = 32
    learning_rate: float = 0.001
    alpha: float = 1e-5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidInputError("need epochs >= 0 and batch_size >= 1")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.alpha < 0:
            raise InvalidInputError("alpha must be >= 0")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "alpha": self.alpha,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
        }


@dataclass
class TrainReport:
    """Per-epoch loss traces; test loss is recorded both with and without
    the latent penalty so either convention can be plotted."""

    train_loss: np.ndarray
    test_loss: np.ndarray
    test_mse: np.ndarray
    final_test_mse: float


def scaled_hidden_sizes(window_size: int) -> tuple[int, int]:
    """Hidden widths for window sizes other than 30, keeping the 22/30 and
    15/30 compression ratios (half-up rounding)."""
    h1 = int(np.floor(22.0 * window_size / 30.0 + 0.5))
    h2 = int(np.floor(15.0 * window_size / 30.0 + 0.5))
    return max(h1, 1), max(h2, 1)


def default_architecture(
    window_size: int = 30,
    latent_width: int = 10,
    output_activation: str = "linear",
) -> tuple[list[LayerSpec], int]:
    """Mirror-image encoder/decoder stack around a relu latent layer.

    Returns the layer list and the index of the latent layer. For W=30 the
    stack is 30-22(sigmoid)-15(relu)-10(relu)-15(relu)-22(sigmoid)-30.
    """
    h1, h2 = scaled_hidden_sizes(window_size)
    specs = [
        LayerSpec(window_size, h1, "sigmoid"),
        LayerSpec(h1, h2, "relu"),
        LayerSpec(h2, latent_width, "relu"),
        LayerSpec(latent_width, h2, "relu"),
        LayerSpec(h2, h1, "sigmoid"),
        LayerSpec(h1, window_size, output_activation),
    ]
    return specs, 2


def init_xavier(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Xavier-uniform draw: entries in [-L, L] with L = sqrt(6/(fan_in+fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise InvalidInputError("fan sizes must be >= 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def build_model(
    layer_specs: list[LayerSpec],
    latent_layer_index: int,
    norm: NormParams | None = None,
    seed: int = 0,
) -> AutoencoderModel:
    """Assemble a model with Xavier-uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    weights = [init_xavier(s.input_size, s.output_size, rng) for s in layer_specs]
    biases = [np.zeros(s.output_size) for s in layer_specs]
    return AutoencoderModel(
        layer_specs=layer_specs,
        weights=weights,
        biases=biases,
        latent_layer_index=latent_layer_index,
        norm=norm,
    )


def forward(
    model: AutoencoderModel, batch: np.ndarray
) -> tuple[np.ndarray, np.ndarray, list]:
    """Run a (B x W) batch through the stack.

    Returns the latent codes, the reconstructed batch, and a cache of
    per-layer (pre-activation, activation) pairs for backpropagation.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[1] != model.window_size:
        raise InvalidInputError(
            f"batch has {batch.shape[1]} columns, model expects {model.window_size}"
        )
    a = batch
    cache = [(None, batch)]
    latent = None
    for k, spec in enumerate(model.layer_specs):
        z = a @ model.weights[k] + model.biases[k]
        a = _apply_activation(spec.activation, z)
        cache.append((z, a))
        if k == model.latent_layer_index:
            latent = a
    return latent, a, cache


def loss(
    batch: np.ndarray, output: np.ndarray, latent: np.ndarray, alpha: float
) -> float:
    """Batch-mean of per-sample reconstruction MSE plus latent L1 penalty."""
    total, _, _ = loss_components(batch, output, latent, alpha)
    return total


def loss_components(
    batch: np.ndarray, output: np.ndarray, latent: np.ndarray, alpha: float
) -> tuple[float, float, float]:
    """Returns (total, mse, l1_penalty), each already averaged over the batch."""
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    output = np.atleast_2d(np.asarray(output, dtype=float))
    latent = np.atleast_2d(np.asarray(latent, dtype=float))
    if batch.shape != output.shape:
        raise InvalidInputError("input and reconstruction shapes differ")
    mse = float(np.mean((batch - output) ** 2))
    l1 = float(alpha * np.mean(np.sum(np.abs(latent), axis=1)))
    return mse + l1, mse, l1


def backward(
    model: AutoencoderModel, batch: np.ndarray, cache: list, alpha: float
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradients of the batch-mean loss for every weight and bias.

    The latent penalty contributes alpha * sign(h) at the latent layer's
    post-activation output, with subgradient 0 where h == 0.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    b, w = batch.shape
    output = cache[-1][1]
    # d(batch loss)/d(output): per-sample MSE is averaged over W, then over B
    grad_act = 2.0 * (output - batch) / (w * b)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layer_specs)
    for k in range(len(model.layer_specs) - 1, -1, -1):
        z, a = cache[k + 1]
        if k == model.latent_layer_index:
            grad_act = grad_act + alpha * np.sign(a) / b
        grad_z = grad_act * _activation_grad(model.layer_specs[k].activation, z, a)
        prev_a = cache[k][1]
        grads[k] = (prev_a.T @ grad_z, grad_z.sum(axis=0))
        if k > 0:
            grad_act = grad_z @ model.weights[k].T
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    gradients: list[np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
    step_index: int,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; mutates ``params`` and ``state`` in place."""
    if step_index < 1:
        raise InvalidInputError("Adam step_index starts at 1")
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon
    c1 = 1.0 - b1**step_index
    c2 = 1.0 - b2**step_index
    for p, g, m, v in zip(params, gradients, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def _flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    flat = []
    for dw, db in grads:
        flat.append(dw)
        flat.append(db)
    return flat


def _model_params(model: AutoencoderModel) -> list[np.ndarray]:
    flat = []
    for w, b in zip(model.weights, model.biases):
        flat.append(w)
        flat.append(b)
    return flat


def train(
    model: AutoencoderModel,
    train_set: WindowedDataset,
    test_set: WindowedDataset,
    cfg: TrainConfig,
) -> tuple[AutoencoderModel, TrainReport]:
    """Mini-batch Adam training with a seeded shuffle each epoch.

    The final partial batch is used rather than dropped. Train loss is the
    sample-weighted mean of the minibatch losses seen during the epoch;
    test losses are evaluated on the full test set after each epoch.
    """
    if train_set.window_size != test_set.window_size:
        raise InvalidInputError("train and test sets use different window sizes")
    if train_set.norm != test_set.norm:
        raise InvalidInputError("train and test sets use different normalizations")
    if train_set.window_size != model.window_size:
        raise InvalidInputError(
            f"model expects windows of {model.window_size}, data has {train_set.window_size}"
        )
    model = model.copy()
    if cfg.epochs == 0:
        empty = np.empty(0)
        return model, TrainReport(empty, empty.copy(), empty.copy(), float("nan"))

    rng = np.random.default_rng(cfg.seed)
    params = _model_params(model)
    state = AdamState.for_params(params)
    data = train_set.windows
    n = data.shape[0]
    train_curve = np.empty(cfg.epochs)
    test_curve = np.empty(cfg.epochs)
    test_mse_curve = np.empty(cfg.epochs)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, cfg.batch_size):
            batch = data[order[lo : lo + cfg.batch_size]]
            latent, output, cache = forward(model, batch)
            batch_loss = loss(batch, output, latent, cfg.alpha)
            loss_sum += batch_loss * batch.shape[0]
            grads = backward(model, batch, cache, cfg.alpha)
            step += 1
            adam_step(params, _flatten_grads(grads), state, cfg, step)
        train_curve[epoch] = loss_sum / n
        latent, output, _ = forward(model, test_set.windows)
        total, mse, _ = loss_components(test_set.windows, output, latent, cfg.alpha)
        test_curve[epoch] = total
        test_mse_curve[epoch] = mse
        if not (np.isfinite(train_curve[epoch]) and np.isfinite(total)):
            raise TrainingDivergedError(
                f"loss became non-finite in epoch {epoch}", epoch=epoch
            )
    return model, TrainReport(
        train_loss=train_curve,
        test_loss=test_curve,
        test_mse=test_mse_curve,
        final_test_mse=float(test_mse_curve[-1]),
    )


def reconstruct_series(
    model: AutoencoderModel,
    series: np.ndarray,
    stride: int | None = None,
) -> np.ndarray:
    """Pass a physical-units series through the autoencoder.

    The series is scaled with the model's stored normalization, windowed
    (default: non-overlapping), reconstructed, stitched, and mapped back to
    physical units. When the last window does not land on the series end, a
    final window anchored at the end covers the remainder, so the output
    always has the input's length.
    """
    if model.norm is None:
        raise InvalidInputError("model carries no normalization; cannot reconstruct")
    series = np.asarray(series, dtype=float)
    w = model.window_size
    if len(series) < w:
        raise InvalidInputError(f"series of length {len(series)} is shorter than W={w}")
    if stride is None:
        stride = w
    scaled = (series - model.norm.min) / (model.norm.max - model.norm.min)
    dataset = make_windows(scaled, w, stride)
    offsets = np.arange(len(dataset)) * stride
    last = len(series) - w
    if offsets[-1] != last:
        windows = np.vstack([dataset.windows, scaled[last:][None, :]])
        offsets = np.append(offsets, last)
    else:
        windows = dataset.windows
    _, outputs, _ = forward(model, windows)
    return denormalize(stitch_at(outputs, offsets), model.norm)


def save_model(model: AutoencoderModel, path) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_specs": [
            {"input_size": s.input_size, "output_size": s.output_size, "activation": s.activation}
            for s in model.layer_specs
        ],
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "latent_layer_index": model.latent_layer_index,
        "norm": None if model.norm is None else {"min": model.norm.min, "max": model.norm.max},
        "train_config_echo": model.train_config_echo,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> AutoencoderModel:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"model file {path} is not valid JSON at byte {exc.pos}: {exc.msg}",
            offset=exc.pos,
        ) from exc
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"model file declares format_version={version!r}, "
            f"this build reads {MODEL_FORMAT_VERSION}"
        )
    try:
        specs = [
            LayerSpec(int(s["input_size"]), int(s["output_size"]), s["activation"])
            for s in payload["layer_specs"]
        ]
        weights = [
            np.asarray(flat, dtype=float).reshape(s.input_size, s.output_size)
            for flat, s in zip(payload["weights"], specs)
        ]
        biases = [np.asarray(b, dtype=float) for b in payload["biases"]]
        norm = payload["norm"]
        return AutoencoderModel(
            layer_specs=specs,
            weights=weights,
            biases=biases,
            latent_layer_index=int(payload["latent_layer_index"]),
            norm=None if norm is None else NormParams(norm["min"], norm["max"]),
            train_config_echo=payload.get("train_config_echo"),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"model file {path} is missing fields: {exc}") from exc


def write_loss_csv(report: TrainReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,test_loss\n")
        for e, (tr, te) in enumerate(zip(report.train_loss, report.test_loss)):
            fh.write(f"{e},{float(tr)!r},{float(te)!r}\n")
