"""Effective latent dimension: active-node counting and the two sweeps.

A latent node counts as active on a window when the magnitude of its
output exceeds the regularization strength used for training. Sweeps
retrain a fresh model per grid cell from the same seed and data so cells
are comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import neuralnet as nn
from .datapipe import WindowedDataset, prepare_datasets
from .dynamics import IntegrationConfig, SystemSpec, integrate
from .errors import ChaosAEError, InvalidInputError


@dataclass(frozen=True)
class LatentStats:
    """Mean/std of per-window active-node counts plus the test losses."""

    mean_active_nodes: float
    std_active_nodes: float
    test_loss: float
    test_mse: float
    alpha: float
    window_size: int


@dataclass(frozen=True)
class SweepCell:
    """One grid cell of a sweep; ``error`` is set when training failed.

    The trained model rides along so downstream Lyapunov experiments can
    reuse it without retraining.
    """

    key: float
    stats: LatentStats | None = None
    error: str | None = None
    model: nn.AutoencoderModel | None = None


def count_active(latent_vector: np.ndarray, alpha: float) -> int:
    """Number of components whose magnitude strictly exceeds ``alpha``."""
    if alpha < 0:
        raise InvalidInputError(f"alpha must be >= 0, got {alpha}")
    return int(np.count_nonzero(np.abs(np.asarray(latent_vector)) > alpha))


def active_counts(latent_batch: np.ndarray, alpha: float) -> np.ndarray:
    """Per-row active-node counts for a (B x latent) matrix."""
    if alpha < 0:
        raise InvalidInputError(f"alpha must be >= 0, got {alpha}")
    return np.count_nonzero(np.abs(np.atleast_2d(latent_batch)) > alpha, axis=1)


def latent_stats(
    model: nn.AutoencoderModel, test_set: WindowedDataset, alpha: float
) -> LatentStats:
    """Evaluate active-node statistics and losses over a full test set."""
    if test_set.window_size != model.window_size:
        raise InvalidInputError(
            f"model expects windows of {model.window_size}, data has {test_set.window_size}"
        )
    latent, output, _ = nn.forward(model, test_set.windows)
    counts = active_counts(latent, alpha)
    total, mse, _ = nn.loss_components(test_set.windows, output, latent, alpha)
    return LatentStats(
        mean_active_nodes=float(counts.mean()),
        std_active_nodes=float(counts.std()),
        test_loss=total,
        test_mse=mse,
        alpha=alpha,
        window_size=test_set.window_size,
    )


def _train_cell(
    series: np.ndarray,
    window_size: int,
    train_cfg: nn.TrainConfig,
    stride: int,
    train_fraction: float,
    latent_width: int,
    output_activation: str,
) -> tuple[nn.AutoencoderModel, nn.TrainReport, LatentStats]:
    train_set, test_set = prepare_datasets(series, window_size, stride, train_fraction)
    specs, latent_index = nn.default_architecture(
        window_size, latent_width=latent_width, output_activation=output_activation
    )
    model = nn.build_model(specs, latent_index, norm=train_set.norm, seed=train_cfg.seed)
    model, report = nn.train(model, train_set, test_set, train_cfg)
    model.train_config_echo = train_cfg.to_dict()
    stats = latent_stats(model, test_set, train_cfg.alpha)
    return model, report, stats


def sweep_alpha(
    system: SystemSpec,
    alphas: list[float],
    train_cfg: nn.TrainConfig,
    window_size: int = 30,
    integration: IntegrationConfig | None = None,
    coordinate: int = 0,
    stride: int = 1,
    train_fraction: float = 0.8,
    latent_width: int = 10,
    output_activation: str = "linear",
) -> list[SweepCell]:
    """Train one model per regularization strength on shared data.

    Cells that fail (e.g. diverging training) are recorded with their error
    message; the sweep continues.
    """
    if not alphas:
        raise InvalidInputError("alpha grid is empty")
    if integration is None:
        integration = IntegrationConfig()
    series = integrate(system, integration).coordinate(coordinate)
    cells = []
    for alpha in alphas:
        cfg = nn.TrainConfig(**{**train_cfg.to_dict(), "alpha": alpha})
        try:
            model, _, stats = _train_cell(
                series, window_size, cfg, stride, train_fraction,
                latent_width, output_activation,
            )
            cells.append(SweepCell(key=alpha, stats=stats, model=model))
        except ChaosAEError as exc:
            cells.append(SweepCell(key=alpha, error=str(exc)))
    return cells


def sweep_window(
    system: SystemSpec,
    window_sizes: list[int],
    train_cfg: nn.TrainConfig,
    integration: IntegrationConfig | None = None,
    coordinate: int = 0,
    stride: int = 1,
    train_fraction: float = 0.8,
    latent_width: int = 10,
    output_activation: str = "linear",
) -> list[SweepCell]:
    """Train one model per window size at a fixed regularization strength.

    Hidden-layer widths scale with the window (see
    ``neuralnet.scaled_hidden_sizes``); the latent width stays fixed.
    """
    if not window_sizes:
        raise InvalidInputError("window grid is empty")
    if any(w < 2 for w in window_sizes):
        raise InvalidInputError("window sizes must be >= 2")
    if integration is None:
        integration = IntegrationConfig()
    series = integrate(system, integration).coordinate(coordinate)
    cells = []
    for w in window_sizes:
        try:
            model, _, stats = _train_cell(
                series, w, train_cfg, stride, train_fraction,
                latent_width, output_activation,
            )
            cells.append(SweepCell(key=w, stats=stats, model=model))
        except ChaosAEError as exc:
            cells.append(SweepCell(key=w, error=str(exc)))
    return cells


def write_sweep_csv(cells: list[SweepCell], path) -> None:
    """Rows: ``alpha_or_W,mean_active,std_active,test_mse,test_total_loss``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("alpha_or_W,mean_active,std_active,test_mse,test_total_loss\n")
        for cell in cells:
            if cell.stats is None:
                fh.write(f"{cell.key!r},error,error,error,error\n")
            else:
                s = cell.stats
                fh.write(
                    f"{cell.key!r},{s.mean_active_nodes!r},{s.std_active_nodes!r},"
                    f"{s.test_mse!r},{s.test_loss!r}\n"
                )
