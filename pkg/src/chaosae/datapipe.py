"""Series preparation: normalization, splitting, windowing, delay embedding.

All functions are pure. Windowed data is what the autoencoder consumes;
``stitch`` merges (possibly overlapping) window outputs back into a series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class NormParams:
    """Affine min/max map used to place a series in [0, 1]."""

    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise InvalidInputError(
                f"normalization requires max > min, got [{self.min}, {self.max}]"
            )


@dataclass(frozen=True)
class EmbeddingConfig:
    """Delay-embedding parameters: dimension ``m`` and lag ``tau`` in steps."""

    m: int
    tau: int = 1

    def __post_init__(self):
        if self.m < 1 or self.tau < 1:
            raise InvalidInputError(f"need m >= 1 and tau >= 1, got m={self.m}, tau={self.tau}")


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding-window slices of a (normalized) scalar series."""

    windows: np.ndarray
    window_size: int
    stride: int
    norm: NormParams | None = None
    source_coordinate: int = 0

    def __len__(self) -> int:
        return self.windows.shape[0]


def normalize(series: np.ndarray) -> tuple[np.ndarray, NormParams]:
    """Map a series onto [0, 1], returning the parameters for inversion."""
    series = np.asarray(series, dtype=float)
    lo, hi = float(np.min(series)), float(np.max(series))
    if hi == lo:
        raise InvalidInputError("cannot normalize a constant series (max == min)")
    return (series - lo) / (hi - lo), NormParams(lo, hi)


def denormalize(series: np.ndarray, norm: NormParams) -> np.ndarray:
    return np.asarray(series, dtype=float) * (norm.max - norm.min) + norm.min


def split(series: np.ndarray, train_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Cut a contiguous train prefix; temporal order is preserved."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    series = np.asarray(series)
    cut = int(np.floor(train_fraction * len(series)))
    if cut == 0 or cut == len(series):
        raise InvalidInputError(
            f"split of {len(series)} points at {train_fraction} leaves an empty segment"
        )
    return series[:cut], series[cut:]


def num_windows(series_length: int, window_size: int, stride: int) -> int:
    return (series_length - window_size) // stride + 1


def make_windows(
    series: np.ndarray,
    window_size: int,
    stride: int = 1,
    norm: NormParams | None = None,
    source_coordinate: int = 0,
) -> WindowedDataset:
    """Slice ``series`` into windows; window k covers [k*stride, k*stride + W)."""
    series = np.asarray(series, dtype=float)
    if window_size < 1 or window_size > len(series):
        raise InvalidInputError(
            f"window size {window_size} invalid for series of length {len(series)}"
        )
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    count = num_windows(len(series), window_size, stride)
    idx = np.arange(count)[:, None] * stride + np.arange(window_size)[None, :]
    return WindowedDataset(
        windows=series[idx],
        window_size=window_size,
        stride=stride,
        norm=norm,
        source_coordinate=source_coordinate,
    )


def delay_embed(series: np.ndarray, cfg: EmbeddingConfig) -> np.ndarray:
    """Build the delay-coordinate matrix: row i is [x_i, x_{i+tau}, ..., x_{i+(m-1)tau}]."""
    series = np.asarray(series, dtype=float)
    rows = len(series) - (cfg.m - 1) * cfg.tau
    if rows < 1:
        raise InvalidInputError(
            f"series of length {len(series)} too short for m={cfg.m}, tau={cfg.tau}"
        )
    idx = np.arange(rows)[:, None] + np.arange(cfg.m)[None, :] * cfg.tau
    return series[idx]


def stitch(windows: np.ndarray, stride: int) -> np.ndarray:
    """Merge uniformly strided windows back into one series.

    Positions covered by several windows take the arithmetic mean of all
    covering values, so untouched windows reassemble the original series
    exactly.
    """
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 2 or windows.shape[0] == 0:
        raise InvalidInputError("stitch needs a non-empty (K x W) window matrix")
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    k = windows.shape[0]
    offsets = np.arange(k) * stride
    return stitch_at(windows, offsets)


def stitch_at(windows: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Overlap-add windows placed at explicit offsets (mean over coverage)."""
    windows = np.asarray(windows, dtype=float)
    offsets = np.asarray(offsets, dtype=int)
    if windows.ndim != 2 or windows.shape[0] == 0:
        raise InvalidInputError("stitch needs a non-empty (K x W) window matrix")
    if offsets.shape[0] != windows.shape[0] or np.any(offsets < 0):
        raise InvalidInputError("offsets must be non-negative, one per window")
    w = windows.shape[1]
    length = int(offsets.max()) + w
    total = np.zeros(length)
    cover = np.zeros(length)
    for off, win in zip(offsets, windows):
        total[off : off + w] += win
        cover[off : off + w] += 1.0
    if np.any(cover == 0):
        raise InvalidInputError("window offsets leave gaps in the stitched series")
    return total / cover


def prepare_datasets(
    series: np.ndarray,
    window_size: int,
    stride: int = 1,
    train_fraction: float = 0.8,
    source_coordinate: int = 0,
) -> tuple[WindowedDataset, WindowedDataset]:
    """Normalize a full coordinate series, then split and window it.

    Min/max are taken over the whole series before splitting, so train and
    test share one normalization.
    """
    normed, norm = normalize(series)
    train, test = split(normed, train_fraction)
    make = lambda part: make_windows(part, window_size, stride, norm, source_coordinate)
    return make(train), make(test)


def write_windows_csv(dataset: WindowedDataset, csv_path, sidecar_path=None) -> None:
    """One window per CSV row, plus a JSON sidecar with the window metadata."""
    np.savetxt(csv_path, dataset.windows, delimiter=",", fmt="%.17g")
    if sidecar_path is None:
        sidecar_path = str(csv_path) + ".json"
    meta = {
        "window_size": dataset.window_size,
        "stride": dataset.stride,
        "norm": None
        if dataset.norm is None
        else {"min": dataset.norm.min, "max": dataset.norm.max},
        "source_coordinate": dataset.source_coordinate,
    }
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_windows_csv(csv_path, sidecar_path=None) -> WindowedDataset:
    if sidecar_path is None:
        sidecar_path = str(csv_path) + ".json"
    with open(sidecar_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    windows = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    norm = None if meta["norm"] is None else NormParams(meta["norm"]["min"], meta["norm"]["max"])
    return WindowedDataset(
        windows=windows,
        window_size=int(meta["window_size"]),
        stride=int(meta["stride"]),
        norm=norm,
        source_coordinate=int(meta["source_coordinate"]),
    )
