"""Largest-Lyapunov-exponent estimation from divergence curves.

Two estimators are provided. The primary one forks twin trajectories a
tiny displacement apart and least-squares fits the log of their
per-coordinate distance against time. The second follows nearest-neighbor
pairs in a delay-embedded scalar series and fits the mean log-divergence
curve; it serves as an in-repo cross-check of the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .datapipe import EmbeddingConfig, delay_embed
from .dynamics import (
    IntegrationConfig,
    SystemSpec,
    advance,
    advance_pairs_recording,
)
from .errors import InvalidInputError
from .neuralnet import AutoencoderModel, reconstruct_series


@dataclass(frozen=True)
class DivergenceCurve:
    """Log distance per step for one trajectory pair.

    Entries where the distance is exactly zero are unusable (their log is
    -inf) and are excluded from fits via ``usable``.
    """

    log_distances: np.ndarray
    usable: np.ndarray
    dt: float
    initial_separation: float

    def __len__(self) -> int:
        return len(self.log_distances)


@dataclass(frozen=True)
class FitPolicy:
    """How the least-squares region of a divergence curve is chosen.

    By default the fit runs from ``fit_start`` until the curve has risen by
    ``rise_fraction`` of the gap between its starting level and its
    saturation plateau (the curve maximum). ``fit_end`` overrides the
    automatic endpoint.
    """

    rise_fraction: float = 0.6
    fit_start: int = 0
    fit_end: int | None = None
    min_points: int = 10

    def __post_init__(self):
        if not 0.0 < self.rise_fraction <= 1.0:
            raise InvalidInputError("rise_fraction must be in (0, 1]")
        if self.fit_start < 0:
            raise InvalidInputError("fit_start must be >= 0")
        if self.fit_end is not None and self.fit_end <= self.fit_start:
            raise InvalidInputError("fit_end must exceed fit_start")


@dataclass(frozen=True)
class LLEEstimate:
    """Mean and standard deviation of fitted divergence slopes (1/time)."""

    mean_lambda: float
    std_lambda: float
    fit_start: int
    fit_end: int
    num_curves: int


def divergence_curve(series_a: np.ndarray, series_b: np.ndarray, dt: float) -> DivergenceCurve:
    """Log absolute difference of two same-coordinate series, per step."""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("divergence_curve needs two equal-length 1-D series")
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    d = np.abs(a - b)
    usable = d > 0.0
    with np.errstate(divide="ignore"):
        logd = np.where(usable, np.log(np.where(usable, d, 1.0)), -np.inf)
    return DivergenceCurve(
        log_distances=logd, usable=usable, dt=dt, initial_separation=float(d[0])
    )


def fit_lambda(curve: DivergenceCurve, fit_start: int, fit_end: int) -> float:
    """Ordinary least-squares slope of log distance against time over
    [fit_start, fit_end), using usable points only."""
    n = len(curve)
    if not 0 <= fit_start < fit_end <= n:
        raise InvalidInputError(
            f"fit window [{fit_start}, {fit_end}) invalid for curve of length {n}"
        )
    mask = curve.usable[fit_start:fit_end]
    if np.count_nonzero(mask) < 2:
        raise InvalidInputError("fit window contains fewer than 2 usable points")
    t = (np.arange(fit_start, fit_end)[mask]) * curve.dt
    y = curve.log_distances[fit_start:fit_end][mask]
    tbar = t.mean()
    denom = float(np.sum((t - tbar) ** 2))
    if denom == 0.0:
        raise InvalidInputError("fit window has no time spread")
    return float(np.sum((t - tbar) * (y - y.mean())) / denom)


def auto_fit_end(curve: DivergenceCurve, policy: FitPolicy) -> int:
    """First step where the curve has risen past the policy's fraction of
    the gap between its starting level and its maximum."""
    if policy.fit_end is not None:
        return min(policy.fit_end, len(curve))
    usable_idx = np.flatnonzero(curve.usable)
    if usable_idx.size == 0:
        raise InvalidInputError("curve has no usable points")
    start_level = curve.log_distances[usable_idx[0]]
    saturation = float(np.max(curve.log_distances[usable_idx]))
    if saturation <= start_level:
        return len(curve)
    threshold = start_level + policy.rise_fraction * (saturation - start_level)
    above = np.flatnonzero(curve.usable & (curve.log_distances > threshold))
    if above.size == 0:
        return len(curve)
    return int(above[0])


def fit_curves(curves: list[DivergenceCurve], policy: FitPolicy) -> LLEEstimate:
    """Fit all curves over one shared region and aggregate the slopes.

    The shared endpoint is the smallest automatic endpoint across curves,
    so every fit stays below its saturation plateau.
    """
    if not curves:
        raise InvalidInputError("no divergence curves to fit")
    end = min(auto_fit_end(c, policy) for c in curves)
    start = policy.fit_start
    if end - start < policy.min_points:
        end = min(start + policy.min_points, min(len(c) for c in curves))
    slopes = np.array([fit_lambda(c, start, end) for c in curves])
    std = float(slopes.std(ddof=1)) if len(slopes) > 1 else 0.0
    return LLEEstimate(
        mean_lambda=float(slopes.mean()),
        std_lambda=std,
        fit_start=start,
        fit_end=end,
        num_curves=len(curves),
    )


def _twin_coordinate_series(
    spec: SystemSpec,
    coordinate: int,
    repeats: int,
    displacement: float,
    cfg: IntegrationConfig,
) -> np.ndarray:
    """Coordinate series for ``repeats`` twin pairs, shape (steps, 2*M).

    Pair j occupies columns j and M+j. Starting points are spread over the
    attractor by integrating seeded perturbations of the default initial
    state past the transient.
    """
    cfg.validate(spec)
    if repeats < 1:
        raise InvalidInputError("need at least one twin pair")
    if not displacement > 0:
        raise InvalidInputError("displacement must be positive")
    if not 0 <= coordinate < spec.dim:
        raise InvalidInputError(
            f"coordinate {coordinate} out of range for dimension {spec.dim}"
        )
    rng = np.random.default_rng(cfg.seed)
    base = cfg.resolve_initial_state(spec)
    starts = base[None, :] + 0.01 * rng.standard_normal((repeats, spec.dim))
    on_attractor = advance(spec, starts, cfg.transient_steps, cfg.dt)
    forked = np.concatenate([on_attractor, on_attractor], axis=0)
    forked[repeats:, coordinate] += displacement
    steps = cfg.total_steps - cfg.transient_steps
    return advance_pairs_recording(spec, forked, steps, cfg.dt, coordinate)


def lle_estimate(
    spec: SystemSpec,
    coordinate: int,
    repeats: int,
    displacement: float,
    cfg: IntegrationConfig,
    policy: FitPolicy | None = None,
) -> LLEEstimate:
    """Largest Lyapunov exponent from twin-pair divergence on one coordinate."""
    if policy is None:
        policy = FitPolicy()
    series = _twin_coordinate_series(spec, coordinate, repeats, displacement, cfg)
    curves = [
        divergence_curve(series[:, j], series[:, repeats + j], cfg.dt)
        for j in range(repeats)
    ]
    return fit_curves(curves, policy)


def lle_of_reconstructed(
    model: AutoencoderModel,
    spec: SystemSpec,
    coordinate: int,
    repeats: int,
    displacement: float,
    cfg: IntegrationConfig,
    policy: FitPolicy | None = None,
    stride: int | None = None,
) -> LLEEstimate:
    """As ``lle_estimate`` but every twin coordinate series is passed
    through the trained autoencoder before divergence analysis."""
    if policy is None:
        policy = FitPolicy()
    series = _twin_coordinate_series(spec, coordinate, repeats, displacement, cfg)
    rebuilt = np.column_stack(
        [reconstruct_series(model, series[:, j], stride) for j in range(series.shape[1])]
    )
    curves = [
        divergence_curve(rebuilt[:, j], rebuilt[:, repeats + j], cfg.dt)
        for j in range(repeats)
    ]
    return fit_curves(curves, policy)


def _segment_std(t: np.ndarray, y: np.ndarray, n_segments: int = 5) -> float:
    """Std of per-segment slopes; the spread of local slopes along the fit."""
    slopes = []
    n = len(t)
    if n < 2 * n_segments:
        return 0.0
    bounds = np.linspace(0, n, n_segments + 1).astype(int)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        ts, ys = t[lo:hi], y[lo:hi]
        if len(ts) < 2:
            continue
        tbar = ts.mean()
        denom = np.sum((ts - tbar) ** 2)
        if denom == 0:
            continue
        slopes.append(np.sum((ts - tbar) * (ys - ys.mean())) / denom)
    return float(np.std(slopes, ddof=1)) if len(slopes) > 1 else 0.0


def rosenstein_nn_estimate(
    series: np.ndarray,
    embedding: EmbeddingConfig,
    dt: float,
    policy: FitPolicy | None = None,
    theiler_window: int = 50,
    follow_steps: int = 600,
    max_pairs: int = 1000,
) -> LLEEstimate:
    """Nearest-neighbor divergence estimate on a delay-embedded series.

    Each embedded point is paired with its nearest neighbor at temporal
    separation greater than ``theiler_window``; pair distances are followed
    for ``follow_steps`` and the mean log-divergence curve is fitted. The
    reported std is the spread of slopes across segments of the fit region.
    ``max_pairs`` caps the number of tracked pairs (evenly subsampled) to
    bound the cost on long series.
    """
    if policy is None:
        policy = FitPolicy()
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if theiler_window < 0 or follow_steps < 2:
        raise InvalidInputError("need theiler_window >= 0 and follow_steps >= 2")
    embedded = delay_embed(series, embedding)
    n = embedded.shape[0]
    n_ref = n - follow_steps
    if n_ref < 2:
        raise InvalidInputError(
            f"series too short: {n} embedded points, {follow_steps} follow steps"
        )
    tree = cKDTree(embedded[:n_ref])
    k = min(2 * theiler_window + 2, n_ref)
    dists, idx = tree.query(embedded[:n_ref], k=k, workers=-1)
    if k == 1:
        dists, idx = dists[:, None], idx[:, None]
    refs = np.arange(n_ref)
    valid = np.abs(idx - refs[:, None]) > theiler_window
    has_nn = valid.any(axis=1)
    first = np.argmax(valid, axis=1)
    neighbors = idx[refs, first]
    pairs = refs[has_nn]
    partners = neighbors[has_nn]
    if pairs.size == 0:
        raise InvalidInputError("no neighbor pairs outside the Theiler window")
    if pairs.size > max_pairs:
        keep = np.linspace(0, pairs.size - 1, max_pairs).astype(int)
        pairs, partners = pairs[keep], partners[keep]

    mean_log = np.empty(follow_steps)
    counts = np.empty(follow_steps, dtype=int)
    for i in range(follow_steps):
        gap = embedded[pairs + i] - embedded[partners + i]
        d = np.sqrt(np.sum(gap * gap, axis=1))
        nonzero = d > 0
        counts[i] = int(np.count_nonzero(nonzero))
        mean_log[i] = np.mean(np.log(d[nonzero])) if counts[i] else -np.inf
    usable = counts > 0
    curve = DivergenceCurve(
        log_distances=np.where(usable, mean_log, -np.inf),
        usable=usable,
        dt=dt,
        initial_separation=float(np.exp(mean_log[0])) if usable[0] else 0.0,
    )
    end = auto_fit_end(curve, policy)
    start = policy.fit_start
    if end - start < policy.min_points:
        end = min(start + policy.min_points, len(curve))
    slope = fit_lambda(curve, start, end)
    mask = curve.usable[start:end]
    t = np.arange(start, end)[mask] * dt
    y = curve.log_distances[start:end][mask]
    return LLEEstimate(
        mean_lambda=slope,
        std_lambda=_segment_std(t, y),
        fit_start=start,
        fit_end=end,
        num_curves=int(pairs.size),
    )


def write_divergence_dat(curve: DivergenceCurve, path) -> None:
    """Two-column plot file: time and log distance (usable points only)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in np.flatnonzero(curve.usable):
            fh.write(f"{float(i * curve.dt)!r} {float(curve.log_distances[i])!r}\n")
