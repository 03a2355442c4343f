"""Experiment orchestration: config handling and the five pipeline stages.

A single JSON config (comments allowed, every key optional) drives the
stages: simulate, train, sweep, lle, report. Defaults reproduce the
full-scale study; ``scale="desk"`` swaps in a preset sized for a laptop.
Artifacts are deterministic for a fixed config and seed; wall-clock
timestamps are confined to the ``generated_at`` field of metadata files.
"""

from __future__ import annotations

import dataclasses
import json
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import latent as lat
from . import lyapunov as ly
from . import neuralnet as nn
from . import plots
from .datapipe import prepare_datasets
from .dynamics import (
    IntegrationConfig,
    SystemSpec,
    Trajectory,
    integrate,
    read_trajectory_csv,
    write_trajectory_csv,
)
from .errors import InvalidInputError

ENV_PREFIX = "CHAOSAE_"

DEFAULT_PARAMS = {
    "rossler": {"a": 0.1, "b": 0.1, "c": 14.0},
    "lorenz63": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "lorenz96": {"n": 40, "F": 8.15},
}

# coordinate labels mirrored by the summary tables: x/y/z for the 3-D
# systems, site labels 19..21 for the ring
TABLE_COORDINATES = {
    "rossler": ("X", "Y", "Z"),
    "lorenz63": ("X", "Y", "Z"),
    "lorenz96": ("19", "20", "21"),
}

DESK_PRESET = {
    ("integration", "total_steps"): 60_000,
    ("integration", "transient_steps"): 10_000,
    ("train", "epochs"): 600,
    ("lle", "repeats"): 5,
}


@dataclass(frozen=True)
class LLEConfig:
    displacement: float = 1e-7
    repeats: int = 10
    theiler_window: int = 50
    rise_fraction: float = 0.6
    fit_start: int = 0
    fit_end: int | None = None

    def policy(self) -> ly.FitPolicy:
        return ly.FitPolicy(
            rise_fraction=self.rise_fraction,
            fit_start=self.fit_start,
            fit_end=self.fit_end,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; ``coordinate`` is a plain 0-based
    index. ``lorenz96_label_convention`` controls how the ring-site labels
    in the summary tables (19, 20, 21) map to indices: ``ordinal`` reads
    them as "the 19th site" (index 18), ``index`` reads them literally."""

    system_kind: str = "lorenz63"
    system_params: dict = field(default_factory=dict)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    coordinate: int = 0
    lorenz96_label_convention: str = "ordinal"
    window_size: int = 30
    stride: int = 1
    reconstruction_stride: int | None = None
    train_fraction: float = 0.8
    latent_width: int = 10
    output_activation: str = "linear"
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    alpha_grid: tuple = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    window_grid: tuple = (9, 16, 23, 30, 37)
    lle: LLEConfig = field(default_factory=LLEConfig)
    output_dir: str = "out"
    scale: str = "paper"

    def __post_init__(self):
        if self.scale not in ("paper", "desk"):
            raise InvalidInputError(f"scale must be 'paper' or 'desk', got {self.scale!r}")
        if self.lorenz96_label_convention not in ("ordinal", "index"):
            raise InvalidInputError(
                "lorenz96_label_convention must be 'ordinal' or 'index'"
            )
        if self.window_size < 2:
            raise InvalidInputError("window_size must be >= 2")
        if self.stride < 1:
            raise InvalidInputError("stride must be >= 1")

    def system(self) -> SystemSpec:
        params = {**DEFAULT_PARAMS[self.system_kind], **self.system_params}
        return SystemSpec(self.system_kind, params)

    def resolve_coordinate(self) -> int:
        dim = self.system().dim
        if not 0 <= self.coordinate < dim:
            raise InvalidInputError(
                f"coordinate {self.coordinate} outside dimension {dim}"
            )
        return self.coordinate

    def site_label_to_index(self, label: str) -> int:
        offset = 1 if self.lorenz96_label_convention == "ordinal" else 0
        return int(label) - offset

    def to_dict(self) -> dict:
        return {
            "system": {"kind": self.system_kind, "params": dict(self.system_params)},
            "integration": {
                "dt": self.integration.dt,
                "total_steps": self.integration.total_steps,
                "transient_steps": self.integration.transient_steps,
                "initial_state": None
                if self.integration.initial_state is None
                else list(self.integration.initial_state),
                "seed": self.integration.seed,
            },
            "coordinate": self.coordinate,
            "lorenz96_label_convention": self.lorenz96_label_convention,
            "window_size": self.window_size,
            "stride": self.stride,
            "reconstruction_stride": self.reconstruction_stride,
            "train_fraction": self.train_fraction,
            "latent_width": self.latent_width,
            "output_activation": self.output_activation,
            "train": self.train.to_dict(),
            "alpha_grid": list(self.alpha_grid),
            "window_grid": list(self.window_grid),
            "lle": dataclasses.asdict(self.lle),
            "output_dir": self.output_dir,
            "scale": self.scale,
        }


def strip_json_comments(text: str) -> str:
    """Remove ``//`` line comments and ``/* */`` blocks outside strings."""
    out = []
    i, n = 0, len(text)
    in_string = False
    while i < n:
        ch = text[i]
        if in_string:
            out.append(ch)
            if ch == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 1
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
            out.append(ch)
        elif ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        elif ch == "/" and i + 1 < n and text[i + 1] == "*":
            i += 2
            while i + 1 < n and not (text[i] == "*" and text[i + 1] == "/"):
                i += 1
            i += 1
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _set_path(tree: dict, path: tuple, value) -> None:
    node = tree
    for key in path[:-1]:
        node = node.setdefault(key, {})
    node[path[-1]] = value


def apply_env_overrides(tree: dict, environ=None) -> dict:
    """Overlay ``CHAOSAE_<KEY>`` / ``CHAOSAE_<SECTION>__<KEY>`` variables.

    Values are parsed as JSON where possible so numbers, lists, and null
    work; anything unparseable is taken as a plain string.
    """
    environ = os.environ if environ is None else environ
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = tuple(part.lower() for part in name[len(ENV_PREFIX):].split("__"))
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(tree, path, value)
    return tree


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    scale = data.get("scale", "paper")
    merged: dict = {}
    if scale == "desk":
        for (section, key), value in DESK_PRESET.items():
            merged.setdefault(section, {})[key] = value
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value

    system = merged.get("system", {})
    integ = merged.get("integration", {})
    train = merged.get("train", {})
    lle = merged.get("lle", {})
    known = {
        "system", "integration", "train", "lle", "coordinate",
        "lorenz96_label_convention", "window_size", "stride",
        "reconstruction_stride", "train_fraction", "latent_width",
        "output_activation", "alpha_grid", "window_grid", "output_dir", "scale",
    }
    unknown = set(merged) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    try:
        initial = integ.get("initial_state")
        return ExperimentConfig(
            system_kind=system.get("kind", "lorenz63"),
            system_params=system.get("params", {}),
            integration=IntegrationConfig(
                dt=float(integ.get("dt", 0.005)),
                total_steps=int(integ.get("total_steps", 300_000)),
                transient_steps=int(integ.get("transient_steps", 50_000)),
                initial_state=None if initial is None else tuple(initial),
                seed=int(integ.get("seed", 0)),
            ),
            coordinate=int(merged.get("coordinate", 0)),
            lorenz96_label_convention=merged.get("lorenz96_label_convention", "ordinal"),
            window_size=int(merged.get("window_size", 30)),
            stride=int(merged.get("stride", 1)),
            reconstruction_stride=merged.get("reconstruction_stride"),
            train_fraction=float(merged.get("train_fraction", 0.8)),
            latent_width=int(merged.get("latent_width", 10)),
            output_activation=merged.get("output_activation", "linear"),
            train=nn.TrainConfig(
                epochs=int(train.get("epochs", 7500)),
                batch_size=int(train.get("batch_size", 32)),
                learning_rate=float(train.get("learning_rate", 0.001)),
                alpha=float(train.get("alpha", 1e-5)),
                seed=int(train.get("seed", 0)),
                adam_beta1=float(train.get("adam_beta1", 0.9)),
                adam_beta2=float(train.get("adam_beta2", 0.999)),
                adam_epsilon=float(train.get("adam_epsilon", 1e-7)),
            ),
            alpha_grid=tuple(merged.get("alpha_grid", (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8))),
            window_grid=tuple(merged.get("window_grid", (9, 16, 23, 30, 37))),
            lle=LLEConfig(
                displacement=float(lle.get("displacement", 1e-7)),
                repeats=int(lle.get("repeats", 10)),
                theiler_window=int(lle.get("theiler_window", 50)),
                rise_fraction=float(lle.get("rise_fraction", 0.6)),
                fit_start=int(lle.get("fit_start", 0)),
                fit_end=None if lle.get("fit_end") is None else int(lle.get("fit_end")),
            ),
            output_dir=merged.get("output_dir", "out"),
            scale=scale,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInputError):
            raise
        raise InvalidInputError(f"malformed config value: {exc}") from exc


def load_config(
    path=None,
    environ=None,
    overrides: dict | None = None,
) -> ExperimentConfig:
    """Config resolution order: defaults < desk preset < file < env < CLI."""
    tree: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = strip_json_comments(fh.read())
        try:
            tree = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(tree, dict):
            raise InvalidInputError(f"config file {path} must hold a JSON object")
    apply_env_overrides(tree, environ)
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_path(tree, tuple(key.split(".")), value)
    return config_from_dict(tree)


def emit_config(cfg: ExperimentConfig, path=None) -> str:
    text = json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _write_meta(path: Path, cfg: ExperimentConfig, extra: dict) -> None:
    meta = {
        "config": cfg.to_dict(),
        # sole wall-clock field in any artifact
        "generated_at": datetime.now(timezone.utc).isoformat(),
        **extra,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out(cfg: ExperimentConfig, *parts: str) -> Path:
    path = Path(cfg.output_dir).joinpath(*parts)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cli_simulate(cfg: ExperimentConfig) -> Path:
    """Integrate the configured system and write its trajectory CSV."""
    spec = cfg.system()
    cfg.integration.validate(spec)
    traj = integrate(spec, cfg.integration)
    csv_path = _out(cfg, "trajectories", f"{spec.kind}.csv")
    write_trajectory_csv(traj, csv_path)
    _write_meta(
        csv_path.with_suffix(".meta.json"),
        cfg,
        {"rows": traj.states.shape[0], "columns": spec.dim},
    )
    return csv_path


def _load_or_simulate(cfg: ExperimentConfig) -> Trajectory:
    spec = cfg.system()
    csv_path = Path(cfg.output_dir) / "trajectories" / f"{spec.kind}.csv"
    if csv_path.exists():
        return read_trajectory_csv(csv_path, spec, cfg.integration.dt)
    cfg.integration.validate(spec)
    return integrate(spec, cfg.integration)


def model_filename(kind: str, window_size: int, alpha: float) -> str:
    return f"{kind}_W{window_size}_alpha{alpha:g}.json"


def cli_train(cfg: ExperimentConfig) -> Path:
    """Train one autoencoder per the config and save model + loss curves."""
    traj = _load_or_simulate(cfg)
    series = traj.coordinate(cfg.resolve_coordinate())
    train_set, test_set = prepare_datasets(
        series, cfg.window_size, cfg.stride, cfg.train_fraction
    )
    specs, latent_index = nn.default_architecture(
        cfg.window_size, cfg.latent_width, cfg.output_activation
    )
    model = nn.build_model(specs, latent_index, norm=train_set.norm, seed=cfg.train.seed)
    model, report = nn.train(model, train_set, test_set, cfg.train)
    model.train_config_echo = cfg.train.to_dict()
    name = model_filename(cfg.system_kind, cfg.window_size, cfg.train.alpha)
    model_path = _out(cfg, "models", name)
    nn.save_model(model, model_path)
    nn.write_loss_csv(report, model_path.with_suffix(".losses.csv"))
    if report.train_loss.size:
        epochs = list(range(len(report.train_loss)))
        plots.plot_lines(
            model_path.with_suffix(".losses.svg"),
            [
                ("train", epochs, report.train_loss.tolist()),
                ("test", epochs, report.test_loss.tolist()),
            ],
            title=f"{cfg.system_kind} training loss",
            x_label="epoch",
            y_label="loss",
            log_y=True,
        )
    return model_path


def cli_sweep(cfg: ExperimentConfig, mode: str) -> Path:
    """Run the alpha or window sweep, saving per-cell models and the CSV."""
    if mode not in ("alpha", "window"):
        raise InvalidInputError(f"sweep mode must be 'alpha' or 'window', got {mode!r}")
    grid = cfg.alpha_grid if mode == "alpha" else cfg.window_grid
    if not grid:
        raise InvalidInputError(f"{mode} grid is empty")
    spec = cfg.system()
    coordinate = cfg.resolve_coordinate()
    common = dict(
        integration=cfg.integration,
        coordinate=coordinate,
        stride=cfg.stride,
        train_fraction=cfg.train_fraction,
        latent_width=cfg.latent_width,
        output_activation=cfg.output_activation,
    )
    if mode == "alpha":
        cells = lat.sweep_alpha(spec, list(grid), cfg.train, cfg.window_size, **common)
    else:
        cells = lat.sweep_window(spec, [int(w) for w in grid], cfg.train, **common)

    for cell in cells:
        if cell.model is None:
            continue
        if mode == "alpha":
            name = model_filename(spec.kind, cfg.window_size, cell.key)
        else:
            name = model_filename(spec.kind, int(cell.key), cfg.train.alpha)
        nn.save_model(cell.model, _out(cfg, "models", f"sweep_{mode}", name))

    csv_path = _out(cfg, "sweeps", f"{spec.kind}_{mode}_sweep.csv")
    lat.write_sweep_csv(cells, csv_path)
    ok = [c for c in cells if c.stats is not None]
    if ok:
        keys = [c.key for c in ok]
        plots.write_dat(
            csv_path.with_suffix(".nodes.dat"), keys, [c.stats.mean_active_nodes for c in ok]
        )
        plots.write_dat(
            csv_path.with_suffix(".loss.dat"), keys, [c.stats.test_loss for c in ok]
        )
        plots.plot_lines(
            csv_path.with_suffix(".svg"),
            [
                ("active nodes", keys, [c.stats.mean_active_nodes for c in ok]),
            ],
            title=f"{spec.kind} latent occupancy vs {mode}",
            x_label=mode,
            y_label="mean active nodes",
            log_x=(mode == "alpha"),
        )
    _write_meta(
        csv_path.with_suffix(".meta.json"),
        cfg,
        {
            "mode": mode,
            "grid": list(grid),
            "failed_cells": [c.key for c in cells if c.error is not None],
        },
    )
    return csv_path


def _lle_systems(cfg: ExperimentConfig) -> list[tuple[SystemSpec, list[str], list[int]]]:
    """The three table systems with their coordinate labels and indices."""
    out = []
    for kind, labels in TABLE_COORDINATES.items():
        spec = SystemSpec(kind, DEFAULT_PARAMS[kind])
        if kind == "lorenz96":
            indices = [cfg.site_label_to_index(lbl) for lbl in labels]
        else:
            indices = [0, 1, 2]
        out.append((spec, list(labels), indices))
    return out


def _format_cell(est: ly.LLEEstimate) -> str:
    return f"{est.mean_lambda:.2f} ({est.std_lambda:.2f})"


_LLE_ROW_HEADER = "system,sequence,alpha_or_W,coordinate,lle_mean,lle_std,fit_start,fit_end,M\n"


def _lle_row(system, sequence, key, coordinate, est: ly.LLEEstimate) -> str:
    return (
        f"{system},{sequence},{key},{coordinate},{est.mean_lambda!r},"
        f"{est.std_lambda!r},{est.fit_start},{est.fit_end},{est.num_curves}\n"
    )


def cli_lle(cfg: ExperimentConfig, mode: str, grid: str = "alpha") -> Path:
    """Estimate exponents for the raw systems or their reconstructions.

    ``input`` mode produces the single table row of per-system,
    per-coordinate estimates. ``reconstructed`` mode loads the sweep models
    (which must exist) and adds one row per grid value.
    """
    if mode not in ("input", "reconstructed"):
        raise InvalidInputError(f"lle mode must be 'input' or 'reconstructed', got {mode!r}")
    if grid not in ("alpha", "window"):
        raise InvalidInputError(f"lle grid must be 'alpha' or 'window', got {grid!r}")
    policy = cfg.lle.policy()
    systems = _lle_systems(cfg)
    header_cols = [
        f"{spec.kind}_{label}" for spec, labels, _ in systems for label in labels
    ]

    if mode == "input":
        rows = [_LLE_ROW_HEADER]
        cells = []
        for spec, labels, indices in systems:
            for label, index in zip(labels, indices):
                est = ly.lle_estimate(
                    spec, index, cfg.lle.repeats, cfg.lle.displacement,
                    cfg.integration, policy,
                )
                cells.append(_format_cell(est))
                rows.append(_lle_row(spec.kind, "input", "-", label, est))
        table_lines = ["input,-," + ",".join(cells)]
        table_path = _out(cfg, "lle", "input_table.csv")
        rows_path = _out(cfg, "lle", "input_rows.csv")
    else:
        grid_values = cfg.alpha_grid if grid == "alpha" else cfg.window_grid
        rows = [_LLE_ROW_HEADER]
        table_lines = []
        for key in grid_values:
            cells = []
            for spec, labels, indices in systems:
                if grid == "alpha":
                    name = model_filename(spec.kind, cfg.window_size, key)
                else:
                    name = model_filename(spec.kind, int(key), cfg.train.alpha)
                model_path = Path(cfg.output_dir) / "models" / f"sweep_{grid}" / name
                if not model_path.exists():
                    raise InvalidInputError(
                        f"missing sweep model for cell ({spec.kind}, {grid}={key}): "
                        f"{model_path}"
                    )
                model = nn.load_model(model_path)
                for label, index in zip(labels, indices):
                    est = ly.lle_of_reconstructed(
                        model, spec, index, cfg.lle.repeats, cfg.lle.displacement,
                        cfg.integration, policy, cfg.reconstruction_stride,
                    )
                    cells.append(_format_cell(est))
                    rows.append(_lle_row(spec.kind, "reconstructed", key, label, est))
            table_lines.append(f"reconstructed,{key}," + ",".join(cells))
        table_path = _out(cfg, "lle", f"reconstructed_{grid}_table.csv")
        rows_path = _out(cfg, "lle", f"reconstructed_{grid}_rows.csv")

    with open(rows_path, "w", encoding="utf-8") as fh:
        fh.writelines(rows)
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("sequence,key," + ",".join(header_cols) + "\n")
        fh.write("\n".join(table_lines) + "\n")
    _write_meta(table_path.with_suffix(".meta.json"), cfg, {"mode": mode, "grid": grid})
    return table_path


def _read_csv_rows(path: Path) -> list[dict] | None:
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def cli_report(cfg: ExperimentConfig) -> Path:
    """Consolidate existing artifacts into one JSON summary.

    Stages that have not run yet appear as nulls; regenerating from
    unchanged inputs yields byte-identical JSON.
    """
    out_dir = Path(cfg.output_dir)
    report: dict = {"config": cfg.to_dict(), "stages": {}}

    trajectories = {}
    for csv_path in sorted(out_dir.glob("trajectories/*.csv")):
        meta_path = csv_path.with_suffix(".meta.json")
        rows = None
        if meta_path.exists():
            with open(meta_path, encoding="utf-8") as fh:
                rows = json.load(fh).get("rows")
        trajectories[csv_path.stem] = {"file": csv_path.name, "rows": rows}
    report["stages"]["simulate"] = trajectories or None

    models = {}
    for model_path in sorted(out_dir.glob("models/**/*.json")):
        if model_path.name.endswith(".meta.json") or model_path.name.endswith(
            ".losses.json"
        ):
            continue
        try:
            model = nn.load_model(model_path)
        except Exception:
            continue
        models[str(model_path.relative_to(out_dir))] = {
            "window_size": model.window_size,
            "latent_width": model.latent_width,
            "train_config": model.train_config_echo,
        }
    report["stages"]["train"] = models or None

    sweeps = {}
    for sweep_path in sorted(out_dir.glob("sweeps/*_sweep.csv")):
        sweeps[sweep_path.stem] = _read_csv_rows(sweep_path)
    report["stages"]["sweep"] = sweeps or None

    lle = {}
    for rows_path in sorted(out_dir.glob("lle/*_rows.csv")):
        lle[rows_path.stem] = _read_csv_rows(rows_path)
    report["stages"]["lle"] = lle or None

    report_path = _out(cfg, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report_path
