"""Chaotic vector fields and fixed-step RK4 integration.

Three systems are supported: the Rossler attractor, Lorenz63, and the
Lorenz96 ring. All integration is classical 4th-order Runge-Kutta with a
fixed step; divergence to non-finite values raises instead of propagating
NaNs into downstream analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalBlowupError

SYSTEM_KINDS = ("rossler", "lorenz63", "lorenz96")

_REQUIRED_PARAMS = {
    "rossler": ("a", "b", "c"),
    "lorenz63": ("sigma", "rho", "beta"),
    "lorenz96": ("n", "F"),
}


@dataclass(frozen=True)
class SystemSpec:
    """Which chaotic system to integrate, plus its parameter values."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise InvalidInputError(f"unknown system kind {self.kind!r}")
        missing = [p for p in _REQUIRED_PARAMS[self.kind] if p not in self.params]
        if missing:
            raise InvalidInputError(f"{self.kind} missing parameters {missing}")
        for name, value in self.params.items():
            if name == "n":
                if int(value) != value or value < 4:
                    # coupling references i-2, i-1, i+1; below 4 sites they alias
                    raise InvalidInputError("lorenz96 requires integer n >= 4")
            elif not np.isfinite(value):
                raise InvalidInputError(f"parameter {name}={value} is not finite")

    @property
    def dim(self) -> int:
        return int(self.params["n"]) if self.kind == "lorenz96" else 3

    def default_initial_state(self) -> np.ndarray:
        if self.kind == "lorenz96":
            # the uniform state x_i = F is a fixed point; perturb one site
            state = np.full(self.dim, float(self.params["F"]))
            state[0] += 0.01
            return state
        return np.ones(3)


def rossler(a: float = 0.1, b: float = 0.1, c: float = 14.0) -> SystemSpec:
    return SystemSpec("rossler", {"a": a, "b": b, "c": c})


def lorenz63(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> SystemSpec:
    return SystemSpec("lorenz63", {"sigma": sigma, "rho": rho, "beta": beta})


def lorenz96(n: int = 40, F: float = 8.15) -> SystemSpec:
    return SystemSpec("lorenz96", {"n": n, "F": F})


@dataclass(frozen=True)
class IntegrationConfig:
    """Fixed-step integration settings.

    ``initial_state=None`` selects the system default. ``seed`` feeds the
    randomized starting points used for repeated Lyapunov experiments.
    """

    dt: float = 0.005
    total_steps: int = 300_000
    transient_steps: int = 50_000
    initial_state: tuple | None = None
    seed: int = 0

    def validate(self, spec: SystemSpec) -> None:
        if not self.dt > 0:
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if not 0 <= self.transient_steps < self.total_steps:
            raise InvalidInputError(
                f"need 0 <= transient_steps < total_steps, got "
                f"{self.transient_steps} / {self.total_steps}"
            )
        if self.initial_state is not None and len(self.initial_state) != spec.dim:
            raise InvalidInputError(
                f"initial state has length {len(self.initial_state)}, "
                f"system dimension is {spec.dim}"
            )

    def resolve_initial_state(self, spec: SystemSpec) -> np.ndarray:
        if self.initial_state is None:
            return spec.default_initial_state()
        return np.asarray(self.initial_state, dtype=float)


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step multivariate time series on the attractor.

    ``states`` has one row per retained step; row times are
    ``row_index * dt``.
    """

    states: np.ndarray
    dt: float
    system: SystemSpec

    def coordinate(self, index: int) -> np.ndarray:
        if not 0 <= index < self.states.shape[1]:
            raise InvalidInputError(
                f"coordinate {index} out of range for dimension {self.states.shape[1]}"
            )
        return self.states[:, index]


def derivative(spec: SystemSpec, state: np.ndarray) -> np.ndarray:
    """Evaluate the vector field at ``state``.

    Accepts a single state vector or a batch with states along the last
    axis; the batch form is what the twin-pair experiments use to advance
    many trajectories in lock-step.
    """
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != spec.dim:
        raise InvalidInputError(
            f"state has dimension {state.shape[-1]}, {spec.kind} expects {spec.dim}"
        )
    p = spec.params
    if spec.kind == "rossler":
        x, y, z = state[..., 0], state[..., 1], state[..., 2]
        return np.stack([-y - z, x + p["a"] * y, p["b"] + z * (x - p["c"])], axis=-1)
    if spec.kind == "lorenz63":
        x, y, z = state[..., 0], state[..., 1], state[..., 2]
        return np.stack(
            [p["sigma"] * (y - x), x * (p["rho"] - z) - y, x * y - p["beta"] * z],
            axis=-1,
        )
    # lorenz96 ring: indices wrap, x[-1] is the last site and x[n] the first
    return (np.roll(state, -1, axis=-1) - np.roll(state, 2, axis=-1)) * np.roll(
        state, 1, axis=-1
    ) - state + p["F"]


def rk4_step(spec: SystemSpec, state: np.ndarray, dt: float) -> np.ndarray:
    """Advance one classical RK4 step of size ``dt``."""
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    state = np.asarray(state, dtype=float)
    k1 = derivative(spec, state)
    k2 = derivative(spec, state + 0.5 * dt * k1)
    k3 = derivative(spec, state + 0.5 * dt * k2)
    k4 = derivative(spec, state + dt * k3)
    for name, stage in (("k1", k1), ("k2", k2), ("k3", k3), ("k4", k4)):
        if not np.all(np.isfinite(stage)):
            raise NumericalBlowupError(f"non-finite values in RK4 stage {name}")
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_update(spec: SystemSpec, state: np.ndarray, dt: float) -> np.ndarray:
    # internal fast path: stage checks are skipped, callers check the result
    k1 = derivative(spec, state)
    k2 = derivative(spec, state + 0.5 * dt * k1)
    k3 = derivative(spec, state + 0.5 * dt * k2)
    k4 = derivative(spec, state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance(spec: SystemSpec, state: np.ndarray, n_steps: int, dt: float) -> np.ndarray:
    """Run ``n_steps`` RK4 updates without recording intermediate states."""
    state = np.asarray(state, dtype=float)
    for i in range(n_steps):
        state = _rk4_update(spec, state, dt)
        if not np.all(np.isfinite(state)):
            raise NumericalBlowupError(
                f"{spec.kind} integration blew up at step {i}", step_index=i
            )
    return state


def integrate(spec: SystemSpec, cfg: IntegrationConfig) -> Trajectory:
    """Integrate ``cfg.total_steps`` steps and drop the transient prefix.

    Row k of the result is the state after step ``transient_steps + k + 1``;
    the returned trajectory has ``total_steps - transient_steps`` rows.
    """
    cfg.validate(spec)
    state = cfg.resolve_initial_state(spec)
    retained = cfg.total_steps - cfg.transient_steps
    states = np.empty((retained, spec.dim))
    for i in range(cfg.total_steps):
        state = _rk4_update(spec, state, cfg.dt)
        if not np.all(np.isfinite(state)):
            raise NumericalBlowupError(
                f"{spec.kind} integration blew up at step {i}", step_index=i
            )
        if i >= cfg.transient_steps:
            states[i - cfg.transient_steps] = state
    return Trajectory(states=states, dt=cfg.dt, system=spec)


def twin_trajectories(
    spec: SystemSpec,
    cfg: IntegrationConfig,
    displacement: float,
    coordinate: int,
) -> tuple[Trajectory, Trajectory]:
    """Fork two trajectories from one attractor point.

    The starting point is obtained by integrating ``transient_steps`` past
    the configured initial state; the second copy is offset by
    ``displacement`` on the chosen coordinate. Row 0 of each output is the
    fork state itself, so the initial per-coordinate distance is exactly
    ``displacement``.
    """
    cfg.validate(spec)
    if displacement < 0:
        raise InvalidInputError(f"displacement must be >= 0, got {displacement}")
    if not 0 <= coordinate < spec.dim:
        raise InvalidInputError(
            f"coordinate {coordinate} out of range for dimension {spec.dim}"
        )
    base = advance(spec, cfg.resolve_initial_state(spec), cfg.transient_steps, cfg.dt)
    pair = np.stack([base, base])
    pair[1, coordinate] += displacement

    retained = cfg.total_steps - cfg.transient_steps
    states = np.empty((retained, 2, spec.dim))
    states[0] = pair
    for i in range(1, retained):
        pair = _rk4_update(spec, pair, cfg.dt)
        if not np.all(np.isfinite(pair)):
            raise NumericalBlowupError(
                f"{spec.kind} twin integration blew up at step {i}", step_index=i
            )
        states[i] = pair
    make = lambda k: Trajectory(states=states[:, k].copy(), dt=cfg.dt, system=spec)
    return make(0), make(1)


def advance_pairs_recording(
    spec: SystemSpec,
    states: np.ndarray,
    n_steps: int,
    dt: float,
    coordinate: int,
    include_initial: bool = True,
) -> np.ndarray:
    """Advance a batch of states, recording one coordinate per step.

    Returns an array of shape ``(n_steps, batch)`` (or ``n_steps`` rows
    with the initial states as row 0 when ``include_initial``). Used by the
    Lyapunov experiments to run all twin pairs in lock-step; elementwise
    RK4 arithmetic makes the batched run bit-identical to sequential ones.
    """
    states = np.asarray(states, dtype=float)
    out = np.empty((n_steps, states.shape[0]))
    start = 0
    if include_initial:
        out[0] = states[:, coordinate]
        start = 1
    for i in range(start, n_steps):
        states = _rk4_update(spec, states, dt)
        if not np.all(np.isfinite(states)):
            raise NumericalBlowupError(
                f"{spec.kind} batch integration blew up at step {i}", step_index=i
            )
        out[i] = states[:, coordinate]
    return out


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``t,x0,x1,...`` rows; t is ``row_index * dt``."""
    dim = traj.states.shape[1]
    header = "t," + ",".join(f"x{i}" for i in range(dim))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(traj.states):
            fh.write(
                repr(i * traj.dt) + "," + ",".join(repr(float(v)) for v in row) + "\n"
            )


def read_trajectory_csv(path, spec: SystemSpec, dt: float) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim == 1:
        data = data[None, :]
    return Trajectory(states=data[:, 1:], dt=dt, system=spec)
