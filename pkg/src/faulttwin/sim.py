"""Linear state-space stand-in for a VSG controlled grid-forming converter.

The simulator advances ``x = [v_g, i_o, omega, v_dc, p, q]`` under the
forward-Euler discretisation of ``dx/dt = A x + B u`` with additive Gaussian
noise, expands the state into ten measurement channels, adds per-channel sensor
noise and overwrites those channels with a fault signature after the fault
onset.

The shipped ``A``/``B`` are a documented stand-in for the real converter
physics: a damped oscillator couples ``omega`` and ``p``, every other state is
a first-order lag, and ``B`` is chosen so that the steady state sits at a
fixed linear map of the setpoint (``DEFAULT_GAINS``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .errors import InvalidScenario, SimulationDivergence

STATE_NAMES = ("v_g", "i_o", "omega", "v_dc", "p", "q")
FEATURE_NAMES = ("va", "vb", "vc", "ia", "ib", "ic", "omega", "v_dc", "p", "q")
# state read by each measurement channel
CHANNEL_STATE = (0, 0, 0, 1, 1, 1, 2, 3, 4, 5)
PHASES = ("A", "B", "C")

CURRENT_CAP = 2.0

# Steady-state response of each state to (p_ref, q_ref).
DEFAULT_GAINS = np.array(
    [
        [0.60, 0.45],  # v_g
        [0.90, 0.25],  # i_o
        [0.20, 0.00],  # omega
        [0.50, -0.10],  # v_dc
        [1.00, 0.00],  # p
        [0.00, 1.00],  # q
    ]
)
# Time constants in 1/s for the lags, and (decay, rotation) of the omega/p oscillator.
DEFAULT_LAG_RATES = {"v_g": 40.0, "i_o": 60.0, "v_dc": 25.0, "q": 40.0}
DEFAULT_OSCILLATOR = (15.0, 25.0)
DEFAULT_DT = 1e-3
DEFAULT_NOISE_STD = 0.01

DEFAULT_SETPOINT_BOX = ((0.05, 1.0), (-0.4, 0.4))
DEFAULT_MIXTURE = (0.70, 0.05, 0.10, 0.10, 0.05)


def _default_matrices() -> tuple[np.ndarray, np.ndarray]:
    a = np.zeros((6, 6))
    for name, rate in DEFAULT_LAG_RATES.items():
        i = STATE_NAMES.index(name)
        a[i, i] = -rate
    w, p = STATE_NAMES.index("omega"), STATE_NAMES.index("p")
    decay, rot = DEFAULT_OSCILLATOR
    a[w, w], a[w, p], a[p, w], a[p, p] = -decay, -rot, rot, -decay
    b = -a @ DEFAULT_GAINS
    return a, b


@dataclass(frozen=True)
class StateSpaceModel:
    a_matrix: np.ndarray
    b_matrix: np.ndarray
    dt: float = DEFAULT_DT
    noise_std: np.ndarray = field(default_factory=lambda: np.full(6, DEFAULT_NOISE_STD))

    def __post_init__(self):
        a = np.array(self.a_matrix, dtype=np.float64)
        b = np.array(self.b_matrix, dtype=np.float64)
        noise = np.broadcast_to(np.asarray(self.noise_std, dtype=np.float64), (6,)).copy()
        if a.shape != (6, 6):
            raise ValueError(f"a_matrix must be 6x6, got {a.shape}")
        if b.shape != (6, 2):
            raise ValueError(f"b_matrix must be 6x2, got {b.shape}")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("state-space matrices must be finite")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if (noise < 0).any() or not np.isfinite(noise).all():
            raise ValueError("noise_std must be finite and non-negative")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)
        object.__setattr__(self, "noise_std", noise)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def transition(self) -> np.ndarray:
        return np.eye(6) + self.dt * self.a_matrix

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.transition))))

    def fixed_point(self, u) -> np.ndarray:
        """Noise-free equilibrium of the discrete update for setpoint ``u``."""
        u = np.asarray(u, dtype=np.float64)
        return np.linalg.solve(-self.a_matrix, self.b_matrix @ u)


def default_model(**overrides) -> StateSpaceModel:
    a, b = _default_matrices()
    return StateSpaceModel(a, b, **overrides)


@dataclass(frozen=True)
class SimState:
    v_g: float
    i_o: float
    omega: float
    v_dc: float
    p: float
    q: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_g, self.i_o, self.omega, self.v_dc, self.p, self.q])

    @classmethod
    def from_array(cls, x) -> "SimState":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class ControlInput:
    p_ref: float
    q_ref: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_ref, self.q_ref], dtype=np.float64)


@dataclass(frozen=True)
class FaultScenario:
    class_id: int
    onset_time: float = 0.05
    sag_depth: float = 0.5
    affected_phase: str = "A"
    sensor_offset: float = 0.3
    residual_fraction: float = 0.1

    def __post_init__(self):
        if self.class_id not in (0, 1, 2, 3, 4):
            raise InvalidScenario(f"unknown class_id {self.class_id!r}")
        if not self.onset_time >= 0:
            raise InvalidScenario("onset_time must be >= 0")
        if not 0 < self.sag_depth <= 1:
            raise InvalidScenario("sag_depth must lie in (0, 1]")
        if self.affected_phase not in PHASES:
            raise InvalidScenario(f"affected_phase must be one of {PHASES}")
        if not 0 <= self.residual_fraction < 1:
            raise InvalidScenario("residual_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class MeasurementRow:
    va: float
    vb: float
    vc: float
    ia: float
    ib: float
    ic: float
    omega: float
    v_dc: float
    p: float
    q: float
    label: int = 0

    def features(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES])

    @classmethod
    def from_features(cls, values, label: int = 0) -> "MeasurementRow":
        return cls(*(float(v) for v in values), label=int(label))


def default_scenarios() -> list[tuple[FaultScenario, float]]:
    return [(FaultScenario(c), w) for c, w in enumerate(DEFAULT_MIXTURE)]


# -- dynamics ---------------------------------------------------------------


def _check_finite(x: np.ndarray, step: int | None = None) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        channel = int(np.nonzero(bad.reshape(-1, 6).any(axis=0))[0][0])
        raise SimulationDivergence(STATE_NAMES[channel], step)


def _step_batch(model: StateSpaceModel, x: np.ndarray, u: np.ndarray, rng) -> np.ndarray:
    # x: (n, 6), u: (n, 2)
    with np.errstate(over="ignore", invalid="ignore"):
        nxt = x @ model.transition.T + model.dt * (u @ model.b_matrix.T)
    if model.noise_std.any():
        nxt = nxt + rng.standard_normal(x.shape) * model.noise_std
    return nxt


def step(model: StateSpaceModel, x: SimState, u: ControlInput, rng) -> SimState:
    """One forward-Euler step ``x' = (I + dt A) x + dt B u`` plus Gaussian noise."""
    nxt = _step_batch(model, x.as_array()[None, :], u.as_array()[None, :], rng)[0]
    _check_finite(nxt)
    return SimState.from_array(nxt)


# -- measurements -------------------------------------------------------------


def _expand_batch(x: np.ndarray) -> np.ndarray:
    v, i = x[:, 0:1], x[:, 1:2]
    return np.hstack([v, v, v, i, i, i, x[:, 2:6]])


def expand_measurements(x: SimState, t: float = 0.0, rng=None) -> MeasurementRow:
    """Balanced three-phase expansion of the state; no noise is added here."""
    return MeasurementRow.from_features(_expand_batch(x.as_array()[None, :])[0])


def _apply_signature(m: np.ndarray, scenario: FaultScenario) -> np.ndarray:
    """Overwrite measurement columns of ``m`` (n, 10) in place with the fault signature."""
    c = scenario.class_id
    if c == 1:
        mid = (m[:, 0] + m[:, 1]) / 2
        spread = 0.1 * np.abs(m[:, 0] - m[:, 1])
        m[:, 0], m[:, 1] = mid + spread, mid - spread
        m[:, 3] *= 1.5
        m[:, 4] *= 1.5
    elif c == 2:
        m[:, 0:3] += scenario.sensor_offset
    elif c == 3:
        k = PHASES.index(scenario.affected_phase)
        m[:, k] *= 1.0 - scenario.sag_depth
    elif c == 4:
        r = scenario.residual_fraction
        m[:, 0:3] *= r
        if r > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                m[:, 3:6] = np.clip(m[:, 3:6] / r, -CURRENT_CAP, CURRENT_CAP)
        else:
            m[:, 3:6] = np.sign(m[:, 3:6]) * CURRENT_CAP
    return m


def inject_fault(row: MeasurementRow, scenario: FaultScenario, t: float) -> MeasurementRow:
    if t < 0:
        raise ValueError("t must be >= 0")
    if scenario.class_id not in (0, 1, 2, 3, 4):
        raise InvalidScenario(f"unknown class_id {scenario.class_id!r}")
    if scenario.class_id == 0 or t < scenario.onset_time:
        return row
    m = _apply_signature(row.features()[None, :].copy(), scenario)
    return MeasurementRow.from_features(m[0], label=scenario.class_id)


def signature_holds(features: np.ndarray, scenario: FaultScenario) -> np.ndarray:
    """Exact per-row check that rows (n, 10) carry the signature of ``scenario``.

    Applies to rows from a balanced expansion (no measurement noise); returns
    a bool array.
    """
    f = np.atleast_2d(features)
    va, vb, vc, ia, ib, ic = (f[:, j] for j in range(6))
    c = scenario.class_id
    if c == 0:
        return (va == vb) & (vb == vc) & (ia == ib) & (ib == ic)
    if c == 1:
        return (va == vb) & (vb == vc) & (ia == 1.5 * ic) & (ib == 1.5 * ic)
    if c == 2:
        return (va == vb) & (vb == vc) & (ia == ib) & (ib == ic)
    if c == 3:
        k = PHASES.index(scenario.affected_phase)
        others = [j for j in range(3) if j != k]
        intact = f[:, others[0]]
        return (
            (f[:, others[0]] == f[:, others[1]])
            & (f[:, k] == intact * (1.0 - scenario.sag_depth))
            & (ia == ib)
            & (ib == ic)
        )
    return (va == vb) & (vb == vc) & (ia == ib) & (ib == ic) & (np.abs(ia) <= CURRENT_CAP)


# -- datasets -----------------------------------------------------------------


def _quotas(weights: Sequence[float], n_rows: int) -> list[int]:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0 or (w < 0).any() or not np.isfinite(w).all() or w.sum() == 0:
        raise ValueError("mixture weights must be non-negative and not all zero")
    share = w / w.sum() * n_rows
    base = np.floor(share).astype(int)
    order = sorted(range(len(w)), key=lambda i: (-(share[i] - base[i]), i))
    for i in order[: n_rows - int(base.sum())]:
        base[i] += 1
    return base.tolist()


def simulate_episodes(
    model: StateSpaceModel,
    scenario: FaultScenario,
    n_episodes: int,
    rng,
    *,
    rows_per_episode: int = 20,
    record_every: int = 10,
    setpoint_box=DEFAULT_SETPOINT_BOX,
    measurement_noise: bool = True,
) -> np.ndarray:
    """Simulate a batch of episodes and return post-onset measurement rows.

    Each episode starts at the equilibrium of a random setpoint, switches to a
    second random setpoint at t=0 and records ``rows_per_episode`` samples
    every ``record_every`` steps from the onset. Returns (n_episodes *
    rows_per_episode, 10) in episode-major order.

    With ``measurement_noise`` every channel gets independent Gaussian sensor
    noise (the std of the state it reads) before the fault signature is
    applied, so the three phases are never exactly equal.
    """
    (plo, phi), (qlo, qhi) = setpoint_box
    lo, hi = np.array([plo, qlo]), np.array([phi, qhi])
    u0 = lo + (hi - lo) * rng.random((n_episodes, 2))
    u1 = lo + (hi - lo) * rng.random((n_episodes, 2))
    x = np.linalg.solve(-model.a_matrix, model.b_matrix @ u0.T).T
    onset_step = int(math.ceil(scenario.onset_time / model.dt - 1e-9))
    sample_steps = onset_step + record_every * np.arange(rows_per_episode)
    out = np.empty((rows_per_episode, n_episodes, len(FEATURE_NAMES)))
    k = 0
    for s in range(int(sample_steps[-1]) + 1):
        if s > 0:
            x = _step_batch(model, x, u1, rng)
            _check_finite(x, s)
        if k < rows_per_episode and s == sample_steps[k]:
            out[k] = _expand_batch(x)
            k += 1
    m = out.transpose(1, 0, 2).reshape(-1, len(FEATURE_NAMES))
    std = model.noise_std[list(CHANNEL_STATE)]
    if measurement_noise and std.any():
        m = m + rng.standard_normal(m.shape) * std
    return _apply_signature(m, scenario)


def generate_dataset(
    model: StateSpaceModel | None = None,
    scenarios: Sequence[tuple[FaultScenario, float]] | None = None,
    n_rows: int = 100011,
    seed: int = 42,
    *,
    rows_per_episode: int = 20,
    record_every: int = 10,
    setpoint_box=DEFAULT_SETPOINT_BOX,
    measurement_noise: bool = True,
) -> Dataset:
    """Labeled dataset of exactly ``n_rows`` rows, row quotas proportional to the weights."""
    if n_rows <= 0:
        raise ValueError("n_rows must be positive")
    model = model if model is not None else default_model()
    scenarios = list(scenarios) if scenarios is not None else default_scenarios()
    quotas = _quotas([w for _, w in scenarios], n_rows)
    streams = np.random.default_rng(seed).spawn(len(scenarios))
    blocks, labels = [], []
    for (scenario, _), quota, rng in zip(scenarios, quotas, streams):
        if quota == 0:
            continue
        n_ep = -(-quota // rows_per_episode)
        m = simulate_episodes(
            model,
            scenario,
            n_ep,
            rng,
            rows_per_episode=rows_per_episode,
            record_every=record_every,
            setpoint_box=setpoint_box,
            measurement_noise=measurement_noise,
        )[:quota]
        blocks.append(m)
        labels.append(np.full(quota, scenario.class_id, dtype=np.int64))
    return Dataset(list(FEATURE_NAMES), np.vstack(blocks), np.concatenate(labels))

