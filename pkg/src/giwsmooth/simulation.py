"""Ground truth with its detections, and the Monte Carlo runner.

Each run draws from its own generator, seeded with
``SeedSequence(seed, spawn_key=(run_index,))``, so results for a run do
not depend on how many runs are requested or on how they are scheduled
across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import conditional as cond
from . import factorized as fact
from ._linalg import GIWError
from .conditional import SmootherDiagnostics
from .evaluation import expected_state, gwd
from .models import ct_noise, ct_transition, cv_matrices, rotation, tracker_model

__all__ = [
    "ScenarioConfig",
    "GroundTruthTrack",
    "ResultTable",
    "MODES",
    "generate_truth",
    "simulate_detections",
    "initial_prior",
    "run_tracker",
    "run_single",
    "run_monte_carlo",
    "run_rng",
]

MODES = ("predict", "filter", "smooth")
TRACKERS = ("CCV", "FCV", "FCT")

# Tracker prior around the (corrupted) initial truth.
PRIOR_POS_VAR = 100.0
PRIOR_VEL_VAR = 25.0
PRIOR_TURN_VAR = 0.1**2
PRIOR_DOF = 10.0
PRIOR_EXTENT = 4.0  # prior extent mean is PRIOR_EXTENT * I
MIN_SPEED = 1e-9


@dataclass(frozen=True)
class ScenarioConfig:
    truth_model: str = "CV"
    T: float = 1.0
    K: int = 50
    sigma_a: float = 1.0
    sigma_omega: float = math.pi / 180
    p_D: float = 0.75
    N_z: int = 10
    extent_semiaxes: tuple = (2.0, 1.0)
    trackers: tuple = TRACKERS
    num_runs: int = 1000
    seed: int = 0
    initial_speed: float = 10.0
    initial_turn_rate: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "truth_model", str(self.truth_model).upper())
        object.__setattr__(self, "trackers", tuple(t.upper() for t in self.trackers))
        object.__setattr__(self, "extent_semiaxes", tuple(float(x) for x in self.extent_semiaxes))
        self.validate()

    def validate(self):
        if self.truth_model not in ("CV", "CT"):
            raise ValueError(f"truth_model must be CV or CT, got {self.truth_model!r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K}")
        if self.sigma_a < 0 or self.sigma_omega < 0:
            raise ValueError("sigma_a and sigma_omega must be nonnegative")
        if not 0.0 <= self.p_D <= 1.0:
            raise ValueError(f"p_D must lie in [0, 1], got {self.p_D}")
        if int(self.N_z) != self.N_z or self.N_z < 1:
            raise ValueError(f"N_z must be a positive integer, got {self.N_z}")
        if len(self.extent_semiaxes) != 2:
            raise ValueError("extent_semiaxes must have two entries")
        l1, l2 = self.extent_semiaxes
        if not l1 >= l2 > 0:
            raise ValueError(f"extent_semiaxes must satisfy l1 >= l2 > 0, got {self.extent_semiaxes}")
        if not self.trackers or any(t not in TRACKERS for t in self.trackers):
            raise ValueError(f"trackers must be a nonempty subset of {TRACKERS}, got {self.trackers}")
        if int(self.num_runs) != self.num_runs or self.num_runs < 1:
            raise ValueError(f"num_runs must be a positive integer, got {self.num_runs}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["extent_semiaxes"] = list(self.extent_semiaxes)
        out["trackers"] = list(self.trackers)
        return out

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class GroundTruthTrack:
    states: np.ndarray  # (K, n_x)
    extents: np.ndarray  # (K, 2, 2)

    def __len__(self):
        return len(self.states)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(run_index),))))


def _extent(heading: float, semiaxes) -> np.ndarray:
    R = rotation(heading)
    l1, l2 = semiaxes
    return R @ np.diag([l1**2, l2**2]) @ R.T


def generate_truth(config: ScenarioConfig, rng: np.random.Generator) -> GroundTruthTrack:
    T, K = config.T, int(config.K)
    g = np.array([T**2 / 2, T])
    if config.truth_model == "CV":
        F, _ = cv_matrices(T, config.sigma_a)
        Fb = np.kron(F, np.eye(2))
        x = np.array([0.0, 0.0, config.initial_speed, 0.0])
    else:
        x = np.array([0.0, 0.0, config.initial_speed, 0.0, config.initial_turn_rate])
    states = np.empty((K, x.size))
    extents = np.empty((K, 2, 2))
    heading = 0.0
    for k in range(K):
        if k > 0:
            acc = config.sigma_a * rng.standard_normal(2)
            if config.truth_model == "CV":
                x = Fb @ x
                x[:2] += g[0] * acc
                x[2:4] += g[1] * acc
            else:
                x = ct_transition(x, T)
                x[:2] += g[0] * acc
                x[2:4] += g[1] * acc
                x[4] += config.sigma_omega * rng.standard_normal()
        if math.hypot(x[2], x[3]) > MIN_SPEED:
            heading = math.atan2(x[3], x[2])
        states[k] = x
        extents[k] = _extent(heading, config.extent_semiaxes)
    return GroundTruthTrack(states, extents)


def simulate_detections(track: GroundTruthTrack, config: ScenarioConfig, rng: np.random.Generator) -> list:
    """One Bernoulli(p_D) trial per step; on detection N_z Gaussian points."""
    out = []
    for k in range(len(track)):
        if rng.random() < config.p_D:
            L = np.linalg.cholesky(track.extents[k])
            out.append(track.positions[k] + rng.standard_normal((int(config.N_z), 2)) @ L.T)
        else:
            out.append(np.empty((0, 2)))
    return out


def initial_prior(config: ScenarioConfig, track: GroundTruthTrack, rng: np.random.Generator) -> np.ndarray:
    """Corrupted initial kinematic mean ``[px, py, vx, vy, omega]``."""
    x0 = track.states[0]
    omega = x0[4] if x0.size > 4 else 0.0
    sd = np.sqrt([PRIOR_POS_VAR, PRIOR_POS_VAR, PRIOR_VEL_VAR, PRIOR_VEL_VAR, PRIOR_TURN_VAR])
    return np.array([*x0[:4], omega]) + sd * rng.standard_normal(5)


def _tracker_prior(name: str, mean: np.ndarray):
    d = 2
    V0 = (PRIOR_DOF - 2 * d - 2) * PRIOR_EXTENT * np.eye(d)
    if name == "CCV":
        P0 = np.diag([PRIOR_POS_VAR, PRIOR_VEL_VAR]) / PRIOR_EXTENT
        return cond.ConditionalGIWState(mean[:4], P0, PRIOR_DOF, V0)
    if name == "FCV":
        P0 = np.diag([PRIOR_POS_VAR] * 2 + [PRIOR_VEL_VAR] * 2)
        return fact.FactorizedGIWState(mean[:4], P0, PRIOR_DOF, V0)
    P0 = np.diag([PRIOR_POS_VAR] * 2 + [PRIOR_VEL_VAR] * 2 + [PRIOR_TURN_VAR])
    return fact.FactorizedGIWState(mean, P0, PRIOR_DOF, V0)


def run_tracker(name: str, config: ScenarioConfig, measurements, prior_mean, diagnostics=None):
    """Run one tracker; returns ``(predicted, filtered, smoothed)`` state lists."""
    entry = tracker_model(name, config.T, config.sigma_a, config.sigma_omega)
    prior = _tracker_prior(name, prior_mean)
    if entry.is_conditional:
        predicted, filtered = cond.run_filter(prior, measurements, entry.transition, entry.measurement)
        smoothed = cond.smooth_trajectory(filtered, predicted, entry.transition, diagnostics=diagnostics)
    else:
        predicted, filtered = fact.run_filter(prior, measurements, entry.transition, entry.measurement,
                                              diagnostics=diagnostics)
        smoothed = fact.smooth_trajectory(filtered, predicted, entry.transition, diagnostics=diagnostics)
    return predicted, filtered, smoothed


def run_single(config: ScenarioConfig, run_index: int):
    """Simulate one run; returns ``(gwd[n_trackers, K, 3], valid[n_trackers], counters)``."""
    rng = run_rng(config.seed, run_index)
    track = generate_truth(config, rng)
    measurements = simulate_detections(track, config, rng)
    prior_mean = initial_prior(config, track, rng)
    K = len(track)
    errors = np.full((len(config.trackers), K, len(MODES)), np.nan)
    valid = np.ones(len(config.trackers), dtype=bool)
    counters = {}
    for t, name in enumerate(config.trackers):
        diag = SmootherDiagnostics()
        try:
            sequences = run_tracker(name, config, measurements, prior_mean, diag)
            for j, seq in enumerate(sequences):
                for k in range(K):
                    errors[t, k, j] = gwd((track.positions[k], track.extents[k]), expected_state(seq[k]))
        except (GIWError, np.linalg.LinAlgError, FloatingPointError):
            valid[t] = False
        if not np.all(np.isfinite(errors[t])):
            valid[t] = False
        counters[name] = {
            "extent_fallbacks": diag.extent_fallbacks,
            "skipped_increments": diag.skipped_increments,
            "floored_scales": diag.floored_scales,
            "degenerate_expectations": diag.degenerate_expectations,
        }
    return errors, valid, counters


def _run_chunk(args):
    config, indices = args
    return [run_single(config, i) for i in indices]


@dataclass
class ResultTable:
    """GWD values indexed ``[run, tracker, k, mode]`` with a validity mask."""

    trackers: tuple
    gwd: np.ndarray
    valid: np.ndarray
    counters: dict = field(default_factory=dict)

    @property
    def num_runs(self) -> int:
        return self.gwd.shape[0]

    @property
    def K(self) -> int:
        return self.gwd.shape[2]

    def divergence_counts(self) -> dict:
        return {name: int((~self.valid[:, t]).sum()) for t, name in enumerate(self.trackers)}

    def rows(self):
        """Yield ``(run, tracker, k, mode, gwd)`` for every valid (run, tracker); k counts from 1."""
        for r in range(self.num_runs):
            for t, name in enumerate(self.trackers):
                if not self.valid[r, t]:
                    continue
                for k in range(self.K):
                    for j, mode in enumerate(MODES):
                        yield r, name, k + 1, mode, float(self.gwd[r, t, k, j])

    def median(self) -> np.ndarray:
        """Median curves ``[tracker, k, mode]`` over valid runs."""
        from .evaluation import aggregate_median

        return aggregate_median(self.gwd, self.valid)

    def curve(self, tracker: str, mode: str) -> np.ndarray:
        return self.median()[self.trackers.index(tracker.upper()), :, MODES.index(mode)]


def run_monte_carlo(config: ScenarioConfig, workers: int = 1) -> ResultTable:
    runs = list(range(int(config.num_runs)))
    if workers > 1 and len(runs) > 1:
        chunks = [runs[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = pool.map(_run_chunk, [(config, c) for c in chunks])
            by_run = {}
            for c, part in zip(chunks, parts):
                by_run.update(zip(c, part))
        results = [by_run[r] for r in runs]
    else:
        results = [run_single(config, r) for r in runs]

    gwd_all = np.stack([r[0] for r in results])
    valid = np.stack([r[1] for r in results])
    counters = {}
    for name in config.trackers:
        totals = {}
        for _, _, c in results:
            for key, val in c[name].items():
                totals[key] = totals.get(key, 0) + val
        counters[name] = totals
    return ResultTable(tuple(config.trackers), gwd_all, valid, counters)
