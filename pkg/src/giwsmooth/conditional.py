"""Conditional Gaussian inverse-Wishart model.

The kinematic density is N(x; m, P kron X) and the extent density is
IW(X; v, V).  The kinematic vector stacks d-dimensional blocks, i.e. for
d = 2 and s = 2 it is ``[px, py, vx, vy]`` so that ``(F kron I_d) x`` is
``(F @ x.reshape(s, d)).ravel()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._linalg import DofError, GIWError, check_pd, check_psd, is_pd, symmetrize

__all__ = [
    "ConditionalGIWState",
    "ConditionalTransitionModel",
    "ConditionalMeasurementModel",
    "SmootherDiagnostics",
    "predict",
    "update",
    "smooth_step",
    "smooth_trajectory",
    "run_filter",
    "extent_prediction",
]

# Margin above v = 2d below which a smoothed extent density is rejected.
DOF_MARGIN = 1e-6


@dataclass(frozen=True)
class ConditionalGIWState:
    m: np.ndarray
    P: np.ndarray
    v: float
    V: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).ravel()
        V = check_pd(self.V, "V")
        d = V.shape[0]
        if m.size % d:
            raise GIWError(f"kinematic length {m.size} is not divisible by d={d}")
        s = m.size // d
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape != (s, s):
            raise GIWError(f"P must be {s}x{s}, got {P.shape}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "P", check_psd(P, "P"))
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "v", float(self.v))
        if not self.v > 2 * d:
            raise DofError(f"v must exceed 2d={2 * d}, got {self.v}")

    @property
    def d(self) -> int:
        return self.V.shape[0]

    @property
    def s(self) -> int:
        return self.P.shape[0]

    def kinematic_covariance(self, X=None) -> np.ndarray:
        """Full ``P kron X``; X defaults to the extent mean."""
        if X is None:
            X = self.V / (self.v - 2 * self.d - 2)
        return np.kron(self.P, X)


@dataclass(frozen=True)
class ConditionalTransitionModel:
    """Motion matrix F (s x s), noise D (s x s), extent dof n and transform A."""

    F: np.ndarray
    D: np.ndarray
    n: float = math.inf
    A: np.ndarray | None = None
    d: int = 2

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "D", check_psd(np.atleast_2d(self.D), "D"))
        A = np.eye(self.d) if self.A is None else np.asarray(self.A, dtype=float)
        if A.shape != (self.d, self.d) or abs(np.linalg.det(A)) < 1e-14:
            raise GIWError("A must be an invertible d x d matrix")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "n", float(self.n))
        if not self.n >= self.d:
            raise DofError(f"n must be >= d={self.d} or infinite, got {self.n}")


@dataclass(frozen=True)
class ConditionalMeasurementModel:
    H: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.shape[0] != 1 or not np.any(H):
            raise GIWError("H must be a nonzero 1 x s matrix")
        object.__setattr__(self, "H", H)


@dataclass
class SmootherDiagnostics:
    """Counters for guarded steps; mutated in place by the smoothers."""

    extent_fallbacks: int = 0
    skipped_increments: int = 0
    floored_scales: int = 0
    degenerate_expectations: int = 0
    events: list = field(default_factory=list)

    def note(self, counter: str, k=None):
        setattr(self, counter, getattr(self, counter) + 1)
        self.events.append((counter, k))


def _kron_apply(G: np.ndarray, x: np.ndarray, d: int) -> np.ndarray:
    return (G @ x.reshape(-1, d)).ravel()


def extent_prediction(v: float, V: np.ndarray, n: float, A: np.ndarray) -> tuple[float, np.ndarray]:
    """Inverse-Wishart prediction under a Wishart transition with constant A."""
    d = V.shape[0]
    if math.isinf(n):
        return v, symmetrize(A @ V @ A.T)
    if not n > d + 1:
        raise DofError(f"finite n must exceed d+1={d + 1}, got {n}")
    v_pred = d + 1 + (v - d - 1) / (1.0 + (v - 2 * d - 2) / n)
    V_pred = A @ V @ A.T / (1.0 + (v - d - 1) / (n - d - 1))
    return v_pred, symmetrize(V_pred)


def predict(state: ConditionalGIWState, model: ConditionalTransitionModel) -> ConditionalGIWState:
    F = model.F
    v, V = extent_prediction(state.v, state.V, model.n, model.A)
    return ConditionalGIWState(
        m=_kron_apply(F, state.m, state.d),
        P=symmetrize(F @ state.P @ F.T + model.D),
        v=v,
        V=V,
    )


def update(state: ConditionalGIWState, measurements, model: ConditionalMeasurementModel) -> ConditionalGIWState:
    Z = np.atleast_2d(np.asarray(measurements, dtype=float))
    if Z.size == 0:
        raise GIWError("update requires at least one measurement; skip the update on a missed detection")
    d = state.d
    if Z.shape[1] != d:
        raise GIWError(f"measurements must be {d}-vectors")
    nz = Z.shape[0]
    H = model.H
    zbar = Z.mean(axis=0)
    eps = zbar - _kron_apply(H, state.m, d)
    dz = Z - zbar
    scatter = dz.T @ dz
    S = (H @ state.P @ H.T).item() + 1.0 / nz
    K = state.P @ H.T / S
    N = np.outer(eps, eps) / S
    return ConditionalGIWState(
        m=state.m + _kron_apply(K, eps, d),
        P=symmetrize(state.P - S * K @ K.T),
        v=state.v + nz,
        V=symmetrize(state.V + N + scatter),
    )


def _rts_kinematics(filtered, predicted_next, smoothed_next, F: np.ndarray):
    G = np.linalg.solve(predicted_next.P.T, (filtered.P @ F.T).T).T
    dm = smoothed_next.m - predicted_next.m
    P = filtered.P - G @ (predicted_next.P - smoothed_next.P) @ G.T
    return G, dm, symmetrize(P)


def smooth_step(
    filtered: ConditionalGIWState,
    predicted_next: ConditionalGIWState,
    smoothed_next: ConditionalGIWState,
    model: ConditionalTransitionModel,
    *,
    variant: str = "derived",
    diagnostics: SmootherDiagnostics | None = None,
    k=None,
) -> ConditionalGIWState:
    """One backward step.

    ``variant="derived"`` uses the increments ``v_{k+1|K} - v_{k+1|k}`` and
    ``V_{k+1|K} - V_{k+1|k}``.  ``variant="table"`` is the alternative
    form in which the filtered ``v_{k|k}``/``V_{k|k}`` appear in eta and in
    the scale increment instead.
    """
    if variant not in ("derived", "table"):
        raise ValueError(f"unknown variant {variant!r}")
    d = filtered.d
    if np.linalg.cond(predicted_next.P) > 1e14:
        raise GIWError("predicted kinematic covariance is singular")
    G, dm, P = _rts_kinematics(filtered, predicted_next, smoothed_next, model.F)
    m = filtered.m + _kron_apply(G, dm, d)

    n = model.n
    Ainv = np.linalg.inv(model.A)
    w = smoothed_next.v - predicted_next.v
    if variant == "derived":
        w_eta = w
        dV = smoothed_next.V - predicted_next.V
    else:
        w_eta = smoothed_next.v - filtered.v
        dV = smoothed_next.V - filtered.V
    if math.isinf(n):
        eta = 1.0
        dv = w
    else:
        eta = 1.0 + (w_eta - 3 * (d + 1)) / n
        dv = (w - 2 * (d + 1) ** 2 / n) / eta
    v = filtered.v + dv
    V = symmetrize(filtered.V + Ainv @ dV @ Ainv.T / eta)

    if not (np.isfinite(v) and v > 2 * d + DOF_MARGIN and is_pd(V)):
        if diagnostics is not None:
            diagnostics.note("extent_fallbacks", k)
        v, V = filtered.v, filtered.V
    return ConditionalGIWState(m=m, P=P, v=v, V=V)


def run_filter(prior: ConditionalGIWState, measurement_sets: Sequence, transition, measurement):
    """Forward pass; returns ``(predicted, filtered)`` lists of equal length.

    ``predicted[0]`` is the prior.  Empty measurement sets leave the
    predicted density unchanged.
    """
    predicted, filtered = [], []
    state = prior
    for k, Z in enumerate(measurement_sets):
        if k > 0:
            state = predict(filtered[-1], transition)
        predicted.append(state)
        filtered.append(update(state, Z, measurement) if len(Z) else state)
    return predicted, filtered


def smooth_trajectory(
    filtered: Sequence[ConditionalGIWState],
    predicted: Sequence[ConditionalGIWState],
    model: ConditionalTransitionModel,
    *,
    variant: str = "derived",
    diagnostics: SmootherDiagnostics | None = None,
) -> list[ConditionalGIWState]:
    """Backward recursion; ``predicted[k]`` must be the prediction for step k."""
    if len(filtered) != len(predicted):
        raise GIWError(f"length mismatch: {len(filtered)} filtered vs {len(predicted)} predicted")
    K = len(filtered)
    if K == 0:
        return []
    smoothed = [None] * K
    smoothed[-1] = filtered[-1]
    for k in range(K - 2, -1, -1):
        smoothed[k] = smooth_step(
            filtered[k], predicted[k + 1], smoothed[k + 1], model,
            variant=variant, diagnostics=diagnostics, k=k,
        )
    return smoothed
