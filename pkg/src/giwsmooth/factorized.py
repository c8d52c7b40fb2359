"""Factorized Gaussian inverse-Wishart model.

The state density is N(x; m, P) IW(X; v, V) and the extent transition is
W(X'; n, M(x) X M(x)^T / n).  When ``M`` is a constant matrix ``A`` the
recursions are closed form; otherwise the expectations

    C1 = E[(M V M^T)^-1],  C2 = E[M V M^T]            (prediction, filtered x)
    C3 = E[(M^-1 W M^-T)^-1], C4 = E[M^-1 W M^-T]     (smoothing, smoothed x)

are approximated by a second-order Taylor expansion around the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._linalg import (
    DofError,
    GIWError,
    check_pd,
    check_psd,
    floor_eigenvalues,
    inv_sqrtm_pd,
    is_pd,
    sqrtm_psd,
    symmetrize,
)
from .conditional import DOF_MARGIN, SmootherDiagnostics, extent_prediction
from .distributions import GaussianDensity

__all__ = [
    "FactorizedGIWState",
    "FactorizedTransitionModel",
    "FactorizedMeasurementModel",
    "quadratic_form_expectation",
    "taylor_expectation",
    "predict",
    "update",
    "smooth_step",
    "smooth_trajectory",
    "run_filter",
]

# ||C1 C2 - I|| below this is treated as the constant-transform limit.
DEGENERATE_TOL = 1e-9
# Eigenvalue floor for an indefinite W, relative to trace(V_{k+1|k}).
W_FLOOR_RTOL = 1e-9
W_SKIP_RTOL = 1e-12


@dataclass(frozen=True)
class FactorizedGIWState:
    m: np.ndarray
    P: np.ndarray
    v: float
    V: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).ravel()
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape != (m.size, m.size):
            raise GIWError(f"P must be {m.size}x{m.size}, got {P.shape}")
        V = check_pd(self.V, "V")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "P", check_psd(P, "P"))
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "v", float(self.v))
        if not self.v > 2 * V.shape[0]:
            raise DofError(f"v must exceed 2d={2 * V.shape[0]}, got {self.v}")

    @property
    def d(self) -> int:
        return self.V.shape[0]

    @property
    def kinematics(self) -> GaussianDensity:
        return GaussianDensity(self.m, self.P)


@dataclass(frozen=True)
class FactorizedTransitionModel:
    """Nonlinear motion ``f`` with its Jacobian and noise Q, plus the extent dynamics.

    Either ``A`` (a constant d x d matrix) or the triple ``M``, ``dM``,
    ``d2M`` must be given.  ``dM(x)`` returns an ``(n_x, d, d)`` array of
    partial derivatives and ``d2M(x)`` an ``(n_x, n_x, d, d)`` array.
    """

    f: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    Q: np.ndarray
    n: float = math.inf
    A: np.ndarray | None = None
    M: Callable[[np.ndarray], np.ndarray] | None = None
    dM: Callable[[np.ndarray], np.ndarray] | None = None
    d2M: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        object.__setattr__(self, "Q", check_psd(np.atleast_2d(self.Q), "Q"))
        object.__setattr__(self, "n", float(self.n))
        if self.A is None and (self.M is None or self.dM is None or self.d2M is None):
            raise GIWError("give either a constant A or M together with dM and d2M")
        if self.A is not None:
            A = np.asarray(self.A, dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1] or abs(np.linalg.det(A)) < 1e-14:
                raise GIWError("A must be an invertible square matrix")
            object.__setattr__(self, "A", A)

    @property
    def is_constant_M(self) -> bool:
        return self.A is not None

    @classmethod
    def linear(cls, F, Q, n: float = math.inf, A=None, d: int = 2):
        F = np.asarray(F, dtype=float)
        return cls(
            f=lambda x: F @ x,
            jacobian=lambda x: F,
            Q=Q,
            n=n,
            A=np.eye(d) if A is None else A,
        )

    def transform(self, x) -> np.ndarray:
        return self.A if self.A is not None else self.M(x)


@dataclass(frozen=True)
class FactorizedMeasurementModel:
    H: np.ndarray
    rho: float = 1.0
    R: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        object.__setattr__(self, "H", H)
        if not self.rho > 0:
            raise GIWError(f"rho must be positive, got {self.rho}")
        d = H.shape[0]
        R = np.zeros((d, d)) if self.R is None else check_psd(self.R, "R")
        object.__setattr__(self, "R", R)


# -- Taylor expectations -----------------------------------------------------

def quadratic_form_expectation(B, dB, d2B, V, P, *, inverse=False, weight=0.5) -> np.ndarray:
    """Second-order Taylor approximation of E[N] or E[N^-1], N(x) = B(x) V B(x)^T.

    ``B``, ``dB`` (n, d, d) and ``d2B`` (n, n, d, d) are evaluated at the
    mean; ``P`` is the covariance of x.  ``weight`` multiplies the
    curvature term (0.5 for the Taylor expansion of an expectation).
    """
    BV = B @ V
    N = BV @ B.T
    # dN_i = dB_i V B^T + B V dB_i^T
    dBV = dB @ V
    dN = dBV @ B.T
    dN = dN + np.swapaxes(dN, -1, -2)
    # d2N_ij = d2B_ij V B^T + dB_j V dB_i^T + dB_i V dB_j^T + B V d2B_ij^T
    t1 = d2B @ BV.T
    t1 = t1 + np.swapaxes(t1, -1, -2)
    cross = np.einsum("jab,ibc->ijac", dBV, np.swapaxes(dB, -1, -2))
    d2N = t1 + cross + np.swapaxes(cross, 0, 1)
    if not inverse:
        return symmetrize(N + weight * np.einsum("ij,ijab->ab", P, d2N))
    Ninv = np.linalg.inv(N)
    # d2(N^-1)_ij = Ni dN_j Ni dN_i Ni - Ni d2N_ij Ni + Ni dN_i Ni dN_j Ni
    G = Ninv @ dN @ Ninv  # (n, d, d): Ni dN_i Ni
    H = dN @ Ninv  # dN_i Ni
    first = np.einsum("jab,ibc->ijac", G, H)
    second = np.einsum("ab,ijbc,cd->ijad", Ninv, d2N, Ninv)
    d2Ninv = first + np.swapaxes(first, 0, 1) - second
    return symmetrize(Ninv + weight * np.einsum("ij,ijab->ab", P, d2Ninv))


def _inverse_transform_derivatives(M, dM, d2M):
    Minv = np.linalg.inv(M)
    dMinv = -Minv @ dM @ Minv
    # d2(M^-1)_ij = Mi dM_i Mi dM_j Mi + Mi dM_j Mi dM_i Mi - Mi d2M_ij Mi
    a = Minv @ dM @ Minv  # (n, d, d)
    b = dM @ Minv
    first = np.einsum("iab,jbc->ijac", a, b)
    d2Minv = first + np.swapaxes(first, 0, 1) - Minv @ d2M @ Minv
    return Minv, dMinv, d2Minv


def taylor_expectation(m, P, V, model: FactorizedTransitionModel, target: str, *,
                       form: str = "first", weight: float = 0.5) -> np.ndarray:
    """Approximate C1..C4 under x ~ N(m, P).

    For C1/C2 ``V`` is the extent scale; for C3/C4 pass W instead.  With
    ``form="first"`` C3 = E[(M^-1 W M^-T)^-1] and C4 = E[M^-1 W M^-T];
    ``form="second"`` uses the algebraically equal E[M^T W^-1 M] and
    E[(M^T W^-1 M)^-1], which differ once approximated.
    """
    m = np.asarray(m, dtype=float)
    P = np.asarray(P, dtype=float)
    V = np.asarray(V, dtype=float)
    if model.is_constant_M:
        A = model.A
        nx, d = m.size, A.shape[0]
        M, dM, d2M = A, np.zeros((nx, d, d)), np.zeros((nx, nx, d, d))
    else:
        M, dM, d2M = model.M(m), model.dM(m), model.d2M(m)
    if abs(np.linalg.det(M)) < 1e-14:
        raise GIWError("M(m) is singular")
    if target in ("C1", "C2"):
        return quadratic_form_expectation(M, dM, d2M, V, P, inverse=target == "C1", weight=weight)
    if target not in ("C3", "C4"):
        raise ValueError(f"unknown target {target!r}")
    if form == "first":
        B, dB, d2B = _inverse_transform_derivatives(M, dM, d2M)
        return quadratic_form_expectation(B, dB, d2B, V, P, inverse=target == "C3", weight=weight)
    if form == "second":
        Wi = np.linalg.inv(check_pd(V, "W"))
        B, dB, d2B = M.T, np.swapaxes(dM, -1, -2), np.swapaxes(d2M, -1, -2)
        return quadratic_form_expectation(B, dB, d2B, Wi, P, inverse=target == "C4", weight=weight)
    raise ValueError(f"unknown form {form!r}")


def _inverse_dof(C_inv, C, d: int) -> float:
    """1/s for s = (d+1)/d tr{C_inv C (C_inv C - I)^-1}; 0 in the constant limit."""
    prod = C_inv @ C
    gap = prod - np.eye(d)
    if np.linalg.norm(gap) < DEGENERATE_TOL:
        return 0.0
    s = (d + 1) / d * np.trace(prod @ np.linalg.inv(gap))
    if not np.isfinite(s) or s <= d + 1:
        return math.nan
    return 1.0 / s


# -- recursions ----------------------------------------------------------------

def predict(state: FactorizedGIWState, model: FactorizedTransitionModel,
            *, diagnostics: SmootherDiagnostics | None = None, weight: float = 0.5) -> FactorizedGIWState:
    F = model.jacobian(state.m)
    m = np.asarray(model.f(state.m), dtype=float)
    P = symmetrize(F @ state.P @ F.T + model.Q)
    d, v = state.d, state.v
    if model.is_constant_M:
        v_pred, V_pred = extent_prediction(v, state.V, model.n, model.A)
        return FactorizedGIWState(m, P, v_pred, V_pred)

    C2 = taylor_expectation(state.m, state.P, state.V, model, "C2", weight=weight)
    C1 = taylor_expectation(state.m, state.P, state.V, model, "C1", weight=weight)
    if is_pd(C1) and is_pd(C2):
        inv_s = _inverse_dof(C1, C2, d)
    else:
        # Too much turn-rate spread for the expansion; use the point transform.
        M = model.M(state.m)
        C2, inv_s = symmetrize(M @ state.V @ M.T), math.nan
    if math.isnan(inv_s):
        if diagnostics is not None:
            diagnostics.note("degenerate_expectations")
        inv_s = 0.0
    inv_n = 0.0 if math.isinf(model.n) else 1.0 / model.n
    if inv_n and not model.n > d + 1:
        raise DofError(f"finite n must exceed d+1={d + 1}, got {model.n}")
    eta = 1.0 + (v - 2 * d - 2) * (inv_s + inv_n - (d + 1) * inv_n * inv_s)
    v_pred = d + 1 + (v - d - 1) / eta
    V_pred = (1.0 - (d + 1) * inv_s) * (1.0 - (d + 1) * inv_n) * C2 / eta
    return FactorizedGIWState(m, P, v_pred, symmetrize(V_pred))


def update(state: FactorizedGIWState, measurements, model: FactorizedMeasurementModel) -> FactorizedGIWState:
    Z = np.atleast_2d(np.asarray(measurements, dtype=float))
    if Z.size == 0:
        raise GIWError("update requires at least one measurement; skip the update on a missed detection")
    d = state.d
    if not state.v > 2 * d + 2:
        raise DofError(f"the extent mean requires v > 2d+2={2 * d + 2}, got {state.v}")
    nz = Z.shape[0]
    H = model.H
    zbar = Z.mean(axis=0)
    eps = zbar - H @ state.m
    dz = Z - zbar
    scatter = dz.T @ dz
    X_hat = state.V / (state.v - 2 * d - 2)
    Y = model.rho * X_hat + model.R
    S = symmetrize(H @ state.P @ H.T + Y / nz)
    K = np.linalg.solve(S, H @ state.P).T
    X_half = sqrtm_psd(X_hat)
    e = X_half @ inv_sqrtm_pd(S) @ eps
    T = X_half @ inv_sqrtm_pd(Y)
    return FactorizedGIWState(
        m=state.m + K @ eps,
        P=symmetrize(state.P - K @ S @ K.T),
        v=state.v + nz,
        V=symmetrize(state.V + np.outer(e, e) + T @ scatter @ T.T),
    )


def _rts(filtered, predicted_next, smoothed_next, F):
    if np.linalg.cond(predicted_next.P) > 1e14:
        raise GIWError("predicted kinematic covariance is singular")
    G = np.linalg.solve(predicted_next.P.T, (filtered.P @ F.T).T).T
    m = filtered.m + G @ (smoothed_next.m - predicted_next.m)
    P = symmetrize(filtered.P - G @ (predicted_next.P - smoothed_next.P) @ G.T)
    return m, P


def smooth_step(
    filtered: FactorizedGIWState,
    predicted_next: FactorizedGIWState,
    smoothed_next: FactorizedGIWState,
    model: FactorizedTransitionModel,
    smoothed_kinematics: GaussianDensity | None = None,
    *,
    variant: str = "derived",
    form: str = "first",
    weight: float = 0.5,
    diagnostics: SmootherDiagnostics | None = None,
    k=None,
) -> FactorizedGIWState:
    """One backward step.

    The kinematic part is the RTS step linearized at the filtered mean.  The
    extent expectations C3/C4 are taken under ``smoothed_kinematics``, which
    defaults to the output of this step's kinematic update.  ``variant``
    selects whether the general-M scale increment carries the 1/eta_1
    factor of the derivation (``"derived"``) or not (``"table"``); the two
    coincide for infinite n.
    """
    if variant not in ("derived", "table"):
        raise ValueError(f"unknown variant {variant!r}")
    d = filtered.d
    m, P = _rts(filtered, predicted_next, smoothed_next, model.jacobian(filtered.m))
    if smoothed_kinematics is None:
        smoothed_kinematics = GaussianDensity(m, P)

    w = smoothed_next.v - predicted_next.v
    W = symmetrize(smoothed_next.V - predicted_next.V)
    inv_n = 0.0 if math.isinf(model.n) else 1.0 / model.n
    eta1 = 1.0 + (w - 3 * (d + 1)) * inv_n
    g = (w - 2 * (d + 1) ** 2 * inv_n) / eta1

    if model.is_constant_M:
        Ainv = np.linalg.inv(model.A)
        v = filtered.v + g
        V = symmetrize(filtered.V + Ainv @ W @ Ainv.T / eta1)
    else:
        ref = np.trace(predicted_next.V)
        # A vanishing increment carries no extent information; test before flooring.
        if not np.all(np.isfinite(W)) or np.linalg.norm(W) < W_SKIP_RTOL * ref:
            if diagnostics is not None:
                diagnostics.note("skipped_increments", k)
            return FactorizedGIWState(m, P, filtered.v, filtered.V)
        if not is_pd(W):
            W = floor_eigenvalues(W, W_FLOOR_RTOL * ref)
            if diagnostics is not None:
                diagnostics.note("floored_scales", k)
        mk, Pk = smoothed_kinematics.m, smoothed_kinematics.P
        C3 = taylor_expectation(mk, Pk, W, model, "C3", form=form, weight=weight)
        C4 = taylor_expectation(mk, Pk, W, model, "C4", form=form, weight=weight)
        inv_h = _inverse_dof(C3, C4, d)
        if math.isnan(inv_h):
            if diagnostics is not None:
                diagnostics.note("degenerate_expectations", k)
            inv_h = 0.0
        scale = 1.0 / eta1 if variant == "derived" else 1.0
        if inv_h == 0.0:
            dv, dV = g, scale * C4
        else:
            h = 1.0 / inv_h
            eta2 = 1.0 + (g - 3 * d - 3) / (h + d + 1)
            eta3 = 1.0 + (g - d - 1) / (h - d - 1)
            dv = (g - 2 * (d + 1) ** 2 / (h + d + 1)) / eta2
            dV = scale * C4 / eta3
        v = filtered.v + dv
        V = symmetrize(filtered.V + dV)

    if not (np.isfinite(v) and v > 2 * d + DOF_MARGIN and is_pd(V)):
        if diagnostics is not None:
            diagnostics.note("extent_fallbacks", k)
        v, V = filtered.v, filtered.V
    return FactorizedGIWState(m, P, v, V)


def run_filter(prior: FactorizedGIWState, measurement_sets: Sequence, transition, measurement,
               *, diagnostics: SmootherDiagnostics | None = None):
    """Forward pass; returns ``(predicted, filtered)`` with ``predicted[0]`` the prior."""
    predicted, filtered = [], []
    state = prior
    for k, Z in enumerate(measurement_sets):
        if k > 0:
            state = predict(filtered[-1], transition, diagnostics=diagnostics)
        predicted.append(state)
        filtered.append(update(state, Z, measurement) if len(Z) else state)
    return predicted, filtered


def smooth_trajectory(
    filtered: Sequence[FactorizedGIWState],
    predicted: Sequence[FactorizedGIWState],
    model: FactorizedTransitionModel,
    *,
    variant: str = "derived",
    form: str = "first",
    diagnostics: SmootherDiagnostics | None = None,
) -> list[FactorizedGIWState]:
    """Backward recursion.

    Within each step the kinematic RTS update runs first, and its output is
    the density under which the extent expectations are taken.
    """
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
            variant=variant, form=form, diagnostics=diagnostics, k=k,
        )
    return smoothed
