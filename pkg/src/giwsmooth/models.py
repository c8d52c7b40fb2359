"""Tracker configurations and the CV/CT system matrices.

State ordering is ``[px, py, vx, vy]`` (plus ``omega`` for CT) throughout,
which is the ordering on which ``F kron I_2`` acts in the conditional model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditional import ConditionalMeasurementModel, ConditionalTransitionModel
from .factorized import FactorizedMeasurementModel, FactorizedTransitionModel

__all__ = [
    "ModelCatalogEntry",
    "cv_matrices",
    "cv_block_matrices",
    "ct_transition",
    "ct_jacobian",
    "ct_noise",
    "rotation",
    "rotation_derivative",
    "rotation_second_derivative",
    "ccv_model",
    "fcv_model",
    "fct_model",
    "tracker_model",
]

# Below this |T*omega| the CT map switches to its series expansion; the
# closed-form derivatives lose digits to cancellation for small turns.
SMALL_TURN = 1e-3


def cv_matrices(T: float, sigma_a: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis (2 x 2) CV transition and acceleration-noise matrices."""
    F = np.array([[1.0, T], [0.0, 1.0]])
    D = sigma_a**2 * np.array([[T**4 / 4, T**3 / 2], [T**3 / 2, T**2]])
    return F, D


def cv_block_matrices(T: float, sigma_a: float, d: int = 2) -> tuple[np.ndarray, np.ndarray]:
    F, D = cv_matrices(T, sigma_a)
    I = np.eye(d)
    return np.kron(F, I), np.kron(D, I)


def _turn_terms(T: float, omega: float):
    """sin(Tw)/w, (1-cos(Tw))/w and their derivatives with respect to w."""
    wT = T * omega
    c, s = math.cos(wT), math.sin(wT)
    if abs(wT) < SMALL_TURN:
        x2 = wT * wT
        a = T * (1 - x2 / 6 + x2 * x2 / 120)
        b = T * wT * (0.5 - x2 / 24 + x2 * x2 / 720)
        da = T * T * wT * (-1 / 3 + x2 / 30)
        db = T * T * (0.5 - x2 / 8 + x2 * x2 / 144)
    else:
        a = s / omega
        b = (1 - c) / omega
        da = (T * c * omega - s) / omega**2
        db = (T * s * omega - (1 - c)) / omega**2
    return c, s, a, b, da, db


def ct_transition(x, T: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    px, py, vx, vy, om = x
    c, s, a, b, _, _ = _turn_terms(T, om)
    return np.array([
        px + a * vx - b * vy,
        py + b * vx + a * vy,
        c * vx - s * vy,
        s * vx + c * vy,
        om,
    ])


def ct_jacobian(x, T: float) -> np.ndarray:
    """Analytic Jacobian of the CT map, including the column for omega."""
    _, _, vx, vy, om = np.asarray(x, dtype=float)
    c, s, a, b, da, db = _turn_terms(T, om)
    return np.array([
        [1.0, 0.0, a, -b, da * vx - db * vy],
        [0.0, 1.0, b, a, db * vx + da * vy],
        [0.0, 0.0, c, -s, -T * s * vx - T * c * vy],
        [0.0, 0.0, s, c, T * c * vx - T * s * vy],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])


def ct_noise(T: float, sigma_a: float, sigma_omega: float) -> np.ndarray:
    G = np.zeros((5, 3))
    G[0:2, 0:2] = T**2 / 2 * np.eye(2)
    G[2:4, 0:2] = T * np.eye(2)
    G[4, 2] = 1.0
    return G @ np.diag([sigma_a**2, sigma_a**2, sigma_omega**2]) @ G.T


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_derivative(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[-s, -c], [c, -s]])


def rotation_second_derivative(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[-c, s], [-s, -c]])


@dataclass(frozen=True)
class ModelCatalogEntry:
    name: str
    transition: object
    measurement: object
    T: float
    sigma_a: float
    sigma_omega: float = 0.0

    def __post_init__(self):
        if self.name not in ("CCV", "FCV", "FCT"):
            raise ValueError(f"unknown tracker {self.name!r}")
        if not self.T > 0:
            raise ValueError(f"sampling time must be positive, got {self.T}")
        if self.sigma_a < 0 or self.sigma_omega < 0:
            raise ValueError("noise standard deviations must be nonnegative")

    @property
    def is_conditional(self) -> bool:
        return self.name == "CCV"


def ccv_model(T: float = 1.0, sigma_a: float = 1.0, n: float = 100.0) -> ModelCatalogEntry:
    F, D = cv_matrices(T, sigma_a)
    return ModelCatalogEntry(
        "CCV",
        ConditionalTransitionModel(F=F, D=D, n=n, A=np.eye(2)),
        ConditionalMeasurementModel(H=np.array([[1.0, 0.0]])),
        T,
        sigma_a,
    )


def fcv_model(T: float = 1.0, sigma_a: float = 1.0, n: float = 100.0) -> ModelCatalogEntry:
    F, Q = cv_block_matrices(T, sigma_a)
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    return ModelCatalogEntry(
        "FCV",
        FactorizedTransitionModel.linear(F, Q, n=n, A=np.eye(2)),
        FactorizedMeasurementModel(H=H, rho=1.0),
        T,
        sigma_a,
    )


def fct_model(T: float = 1.0, sigma_a: float = 1.0, sigma_omega: float = math.pi / 180,
              n: float = math.inf) -> ModelCatalogEntry:
    def M(x):
        return rotation(T * x[4])

    def dM(x):
        out = np.zeros((5, 2, 2))
        out[4] = T * rotation_derivative(T * x[4])
        return out

    def d2M(x):
        out = np.zeros((5, 5, 2, 2))
        out[4, 4] = T**2 * rotation_second_derivative(T * x[4])
        return out

    transition = FactorizedTransitionModel(
        f=lambda x: ct_transition(x, T),
        jacobian=lambda x: ct_jacobian(x, T),
        Q=ct_noise(T, sigma_a, sigma_omega),
        n=n,
        M=M,
        dM=dM,
        d2M=d2M,
    )
    H = np.hstack([np.eye(2), np.zeros((2, 3))])
    return ModelCatalogEntry(
        "FCT", transition, FactorizedMeasurementModel(H=H, rho=1.0), T, sigma_a, sigma_omega
    )


def tracker_model(name: str, T: float = 1.0, sigma_a: float = 1.0,
                  sigma_omega: float = math.pi / 180) -> ModelCatalogEntry:
    name = name.upper()
    if name == "CCV":
        return ccv_model(T, sigma_a)
    if name == "FCV":
        return fcv_model(T, sigma_a)
    if name == "FCT":
        return fct_model(T, sigma_a, sigma_omega)
    raise ValueError(f"unknown tracker {name!r}")
