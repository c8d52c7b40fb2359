"""Small dense-matrix helpers shared by the filters and smoothers."""

from __future__ import annotations

import numpy as np

# Relative eigenvalue tolerance used when accepting a matrix as PSD.
PSD_RTOL = 1e-10


class GIWError(ValueError):
    """Base class for invalid parameters or arguments."""


class NotPositiveDefiniteError(GIWError):
    """A matrix required to be (semi-)definite is not."""


class DofError(GIWError):
    """A degrees-of-freedom parameter violates its bound."""


def symmetrize(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def is_psd(A: np.ndarray, rtol: float = PSD_RTOL) -> bool:
    eig = np.linalg.eigvalsh(symmetrize(A))
    return bool(np.all(np.isfinite(eig)) and eig[0] >= -rtol * max(abs(eig[-1]), 1.0))


def is_pd(A: np.ndarray) -> bool:
    eig = np.linalg.eigvalsh(symmetrize(A))
    return bool(np.all(np.isfinite(eig)) and eig[0] > 0.0)


def check_pd(A, name: str = "matrix") -> np.ndarray:
    """Return the symmetrized matrix, raising if it is not positive definite."""
    A = symmetrize(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GIWError(f"{name} must be square, got shape {A.shape}")
    if not is_pd(A):
        raise NotPositiveDefiniteError(f"{name} is not positive definite")
    return A


def check_psd(A, name: str = "matrix") -> np.ndarray:
    A = symmetrize(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GIWError(f"{name} must be square, got shape {A.shape}")
    if not is_psd(A):
        raise NotPositiveDefiniteError(f"{name} is not positive semi-definite")
    return A


def sqrtm_psd(A: np.ndarray) -> np.ndarray:
    """Symmetric square root, clamping round-off negative eigenvalues to 0."""
    w, U = np.linalg.eigh(symmetrize(A))
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


def inv_sqrtm_pd(A: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(symmetrize(A))
    if w[0] <= 0.0:
        raise NotPositiveDefiniteError("inverse square root of a non-PD matrix")
    return (U / np.sqrt(w)) @ U.T


def logdet_pd(A: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(A)
    if sign <= 0:
        raise NotPositiveDefiniteError("log-determinant of a non-PD matrix")
    return float(val)


def floor_eigenvalues(A: np.ndarray, floor: float) -> np.ndarray:
    w, U = np.linalg.eigh(symmetrize(A))
    return symmetrize((U * np.maximum(w, floor)) @ U.T)
