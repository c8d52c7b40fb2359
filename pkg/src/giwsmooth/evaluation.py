"""Point estimates and the Gaussian Wasserstein distance, plus median curves over runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import DofError, GIWError, check_pd, sqrtm_psd

__all__ = ["ExtendedObjectEstimate", "expected_state", "gwd", "aggregate_median"]


@dataclass(frozen=True)
class ExtendedObjectEstimate:
    x_hat: np.ndarray
    X_hat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_hat", np.asarray(self.x_hat, dtype=float).ravel())
        object.__setattr__(self, "X_hat", check_pd(self.X_hat, "extent estimate"))

    @property
    def position(self) -> np.ndarray:
        return self.x_hat[: self.X_hat.shape[0]]


def expected_state(state) -> ExtendedObjectEstimate:
    """Posterior mean (m, V / (v - 2d - 2)) of either GIW state type."""
    d = state.V.shape[0]
    if not state.v > 2 * d + 2:
        raise DofError(f"extent mean requires v > 2d+2={2 * d + 2}, got {state.v}")
    return ExtendedObjectEstimate(state.m, state.V / (state.v - 2 * d - 2))


def gwd(truth, estimate) -> float:
    """Squared position error plus the Wasserstein extent term.

    ``truth`` and ``estimate`` are ``(position, extent)`` pairs or
    ``ExtendedObjectEstimate`` objects; only the first d kinematic entries
    are used as position.
    """
    p, X = _as_pair(truth)
    q, Y = _as_pair(estimate)
    d = X.shape[0]
    if Y.shape != (d, d):
        raise GIWError("extent dimensions differ")
    diff = p[:d] - q[:d]
    Xh = sqrtm_psd(X)
    cross = sqrtm_psd(Xh @ Y @ Xh)
    val = float(diff @ diff + np.trace(X + Y - 2.0 * cross))
    return max(val, 0.0)


def _as_pair(obj):
    if isinstance(obj, ExtendedObjectEstimate):
        return obj.x_hat, obj.X_hat
    pos, ext = obj
    return np.asarray(pos, dtype=float).ravel(), check_pd(ext, "extent")


def aggregate_median(values, valid=None) -> np.ndarray:
    """Median over the leading (run) axis.

    ``values`` has shape ``(runs, ...)``; ``valid`` optionally masks runs,
    with the same leading shape broadcastable against ``values``.  Even
    counts average the two central order statistics.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values.shape[0] == 0:
        raise GIWError("cannot aggregate an empty result table")
    if valid is None:
        return np.median(values, axis=0)
    mask = np.broadcast_to(np.asarray(valid, dtype=bool).reshape(
        np.shape(valid) + (1,) * (values.ndim - np.ndim(valid))), values.shape)
    if not mask.any(axis=0).all():
        raise GIWError("no valid runs for some entries")
    return np.nanmedian(np.where(mask, values, np.nan), axis=0)
