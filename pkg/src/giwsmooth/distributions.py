"""Matrix-variate densities used by the random matrix model.

Parametrizations (d is the matrix dimension):

``WishartDensity(w, W)``
    p(X) = |X|^{(w-d-1)/2} etr(-W^{-1}X/2) / (2^{wd/2} |W|^{w/2} Gamma_d(w/2)),
    w >= d.  E[X] = wW, E[X^{-1}] = W^{-1}/(w-d-1).

``InverseWishartDensity(v, V)``
    p(X) = 2^{-(v-d-1)d/2} |V|^{(v-d-1)/2} |X|^{-v/2} etr(-V X^{-1}/2) / Gamma_d((v-d-1)/2),
    v > 2d.  E[X] = V/(v-2d-2), E[X^{-1}] = (v-d-1) V^{-1}.  With this
    convention X^{-1} ~ W(v-d-1, V^{-1}).

``GB2Density(a, b, Omega, 0)``
    Generalized matrix-variate beta type II with Psi = 0,
    p(X) = |X|^{a-(d+1)/2} |Omega|^b |X+Omega|^{-(a+b)} / B_d(a, b).
    E[X] = a Omega/(b-(d+1)/2), E[X^{-1}] = b Omega^{-1}/(a-(d+1)/2).

The product, ratio and integral identities below hold as written for these
conventions.  Degrees of freedom are real scalars throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import multigammaln

from ._linalg import (
    DofError,
    GIWError,
    NotPositiveDefiniteError,
    check_pd,
    check_psd,
    is_pd,
    logdet_pd,
    symmetrize,
)

__all__ = [
    "GaussianDensity",
    "WishartDensity",
    "InverseWishartDensity",
    "GB2Density",
    "log_pdf",
    "moments",
    "sample",
    "iw_product",
    "iw_ratio",
    "wishart_iw_kernel_swap",
    "kernel_swap_log_constant",
    "integrate_wishart_iw",
    "integrate_iw_wishart",
    "approx_iw_as_wishart",
    "approx_wishart_as_iw",
    "approx_gb2_as_wishart",
    "approx_gb2_as_iw",
]


def _check_support(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != (d, d):
        raise GIWError(f"argument must be {d}x{d}, got {X.shape}")
    X = symmetrize(X)
    if not is_pd(X):
        raise NotPositiveDefiniteError("argument is outside the SPD support")
    return X


@dataclass(frozen=True)
class GaussianDensity:
    m: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape != (m.size, m.size):
            raise GIWError(f"covariance shape {P.shape} does not match mean length {m.size}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "P", check_psd(P, "covariance"))

    @property
    def dim(self) -> int:
        return self.m.size

    def log_pdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != self.m.shape:
            raise GIWError(f"argument must have length {self.m.size}")
        try:
            L = np.linalg.cholesky(self.P)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("log-pdf of a singular Gaussian") from exc
        r = np.linalg.solve(L, x - self.m)
        return float(-0.5 * r @ r - np.log(np.diag(L)).sum() - 0.5 * self.dim * np.log(2 * np.pi))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        n = 1 if size is None else size
        w, U = np.linalg.eigh(self.P)
        root = U * np.sqrt(np.clip(w, 0.0, None))
        x = self.m + rng.standard_normal((n, self.dim)) @ root.T
        return x[0] if size is None else x


@dataclass(frozen=True)
class WishartDensity:
    w: float
    W: np.ndarray

    def __post_init__(self):
        W = check_pd(self.W, "Wishart scale")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "w", float(self.w))
        if not self.w >= W.shape[0]:
            raise DofError(f"Wishart dof must satisfy w >= d={W.shape[0]}, got {self.w}")

    @property
    def d(self) -> int:
        return self.W.shape[0]

    def log_pdf(self, X) -> float:
        d, w = self.d, self.w
        X = _check_support(X, d)
        return (
            0.5 * (w - d - 1) * logdet_pd(X)
            - 0.5 * np.trace(np.linalg.solve(self.W, X))
            - 0.5 * w * d * np.log(2.0)
            - 0.5 * w * logdet_pd(self.W)
            - multigammaln(0.5 * w, d)
        )

    def mean(self) -> np.ndarray:
        return self.w * self.W

    def mean_inv(self) -> np.ndarray:
        d = self.d
        if not self.w > d + 1:
            raise DofError(f"E[X^-1] of a Wishart requires w > d+1={d + 1}, got {self.w}")
        return np.linalg.inv(self.W) / (self.w - d - 1)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return _wishart_draws(rng, self.w, self.W, size)


@dataclass(frozen=True)
class InverseWishartDensity:
    v: float
    V: np.ndarray

    def __post_init__(self):
        V = check_pd(self.V, "inverse Wishart scale")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "v", float(self.v))
        if not self.v > 2 * V.shape[0]:
            raise DofError(f"inverse Wishart dof must satisfy v > 2d={2 * V.shape[0]}, got {self.v}")

    @property
    def d(self) -> int:
        return self.V.shape[0]

    def log_pdf(self, X) -> float:
        d, v = self.d, self.v
        X = _check_support(X, d)
        nu = v - d - 1
        return (
            0.5 * nu * logdet_pd(self.V)
            - 0.5 * nu * d * np.log(2.0)
            - multigammaln(0.5 * nu, d)
            - 0.5 * v * logdet_pd(X)
            - 0.5 * np.trace(np.linalg.solve(X, self.V))
        )

    def mean(self) -> np.ndarray:
        d = self.d
        if not self.v > 2 * d + 2:
            raise DofError(f"E[X] of an inverse Wishart requires v > 2d+2={2 * d + 2}, got {self.v}")
        return self.V / (self.v - 2 * d - 2)

    def mean_inv(self) -> np.ndarray:
        return (self.v - self.d - 1) * np.linalg.inv(self.V)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        draws = _wishart_draws(rng, self.v - self.d - 1, np.linalg.inv(self.V), size)
        return symmetrize(np.linalg.inv(draws)) if size is None else _sym_batch(np.linalg.inv(draws))


@dataclass(frozen=True)
class GB2Density:
    """Generalized matrix-variate beta type II; only ``Psi = 0`` is supported."""

    a: float
    b: float
    Omega: np.ndarray
    Psi: np.ndarray | None = field(default=None)

    def __post_init__(self):
        Omega = check_pd(self.Omega, "GB2 Omega")
        d = Omega.shape[0]
        Psi = np.zeros((d, d)) if self.Psi is None else symmetrize(self.Psi)
        if np.any(Psi != 0.0):
            raise NotImplementedError("GB2 densities with Psi != 0 are not supported")
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "Psi", Psi)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not (self.a > 0.5 * (d - 1) and self.b > 0.5 * (d - 1)):
            raise DofError(f"GB2 requires a, b > (d-1)/2={0.5 * (d - 1)}, got a={self.a}, b={self.b}")

    @property
    def d(self) -> int:
        return self.Omega.shape[0]

    def log_pdf(self, X) -> float:
        d, a, b = self.d, self.a, self.b
        X = _check_support(X, d)
        log_beta = multigammaln(a, d) + multigammaln(b, d) - multigammaln(a + b, d)
        return (
            (a - 0.5 * (d + 1)) * logdet_pd(X)
            + b * logdet_pd(self.Omega)
            - (a + b) * logdet_pd(X + self.Omega)
            - log_beta
        )

    def mean(self) -> np.ndarray:
        d = self.d
        if not self.b > 0.5 * (d + 1):
            raise DofError(f"E[X] of a GB2 requires b > (d+1)/2={0.5 * (d + 1)}, got {self.b}")
        return self.a * self.Omega / (self.b - 0.5 * (d + 1))

    def mean_inv(self) -> np.ndarray:
        d = self.d
        if not self.a > 0.5 * (d + 1):
            raise DofError(f"E[X^-1] of a GB2 requires a > (d+1)/2={0.5 * (d + 1)}, got {self.a}")
        return self.b * np.linalg.inv(self.Omega) / (self.a - 0.5 * (d + 1))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        # Compositional draw: V ~ IW(2b+d+1, Omega), X | V ~ W(2a, V).
        n = 1 if size is None else size
        d = self.d
        scales = InverseWishartDensity(2 * self.b + d + 1, self.Omega).sample(rng, n)
        draws = _wishart_draws_batch_scale(rng, 2 * self.a, scales)
        return draws[0] if size is None else draws


def _sym_batch(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def _bartlett(rng: np.random.Generator, w: float, d: int, n: int) -> np.ndarray:
    # Lower-triangular Bartlett factor: sqrt(chi2(w - i)) diagonal, N(0,1) below.
    # chi2 with real dof is drawn as 2*Gamma((w-i)/2), so non-integer w is fine.
    B = np.zeros((n, d, d))
    idx = np.arange(d)
    B[:, idx, idx] = np.sqrt(2.0 * rng.standard_gamma(0.5 * (w - idx), size=(n, d)))
    rows, cols = np.tril_indices(d, -1)
    B[:, rows, cols] = rng.standard_normal((n, rows.size))
    return B


def _wishart_draws(rng, w: float, W: np.ndarray, size: int | None) -> np.ndarray:
    n = 1 if size is None else size
    d = W.shape[0]
    L = np.linalg.cholesky(W)
    LB = L @ _bartlett(rng, w, d, n)
    X = _sym_batch(LB @ np.swapaxes(LB, -1, -2))
    return X[0] if size is None else X


def _wishart_draws_batch_scale(rng, w: float, scales: np.ndarray) -> np.ndarray:
    n, d, _ = scales.shape
    L = np.linalg.cholesky(scales)
    LB = L @ _bartlett(rng, w, d, n)
    return _sym_batch(LB @ np.swapaxes(LB, -1, -2))


# -- generic entry points ---------------------------------------------------

def log_pdf(density, X) -> float:
    return density.log_pdf(X)


def moments(density) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(E[X], E[X^-1])``; raises ``DofError`` if either does not exist."""
    return density.mean(), density.mean_inv()


def sample(density, rng: np.random.Generator, size: int | None = None):
    return density.sample(rng, size)


# -- product / ratio / integral identities ------------------------------------

def iw_product(p: InverseWishartDensity, q: InverseWishartDensity) -> InverseWishartDensity:
    """IW(X; a, A) IW(X; b, B) is proportional to IW(X; a+b, A+B)."""
    if p.d != q.d:
        raise GIWError(f"dimension mismatch: {p.d} vs {q.d}")
    return InverseWishartDensity(p.v + q.v, p.V + q.V)


def iw_ratio(p: InverseWishartDensity, q: InverseWishartDensity) -> InverseWishartDensity:
    """IW(X; a, A) / IW(X; b, B) is proportional to IW(X; a-b, A-B)."""
    if p.d != q.d:
        raise GIWError(f"dimension mismatch: {p.d} vs {q.d}")
    d = p.d
    if not p.v - q.v > 2 * d:
        raise DofError(f"ratio dof a-b={p.v - q.v} must exceed 2d={2 * d}")
    diff = p.V - q.V
    if not is_pd(diff):
        raise NotPositiveDefiniteError("ratio scale A-B is not positive definite")
    return InverseWishartDensity(p.v - q.v, diff)


def _check_invertible(M: np.ndarray, name: str = "M") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise GIWError(f"{name} must be square")
    if not np.isfinite(np.linalg.cond(M)) or np.linalg.cond(M) > 1e14:
        raise GIWError(f"{name} is singular")
    return M


def wishart_iw_kernel_swap(Y, n: float, M=None) -> InverseWishartDensity:
    """View W(Y; n, M X M^T / n) as a density in X.

    The Wishart density is proportional, as a function of X, to
    IW(X; n, n M^{-1} Y M^{-T}).  Requires ``n > 2d`` so that the result is a
    proper inverse Wishart; ``kernel_swap_log_constant`` gives the constant
    of proportionality for any ``n > d - 1``.
    """
    Y = check_pd(Y, "Y")
    d = Y.shape[0]
    M = np.eye(d) if M is None else _check_invertible(M)
    Minv = np.linalg.inv(M)
    return InverseWishartDensity(n, n * Minv @ Y @ Minv.T)


def kernel_swap_log_constant(Y, n: float, M=None) -> float:
    """log W(Y; n, MXM^T/n) minus the unnormalized IW(X; n, nM^{-1}YM^{-T}) kernel.

    The kernel is ``|X|^{-n/2} etr(-S X^{-1}/2)``; the returned value does not
    depend on X.
    """
    Y = check_pd(Y, "Y")
    d = Y.shape[0]
    M = np.eye(d) if M is None else _check_invertible(M)
    if not n > d - 1:
        raise DofError(f"n must exceed d-1={d - 1}, got {n}")
    _, logdet_M = np.linalg.slogdet(M)
    return float(
        0.5 * (n - d - 1) * logdet_pd(Y)
        - 0.5 * n * d * np.log(2.0)
        - n * logdet_M
        + 0.5 * n * d * np.log(n)
        - multigammaln(0.5 * n, d)
    )


def integrate_wishart_iw(v: float, w: float, W) -> GB2Density:
    """Integral over V of W(X; v, V) IW(V; w, W): GB2(X; v/2, (w-d-1)/2, W, 0)."""
    W = check_pd(W, "W")
    d = W.shape[0]
    if not v >= d:
        raise DofError(f"Wishart dof v must satisfy v >= d={d}, got {v}")
    if not w > 2 * d:
        raise DofError(f"inverse Wishart dof w must satisfy w > 2d={2 * d}, got {w}")
    return GB2Density(0.5 * v, 0.5 * (w - d - 1), W)


def integrate_iw_wishart(v: float, w: float, W) -> GB2Density:
    """Integral over V of IW(X; v, V) W(V; w, W): GB2(X; w/2, (v-d-1)/2, W, 0)."""
    W = check_pd(W, "W")
    d = W.shape[0]
    if not v > 2 * d:
        raise DofError(f"inverse Wishart dof v must satisfy v > 2d={2 * d}, got {v}")
    if not w >= d:
        raise DofError(f"Wishart dof w must satisfy w >= d={d}, got {w}")
    return GB2Density(0.5 * w, 0.5 * (v - d - 1), W)


# -- moment-matching conversions ------------------------------------------------

def approx_iw_as_wishart(p: InverseWishartDensity) -> WishartDensity:
    d, v = p.d, p.v
    if not v > 2 * d + 2:
        raise DofError(f"requires v > 2d+2={2 * d + 2}, got {v}")
    return WishartDensity(v - d - 1, p.V / ((v - 2 * d - 2) * (v - d - 1)))


def approx_wishart_as_iw(p: WishartDensity) -> InverseWishartDensity:
    d, w = p.d, p.w
    if not w > d + 1:
        raise DofError(f"requires w > d+1={d + 1}, got {w}")
    return InverseWishartDensity(w + d + 1, p.W * w * (w - d - 1))


def _gb2_doubled_params(p: GB2Density) -> tuple[float, float]:
    # The conversions are stated for GB2(a/2, b/2, A, 0).
    return 2.0 * p.a, 2.0 * p.b


def approx_gb2_as_wishart(p: GB2Density) -> WishartDensity:
    """Moment-matched Wishart for GB2(a/2, b/2, A, 0); ``p.a``, ``p.b`` hold a/2, b/2."""
    d = p.d
    a, b = _gb2_doubled_params(p)
    if not b > d + 1:
        raise DofError(f"requires b > d+1={d + 1} (b = 2*GB2.b = {b})")
    if not a + b > d + 1:
        raise DofError(f"requires a+b > d+1={d + 1}, got {a + b}")
    c = a + b - d - 1
    return WishartDensity(a * b / c, c * p.Omega / (b * (b - d - 1)))


def approx_gb2_as_iw(p: GB2Density) -> InverseWishartDensity:
    """Moment-matched inverse Wishart for GB2(a/2, b/2, A, 0)."""
    d = p.d
    a, b = _gb2_doubled_params(p)
    if not a > d + 1:
        raise DofError(f"requires a > d+1={d + 1} (a = 2*GB2.a = {a})")
    if not a + b > d + 1:
        raise DofError(f"requires a+b > d+1={d + 1}, got {a + b}")
    c = a + b - d - 1
    return InverseWishartDensity(a * b / c + d + 1, a * (a - d - 1) * p.Omega / c)
