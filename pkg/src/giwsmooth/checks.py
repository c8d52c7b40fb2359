"""Self-checks of the closed-form identities against sampling and smoother oracles.

Every ``check_*`` function returns a list of ``CheckResult``; the CLI
``selftest`` command prints them as a table.  The batch smoother below is
an independent reference for the kinematic recursions: it conditions the
joint Gaussian of the whole trajectory on all measurements at once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import conditional as cond
from . import distributions as dist
from . import factorized as fact
from .models import fct_model

__all__ = [
    "CheckResult",
    "batch_smoother",
    "random_spd",
    "random_iw",
    "random_wishart",
    "random_gb2",
    "monte_carlo_expectations",
    "check_moment_matching",
    "check_proportionality",
    "check_integral_identities",
    "check_taylor",
    "check_rts_oracle",
    "check_no_information",
    "run_selftest",
]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def __post_init__(self):
        self.passed = bool(self.passed)


def random_spd(rng: np.random.Generator, d: int = 2, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((d, d))
    return scale * (A @ A.T + 0.5 * np.eye(d))


def random_iw(rng, d: int = 2, min_margin: float = 0.5) -> dist.InverseWishartDensity:
    return dist.InverseWishartDensity(2 * d + 2 + min_margin + 20 * rng.random(), random_spd(rng, d))


def random_wishart(rng, d: int = 2, min_margin: float = 0.5) -> dist.WishartDensity:
    return dist.WishartDensity(d + 1 + min_margin + 20 * rng.random(), random_spd(rng, d))


def random_gb2(rng, d: int = 2) -> dist.GB2Density:
    # Half-parameters so that both conversions' preconditions hold.
    a = 0.5 * (d + 1.5 + 20 * rng.random())
    b = 0.5 * (d + 1.5 + 20 * rng.random())
    return dist.GB2Density(a, b, random_spd(rng, d))


# -- batch (non-recursive) smoother ----------------------------------------------

def batch_smoother(m0, P0, F, Q, H, measurements, noise_covs):
    """Smoothed marginals of a linear-Gaussian model by joint conditioning.

    ``measurements[k]`` is a vector or ``None`` for a missed step; the
    prior N(m0, P0) applies to the state at step 0.
    """
    m0 = np.asarray(m0, dtype=float)
    nx, K = m0.size, len(measurements)
    # Joint mean and covariance of [x_0, ..., x_{K-1}].
    mean = np.zeros(K * nx)
    cov = np.zeros((K * nx, K * nx))
    Phi = [np.eye(nx)]
    for _ in range(1, K):
        Phi.append(F @ Phi[-1])
    for k in range(K):
        mean[k * nx:(k + 1) * nx] = Phi[k] @ m0
    for i in range(K):
        for j in range(K):
            lo = min(i, j)
            block = Phi[i] @ P0 @ Phi[j].T
            for t in range(1, lo + 1):
                block = block + Phi[i - t] @ Q @ Phi[j - t].T
            cov[i * nx:(i + 1) * nx, j * nx:(j + 1) * nx] = block
    rows, ys, Rs = [], [], []
    for k, y in enumerate(measurements):
        if y is None:
            continue
        C = np.zeros((H.shape[0], K * nx))
        C[:, k * nx:(k + 1) * nx] = H
        rows.append(C)
        ys.append(np.atleast_1d(y))
        Rs.append(np.atleast_2d(noise_covs[k]))
    if not rows:
        post_mean, post_cov = mean, cov
    else:
        C = np.vstack(rows)
        y = np.concatenate(ys)
        R = np.zeros((y.size, y.size))
        o = 0
        for Rk in Rs:
            R[o:o + Rk.shape[0], o:o + Rk.shape[0]] = Rk
            o += Rk.shape[0]
        S = C @ cov @ C.T + R
        gain = np.linalg.solve(S, C @ cov).T
        post_mean = mean + gain @ (y - C @ mean)
        post_cov = cov - gain @ S @ gain.T
    means = post_mean.reshape(K, nx)
    covs = np.array([post_cov[k * nx:(k + 1) * nx, k * nx:(k + 1) * nx] for k in range(K)])
    return means, 0.5 * (covs + np.swapaxes(covs, 1, 2))


def _random_stable(rng, n):
    F = np.eye(n) + 0.3 * rng.standard_normal((n, n)) / math.sqrt(n)
    return F


def conditional_rts_instance(rng, K: int = 8, s: int = 2, d: int = 2):
    """Random conditional system; returns ``(smoothed, oracle_means, oracle_covs)``."""
    F = _random_stable(rng, s)
    D = random_spd(rng, s, 0.2)
    H = rng.standard_normal((1, s)) + np.eye(1, s)
    trans = cond.ConditionalTransitionModel(F=F, D=D, n=50.0 + 100 * rng.random(), A=np.eye(d))
    meas = cond.ConditionalMeasurementModel(H)
    m0 = rng.standard_normal(s * d)
    P0 = random_spd(rng, s)
    prior = cond.ConditionalGIWState(m0, P0, 12.0, 6.0 * np.eye(d))
    Zs = []
    for k in range(K):
        nz = int(rng.integers(0, 6))
        Zs.append(rng.standard_normal((nz, d)) * 2 + k if nz else np.empty((0, d)))
    predicted, filtered = cond.run_filter(prior, Zs, trans, meas)
    smoothed = cond.smooth_trajectory(filtered, predicted, trans)
    # Each spatial coordinate is an independent s-dimensional Kalman problem.
    y = [Z.mean(axis=0) if len(Z) else None for Z in Zs]
    R = [np.array([[1.0 / len(Z)]]) if len(Z) else None for Z in Zs]
    means = np.zeros((K, s, d))
    for j in range(d):
        mj, covs = batch_smoother(
            m0.reshape(s, d)[:, j], P0, F, D, H,
            [None if yk is None else yk[j:j + 1] for yk in y], R,
        )
        means[:, :, j] = mj
    return smoothed, means.reshape(K, s * d), covs


def factorized_rts_instance(rng, K: int = 8, nx: int = 4, d: int = 2):
    F = _random_stable(rng, nx)
    Q = random_spd(rng, nx, 0.2)
    H = rng.standard_normal((d, nx))
    H[:, :d] += np.eye(d)
    trans = fact.FactorizedTransitionModel.linear(F, Q, n=50.0 + 100 * rng.random(), A=np.eye(d))
    meas = fact.FactorizedMeasurementModel(H)
    m0 = rng.standard_normal(nx)
    P0 = random_spd(rng, nx)
    prior = fact.FactorizedGIWState(m0, P0, 12.0, 6.0 * np.eye(d))
    Zs = []
    for k in range(K):
        nz = int(rng.integers(0, 6))
        Zs.append(rng.standard_normal((nz, d)) * 2 + k if nz else np.empty((0, d)))
    predicted, filtered = fact.run_filter(prior, Zs, trans, meas)
    smoothed = fact.smooth_trajectory(filtered, predicted, trans)
    # Measurement noise of the centroid is X_hat/|Z| with X_hat from the predicted extent.
    R = [p.V / (p.v - 2 * d - 2) / len(Z) if len(Z) else None for p, Z in zip(predicted, Zs)]
    y = [Z.mean(axis=0) if len(Z) else None for Z in Zs]
    means, covs = batch_smoother(m0, P0, F, Q, H, y, R)
    return smoothed, means, covs


# -- Monte Carlo reference for the Taylor expectations ------------------------------

def monte_carlo_expectations(mean_turn: float, var_turn: float, V, W, T: float, n: int, rng):
    """Sampled C1..C4 for the rotation M = R(T*omega), omega ~ N(mean, var)."""
    om = mean_turn + math.sqrt(var_turn) * rng.standard_normal(n)
    c, s = np.cos(T * om), np.sin(T * om)
    R = np.empty((n, 2, 2))
    R[:, 0, 0], R[:, 0, 1], R[:, 1, 0], R[:, 1, 1] = c, -s, s, c
    Rt = np.swapaxes(R, 1, 2)
    Vi, Wi = np.linalg.inv(V), np.linalg.inv(W)
    return {
        "C1": (R @ Vi @ Rt).mean(axis=0),
        "C2": (R @ V @ Rt).mean(axis=0),
        "C3": (Rt @ Wi @ R).mean(axis=0),
        "C4": (Rt @ W @ R).mean(axis=0),
    }


# -- checks ---------------------------------------------------------------------------

def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        out = fn(*a, **kw)
        dt = time.perf_counter() - t0
        for r in out:
            r.seconds = dt / len(out)
        return out
    wrapper.__name__ = fn.__name__
    return wrapper


@_timed
def check_moment_matching(n_sets: int = 1000, seed: int = 1):
    rng = np.random.default_rng(seed)
    worst = worst_rt = 0.0
    for _ in range(n_sets):
        d = int(rng.integers(1, 4))
        iw, wi, gb = random_iw(rng, d), random_wishart(rng, d), random_gb2(rng, d)
        pairs = [
            (iw, dist.approx_iw_as_wishart(iw)),
            (wi, dist.approx_wishart_as_iw(wi)),
            (gb, dist.approx_gb2_as_wishart(gb)),
            (gb, dist.approx_gb2_as_iw(gb)),
        ]
        for p, q in pairs:
            for a, b in zip(dist.moments(p), dist.moments(q)):
                worst = max(worst, np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a))))
        back = dist.approx_wishart_as_iw(dist.approx_iw_as_wishart(iw))
        worst_rt = max(worst_rt, abs(back.v - iw.v) / iw.v,
                       np.max(np.abs(back.V - iw.V)) / np.max(np.abs(iw.V)))
    return [
        CheckResult("moment matching (IW, W, GB2)", worst <= 1e-10, f"max rel. error {worst:.2e}"),
        CheckResult("IW->W->IW round trip", worst_rt <= 1e-12, f"max rel. error {worst_rt:.2e}"),
    ]


def _spread(values):
    values = np.asarray(values)
    return float(values.max() - values.min())


@_timed
def check_proportionality(n_sets: int = 100, n_points: int = 100, seed: int = 2):
    rng = np.random.default_rng(seed)
    worst = {"product": 0.0, "ratio": 0.0, "kernel swap": 0.0}
    for _ in range(n_sets):
        d = int(rng.integers(1, 4))
        p, q = random_iw(rng, d), random_iw(rng, d)
        prod = dist.iw_product(p, q)
        big = dist.InverseWishartDensity(p.v + q.v, p.V + q.V + random_spd(rng, d))
        ratio = dist.iw_ratio(big, q)
        n = 2 * d + 1 + 50 * rng.random()
        M = rng.standard_normal((d, d)) + 2 * np.eye(d)
        Y = random_spd(rng, d)
        swap = dist.wishart_iw_kernel_swap(Y, n, M)
        diffs = {"product": [], "ratio": [], "kernel swap": []}
        for _ in range(n_points):
            X = random_spd(rng, d)
            diffs["product"].append(p.log_pdf(X) + q.log_pdf(X) - prod.log_pdf(X))
            diffs["ratio"].append(big.log_pdf(X) - q.log_pdf(X) - ratio.log_pdf(X))
            wish = dist.WishartDensity(n, M @ X @ M.T / n)
            diffs["kernel swap"].append(wish.log_pdf(Y) - swap.log_pdf(X))
        for key, vals in diffs.items():
            worst[key] = max(worst[key], _spread(vals) / max(1.0, np.max(np.abs(vals))))
    return [
        CheckResult(f"proportionality: {key}", val <= 1e-8, f"max spread {val:.2e}")
        for key, val in worst.items()
    ]


@_timed
def check_integral_identities(n_samples: int = 100_000, seed: int = 3):
    rng = np.random.default_rng(seed)
    W = np.array([[2.0, 0.3], [0.3, 1.0]])
    out = []
    d = 2
    for label, v, w in (("W over IW scale", 6.0, 12.0), ("IW over W scale", 12.0, 6.0)):
        if label == "W over IW scale":
            gb = dist.integrate_wishart_iw(v, w, W)
            scales = dist.InverseWishartDensity(w, W).sample(rng, n_samples)
            X = dist._wishart_draws_batch_scale(rng, v, scales)
        else:
            gb = dist.integrate_iw_wishart(v, w, W)
            scales = dist.WishartDensity(w, W).sample(rng, n_samples)
            inv = dist._wishart_draws_batch_scale(rng, v - d - 1, np.linalg.inv(scales))
            X = np.linalg.inv(inv)
        emp = X.mean(axis=0)
        se = X.std(axis=0, ddof=1) / math.sqrt(n_samples)
        z = np.max(np.abs(emp - gb.mean()) / se)
        out.append(CheckResult(f"GB2 integral, {label}", z <= 3.0, f"max |z| {z:.2f}"))
    return out


@_timed
def check_taylor(n_samples: int = 1_000_000, seed: int = 4, tol: float = 0.01):
    rng = np.random.default_rng(seed)
    T = 1.0
    V = np.diag([4.0, 1.0])
    W = np.array([[3.0, 0.8], [0.8, 1.5]])
    model = fct_model(T).transition
    worst = 0.0
    for var in ((math.pi / 180) ** 2, (2 * math.pi / 180) ** 2):
        m = np.array([0.0, 0.0, 10.0, 0.0, 0.3])
        P = np.diag([1.0, 1.0, 0.5, 0.5, var])
        mc = monte_carlo_expectations(m[4], var, V, W, T, n_samples, rng)
        for target in ("C1", "C2", "C3", "C4"):
            approx = fact.taylor_expectation(m, P, V if target in ("C1", "C2") else W, model, target)
            worst = max(worst, np.max(np.abs(approx - mc[target]) / np.abs(mc[target])))
    return [CheckResult("Taylor vs sampling (CT, C1..C4)", worst <= tol, f"max rel. error {worst:.2e}")]


@_timed
def check_rts_oracle(n_systems: int = 100, seed: int = 5):
    rng = np.random.default_rng(seed)
    worst_c = worst_f = 0.0
    for _ in range(n_systems):
        sm, means, covs = conditional_rts_instance(rng)
        for k, st in enumerate(sm):
            worst_c = max(worst_c, np.max(np.abs(st.m - means[k])), np.max(np.abs(st.P - covs[k])))
        sm, means, covs = factorized_rts_instance(rng)
        for k, st in enumerate(sm):
            worst_f = max(worst_f, np.max(np.abs(st.m - means[k])), np.max(np.abs(st.P - covs[k])))
    return [
        CheckResult("RTS oracle: conditional", worst_c <= 1e-9, f"max abs. error {worst_c:.2e}"),
        CheckResult("RTS oracle: factorized", worst_f <= 1e-9, f"max abs. error {worst_f:.2e}"),
    ]


@_timed
def check_no_information(seed: int = 6):
    rng = np.random.default_rng(seed)
    d = 2
    worst = 0.0
    # Conditional model, infinite n.
    F = _random_stable(rng, 2)
    trans = cond.ConditionalTransitionModel(F=F, D=random_spd(rng, 2, 0.1), n=math.inf,
                                            A=rng.standard_normal((2, 2)) + 2 * np.eye(2))
    f = cond.ConditionalGIWState(rng.standard_normal(4), random_spd(rng, 2), 15.0, random_spd(rng, d))
    p = cond.predict(f, trans)
    s = cond.smooth_step(f, p, p, trans)
    worst = max(worst, _state_gap(s, f))
    # Factorized, both transform branches.
    for entry in (fact.FactorizedTransitionModel.linear(_random_stable(rng, 4), random_spd(rng, 4, 0.1)),
                  fct_model(1.0).transition):
        nx = 4 if entry.is_constant_M else 5
        mean = rng.standard_normal(nx)
        if nx == 5:
            mean[4] = 0.1
        P = random_spd(rng, nx, 0.1)
        P[-1, :] *= 0.01
        P[:, -1] *= 0.01
        f = fact.FactorizedGIWState(mean, P, 15.0, random_spd(rng, d))
        p = fact.predict(f, entry)
        s = fact.smooth_step(f, p, p, entry)
        worst = max(worst, _state_gap(s, f))
    return [CheckResult("no-information identity", bool(worst <= 1e-9), f"max abs. error {worst:.2e}")]


def _state_gap(a, b) -> float:
    return max(np.max(np.abs(a.m - b.m)), np.max(np.abs(a.P - b.P)),
               abs(a.v - b.v), np.max(np.abs(a.V - b.V)))


def run_selftest(level: str = "basic") -> list[CheckResult]:
    deep = level == "deep"
    results = []
    results += check_moment_matching()
    results += check_proportionality()
    results += check_integral_identities(1_000_000 if deep else 100_000)
    results += check_taylor(1_000_000 if deep else 200_000)
    results += check_rts_oracle()
    results += check_no_information()
    return results
