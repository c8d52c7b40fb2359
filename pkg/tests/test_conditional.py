import math

import numpy as np
import pytest

from giwsmooth import conditional as cond
from giwsmooth import distributions as dist
from giwsmooth._linalg import GIWError
from giwsmooth.checks import batch_smoother, conditional_rts_instance
from giwsmooth.models import ccv_model
from conftest import spd


def _state(rng, v=14.0):
    return cond.ConditionalGIWState(rng.standard_normal(4), spd(rng), v, spd(rng, 2, 3.0))


def _model(n=math.inf, A=None):
    e = ccv_model(1.0, 1.0)
    return cond.ConditionalTransitionModel(F=e.transition.F, D=e.transition.D, n=n, A=A)


def test_state_validation():
    with pytest.raises(GIWError):
        cond.ConditionalGIWState(np.zeros(3), np.eye(2), 10.0, np.eye(2))
    with pytest.raises(GIWError):
        cond.ConditionalGIWState(np.zeros(4), np.eye(3), 10.0, np.eye(2))
    with pytest.raises(GIWError):
        cond.ConditionalGIWState(np.zeros(4), np.eye(2), 3.0, np.eye(2))


def test_kinematic_covariance_is_kronecker(rng):
    s = _state(rng)
    X = s.V / (s.v - 6)
    np.testing.assert_allclose(s.kinematic_covariance(), np.kron(s.P, X))


def test_predict_kinematics_act_per_coordinate(rng):
    s = _state(rng)
    m = _model()
    p = cond.predict(s, m)
    np.testing.assert_allclose(p.m, np.kron(m.F, np.eye(2)) @ s.m)
    np.testing.assert_allclose(p.P, m.F @ s.P @ m.F.T + m.D)


def test_extent_prediction_infinite_n_is_pure_transform(rng):
    V = spd(rng)
    A = np.array([[1.0, 0.1], [0.0, 0.9]])
    v, Vp = cond.extent_prediction(12.0, V, math.inf, A)
    assert v == 12.0
    np.testing.assert_allclose(Vp, A @ V @ A.T)


def test_extent_prediction_matches_wishart_transition_moments(rng):
    # X ~ IW(v, V), X' | X ~ W(n, A X A^T / n): mean exact, inverse mean by sampling.
    V = np.array([[3.0, 0.5], [0.5, 1.0]])
    v, n = 12.0, 40.0
    A = np.array([[1.0, 0.2], [0.0, 1.1]])
    vp, Vp = cond.extent_prediction(v, V, n, A)
    pred = dist.InverseWishartDensity(vp, Vp)
    np.testing.assert_allclose(pred.mean(), A @ V @ A.T / (v - 6), rtol=1e-12)
    X = dist.InverseWishartDensity(v, V).sample(rng, 200_000)
    Y = dist._wishart_draws_batch_scale(rng, n, A @ X @ A.T / n)
    Yi = np.linalg.inv(Y)
    se = Yi.std(axis=0, ddof=1) / math.sqrt(len(Yi))
    assert np.all(np.abs(Yi.mean(axis=0) - pred.mean_inv()) <= 4 * se)


def test_update_bookkeeping(rng):
    s = _state(rng)
    Z = rng.standard_normal((7, 2)) + 3
    u = cond.update(s, Z, ccv_model().measurement)
    assert u.v == s.v + 7
    assert np.all(np.linalg.eigvalsh(u.V - s.V) >= -1e-12)
    assert np.all(np.linalg.eigvalsh(s.P - u.P) >= -1e-12)


def test_update_single_measurement_has_no_scatter(rng):
    s = _state(rng)
    z = np.array([[1.0, -2.0]])
    u = cond.update(s, z, ccv_model().measurement)
    H = np.array([[1.0, 0.0]])
    S = (H @ s.P @ H.T).item() + 1
    eps = z[0] - s.m[:2]
    np.testing.assert_allclose(u.V, s.V + np.outer(eps, eps) / S)


def test_update_rejects_empty_and_bad_shapes(rng):
    s = _state(rng)
    with pytest.raises(GIWError):
        cond.update(s, np.empty((0, 2)), ccv_model().measurement)
    with pytest.raises(GIWError):
        cond.update(s, np.ones((3, 3)), ccv_model().measurement)


def test_run_filter_passes_through_missed_detections(rng):
    e = ccv_model()
    prior = _state(rng)
    Zs = [rng.standard_normal((3, 2)), np.empty((0, 2)), rng.standard_normal((2, 2))]
    predicted, filtered = cond.run_filter(prior, Zs, e.transition, e.measurement)
    assert predicted[0] is prior
    assert filtered[1] is predicted[1]
    assert [f.v for f in filtered] == [prior.v + 3, predicted[1].v, predicted[2].v + 2]


@pytest.mark.parametrize("n", [math.inf, 60.0])
def test_no_information_identity(rng, n):
    A = np.array([[1.1, 0.2], [-0.1, 0.95]])
    m = _model(n, A)
    f = _state(rng)
    p = cond.predict(f, m)
    s = cond.smooth_step(f, p, p, m)
    np.testing.assert_allclose(s.m, f.m, atol=1e-12)
    np.testing.assert_allclose(s.P, f.P, atol=1e-12)
    if math.isinf(n):
        assert s.v == pytest.approx(f.v, abs=1e-12)
        np.testing.assert_allclose(s.V, f.V, atol=1e-12)


def test_smoothing_adds_information(rng):
    e = ccv_model()
    prior = _state(rng)
    Zs = [rng.standard_normal((5, 2)) + k for k in range(6)]
    predicted, filtered = cond.run_filter(prior, Zs, e.transition, e.measurement)
    smoothed = cond.smooth_trajectory(filtered, predicted, e.transition)
    last = smoothed[-1]
    np.testing.assert_array_equal(last.m, filtered[-1].m)
    for f, s in zip(filtered[:-1], smoothed[:-1]):
        assert s.v >= f.v
        assert np.trace(s.P) <= np.trace(f.P) + 1e-12


def test_rts_matches_batch_conditioning(rng):
    for _ in range(5):
        smoothed, means, covs = conditional_rts_instance(rng)
        for k, st in enumerate(smoothed):
            np.testing.assert_allclose(st.m, means[k], atol=1e-9)
            np.testing.assert_allclose(st.P, covs[k], atol=1e-9)


def test_table_variant_differs_only_in_reference(rng):
    e = ccv_model()
    prior = _state(rng)
    Zs = [rng.standard_normal((5, 2)) for _ in range(4)]
    predicted, filtered = cond.run_filter(prior, Zs, e.transition, e.measurement)
    a = cond.smooth_trajectory(filtered, predicted, e.transition, variant="derived")
    b = cond.smooth_trajectory(filtered, predicted, e.transition, variant="table")
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.m, y.m)
    with pytest.raises(ValueError):
        cond.smooth_trajectory(filtered, predicted, e.transition, variant="nope")


def test_extent_fallback_is_counted(rng):
    m = _model()
    f = _state(rng)
    p = cond.predict(f, m)
    # A smoothed dof just above 2d leaves v_{k|K} inside the rejection margin.
    s_next = cond.ConditionalGIWState(p.m, p.P, 4.0 + 1e-7, p.V)
    diag = cond.SmootherDiagnostics()
    out = cond.smooth_step(f, p, s_next, m, diagnostics=diag, k=3)
    assert diag.extent_fallbacks == 1 and diag.events == [("extent_fallbacks", 3)]
    np.testing.assert_array_equal(out.V, f.V)
    assert out.v == f.v


def test_singular_prediction_covariance_raises(rng):
    m = cond.ConditionalTransitionModel(F=np.zeros((2, 2)), D=np.zeros((2, 2)))
    f = _state(rng)
    p = cond.predict(f, m)
    with pytest.raises(GIWError):
        cond.smooth_step(f, p, p, m)


def test_batch_oracle_reduces_to_kalman_on_one_step(rng):
    # Sanity check of the oracle itself against the closed-form update.
    P0 = spd(rng, 2)
    H = np.array([[1.0, 0.5]])
    means, covs = batch_smoother(np.zeros(2), P0, np.eye(2), np.eye(2), H, [np.array([1.0])], [np.eye(1)])
    S = H @ P0 @ H.T + 1
    K = P0 @ H.T / S
    np.testing.assert_allclose(means[0], (K * 1.0).ravel())
    np.testing.assert_allclose(covs[0], P0 - K @ S @ K.T)
