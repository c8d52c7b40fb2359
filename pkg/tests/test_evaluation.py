import numpy as np
import pytest

from giwsmooth import distributions as dist
from giwsmooth._linalg import DofError, GIWError
from giwsmooth.conditional import ConditionalGIWState
from giwsmooth.evaluation import ExtendedObjectEstimate, aggregate_median, expected_state, gwd
from conftest import spd


def test_gwd_identical_is_zero(rng):
    X = spd(rng)
    assert gwd((np.ones(2), X), (np.ones(2), X)) == pytest.approx(0.0, abs=1e-12)


def test_gwd_commuting_extents_closed_form():
    X, Y = np.diag([4.0, 1.0]), np.diag([1.0, 9.0])
    # tr((sqrt X - sqrt Y)^2) = (2-1)^2 + (1-3)^2
    assert gwd((np.zeros(2), X), (np.array([3.0, 4.0]), Y)) == pytest.approx(25.0 + 5.0)


def test_gwd_uses_position_only(rng):
    X = spd(rng)
    a = ExtendedObjectEstimate(np.array([1.0, 2.0, 50.0, -3.0]), X)
    b = ExtendedObjectEstimate(np.array([1.0, 2.0, 0.0, 0.0, 1.0]), X)
    assert gwd(a, b) == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_array_equal(a.position, [1.0, 2.0])


def test_gwd_symmetric(rng):
    a = (rng.standard_normal(2), spd(rng))
    b = (rng.standard_normal(2), spd(rng))
    assert gwd(a, b) == pytest.approx(gwd(b, a), rel=1e-10)


def test_gwd_dimension_mismatch():
    with pytest.raises(GIWError):
        gwd((np.zeros(2), np.eye(2)), (np.zeros(3), np.eye(3)))


def test_expected_state(rng):
    V = spd(rng)
    s = ConditionalGIWState(np.arange(4.0), np.eye(2), 10.0, V)
    e = expected_state(s)
    np.testing.assert_allclose(e.X_hat, V / 4)
    np.testing.assert_array_equal(e.x_hat, np.arange(4.0))
    with pytest.raises(DofError):
        expected_state(ConditionalGIWState(np.zeros(4), np.eye(2), 5.5, V))


def test_expected_state_invariant_under_round_trip(rng):
    s = ConditionalGIWState(np.zeros(4), np.eye(2), 11.0, spd(rng))
    back = dist.approx_wishart_as_iw(dist.approx_iw_as_wishart(dist.InverseWishartDensity(s.v, s.V)))
    t = ConditionalGIWState(s.m, s.P, back.v, back.V)
    np.testing.assert_allclose(expected_state(t).X_hat, expected_state(s).X_hat, rtol=1e-12)


def test_aggregate_median_even_count_averages():
    vals = np.array([[1.0], [4.0], [2.0], [10.0]])
    assert aggregate_median(vals)[0] == 3.0


def test_aggregate_median_mask():
    vals = np.array([[1.0, 5.0], [3.0, 7.0], [100.0, 9.0]])
    np.testing.assert_array_equal(aggregate_median(vals, [True, True, False]), [2.0, 6.0])


def test_aggregate_median_empty():
    with pytest.raises(GIWError):
        aggregate_median(np.empty((0, 3)))
    with pytest.raises(GIWError):
        aggregate_median(np.ones((2, 3)), [False, False])
