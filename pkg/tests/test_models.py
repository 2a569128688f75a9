import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from rfsmta.models import (
    GaussianDensity,
    MotionModel,
    SensorModel,
    bayes_update_density,
    clutter_set_density,
    map_estimate,
    predict_density,
    single_likelihood,
)
from rfsmta.quadrature import Grid

from conftest import sensor_1d

UNIT = SensorModel([[1.0]], [[1.0]], 1.0, 0.0, [[-50.0, 50.0]])


def test_single_likelihood_at_mode_and_one_sigma():
    assert_allclose(single_likelihood([0.0], [0.0], UNIT), 1 / np.sqrt(2 * np.pi), rtol=1e-15)
    assert_allclose(single_likelihood([1.0], [0.0], UNIT), np.exp(-0.5) / np.sqrt(2 * np.pi), rtol=1e-15)


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-10, 10), r=st.floats(0.1, 4.0))
def test_single_likelihood_integrates_to_one_1d(x, r):
    s = SensorModel([[1.0]], [[r]], 1.0, 0.0, [[-50.0, 50.0]])
    g = Grid.covering([x], [np.sqrt(r)], nsigma=12, points=2001)
    assert abs(g.integrate(single_likelihood(g.nodes[:, None], [x], s)) - 1.0) < 1e-6


def test_single_likelihood_integrates_to_one_2d():
    R = np.array([[1.0, 0.3], [0.3, 0.5]])
    s = SensorModel(np.eye(2), R, 1.0, 0.0, [[-50, 50], [-50, 50]])
    x = np.array([0.4, -1.0])
    g1 = Grid(x[0] - 10, x[0] + 10, 401)
    g2 = Grid(x[1] - 10, x[1] + 10, 401)
    Z = np.stack(np.meshgrid(g1.nodes, g2.nodes, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = single_likelihood(Z, x, s).reshape(401, 401)
    assert abs(g1.integrate(g2.integrate(vals, axis=1)) - 1.0) < 1e-6


def test_predict_identity_and_additive_variance():
    d = GaussianDensity([1.0, 2.0], [[2.0, 0.1], [0.1, 1.0]])
    same = predict_density(d, MotionModel(np.eye(2), np.zeros((2, 2))))
    assert same == d
    p = predict_density(GaussianDensity([0.0], [[1.0]]), MotionModel([[1.0]], [[0.5]]))
    assert_allclose(p.mean, [0.0])
    assert_allclose(p.cov, [[1.5]])


def test_predict_matches_monte_carlo():
    rng = np.random.default_rng(0)
    mm = MotionModel.constant_velocity(1, 0.5, 0.7)
    prior = GaussianDensity([1.0, -0.5], [[1.0, 0.2], [0.2, 0.5]])
    N = 100_000
    x = rng.multivariate_normal(prior.mean, prior.cov, N) @ mm.F.T
    x += rng.multivariate_normal(np.zeros(2), mm.Q, N)
    p = predict_density(prior, mm)
    se = np.sqrt(np.diag(p.cov) / N)
    assert np.all(np.abs(x.mean(axis=0) - p.mean) < 3 * se)
    # variance of the sample covariance entries is about (P_ij^2 + P_ii P_jj) / N
    P = p.cov
    se_cov = np.sqrt((P**2 + np.outer(np.diag(P), np.diag(P))) / N)
    assert np.all(np.abs(np.cov(x.T) - P) < 3 * se_cov)


def test_update_equal_precision_fusion():
    post = bayes_update_density(GaussianDensity([0.0], [[1.0]]), [2.0], UNIT)
    assert_allclose(post.mean, [1.0], rtol=1e-15)
    assert_allclose(post.cov, [[0.5]], rtol=1e-15)


def test_update_uninformative_measurement_keeps_prior():
    s = SensorModel([[1.0]], [[1e12]], 1.0, 0.0, [[-50.0, 50.0]])
    prior = GaussianDensity([3.0], [[2.0]])
    post = bayes_update_density(prior, [40.0], s)
    assert_allclose(post.mean, prior.mean, rtol=1e-4)
    assert_allclose(post.cov, prior.cov, rtol=1e-4)


def test_update_exact_measurement_drives_mean_to_z():
    prior = predict_density(GaussianDensity([0.0], [[1.0]]), MotionModel([[1.0]], [[0.5]]))
    for r, tol in [(1e-4, 1e-3), (1e-8, 1e-7)]:
        s = SensorModel([[1.0]], [[r]], 1.0, 0.0, [[-50.0, 50.0]])
        assert abs(bayes_update_density(prior, [2.5], s).mean[0] - 2.5) < tol


def test_update_matches_grid_posterior():
    prior = GaussianDensity([0.5], [[2.0]])
    s = sensor_1d(R=0.7)
    z = 1.7
    g = Grid(-15, 15, 6001)
    x = g.nodes[:, None]
    unnorm = single_likelihood([z], x, s) * prior.pdf(x)
    grid_post = unnorm / g.integrate(unnorm)
    post = bayes_update_density(prior, [z], s)
    assert np.max(np.abs(grid_post - post.pdf(x))) < 1e-6


def test_map_estimate_is_mean_and_grid_argmax():
    assert_allclose(map_estimate(GaussianDensity([0.0, 0.0], np.eye(2))), [0.0, 0.0])
    d = GaussianDensity([1.234], [[0.3]])
    assert_allclose(map_estimate(d), d.mean)
    g = Grid(-5, 5, 1001)
    assert abs(g.nodes[np.argmax(d.pdf(g.nodes[:, None]))] - 1.234) <= g.spacing


def test_clutter_set_density_values():
    s = SensorModel([[1.0]], [[1.0]], 1.0, 2.0, [[-10.0, 10.0]])
    assert_allclose(clutter_set_density(np.zeros((0, 1)), s), np.exp(-2.0), rtol=1e-15)
    s0 = SensorModel([[1.0]], [[1.0]], 1.0, 0.0, [[-10.0, 10.0]])
    assert clutter_set_density(np.zeros((0, 1)), s0) == 1.0
    s3 = SensorModel([[1.0]], [[1.0]], 1.0, 3.0, [[0.0, 10.0]])
    assert_allclose(clutter_set_density([[1.0], [7.5]], s3), np.exp(-3.0) * 0.3**2, rtol=1e-14)


def test_clutter_outside_region_has_zero_density():
    s = SensorModel([[1.0]], [[1.0]], 1.0, 3.0, [[0.0, 10.0]])
    assert clutter_set_density([[11.0]], s) == 0.0


@pytest.mark.parametrize("bad", [
    dict(p_D=1.5), dict(clutter_rate=-1.0), dict(R=-1.0), dict(region=(1.0, 1.0)),
])
def test_sensor_model_rejects_invalid_parameters(bad):
    with pytest.raises(ValueError):
        sensor_1d(**bad)


def test_gaussian_density_rejects_asymmetric_or_indefinite_covariance():
    with pytest.raises(ValueError):
        GaussianDensity([0.0, 0.0], [[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ValueError):
        GaussianDensity([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_motion_model_rejects_bad_survival_probability():
    with pytest.raises(ValueError):
        MotionModel([[1.0]], [[0.1]], p_S=1.2)
