import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.stats import poisson

from rfsmta.association import TrackSet, count_mtas, enumerate_mtas, total_association_log_likelihood
from rfsmta.glmb_filter import estimate_states, initial_state, update
from rfsmta.labeled import GlmbComponent, GlmbDistribution
from rfsmta.metrics import OspaParams, ospa
from rfsmta.models import GaussianDensity, clutter_set_density, single_likelihood
from rfsmta.quadrature import Grid
from rfsmta.rfs import (
    MeasurementSet,
    MultitargetDensity,
    StateSet,
    clutter_set_integral,
    independent_prior,
    likelihood_set_integral,
    likelihood_set_integral_tensor,
    multitarget_bayes_risk,
    multitarget_likelihood,
    multitarget_likelihood_partition_oracle,
    multitarget_posterior,
    normalized_association_set_integral,
    partition_terms,
    set_integral,
    verify_mta_rfs_identity,
)
from rfsmta.sim import generate_measurements
from rfsmta.labeled import LabeledStateSet

from conftest import random_scan, random_tracks, sensor_1d


def random_states(rng, n):
    return rng.uniform(-8, 8, size=(n, 1))


def test_state_set_is_canonical_and_rejects_duplicates():
    a = StateSet([[2.0], [1.0], [3.0]])
    b = StateSet([[3.0], [2.0], [1.0]])
    assert a == b
    assert_allclose(a.points[:, 0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        StateSet([[1.0], [1.0]])
    assert len(MeasurementSet((), dim=2)) == 0


def test_likelihood_of_empty_target_set_is_clutter_density():
    s = sensor_1d(clutter_rate=1.5)
    Z = [[0.3], [-4.0], [12.0]]
    assert_allclose(multitarget_likelihood(Z, np.zeros((0, 1)), s), clutter_set_density(Z, s), rtol=1e-14)


def test_single_clean_target_gives_single_likelihood():
    s = sensor_1d(p_D=1.0, clutter_rate=0.0)
    assert_allclose(multitarget_likelihood([[1.1]], [[0.4]], s), single_likelihood([1.1], [0.4], s), rtol=1e-14)


def test_partition_oracle_small_cases():
    s = sensor_1d()
    Z = np.array([[0.5], [2.0]])
    terms = list(partition_terms(Z, np.zeros((0, 1)), s))
    assert len(terms) == 1 and terms[0][0] == (0, 0)
    assert_allclose(terms[0][1], clutter_set_density(Z, s), rtol=1e-14)
    # n = m = 1: miss (cell 0) and detect (cell 1)
    X = [[0.2]]
    terms = dict(partition_terms([[0.5]], X, s))
    kappa = s.clutter_rate / 40
    assert_allclose(terms[(0,)], np.exp(-1) * kappa * 0.1, rtol=1e-14)
    assert_allclose(terms[(1,)], np.exp(-1) * 0.9 * single_likelihood([0.5], [0.2], s), rtol=1e-14)
    # nonzero partitions correspond one-to-one with MTAs
    nonzero = [c for c, v in partition_terms(Z, [[0.0], [1.0]], s) if v != 0.0]
    assert len(nonzero) == count_mtas(2, 2) == 7


@pytest.mark.parametrize("p_D", [0.9, 1.0])
def test_mta_sum_equals_partition_sum(p_D):
    rng = np.random.default_rng(int(p_D * 10))
    for n, m in itertools.product(range(4), range(4)):
        for _ in range(3):
            s = sensor_1d(p_D=p_D, clutter_rate=rng.choice([0.0, 0.5, 1.0]))
            X = random_states(rng, n)
            Z = random_scan(rng, TrackSet(tuple(GaussianDensity(x, [[1.0]]) for x in X)), m)
            a = multitarget_likelihood(Z, X, s)
            b = multitarget_likelihood_partition_oracle(Z, X, s)
            assert a == b == 0.0 or abs(a - b) <= 1e-10 * max(abs(a), abs(b))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 3), m=st.integers(0, 3))
def test_likelihood_is_invariant_to_element_order(seed, n, m):
    rng = np.random.default_rng(seed)
    s = sensor_1d()
    X = random_states(rng, n)
    Z = rng.uniform(-10, 10, size=(m, 1))
    ref = multitarget_likelihood(Z, X, s)
    for _ in range(5):
        v = multitarget_likelihood(Z[rng.permutation(m)], X[rng.permutation(n)], s)
        assert v == ref or abs(v - ref) <= 1e-12 * abs(ref)


def test_point_mass_tracks_recover_multitarget_likelihood():
    rng = np.random.default_rng(3)
    s = sensor_1d()
    X = random_states(rng, 2)
    Z = random_scan(rng, TrackSet(tuple(GaussianDensity(x, [[1.0]]) for x in X)), 3)
    target = multitarget_likelihood(Z, X, s)
    errors = []
    for eps in (1e-1, 1e-3, 1e-5, 1e-8):
        ts = TrackSet(tuple(GaussianDensity(x, [[eps]]) for x in X))
        errors.append(abs(np.exp(total_association_log_likelihood(Z, ts, s)) - target) / target)
    assert all(a > b for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 1e-7


def test_independent_prior_values():
    ts = TrackSet((GaussianDensity([0.0], [[1.0]]), GaussianDensity([2.0], [[0.5]])))
    f0 = independent_prior(ts)
    assert f0([[0.0]]) == 0.0
    assert f0([[0.0], [1.0], [2.0]]) == 0.0
    one = independent_prior(TrackSet(ts.tracks[:1]))
    assert_allclose(one([[0.3]]), ts[0].pdf([0.3])[0], rtol=1e-14)
    x = 0.7
    # both permutations coincide when the two elements are equal
    Xb = np.array([[[x], [x]]])
    assert_allclose(np.exp(f0.log_batch(Xb)[0]), 2 * ts[0].pdf([x])[0] * ts[1].pdf([x])[0], rtol=1e-14)


def test_set_integrals_of_simple_densities():
    grid = Grid(-15, 15, 400)
    empty_only = MultitargetDensity(lambda Xb: np.where(Xb.shape[1] == 0, 0.0, -np.inf) * np.ones(len(Xb)), 2)
    assert set_integral(empty_only, grid) == 1.0
    ts = TrackSet((GaussianDensity([0.0], [[1.0]]), GaussianDensity([2.0], [[0.5]])))
    assert abs(set_integral(independent_prior(TrackSet(ts.tracks[:1])), grid) - 1.0) < 1e-6
    assert abs(set_integral(independent_prior(ts), grid) - 1.0) < 1e-5


def test_posterior_properties():
    s = sensor_1d()
    grid = Grid(-15, 15, 300)
    Z = [[0.4], [2.5]]
    no_targets = MultitargetDensity(lambda Xb: np.where(Xb.shape[1] == 0, 0.0, -np.inf) * np.ones(len(Xb)), 2)
    post = multitarget_posterior(Z, no_targets, s, grid)
    assert_allclose(post(np.zeros((0, 1))), 1.0, rtol=1e-14)
    ts = TrackSet((GaussianDensity([0.0], [[1.0]]), GaussianDensity([2.0], [[0.5]])))
    prior = independent_prior(ts)
    post = multitarget_posterior(Z, prior, s, grid)
    assert abs(set_integral(post, grid) - 1.0) < 1e-5
    A, B = [[0.1], [2.2]], [[-0.5], [1.0]]
    ratio = post(A) / post(B)
    expected = multitarget_likelihood(Z, A, s) * prior(A) / (multitarget_likelihood(Z, B, s) * prior(B))
    assert_allclose(ratio, expected, rtol=1e-12)


def test_identity_small_instances():
    s = sensor_1d()
    Z = np.array([[0.5], [3.0]])
    r = verify_mta_rfs_identity(Z, TrackSet(()), s)
    assert_allclose(r.lhs, clutter_set_density(Z, s), rtol=1e-14)
    assert r.relative_gap <= 1e-14
    ts1 = TrackSet((GaussianDensity([0.2], [[1.0]]),))
    assert verify_mta_rfs_identity([[0.5]], ts1, s).relative_gap <= 1e-4
    ts2 = TrackSet((GaussianDensity([0.0], [[1.0]]), GaussianDensity([3.0], [[0.7]])))
    assert verify_mta_rfs_identity(Z, ts2, sensor_1d(clutter_rate=1.0)).relative_gap <= 1e-4


def test_identity_quadrature_routes_agree():
    rng = np.random.default_rng(8)
    s = sensor_1d()
    ts = random_tracks(rng, 2)
    Z = random_scan(rng, ts, 3)
    a = verify_mta_rfs_identity(Z, ts, s, method="tensor")
    b = verify_mta_rfs_identity(Z, ts, s, method="separable")
    assert_allclose(a.lhs, b.lhs, rtol=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("n", [0, 1, 2])
def test_likelihood_integrates_to_one(lam, n):
    rng = np.random.default_rng(n + 10)
    s = sensor_1d(clutter_rate=lam)
    X = random_states(rng, n)
    assert abs(likelihood_set_integral(X, s) - 1.0) < 1e-4


def test_likelihood_integral_routes_agree():
    s = sensor_1d(clutter_rate=0.7)
    X = [[-3.0], [4.0]]
    assert_allclose(likelihood_set_integral(X, s, m_max=2), likelihood_set_integral_tensor(X, s, m_max=2), rtol=1e-9)


def test_normalized_association_likelihood_integrates_to_one():
    rng = np.random.default_rng(1)
    s = sensor_1d()
    for n, m in [(0, 0), (1, 1), (2, 1), (1, 2), (2, 2)]:
        ts = random_tracks(rng, n)
        for a in enumerate_mtas(n, m):
            assert abs(normalized_association_set_integral(a, ts, s, method="tensor") - 1.0) < 1e-5
            assert abs(normalized_association_set_integral(a, ts, s) - 1.0) < 1e-5


@pytest.mark.parametrize("lam", [0.1, 0.5, 1.0, 2.0])
def test_truncated_clutter_integral_is_the_poisson_cdf(lam):
    assert_allclose(clutter_set_integral(sensor_1d(clutter_rate=lam), m_max=8), poisson.cdf(8, lam), rtol=1e-12)


@pytest.mark.parametrize("lam", [
    0.1, 0.5,
    pytest.param(1.0, marks=pytest.mark.xfail(strict=True, reason="Poisson(1) mass above 8 is 1.1e-6")),
    pytest.param(2.0, marks=pytest.mark.xfail(strict=True, reason="Poisson(2) mass above 8 is 2.4e-4")),
])
def test_truncated_clutter_integral_within_1e6_of_one(lam):
    assert abs(clutter_set_integral(sensor_1d(clutter_rate=lam), m_max=8) - 1.0) <= 1e-6


def test_bayes_risk_trivial_cases():
    rng_x = lambda rng: (np.zeros((0, 1)), np.zeros((0, 1)))
    assert multitarget_bayes_risk(lambda Z: Z, lambda a, b: 0.0, rng_x, 10) == 0.0

    def clean(rng):
        X = rng.uniform(-5, 5, size=(2, 1))
        return X, X.copy()

    cost = lambda est, X: ospa(est, X, OspaParams(10.0, 1.0))
    assert multitarget_bayes_risk(lambda Z: Z, cost, clean, 50) == 0.0


def lmb_prior(tracks, r):
    comps = []
    for mask in itertools.product([0, 1], repeat=len(tracks)):
        w = np.prod([r if b else 1 - r for b in mask])
        labels = [(0, i + 1) for i, b in enumerate(mask) if b]
        comps.append(GlmbComponent(labels, w, tuple(t for t, b in zip(tracks, mask) if b)))
    return GlmbDistribution(tuple(comps))


def test_glmb_estimator_beats_empty_estimator_in_bayes_risk():
    s = sensor_1d(p_D=0.95, clutter_rate=1.0)
    tracks = (GaussianDensity([-4.0], [[1.0]]), GaussianDensity([4.0], [[1.0]]))
    prior = initial_state(lmb_prior(tracks, 0.8))

    def sampler(rng):
        X = [(rng.normal(t.mean, 1.0), (0, i + 1)) for i, t in enumerate(tracks) if rng.random() < 0.8]
        frame = generate_measurements(LabeledStateSet(X), s, rng)
        return LabeledStateSet(X).points, frame.measurements

    glmb = lambda Z: estimate_states(update(prior, Z, s, None)).points
    empty = lambda Z: np.zeros((0, 1))
    cost = lambda est, X: ospa(est, X, OspaParams(10.0, 1.0))
    r_glmb = multitarget_bayes_risk(glmb, cost, sampler, 500, seed=1)
    r_empty = multitarget_bayes_risk(empty, cost, sampler, 500, seed=1)
    assert r_empty >= r_glmb
