import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from rfsmta.labeled import (
    GlmbComponent,
    GlmbDistribution,
    Label,
    LabeledStateSet,
    expected_cardinality,
    glmb_cardinality,
    glmb_density,
    glmb_log_density_batch,
    glmb_phd,
    labeled_set_integral,
    labels_of,
    prune_glmb,
)
from rfsmta.models import GaussianDensity
from rfsmta.quadrature import Grid

G = lambda m, v=1.0: GaussianDensity([m], [[v]])
GRID = Grid(-20, 20, 400)


def three_component():
    return GlmbDistribution((
        GlmbComponent((), 0.2, ()),
        GlmbComponent([(0, 1)], 0.5, (G(0.0),)),
        GlmbComponent([(0, 1), (0, 2)], 0.3, (G(1.0, 0.5), G(4.0, 2.0))),
    ))


def test_label_extraction():
    assert labels_of(LabeledStateSet()) == frozenset()
    X = LabeledStateSet([([1.0], (0, 2)), ([0.0], (0, 1))])
    assert labels_of(X) == {Label(0, 1), Label(0, 2)}
    assert X.labels == (Label(0, 1), Label(0, 2))


def test_duplicate_labels_are_not_representable():
    with pytest.raises(ValueError):
        LabeledStateSet([([1.0], (0, 1)), ([2.0], (0, 1))])
    with pytest.raises(ValueError):
        GlmbComponent([(0, 1), (0, 1)], 1.0, (G(0.0), G(1.0)))


def test_density_of_empty_set_and_single_label():
    g = three_component()
    assert_allclose(glmb_density(LabeledStateSet(), g), 0.2)
    single = GlmbDistribution((GlmbComponent([(0, 1)], 1.0, (G(1.5, 0.4),)),))
    X = LabeledStateSet([([0.9], (0, 1))])
    assert_allclose(glmb_density(X, single), G(1.5, 0.4).pdf([0.9])[0], rtol=1e-14)


def test_density_vanishes_for_repeated_or_unknown_labels():
    g = three_component()
    Xb = np.array([[[0.0], [1.0]]])
    assert glmb_log_density_batch([(0, 1), (0, 1)], Xb, g)[0] == -np.inf
    assert glmb_density(LabeledStateSet([([0.0], (9, 9))]), g) == 0.0


def test_labeled_set_integral_is_one():
    assert abs(labeled_set_integral(three_component(), GRID) - 1.0) < 1e-5
    assert abs(labeled_set_integral(three_component(), GRID, method="tensor") - 1.0) < 1e-5


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 5))
def test_random_glmb_integrates_to_one(seed, k):
    rng = np.random.default_rng(seed)
    universe = [(0, 1), (0, 2), (1, 1)]
    comps = []
    for _ in range(k):
        n = rng.integers(0, 4)
        labels = [universe[i] for i in rng.choice(3, size=n, replace=False)]
        comps.append(GlmbComponent(labels, rng.uniform(0.1, 1.0),
                                   tuple(G(rng.uniform(-5, 5), rng.uniform(0.3, 2)) for _ in labels)))
    g = GlmbDistribution.from_weights(comps)
    assert abs(labeled_set_integral(g, Grid(-20, 20, 200)) - 1.0) < 1e-5


def test_cardinality_distribution():
    g = GlmbDistribution((GlmbComponent((), 0.3, ()), GlmbComponent([(0, 1)], 0.7, (G(0.0),))))
    assert_allclose(glmb_cardinality(g), [0.3, 0.7])
    g2 = GlmbDistribution((GlmbComponent([(0, 1), (0, 2)], 0.4, (G(0.0), G(1.0))),
                           GlmbComponent([(0, 1), (0, 3)], 0.6, (G(0.0), G(2.0)))))
    assert_allclose(glmb_cardinality(g2), [0.0, 0.0, 1.0])


def brute_force_cardinality(g, n, grid):
    """(1/n!) times the sum over ordered label tuples of the n-fold grid integral of the density."""
    nodes = np.stack(np.meshgrid(*([grid.nodes] * n), indexing="ij"), axis=-1).reshape(-1, n, 1)
    w = np.prod(np.stack(np.meshgrid(*([grid.weights] * n), indexing="ij")), axis=0).reshape(-1)
    total = sum(w @ np.exp(glmb_log_density_batch(labels, nodes, g))
                for labels in itertools.permutations(g.label_universe, n))
    return total / math.factorial(n)


def test_cardinality_matches_brute_force_integral():
    g = three_component()
    p = glmb_cardinality(g)
    assert_allclose(glmb_density(LabeledStateSet(), g), p[0])
    for n in (1, 2):
        assert abs(brute_force_cardinality(g, n, GRID) - p[n]) < 1e-5


def test_phd():
    g = three_component()
    assert glmb_phd([0.0], (5, 5), g) == 0.0
    single = GlmbDistribution((GlmbComponent([(0, 1)], 1.0, (G(0.3),)),))
    x = GRID.nodes
    phd = np.array([glmb_phd([v], (0, 1), single) for v in x])
    assert_allclose(phd, G(0.3).pdf(x[:, None]), rtol=1e-14)
    assert abs(GRID.integrate(phd) - 1.0) < 1e-6
    total = sum(GRID.integrate(np.array([glmb_phd([v], l, g) for v in x])) for l in g.label_universe)
    assert abs(total - expected_cardinality(g)) < 1e-6


def test_expected_cardinality_equals_integrated_phd_closed_form():
    g = three_component()
    # each Gaussian integrates to one, so the integrated PHD is sum over labels of the weights carrying them
    closed = sum(c.weight for c in g for _ in c.labels)
    assert abs(expected_cardinality(g) - closed) <= 1e-12
    assert abs(expected_cardinality(g) - np.dot(np.arange(3), glmb_cardinality(g))) <= 1e-12


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        GlmbDistribution((GlmbComponent((), 0.5, ()),))
    g = GlmbDistribution((GlmbComponent((), 0.5 + 5e-10, ()), GlmbComponent([(0, 1)], 0.5, (G(0.0),))))
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_prune_examples():
    g = GlmbDistribution((
        GlmbComponent([(0, 1)], 0.6, (G(0.0),)),
        GlmbComponent([(0, 2)], 0.3, (G(1.0),)),
        GlmbComponent([(0, 3)], 0.1, (G(2.0),)),
    ))
    same = prune_glmb(g)
    assert same.distribution is g and same.dropped_mass == 0.0
    r = prune_glmb(g, weight_floor=0.2)
    assert_allclose(r.distribution.weights, [2 / 3, 1 / 3])
    assert_allclose(r.dropped_mass, 0.1)
    capped = prune_glmb(g, max_components=1)
    assert [c.labels for c in capped.distribution] == [(Label(0, 1),)]


def test_json_round_trip_is_exact():
    g = three_component()
    back = GlmbDistribution.from_json(g.dumps())
    assert back.dumps() == g.dumps()
    for a, b in zip(g, back):
        assert a.labels == b.labels and a.weight == b.weight
        assert all(x == y for x, y in zip(a.densities, b.densities))
