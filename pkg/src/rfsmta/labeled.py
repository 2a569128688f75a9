"""Labeled states and generalized labeled multi-Bernoulli (GLMB) distributions."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import factorial
from typing import Iterable, NamedTuple

import numpy as np

from .models import GaussianDensity
from .quadrature import Grid

WEIGHT_TOL = 1e-9


class Label(NamedTuple):
    """Track label (birth step k, index i within that step); ordered by k then i."""

    k: int
    i: int


class LabeledState(NamedTuple):
    x: np.ndarray
    label: Label


class LabeledStateSet:
    """Finite set of labeled states with pairwise distinct labels, sorted by label."""

    def __init__(self, elements: Iterable = ()):
        items = []
        for x, label in elements:
            x = np.array(x, dtype=float, ndmin=1)
            x.setflags(write=False)
            items.append(LabeledState(x, Label(*label)))
        labels = [e.label for e in items]
        if len(set(labels)) != len(labels):
            raise ValueError(f"labels must be distinct, got {labels}")
        self.elements = tuple(sorted(items, key=lambda e: e.label))

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @property
    def labels(self) -> tuple[Label, ...]:
        return tuple(e.label for e in self.elements)

    @property
    def points(self) -> np.ndarray:
        if not self.elements:
            return np.zeros((0, 1))
        return np.stack([e.x for e in self.elements])

    def __repr__(self):
        return "LabeledStateSet([" + ", ".join(f"({e.x.tolist()}, {tuple(e.label)})" for e in self) + "])"


def labels_of(X: LabeledStateSet) -> frozenset[Label]:
    return frozenset(X.labels)


@dataclass(frozen=True)
class GlmbComponent:
    """One (o, L) term: weight, label set and a density per label."""

    labels: tuple[Label, ...]
    weight: float
    densities: tuple[GaussianDensity, ...]
    tag: str = ""

    def __post_init__(self):
        labels = tuple(Label(*l) for l in self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"component labels must be distinct, got {labels}")
        if len(self.densities) != len(labels):
            raise ValueError("need exactly one density per label")
        if not (self.weight >= 0.0 and np.isfinite(self.weight)):
            raise ValueError(f"component weight must be finite and nonnegative, got {self.weight}")
        order = sorted(range(len(labels)), key=labels.__getitem__)
        object.__setattr__(self, "labels", tuple(labels[j] for j in order))
        object.__setattr__(self, "densities", tuple(self.densities[j] for j in order))
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def cardinality(self) -> int:
        return len(self.labels)

    def density_of(self, label) -> GaussianDensity:
        return self.densities[self.labels.index(Label(*label))]

    def with_weight(self, weight: float) -> "GlmbComponent":
        return GlmbComponent(self.labels, weight, self.densities, self.tag)


@dataclass(frozen=True)
class GlmbDistribution:
    """Finite mixture of GLMB components with weights summing to one.

    Weights within ``WEIGHT_TOL`` of unit sum are renormalized on
    construction unless ``normalize=False``.
    """

    components: tuple[GlmbComponent, ...]
    normalize: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a GLMB distribution needs at least one component")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"component weights sum to {total!r}, not 1")
        if self.normalize and total != 1.0:
            comps = tuple(c.with_weight(c.weight / total) for c in comps)
        dims = {d.dim for c in comps for d in c.densities}
        if len(dims) > 1:
            raise ValueError("track densities have inconsistent dimensions")
        object.__setattr__(self, "components", comps)

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def label_universe(self) -> tuple[Label, ...]:
        return tuple(sorted({l for c in self.components for l in c.labels}))

    @classmethod
    def from_weights(cls, components: Iterable[GlmbComponent]) -> "GlmbDistribution":
        """Build from unnormalized component weights."""
        comps = tuple(components)
        total = sum(c.weight for c in comps)
        if not total > 0.0:
            raise ValueError("total component weight is zero")
        return cls(tuple(c.with_weight(c.weight / total) for c in comps))

    def to_json(self) -> dict:
        return {
            "components": [
                {
                    "labels": [list(l) for l in c.labels],
                    "weight": c.weight,
                    "densities": [{"mean": d.mean.tolist(), "cov": d.cov.tolist()} for d in c.densities],
                    "tag": c.tag,
                }
                for c in self.components
            ]
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, doc) -> "GlmbDistribution":
        if isinstance(doc, str):
            doc = json.loads(doc)
        comps = []
        for c in doc["components"]:
            dens = tuple(GaussianDensity(d["mean"], d["cov"]) for d in c["densities"])
            comps.append(GlmbComponent(tuple(Label(*l) for l in c["labels"]), c["weight"], dens, c.get("tag", "")))
        return cls(tuple(comps), normalize=False)


def glmb_log_density_batch(labels, Xb: np.ndarray, g: GlmbDistribution) -> np.ndarray:
    """log f(X) where X pairs ``labels[j]`` with ``Xb[:, j]``; Xb has shape (N, n, d).

    Repeated labels give zero density.
    """
    labels = tuple(Label(*l) for l in labels)
    Xb = np.asarray(Xb, dtype=float)
    N = Xb.shape[0]
    out = np.full(N, -np.inf)
    if len(set(labels)) != len(labels):
        return out
    key = frozenset(labels)
    terms = []
    for c in g.components:
        if c.weight == 0.0 or frozenset(c.labels) != key:
            continue
        lp = np.full(N, np.log(c.weight))
        for j, l in enumerate(labels):
            lp = lp + c.density_of(l).logpdf(Xb[:, j, :])
        terms.append(lp)
    if terms:
        out = np.logaddexp.reduce(np.stack(terms), axis=0)
    return out


def glmb_density(X: LabeledStateSet, g: GlmbDistribution) -> float:
    if len(X) == 0:
        return float(sum(c.weight for c in g.components if not c.labels))
    Xb = X.points[None]
    return float(np.exp(glmb_log_density_batch(X.labels, Xb, g)[0]))


def glmb_cardinality(g: GlmbDistribution) -> np.ndarray:
    """p(n) for n = 0..max |L|."""
    n_max = max(c.cardinality for c in g.components)
    p = np.zeros(n_max + 1)
    for c in g.components:
        p[c.cardinality] += c.weight
    return p


def glmb_phd(x, label, g: GlmbDistribution) -> float:
    label = Label(*label)
    x = np.array(x, dtype=float, ndmin=1)
    total = 0.0
    for c in g.components:
        if label in c.labels and c.weight > 0.0:
            total += c.weight * float(c.density_of(label).pdf(x)[0])
    return total


def expected_cardinality(g: GlmbDistribution) -> float:
    return float(sum(c.cardinality * c.weight for c in g.components))


class PruneResult(NamedTuple):
    distribution: GlmbDistribution
    dropped_mass: float


def prune_glmb(g: GlmbDistribution, weight_floor: float = 0.0,
               max_components: int | None = None) -> PruneResult:
    """Drop components under ``weight_floor``, keep the ``max_components`` heaviest, renormalize.

    Ties at the cap are broken by original order.
    """
    if not 0.0 <= weight_floor < 1.0:
        raise ValueError("weight_floor must lie in [0, 1)")
    keep = [j for j, c in enumerate(g.components) if c.weight >= weight_floor]
    if max_components is not None and len(keep) > max_components:
        keep = sorted(sorted(keep, key=lambda j: -g.components[j].weight)[:max_components])
    if len(keep) == len(g.components):
        return PruneResult(g, 0.0)
    kept = [g.components[j] for j in keep]
    if not kept or not sum(c.weight for c in kept) > 0.0:
        raise ValueError("pruning removed every component")
    dropped = float(sum(g.weights) - sum(c.weight for c in kept))
    return PruneResult(GlmbDistribution.from_weights(kept), dropped)


def labeled_set_integral(g: GlmbDistribution, grid: Grid, n_max: int | None = None,
                         method: str = "separable") -> float:
    """Labeled set integral of the GLMB density on a 1-D state grid.

    Sums (1/n!) over ordered label tuples drawn from the labels present in
    ``g``; tuples with repeated labels contribute nothing and are skipped.
    Each component is a product of per-label densities, so ``"separable"``
    forms its tensor-grid sum from 1-D sums; ``"tensor"`` evaluates the
    density at every grid point.
    """
    if method not in ("separable", "tensor"):
        raise ValueError(f"unknown method {method!r}")
    universe = g.label_universe
    n_max = max(c.cardinality for c in g.components) if n_max is None else n_max
    total = float(sum(c.weight for c in g.components if not c.labels))
    x = grid.nodes
    w = grid.weights
    for n in range(1, n_max + 1):
        if method == "tensor":
            Wn = np.prod(np.stack(np.meshgrid(*([w] * n), indexing="ij")), axis=0).reshape(-1)
            Xn = np.stack(np.meshgrid(*([x] * n), indexing="ij"), axis=-1).reshape(-1, n, 1)
        acc = 0.0
        for labels in itertools.permutations(universe, n):
            if method == "tensor":
                acc += float(Wn @ np.exp(glmb_log_density_batch(labels, Xn, g)))
                continue
            key = frozenset(labels)
            for c in g.components:
                if c.weight > 0.0 and frozenset(c.labels) == key:
                    acc += c.weight * float(np.prod([w @ d.pdf(x[:, None]) for d in c.densities]))
        total += acc / factorial(n)
    return total
