"""GLMB filter: exhaustive prediction and update with ranked truncation,
a Gibbs-sampled joint prediction/update, and state extraction.

Update weights apply the global association likelihood to each hypothesis,
with the hypothesis' labels playing the role of track indices.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.special import logsumexp

from .association import TrackSet, local_tables, mta_log_terms, mtas_as_array
from .labeled import (
    GlmbComponent,
    GlmbDistribution,
    Label,
    LabeledStateSet,
    glmb_cardinality,
)
from .models import (
    GaussianDensity,
    MotionModel,
    SensorModel,
    as_points,
    bayes_update_density,
    map_estimate,
    predict_density,
)

DEFAULT_MAX_COMPONENTS = 100
MERGE_DECIMALS = 9


@dataclass(frozen=True)
class BirthEntry:
    density: GaussianDensity
    r: float
    steps: frozenset[int] | None = None

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"birth existence probability must lie in [0, 1], got {self.r}")
        if self.steps is not None:
            object.__setattr__(self, "steps", frozenset(int(k) for k in self.steps))

    def active(self, k: int) -> bool:
        return self.steps is None or k in self.steps


@dataclass(frozen=True)
class BirthModel:
    """Labeled multi-Bernoulli births. Entry j active at step k gets label (k, j + 1)."""

    entries: tuple[BirthEntry, ...] = ()
    max_births: int | None = None

    def births_at(self, k: int) -> list[tuple[Label, BirthEntry]]:
        out = [(Label(k, j + 1), e) for j, e in enumerate(self.entries) if e.active(k)]
        return out if self.max_births is None else out[: self.max_births]


@dataclass(frozen=True)
class GlmbFilterState:
    k: int
    distribution: GlmbDistribution
    dropped_mass: float = 0.0

    def __post_init__(self):
        tags = [c.tag for c in self.distribution]
        if len(set(tags)) != len(tags):
            raise ValueError("component history tags must be unique")


def initial_state(distribution: GlmbDistribution | None = None, k: int = 0) -> GlmbFilterState:
    if distribution is None:
        distribution = GlmbDistribution((GlmbComponent((), 1.0, (), tag="root"),))
    comps = tuple(
        GlmbComponent(c.labels, c.weight, c.densities, c.tag or _tag("root", j))
        for j, c in enumerate(distribution)
    )
    return GlmbFilterState(k, GlmbDistribution(comps))


def _tag(parent: str, event) -> str:
    return hashlib.blake2b(f"{parent}|{event}".encode(), digest_size=8).hexdigest()


def _merge_key(labels, densities) -> tuple:
    return (labels,) + tuple(
        np.round(d.mean, MERGE_DECIMALS).tobytes() + np.round(d.cov, MERGE_DECIMALS).tobytes()
        for d in densities
    )


def _finalize(candidates: list, log_weights: np.ndarray, build, max_components: int | None):
    """Normalize, keep the heaviest ``max_components``, build and merge.

    ``build(candidate)`` returns (labels, densities, tag). Returns the new
    distribution and the dropped (pre-renormalization) mass.
    """
    log_weights = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(log_weights)
    if not np.any(finite):
        raise ValueError("every hypothesis has zero weight")
    w = np.exp(log_weights - logsumexp(log_weights[finite]))
    order = np.argsort(-w, kind="stable")
    order = order[w[order] > 0.0]
    if max_components is not None:
        order = order[:max_components]
    kept = float(np.sum(w[order]))
    merged: dict[tuple, list] = {}
    for j in order:
        labels, densities, tag = build(candidates[j])
        key = _merge_key(labels, densities)
        if key in merged:
            merged[key][2] += w[j]
        else:
            merged[key] = [labels, densities, w[j], tag]
    comps = [GlmbComponent(l, wt, d, tag) for l, d, wt, tag in merged.values()]
    return GlmbDistribution.from_weights(comps), max(0.0, 1.0 - kept)


def predict(st: GlmbFilterState, mm: MotionModel, birth: BirthModel,
            max_components: int | None = DEFAULT_MAX_COMPONENTS) -> GlmbFilterState:
    """Survive-or-die expansion of every component, plus labeled multi-Bernoulli births."""
    k = st.k + 1
    births = birth.births_at(k)
    birth_sets = []
    for mask in itertools.product((0, 1), repeat=len(births)):
        with np.errstate(divide="ignore"):
            lw = sum(np.log(e.r if b else 1.0 - e.r) for b, (_, e) in zip(mask, births))
        birth_sets.append((mask, lw))
    with np.errstate(divide="ignore"):
        log_ps, log_qs = np.log(mm.p_S), np.log(1.0 - mm.p_S)
    candidates, log_w = [], []
    predicted = {}
    for ci, c in enumerate(st.distribution):
        if c.weight == 0.0:
            continue
        predicted[ci] = tuple(predict_density(d, mm) for d in c.densities)
        for smask in itertools.product((0, 1), repeat=c.cardinality):
            ns, nd = sum(smask), c.cardinality - sum(smask)
            lw_s = np.log(c.weight) + (ns * log_ps if ns else 0.0) + (nd * log_qs if nd else 0.0)
            for bmask, lw_b in birth_sets:
                candidates.append((ci, smask, bmask))
                log_w.append(lw_s + lw_b)

    def build(cand):
        ci, smask, bmask = cand
        c = st.distribution.components[ci]
        labels = [l for l, b in zip(c.labels, smask) if b]
        dens = [d for d, b in zip(predicted[ci], smask) if b]
        for (l, e), b in zip(births, bmask):
            if b:
                labels.append(l)
                dens.append(e.density)
        return tuple(labels), tuple(dens), _tag(c.tag, ("p", k, smask, bmask))

    dist, dropped = _finalize(candidates, log_w, build, max_components)
    return GlmbFilterState(k, dist, dropped)


def update(st: GlmbFilterState, Z, s: SensorModel,
           max_components: int | None = DEFAULT_MAX_COMPONENTS) -> GlmbFilterState:
    """Measurement update: every component times every MTA of its labels into Z.

    The heaviest ``max_components`` hypotheses across all components are
    kept (ranked truncation); only those are materialized.
    """
    Z = as_points(Z, s.z_dim)
    m = len(Z)
    cand_comp, cand_alpha, log_w = [], [], []
    tables = {}
    for ci, c in enumerate(st.distribution):
        if c.weight == 0.0:
            continue
        t = local_tables(Z, TrackSet(c.densities), s)
        tables[ci] = t
        alphas = mtas_as_array(c.cardinality, m)
        terms = mta_log_terms(t.log_det, t.log_miss, t.log_kappa, alphas)
        terms = np.log(c.weight) - s.clutter_rate + terms
        cand_comp.append(np.full(len(alphas), ci))
        cand_alpha.append(np.arange(len(alphas)))
        log_w.append(terms)
    cand_comp = np.concatenate(cand_comp)
    cand_alpha = np.concatenate(cand_alpha)
    log_w = np.concatenate(log_w)
    cache: dict[tuple[int, int, int], GaussianDensity] = {}

    def build(j):
        ci, ai = int(cand_comp[j]), int(cand_alpha[j])
        c = st.distribution.components[ci]
        alpha = mtas_as_array(c.cardinality, m)[ai]
        dens = []
        for i, v in enumerate(alpha):
            if v == 0:
                dens.append(c.densities[i])
                continue
            key = (ci, i, int(v))
            if key not in cache:
                cache[key] = bayes_update_density(c.densities[i], Z[v - 1], s)
            dens.append(cache[key])
        return c.labels, tuple(dens), _tag(c.tag, ("u", st.k, tuple(int(v) for v in alpha)))

    dist, dropped = _finalize(list(range(len(log_w))), log_w, build, max_components)
    return GlmbFilterState(st.k, dist, dropped)


# ---------------------------------------------------------------------------
# Gibbs joint prediction/update

_DEAD, _MISS = -1, 0


def _joint_tables(c: GlmbComponent, k: int, births, Z, mm: MotionModel, s: SensorModel):
    """log eta[i, v + 1] for v in (-1 dead, 0 missed, 1..m detected)."""
    predicted = [predict_density(d, mm) for d in c.densities]
    labels = list(c.labels) + [l for l, _ in births]
    dens = predicted + [e.density for _, e in births]
    with np.errstate(divide="ignore"):
        log_exist = np.array([np.log(mm.p_S)] * len(predicted) + [np.log(e.r) for _, e in births])
        log_absent = np.array([np.log(1.0 - mm.p_S)] * len(predicted) + [np.log(1.0 - e.r) for _, e in births])
    t = local_tables(Z, TrackSet(dens), s)
    N, m = len(labels), len(Z)
    eta = np.empty((N, m + 2))
    eta[:, 0] = log_absent
    eta[:, 1] = log_exist + t.log_miss
    eta[:, 2:] = log_exist[:, None] + t.log_det
    return labels, dens, eta, t.log_kappa


def _log_weight(gamma: np.ndarray, eta: np.ndarray, log_kappa: np.ndarray) -> float:
    total = float(np.sum(eta[np.arange(len(gamma)), gamma + 1]))
    taken = np.zeros(len(log_kappa), dtype=bool)
    taken[gamma[gamma > 0] - 1] = True
    return total + float(np.sum(log_kappa[~taken]))


def _greedy_start(eta: np.ndarray) -> np.ndarray:
    N, m = eta.shape[0], eta.shape[1] - 2
    gamma = np.full(N, _DEAD)
    taken = np.zeros(m, dtype=bool)
    for i in range(N):
        scores = eta[i].copy()
        scores[2:][taken] = -np.inf
        v = int(np.argmax(scores)) - 1
        gamma[i] = v
        if v > 0:
            taken[v - 1] = True
    return gamma


def gibbs_associations(eta: np.ndarray, log_kappa: np.ndarray, sweeps: int,
                       rng: np.random.Generator, burn_in: float = 0.1) -> list[tuple[int, ...]]:
    """Distinct joint assignments visited by single-site Gibbs sweeps.

    The state after each single-site update is recorded. The greedy
    starting point is always kept; states from the first ``burn_in``
    fraction of sweeps are otherwise discarded.
    """
    N, m = eta.shape[0], eta.shape[1] - 2
    gamma = _greedy_start(eta)
    seen = {tuple(int(v) for v in gamma): None}
    n_burn = int(burn_in * sweeps)
    values = np.arange(-1, m + 1)
    for sweep in range(sweeps):
        for i in range(N):
            others = np.delete(gamma, i)
            taken = np.zeros(m, dtype=bool)
            taken[others[others > 0] - 1] = True
            allowed = np.ones(m + 2, dtype=bool)
            allowed[2:] = ~taken
            # log weight of each allowed value for variable i, up to a shared constant
            free_kappa = np.where(taken, 0.0, log_kappa)
            clutter_all = free_kappa.sum()
            clutter = np.full(m + 2, clutter_all)
            if np.isfinite(clutter_all):
                clutter[2:] = clutter_all - free_kappa
            else:
                for j in np.flatnonzero(~taken):
                    clutter[j + 2] = np.sum(np.delete(free_kappa, j))
            lp = np.where(allowed, eta[i] + clutter, -np.inf)
            top = lp.max()
            if np.isfinite(top):
                p = np.exp(lp - top)
            else:
                p = allowed.astype(float)
            cdf = np.cumsum(p)
            gamma[i] = values[min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), m + 1)]
            # every single-site update yields a chain state, not only sweep ends
            if sweep >= n_burn:
                seen.setdefault(tuple(int(v) for v in gamma), None)
    return list(seen)


def joint_update_gibbs(st: GlmbFilterState, Z, mm: MotionModel, birth: BirthModel, s: SensorModel,
                       sweeps: int, seed: int,
                       max_components: int | None = DEFAULT_MAX_COMPONENTS) -> GlmbFilterState:
    """Prediction and update in one step, with associations sampled by Gibbs sweeps.

    Each prior component gets ceil(sweeps * weight) sweeps. Every distinct
    sampled association becomes a component with its exact weight.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be at least 1")
    Z = as_points(Z, s.z_dim)
    k = st.k + 1
    births = birth.births_at(k)
    rng = np.random.default_rng(seed)
    candidates, log_w = [], []
    per_comp = {}
    for ci, c in enumerate(st.distribution):
        if c.weight == 0.0:
            continue
        labels, dens, eta, log_kappa = _joint_tables(c, k, births, Z, mm, s)
        per_comp[ci] = (labels, dens)
        n_sweeps = max(1, int(np.ceil(sweeps * c.weight)))
        for gamma in gibbs_associations(eta, log_kappa, n_sweeps, rng):
            g = np.asarray(gamma, dtype=int)
            candidates.append((ci, gamma))
            log_w.append(np.log(c.weight) - s.clutter_rate + _log_weight(g, eta, log_kappa))
    cache = {}

    def build(cand):
        ci, gamma = cand
        labels, dens = per_comp[ci]
        out_l, out_d = [], []
        for i, v in enumerate(gamma):
            if v == _DEAD:
                continue
            out_l.append(labels[i])
            if v == _MISS:
                out_d.append(dens[i])
            else:
                key = (ci, i, v)
                if key not in cache:
                    cache[key] = bayes_update_density(dens[i], Z[v - 1], s)
                out_d.append(cache[key])
        return tuple(out_l), tuple(out_d), _tag(st.distribution.components[ci].tag, ("g", k, gamma))

    dist, dropped = _finalize(candidates, log_w, build, max_components)
    return GlmbFilterState(k, dist, dropped)


def estimate_states(st: GlmbFilterState) -> LabeledStateSet:
    """MAP cardinality first, then the heaviest component of that cardinality."""
    card = glmb_cardinality(st.distribution)
    n_star = int(np.argmax(card))
    best = min(
        (c for c in st.distribution if c.cardinality == n_star),
        key=lambda c: (-c.weight, c.labels),
    )
    return LabeledStateSet((map_estimate(d), l) for l, d in zip(best.labels, best.densities))


@dataclass
class GlmbTracker:
    """Runs the recursion over a sequence of measurement sets.

    ``method`` is ``"exhaustive"`` (predict then update) or ``"gibbs"``
    (joint update); the Gibbs seed for step k is derived from ``seed``.
    """

    motion: MotionModel
    sensor: SensorModel
    birth: BirthModel
    method: str = "exhaustive"
    max_components: int | None = DEFAULT_MAX_COMPONENTS
    gibbs_sweeps: int = 100
    seed: int = 0
    state: GlmbFilterState = field(default_factory=initial_state)

    def step(self, Z) -> GlmbFilterState:
        if self.method == "exhaustive":
            predicted = predict(self.state, self.motion, self.birth, self.max_components)
            updated = update(predicted, Z, self.sensor, self.max_components)
            dropped = 1.0 - (1.0 - predicted.dropped_mass) * (1.0 - updated.dropped_mass)
            self.state = GlmbFilterState(updated.k, updated.distribution, dropped)
        elif self.method == "gibbs":
            step_seed = int(np.random.SeedSequence([self.seed, self.state.k + 1]).generate_state(1)[0])
            self.state = joint_update_gibbs(self.state, Z, self.motion, self.birth, self.sensor,
                                            self.gibbs_sweeps, step_seed, self.max_components)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        return self.state

    def run(self, measurement_sets: Iterable) -> list[GlmbFilterState]:
        return [self.step(Z) for Z in measurement_sets]
