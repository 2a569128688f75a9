"""Random-finite-set multitarget likelihood, set integrals and the link
between the RFS and MTA formulations.

Set integrals are evaluated by trapezoid quadrature on 1-D state or
measurement spaces; they exist for verification at desk scale, not for
filtering.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial, lgamma
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson

from .association import (
    Mta,
    TrackSet,
    check_exhaustive,
    local_tables,
    log_factor_sum,
    total_association_log_likelihood,
)
from .models import SensorModel, as_points, gaussian_logpdf, innovation, single_log_likelihood
from .quadrature import Grid


class StateSet:
    """Finite set of vectors, stored sorted lexicographically.

    The ordering only fixes iteration order; nothing computed from a set
    depends on it.
    """

    def __init__(self, elements=(), dim: int | None = None):
        arr = np.asarray(getattr(elements, "points", elements), dtype=float)
        if arr.size == 0:
            arr = np.zeros((0, dim or 1))
        elif arr.ndim == 1:
            arr = arr.reshape(-1, dim or 1)
        if arr.ndim != 2 or (dim is not None and arr.shape[1] != dim):
            raise ValueError(f"bad element shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("elements must be finite")
        arr = arr[np.lexsort(arr.T[::-1])] if len(arr) else arr
        if len(arr) > 1 and np.any(np.all(arr[1:] == arr[:-1], axis=1)):
            raise ValueError("a finite set cannot contain duplicate elements")
        arr.setflags(write=False)
        self.points = arr

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other):
        if not isinstance(other, StateSet):
            return NotImplemented
        return self.points.shape == other.points.shape and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"{type(self).__name__}({self.points.tolist()})"


class MeasurementSet(StateSet):
    pass


# ---------------------------------------------------------------------------
# multitarget likelihood


def _batch_log_det(Z: np.ndarray, Xb: np.ndarray, s: SensorModel) -> np.ndarray:
    """log p_D f(z_j|x_i) with shape (N, n, m) for a batch Xb of shape (N, n, d)."""
    N, n = Xb.shape[:2]
    m = Z.shape[0]
    if s.p_D == 0.0 or n == 0 or m == 0:
        return np.full((N, n, m), -np.inf)
    ll = single_log_likelihood(Z[None, None, :, :], Xb[:, :, None, :], s)
    return np.log(s.p_D) + ll


def multitarget_log_likelihood_batch(Z, Xb, s: SensorModel) -> np.ndarray:
    """log f(Z|X) for every set in a batch of equal-size sets, shape (N, n, d)."""
    Z = as_points(Z, s.z_dim)
    Xb = np.asarray(Xb, dtype=float)
    if Xb.ndim != 3 or Xb.shape[2] != s.x_dim:
        raise ValueError(f"state batch must have shape (N, n, {s.x_dim}), got {Xb.shape}")
    N, n = Xb.shape[:2]
    m = len(Z)
    log_det = _batch_log_det(Z, Xb, s)
    with np.errstate(divide="ignore"):
        log_miss = np.full((N, n), np.log(1.0 - s.p_D))
    log_kappa = np.broadcast_to(s.log_clutter_intensity(Z) if m else np.zeros(0), (N, m))
    return -s.clutter_rate + log_factor_sum(log_det, log_miss, log_kappa)


def multitarget_log_likelihood(Z, X, s: SensorModel) -> float:
    """log f(Z|X), summed over every MTA of X into Z.

    Each MTA term is grouped as (missed factors)(detection factors)(clutter
    of unassigned measurements), so p_D = 1 and kappa(z) = 0 never divide.
    """
    X = as_points(X, s.x_dim)
    return float(multitarget_log_likelihood_batch(Z, X[None], s)[0])


def multitarget_likelihood(Z, X, s: SensorModel) -> float:
    return float(np.exp(multitarget_log_likelihood(Z, X, s)))


def partition_terms(Z, X, s: SensorModel):
    """Yield (cells, value) for every ordered partition W_0, W_1..W_n of Z.

    ``cells[j]`` is the cell (0..n) that receives Z[j]. Values follow the
    partition-sum form: kappa^{W_0} times, for each target cell, 1 if empty,
    p_D f(z|x)/(1 - p_D) if a singleton and 0 otherwise, all scaled by
    e^{-lambda} (1 - p_D)^n. When p_D = 1 the (1 - p_D) prefactor is
    distributed into the cells so no 0/0 arises.
    """
    Z = as_points(Z, s.z_dim)
    X = as_points(X, s.x_dim)
    n, m = len(X), len(Z)
    check_exhaustive(n, m)
    kappa = [float(k) for k in s.clutter_intensity(Z)] if m else []
    f = np.exp(single_log_likelihood(Z[None, :, :], X[:, None, :], s)) if n and m else None
    p_D = s.p_D
    literal = p_D < 1.0
    prefactor = np.exp(-s.clutter_rate) * ((1.0 - p_D) ** n if literal else 1.0)
    for cells in itertools.product(range(n + 1), repeat=m):
        value = prefactor
        for j, c in enumerate(cells):
            if c == 0:
                value *= kappa[j]
        for i in range(1, n + 1):
            members = [j for j, c in enumerate(cells) if c == i]
            if not members:
                value *= 1.0 if literal else (1.0 - p_D)
            elif len(members) == 1:
                det = p_D * f[i - 1, members[0]]
                value *= det / (1.0 - p_D) if literal else det
            else:
                value *= 0.0
        yield cells, value


def multitarget_likelihood_partition_oracle(Z, X, s: SensorModel) -> float:
    return float(sum(v for _, v in partition_terms(Z, X, s)))


# ---------------------------------------------------------------------------
# multitarget densities and set integrals


@dataclass(frozen=True)
class MultitargetDensity:
    """Multitarget density given by a batched log evaluator.

    ``log_eval(Xb)`` receives equal-cardinality sets as an array of shape
    (N, n, d) and returns log densities of shape (N,). Cardinalities above
    ``n_max`` have zero density.
    """

    log_eval: Callable[[np.ndarray], np.ndarray]
    n_max: int
    dim: int = 1

    def log_batch(self, Xb) -> np.ndarray:
        Xb = np.asarray(Xb, dtype=float)
        if Xb.shape[1] > self.n_max:
            return np.full(Xb.shape[0], -np.inf)
        return np.asarray(self.log_eval(Xb), dtype=float)

    def __call__(self, X) -> float:
        X = as_points(X, self.dim)
        return float(np.exp(self.log_batch(X[None])[0]))


def independent_prior(ts: TrackSet) -> MultitargetDensity:
    """Density of n independent targets with track densities ``ts`` (zero unless |X| = n)."""
    n = len(ts)
    dim = ts[0].dim if n else 1
    perms = np.array(list(itertools.permutations(range(n))), dtype=int).reshape(-1, n)

    def log_eval(Xb):
        N, k = Xb.shape[:2]
        if k != n:
            return np.full(N, -np.inf)
        if n == 0:
            return np.zeros(N)
        # L[b, i, j] = log f(x_j | track i)
        L = np.stack([t.logpdf(Xb.reshape(-1, dim)).reshape(N, n) for t in ts], axis=1)
        terms = L[:, np.arange(n)[None, :], perms].sum(axis=-1)
        return logsumexp(terms, axis=-1)

    return MultitargetDensity(log_eval, n, dim)


def _tensor_integral(log_f: Callable, grid: Grid, n: int, chunk: int = 1 << 20) -> float:
    """Integral of exp(log_f) over the n-fold tensor grid (1-D states)."""
    P = grid.points
    nodes, weights = grid.nodes, grid.weights
    total = P**n
    acc = 0.0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, (P,) * n)
        Xb = np.stack([nodes[i] for i in idx], axis=1)[:, :, None]
        w = np.prod(np.stack([weights[i] for i in idx], axis=1), axis=1)
        acc += float(np.sum(w * np.exp(log_f(Xb))))
    return acc


def set_integral(f: MultitargetDensity, grid: Grid, n_max: int | None = None) -> float:
    """f(empty) + sum_n (1/n!) int f({x_1..x_n}) dx on a 1-D tensor grid."""
    if f.dim != 1:
        raise ValueError("set integrals are only evaluated on 1-D state spaces")
    n_max = f.n_max if n_max is None else min(n_max, f.n_max)
    if n_max > 4:
        raise ValueError("set integral cardinality is capped at 4")
    total = float(np.exp(f.log_batch(np.zeros((1, 0, 1)))[0]))
    for n in range(1, n_max + 1):
        total += _tensor_integral(f.log_batch, grid, n) / factorial(n)
    return total


def multitarget_posterior(Z, prior: MultitargetDensity, s: SensorModel, grid: Grid,
                          n_max: int | None = None) -> MultitargetDensity:
    """Pointwise f(Z|X) f0(X) divided by its set integral."""
    Z = as_points(Z, s.z_dim)

    def joint(Xb):
        return multitarget_log_likelihood_batch(Z, Xb, s) + prior.log_batch(Xb)

    n_max = prior.n_max if n_max is None else n_max
    unnorm = MultitargetDensity(joint, n_max, prior.dim)
    normalizer = set_integral(unnorm, grid, n_max)
    if not normalizer > 0.0:
        raise ValueError("posterior normalizer is zero")
    log_norm = np.log(normalizer)
    return MultitargetDensity(lambda Xb: joint(Xb) - log_norm, n_max, prior.dim)


# ---------------------------------------------------------------------------
# RFS / MTA identity


class IdentityCheck(NamedTuple):
    lhs: float
    rhs: float
    relative_gap: float


def relative_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def default_state_grid(ts: TrackSet, points: int = 400, nsigma: float = 10.0,
                       Z=None, s: SensorModel | None = None) -> Grid:
    """Grid covering every track and, given ``Z`` and a 1-D identity sensor ``s``, every measurement."""
    means = [t.mean[0] for t in ts]
    sds = [float(np.sqrt(t.cov[0, 0])) for t in ts]
    if Z is not None and s is not None and len(Z):
        gain = float(s.H[0, 0])
        means += [float(z) / gain for z in np.ravel(Z)]
        sds += [float(np.sqrt(s.R[0, 0])) / abs(gain)] * len(np.ravel(Z))
    return Grid.covering(means or [0.0], sds or [1.0], nsigma=nsigma, points=points)


def _separable_evidence(Z: np.ndarray, ts: TrackSet, s: SensorModel, grid: Grid) -> float:
    """Set integral of f(Z|X) f0(X) using the product structure of each term.

    Every (MTA, permutation) term of the integrand is a product of functions
    of single coordinates, so its tensor-grid trapezoid sum equals the
    product of 1-D trapezoid sums.
    """
    n, m = len(ts), len(Z)
    x = grid.nodes[:, None]
    with np.errstate(divide="ignore"):
        log_w_miss = np.log(1.0 - s.p_D)
    log_f_track = np.stack([t.logpdf(x) for t in ts])  # (n, P)
    log_w_det = _batch_log_det(Z, x[None], s)[0].T if m else np.zeros((0, grid.points))  # (m, P)
    log_w = np.vstack([np.full((1, grid.points), log_w_miss), log_w_det])  # (m+1, P)
    # I[k, a] = int w_a(x) f(x|k) dx
    I = np.einsum("kp,ap,p->ka", np.exp(log_f_track), np.exp(log_w), grid.weights)
    with np.errstate(divide="ignore"):
        log_I = np.log(I)
    log_kappa = s.log_clutter_intensity(Z) if m else np.zeros(0)
    terms = []
    for perm in itertools.permutations(range(n)):
        # track k sits in coordinate perm[k]; coordinate i takes value alpha(i)
        log_det = np.empty((n, m))
        log_miss = np.empty(n)
        for k, i in enumerate(perm):
            log_det[i] = log_I[k, 1:]
            log_miss[i] = log_I[k, 0]
        terms.append(log_factor_sum(log_det, log_miss, log_kappa))
    return float(np.exp(-s.clutter_rate + logsumexp(terms) - np.log(factorial(n))))


def verify_mta_rfs_identity(Z, ts: TrackSet, s: SensorModel, grid: Grid | None = None,
                            method: str = "auto") -> IdentityCheck:
    """Compare the set integral of f(Z|X) f0(X) with the summed MTA likelihoods.

    ``method`` picks the left-hand quadrature: ``"tensor"`` evaluates the
    integrand pointwise on the full tensor grid, ``"separable"`` factorizes
    each term, and ``"auto"`` uses tensor for n <= 2.
    """
    Z = as_points(Z, s.z_dim)
    n, m = len(ts), len(Z)
    if s.x_dim != 1:
        raise ValueError("the identity check runs on 1-D state spaces")
    if n > 3 or m > 4:
        raise ValueError(f"identity check is limited to n <= 3, m <= 4 (got n={n}, m={m})")
    rhs = float(np.exp(total_association_log_likelihood(Z, ts, s)))
    if n == 0:
        lhs = float(np.exp(multitarget_log_likelihood(Z, np.zeros((0, 1)), s)))
        return IdentityCheck(lhs, rhs, relative_gap(lhs, rhs))
    grid = grid or default_state_grid(ts, Z=Z, s=s)
    if method == "auto":
        method = "tensor" if n <= 2 else "separable"
    if method == "tensor":
        prior = independent_prior(ts)
        integrand = MultitargetDensity(
            lambda Xb: multitarget_log_likelihood_batch(Z, Xb, s) + prior.log_batch(Xb), n, 1
        )
        lhs = set_integral(integrand, grid, n)
    elif method == "separable":
        lhs = _separable_evidence(Z, ts, s, grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    return IdentityCheck(lhs, rhs, relative_gap(lhs, rhs))


# ---------------------------------------------------------------------------
# normalization in measurement space


def default_measurement_grid(s: SensorModel, points: int = 400) -> Grid:
    if s.z_dim != 1:
        raise ValueError("measurement-space quadrature runs on 1-D measurement spaces")
    return Grid(float(s.region[0, 0]), float(s.region[0, 1]), points)


def truncation_cardinality(s: SensorModel, n: int, tail: float = 1e-7) -> int:
    """Smallest m_max with P(clutter count > m_max - n) below ``tail``."""
    return n + int(poisson.isf(tail, s.clutter_rate)) + 1 if s.clutter_rate > 0 else n


def likelihood_set_integral(X, s: SensorModel, m_max: int | None = None,
                            points: int = 400) -> float:
    """Set integral of f(Z|X) over 1-D measurement sets with |Z| <= m_max.

    Each MTA term is a product of single-measurement factors, so every
    factor is integrated on its own grid: clutter over the clutter box,
    detections over a window around H x.
    """
    X = as_points(X, s.x_dim)
    if s.z_dim != 1:
        raise ValueError("measurement-space quadrature runs on 1-D measurement spaces")
    n = len(X)
    m_max = truncation_cardinality(s, n) if m_max is None else m_max
    region = default_measurement_grid(s, points)
    kappa_mass = float(region.integrate(s.clutter_intensity(region.nodes[:, None])))
    sd = float(np.sqrt(s.R[0, 0]))
    det_mass = np.empty(n)
    for i, x in enumerate(X):
        centre = float((s.H @ x)[0])
        g = Grid.covering([centre], [sd], nsigma=12.0, points=points)
        det_mass[i] = float(g.integrate(np.exp(single_log_likelihood(g.nodes[:, None], x, s))))
    with np.errstate(divide="ignore"):
        log_det_one = np.log(s.p_D * det_mass) if n else np.zeros(0)
        log_miss = np.full(n, np.log(1.0 - s.p_D))
        log_k = np.log(kappa_mass) if kappa_mass > 0 else -np.inf
    total = 0.0
    for m in range(m_max + 1):
        log_det = np.repeat(log_det_one[:, None], m, axis=1)
        log_kappa = np.full(m, log_k)
        total += float(np.exp(-s.clutter_rate + log_factor_sum(log_det, log_miss, log_kappa) - lgamma(m + 1)))
    return total


def likelihood_set_integral_tensor(X, s: SensorModel, m_max: int = 2, grid: Grid | None = None) -> float:
    """Brute-force counterpart of :func:`likelihood_set_integral` for m_max <= 2.

    f(Z|X) is evaluated at every point of the |Z|-fold tensor grid. The grid
    doubles as the integration domain, so it must contain every target's
    measurement support.
    """
    X = as_points(X, s.x_dim)
    if m_max > 2:
        raise ValueError("tensor measurement integral is limited to |Z| <= 2")
    grid = grid or default_measurement_grid(s)
    P, n = grid.points, len(X)
    nodes = grid.nodes[:, None]
    ld = _batch_log_det(nodes, X[None], s)[0] if n else np.zeros((0, P))  # (n, P)
    lk = s.log_clutter_intensity(nodes)
    with np.errstate(divide="ignore"):
        log_miss = np.full(n, np.log(1.0 - s.p_D))
    total = 0.0
    for m in range(m_max + 1):
        idx = np.indices((P,) * m).reshape(m, -1).T if m else np.zeros((1, 0), dtype=int)  # (P^m, m)
        log_det = np.moveaxis(ld[:, idx], 0, 1)  # (P^m, n, m)
        log_kappa = lk[idx]
        vals = np.exp(-s.clutter_rate + log_factor_sum(log_det, log_miss[None], log_kappa))
        w = np.prod(grid.weights[idx], axis=1)
        total += float(w @ vals) / factorial(m)
    return total


def clutter_set_integral(s: SensorModel, m_max: int = 8, points: int = 400) -> float:
    """Set integral of the Poisson clutter density, truncated at |Z| <= m_max."""
    grid = default_measurement_grid(s, points)
    kappa_mass = float(grid.integrate(s.clutter_intensity(grid.nodes[:, None])))
    return float(sum(np.exp(-s.clutter_rate) * kappa_mass**m / factorial(m) for m in range(m_max + 1)))


def normalized_association_set_integral(a: Mta, ts: TrackSet, s: SensorModel, points: int = 400,
                                        method: str = "separable") -> float:
    """Set integral over |Z| = m of the normalized association likelihood of ``a``.

    The likelihood is a density on ordered measurement lists; as a set
    density it is summed over the m! orderings, which the 1/m! of the set
    integral cancels. ``"separable"`` integrates factor by factor,
    ``"tensor"`` (m <= 2) evaluates the symmetrized density on the full grid.
    """
    if s.z_dim != 1:
        raise ValueError("measurement-space quadrature runs on 1-D measurement spaces")
    if a.n != len(ts):
        raise ValueError(f"MTA has {a.n} tracks but the track set has {len(ts)}")
    m = a.m
    region = default_measurement_grid(s, points)
    if method == "separable":
        c_mass = float(region.integrate(s.clutter_spatial_density(region.nodes[:, None])))
        total = c_mass ** (m - len(a.detected))
        for i in a.detected:
            zhat, S = innovation(ts[i], s)
            g = Grid.covering([float(zhat[0])], [float(np.sqrt(S[0, 0]))], nsigma=12.0, points=points)
            total *= float(g.integrate(np.exp(gaussian_logpdf(g.nodes[:, None], zhat, np.linalg.cholesky(S)))))
        return total
    if method != "tensor":
        raise ValueError(f"unknown method {method!r}")
    if m > 2:
        raise ValueError("tensor route is limited to m <= 2")
    nodes = region.nodes[:, None]
    t = local_tables(nodes, ts, s)  # tables over every grid node
    idx = np.indices((points,) * m).reshape(m, -1).T if m else np.zeros((1, 0), dtype=int)
    with np.errstate(divide="ignore"):
        log_pd = np.log(-np.expm1(t.log_miss))
    dens = np.zeros(len(idx))
    for order in itertools.permutations(range(m)):
        cols = idx[:, list(order)]  # measurement j of the list sits at node cols[:, j]
        lf = np.zeros(len(idx))
        used = np.zeros(m, dtype=bool)
        for i, v in enumerate(a.assignments):
            if v:
                used[v - 1] = True
                lf += t.log_det[i, cols[:, v - 1]] - log_pd[i]
        for j in np.flatnonzero(~used):
            lf += t.log_c[cols[:, j]]
        dens += np.exp(lf)
    w = np.prod(region.weights[idx], axis=1)
    return float(w @ dens) / factorial(m)

# ---------------------------------------------------------------------------
# Bayes risk


def multitarget_bayes_risk(estimator: Callable, cost: Callable, sampler: Callable,
                           trials: int, seed: int = 0) -> float:
    """Monte-Carlo mean of cost(estimator(Z), X) over draws (X, Z) = sampler(rng).

    Only the risk value is computed; whether an estimator should make it small
    or large is left to the caller.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(trials):
        X, Z = sampler(rng)
        total += float(cost(estimator(Z), X))
    return total / trials
