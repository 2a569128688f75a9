"""Measurement-to-track associations (MTAs), their likelihoods, and the
Bayesian posterior over MTAs.

Conventions: tracks are indexed ``0..n-1`` by position in a :class:`TrackSet`;
an MTA maps each track to a value in ``0..m`` where ``0`` is a missed
detection and ``j > 0`` refers to ``Z[j - 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp

from .models import (
    GaussianDensity,
    MotionModel,
    SensorModel,
    as_points,
    bayes_update_density,
    gaussian_logpdf,
    innovation,
    predict_density,
    single_log_likelihood,
)
from .quadrature import Grid

MAX_EXHAUSTIVE = 8
MAX_MTA_ARRAY = 2_000_000


def check_exhaustive(n: int, m: int) -> None:
    if n > MAX_EXHAUSTIVE or m > MAX_EXHAUSTIVE:
        raise ValueError(
            f"exhaustive MTA evaluation is limited to n, m <= {MAX_EXHAUSTIVE} (got n={n}, m={m})"
        )


@dataclass(frozen=True, order=True)
class Mta:
    assignments: tuple[int, ...]
    m: int

    def __post_init__(self):
        a = tuple(int(v) for v in self.assignments)
        object.__setattr__(self, "assignments", a)
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if any(v < 0 or v > self.m for v in a):
            raise ValueError(f"assignment values must lie in 0..{self.m}: {a}")
        pos = [v for v in a if v > 0]
        if len(pos) != len(set(pos)):
            raise ValueError(f"two tracks share a measurement: {a}")

    @property
    def n(self) -> int:
        return len(self.assignments)

    def __len__(self):
        return len(self.assignments)

    def __getitem__(self, i):
        return self.assignments[i]

    @property
    def detected(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.assignments) if v > 0)

    @property
    def used_measurements(self) -> frozenset[int]:
        return frozenset(v for v in self.assignments if v > 0)


@dataclass(frozen=True)
class MtaComponents:
    """The (nu, X', Z', gamma) description of an MTA."""

    nu: int
    detected_tracks: frozenset[int]
    used_measurements: frozenset[int]
    gamma: dict[int, int]


@dataclass(frozen=True)
class TrackSet:
    tracks: tuple[GaussianDensity, ...]

    def __post_init__(self):
        tracks = tuple(self.tracks)
        if any(not isinstance(t, GaussianDensity) for t in tracks):
            raise TypeError("tracks must be GaussianDensity instances")
        if len({t.dim for t in tracks}) > 1:
            raise ValueError("tracks have inconsistent dimensions")
        object.__setattr__(self, "tracks", tracks)

    def __len__(self):
        return len(self.tracks)

    def __getitem__(self, i) -> GaussianDensity:
        return self.tracks[i]

    def __iter__(self):
        return iter(self.tracks)


def count_mtas(n: int, m: int) -> int:
    return sum(comb(n, k) * comb(m, k) * factorial(k) for k in range(min(n, m) + 1))


def enumerate_mtas(n: int, m: int) -> Iterator[Mta]:
    """Every MTA from ``n`` tracks into ``m`` measurements, in lexicographic order."""
    if n < 0 or m < 0:
        raise ValueError("n and m must be nonnegative")
    current = [0] * n
    used = [False] * (m + 1)

    def rec(i):
        if i == n:
            yield Mta(tuple(current), m)
            return
        for v in range(m + 1):
            if v and used[v]:
                continue
            current[i] = v
            used[v] = bool(v)
            yield from rec(i + 1)
            if v:
                used[v] = False

    yield from rec(0)


def mta_components(a: Mta) -> MtaComponents:
    gamma = {i: v for i, v in enumerate(a.assignments) if v > 0}
    return MtaComponents(len(gamma), frozenset(gamma), frozenset(gamma.values()), gamma)


def mta_from_components(c: MtaComponents, n: int, m: int) -> Mta:
    if set(c.gamma) != set(c.detected_tracks) or set(c.gamma.values()) != set(c.used_measurements):
        raise ValueError("gamma is not a bijection between the detected tracks and used measurements")
    return Mta(tuple(c.gamma.get(i, 0) for i in range(n)), m)


def _state_dependent_integral(track: GaussianDensity, weight_fn, grid: Grid | None):
    if track.dim != 1:
        raise ValueError("state-dependent p_D is only supported on 1-D state spaces")
    if grid is None:
        sd = float(np.sqrt(track.cov[0, 0]))
        grid = Grid.covering([track.mean[0]], [sd], nsigma=12.0, points=4001)
    x = grid.nodes[:, None]
    return float(grid.integrate(weight_fn(x) * track.pdf(x)))


def local_detection_log_likelihood(i: int, z, ts: TrackSet, s: SensorModel) -> float:
    """log of p_D N(z; H m_i, H P_i H^T + R) for constant p_D."""
    if s.p_D == 0.0:
        return -np.inf
    zhat, S = innovation(ts[i], s)
    z = as_points(z, s.z_dim)
    return float(np.log(s.p_D) + gaussian_logpdf(z, zhat, np.linalg.cholesky(S))[0])


def local_detection_likelihood(i: int, z, ts: TrackSet, s: SensorModel,
                               p_D: Callable | None = None, grid: Grid | None = None) -> float:
    """Probability density that track ``i`` generates ``z``.

    With ``p_D`` callable (1-D states only) the integral of p_D(x) f(z|x) f(x|i)
    is evaluated by quadrature; otherwise the closed Gaussian form is used.
    """
    if p_D is None:
        return float(np.exp(local_detection_log_likelihood(i, z, ts, s)))
    z = as_points(z, s.z_dim)
    return _state_dependent_integral(
        ts[i], lambda x: p_D(x).reshape(-1) * np.exp(single_log_likelihood(z, x, s)).reshape(-1), grid
    )


def local_miss_probability(i: int, ts: TrackSet, s: SensorModel,
                           p_D: Callable | None = None, grid: Grid | None = None) -> float:
    if p_D is None:
        ts[i]  # index check
        return 1.0 - s.p_D
    return _state_dependent_integral(ts[i], lambda x: 1.0 - p_D(x).reshape(-1), grid)


@dataclass(frozen=True)
class LocalTables:
    """Per-instance log factors shared by every MTA.

    ``log_det[i, j]`` is log l(z_{j+1}|i), ``log_miss[i]`` is log l(0|i) and
    ``log_kappa[j]`` is log kappa(z_{j+1}).
    """

    log_det: np.ndarray
    log_miss: np.ndarray
    log_kappa: np.ndarray
    log_c: np.ndarray
    clutter_rate: float


def local_tables(Z, ts: TrackSet, s: SensorModel) -> LocalTables:
    Z = as_points(Z, s.z_dim)
    n, m = len(ts), len(Z)
    log_det = np.full((n, m), -np.inf)
    if s.p_D > 0.0 and m:
        for i, t in enumerate(ts):
            zhat, S = innovation(t, s)
            log_det[i] = np.log(s.p_D) + gaussian_logpdf(Z, zhat, np.linalg.cholesky(S))
    with np.errstate(divide="ignore"):
        log_miss = np.full(n, np.log(1.0 - s.p_D))
        log_c = np.log(s.clutter_spatial_density(Z)) if m else np.zeros(0)
    log_kappa = s.log_clutter_intensity(Z) if m else np.zeros(0)
    return LocalTables(log_det, log_miss, log_kappa, log_c, s.clutter_rate)


def _check_consistent(a: Mta, n: int, m: int) -> None:
    if a.n != n or a.m != m:
        raise ValueError(f"MTA is for (n={a.n}, m={a.m}) but instance has (n={n}, m={m})")


def association_log_likelihood_from_tables(a: Mta, t: LocalTables) -> float:
    used = np.zeros(t.log_kappa.shape[0], dtype=bool)
    total = -t.clutter_rate
    for i, v in enumerate(a.assignments):
        if v:
            used[v - 1] = True
            total += t.log_det[i, v - 1]
        else:
            total += t.log_miss[i]
    return float(total + np.sum(t.log_kappa[~used]))


def association_log_likelihood(a: Mta, Z, ts: TrackSet, s: SensorModel) -> float:
    """log of the global association likelihood of ``a``."""
    t = local_tables(Z, ts, s)
    _check_consistent(a, len(ts), t.log_kappa.shape[0])
    return association_log_likelihood_from_tables(a, t)


def association_likelihood(a: Mta, Z, ts: TrackSet, s: SensorModel) -> float:
    return float(np.exp(association_log_likelihood(a, Z, ts, s)))


def total_association_log_likelihood(Z, ts: TrackSet, s: SensorModel) -> float:
    """log of the sum of association likelihoods over every MTA."""
    t = local_tables(Z, ts, s)
    n, m = len(ts), t.log_kappa.shape[0]
    check_exhaustive(n, m)
    terms = [association_log_likelihood_from_tables(a, t) for a in enumerate_mtas(n, m)]
    return float(logsumexp(terms))


def normalized_association_log_likelihood_from_tables(a: Mta, t: LocalTables) -> float:
    # c^Z prod l(z|i) / (c(z) (1 - l(0|i))) with the c(z) of each detection cancelled
    used = np.zeros(t.log_c.shape[0], dtype=bool)
    total = 0.0
    for i, v in enumerate(a.assignments):
        if not v:
            continue
        p_detect = -np.expm1(t.log_miss[i])
        if p_detect <= 0.0:
            raise ValueError(f"track {i} cannot be detected but is assigned measurement {v}")
        used[v - 1] = True
        total += t.log_det[i, v - 1] - np.log(p_detect)
    return float(total + np.sum(t.log_c[~used]))


def normalized_association_log_likelihood(a: Mta, Z, ts: TrackSet, s: SensorModel) -> float:
    t = local_tables(Z, ts, s)
    _check_consistent(a, len(ts), t.log_c.shape[0])
    return normalized_association_log_likelihood_from_tables(a, t)


def normalized_association_likelihood(a: Mta, Z, ts: TrackSet, s: SensorModel) -> float:
    """Association likelihood normalized as a density in the measurements."""
    return float(np.exp(normalized_association_log_likelihood(a, Z, ts, s)))


@dataclass(frozen=True)
class MtaPosterior:
    """Posterior weights over (m, MTA) pairs."""

    support: tuple[tuple[int, Mta], ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.support),) or np.any(w < 0):
            raise ValueError("weights must be nonnegative, one per support element")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.support)

    def items(self):
        return zip(self.support, self.weights)


def uniform_mta_prior(m: int, a: Mta) -> float:
    return 1.0


def mta_posterior(Z, ts: TrackSet, s: SensorModel,
                  prior: Callable[[int, Mta], float] = uniform_mta_prior) -> MtaPosterior:
    """Posterior over MTAs given Z.

    The likelihood vanishes unless m = |Z|, so only those MTAs carry weight;
    the default prior is uniform over them.
    """
    t = local_tables(Z, ts, s)
    n, m = len(ts), t.log_c.shape[0]
    check_exhaustive(n, m)
    support, logw = [], []
    for a in enumerate_mtas(n, m):
        p0 = prior(m, a)
        if p0 < 0:
            raise ValueError("prior weights must be nonnegative")
        lw = normalized_association_log_likelihood_from_tables(a, t) if p0 > 0 else -np.inf
        support.append((m, a))
        logw.append(lw + np.log(p0) if p0 > 0 else -np.inf)
    logw = np.asarray(logw)
    if not np.any(np.isfinite(logw)):
        raise ValueError("every MTA has zero posterior weight")
    w = np.exp(logw - logsumexp(logw))
    return MtaPosterior(tuple(support), w / w.sum())


def map_mta(p: MtaPosterior) -> tuple[int, Mta]:
    """Highest-weight (m, MTA); ties go to the lexicographically smallest assignment."""
    if not len(p):
        raise ValueError("empty posterior")
    best = max(p.weights)
    return min(sm for sm, w in p.items() if w == best)


def mta_state_estimate(best: tuple[int, Mta], Z, ts: TrackSet,
                       s: SensorModel) -> list[tuple[int, GaussianDensity]]:
    _, a = best
    Z = as_points(Z, s.z_dim)
    return [(i, bayes_update_density(ts[i], Z[v - 1], s)) for i, v in enumerate(a.assignments) if v]



@dataclass
class MapMtaTracker:
    """Baseline tracker for a known, fixed set of tracks.

    Each step predicts every track, picks the MAP MTA for the scan and
    updates only the tracks it assigns. No births, deaths or track mixing.
    """

    motion: MotionModel
    sensor: SensorModel
    tracks: list[GaussianDensity]

    def step(self, Z) -> tuple[int, Mta]:
        ts = TrackSet(tuple(predict_density(d, self.motion) for d in self.tracks))
        best = map_mta(mta_posterior(Z, ts, self.sensor))
        updated = dict(mta_state_estimate(best, Z, ts, self.sensor))
        self.tracks = [updated.get(i, ts[i]) for i in range(len(ts))]
        return best

    def estimates(self) -> np.ndarray:
        return np.stack([d.mean for d in self.tracks]) if self.tracks else np.zeros((0, self.motion.dim))


def mtas_as_array(n: int, m: int) -> np.ndarray:
    """All MTAs for (n, m) stacked as an (count, n) integer array (cached)."""
    return _MTA_ARRAYS(n, m)


class _MtaArrayCache:
    def __init__(self):
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def __call__(self, n, m):
        key = (n, m)
        if key not in self._cache:
            if count_mtas(n, m) > MAX_MTA_ARRAY:
                raise ValueError(f"{count_mtas(n, m)} MTAs for (n={n}, m={m}) exceeds {MAX_MTA_ARRAY}")
            arr = np.array([a.assignments for a in enumerate_mtas(n, m)], dtype=int).reshape(count_mtas(n, m), n)
            arr.setflags(write=False)
            self._cache[key] = arr
        return self._cache[key]


_MTA_ARRAYS = _MtaArrayCache()


def mta_log_terms(log_det: np.ndarray, log_miss: np.ndarray, log_kappa: np.ndarray,
                  alphas: np.ndarray | None = None) -> np.ndarray:
    """Per-MTA log of prod_miss * prod_det * prod_unassigned kappa.

    ``log_det`` may carry leading batch axes: shape (..., n, m), with
    ``log_miss`` (..., n) and ``log_kappa`` (..., m). Returns shape (..., A)
    where A indexes the rows of ``alphas`` (all MTAs by default).
    """
    n, m = log_det.shape[-2], log_det.shape[-1]
    if alphas is None:
        alphas = mtas_as_array(n, m)
    batch = np.broadcast_shapes(log_det.shape[:-2], np.shape(log_miss)[:-1], np.shape(log_kappa)[:-1])
    log_det = np.broadcast_to(log_det, batch + (n, m))
    log_miss = np.broadcast_to(log_miss, batch + (n,))
    log_kappa = np.broadcast_to(log_kappa, batch + (m,))
    # column 0 of the padded table is the missed-detection factor
    padded = np.concatenate([log_miss[..., None], log_det], axis=-1)  # (..., n, m+1)
    per_track = padded[..., np.arange(n)[None, :], alphas]  # (..., A, n)
    term = np.sum(per_track, axis=-1)
    used = np.zeros((alphas.shape[0], m + 1), dtype=bool)
    np.put_along_axis(used, alphas, True, axis=1)
    unused = ~used[:, 1:]  # (A, m)
    term = term + np.sum(np.where(unused, log_kappa[..., None, :], 0.0), axis=-1)
    return term


def log_factor_sum(log_det: np.ndarray, log_miss: np.ndarray, log_kappa: np.ndarray,
                   alphas: np.ndarray | None = None) -> np.ndarray:
    """logsumexp of :func:`mta_log_terms` over MTAs."""
    return logsumexp(mta_log_terms(log_det, log_miss, log_kappa, alphas), axis=-1)
