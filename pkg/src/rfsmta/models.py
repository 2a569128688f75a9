"""Single-target models: Gaussian densities, linear-Gaussian motion and
measurement models, and the uniform Poisson clutter model.

Densities are evaluated in the log domain; the linear-domain functions are
thin ``exp`` wrappers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

_LOG_2PI = np.log(2.0 * np.pi)


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_symmetric(a: np.ndarray, name: str, rtol: float = 1e-12) -> None:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")
    scale = max(np.max(np.abs(a)), 1e-300)
    if np.max(np.abs(a - a.T)) > rtol * scale:
        raise ValueError(f"{name} is not symmetric")


def gaussian_logpdf(x, mean, chol) -> np.ndarray:
    """Log of N(x; mean, L L^T) for rows of ``x``, given lower Cholesky ``chol``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = mean.shape[0]
    if x.shape[-1] != d:
        raise ValueError(f"dimension mismatch: expected {d}, got {x.shape[-1]}")
    r = solve_triangular(chol, (x - mean).T, lower=True)
    maha = np.sum(r * r, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * _LOG_2PI + logdet + maha)


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    """Gaussian track density with a validated covariance."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = _frozen(self.mean, 1, "mean")
        cov = _frozen(self.cov, 2, "covariance")
        _check_symmetric(cov, "covariance")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError(f"mean has dim {mean.shape[0]} but covariance is {cov.shape}")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite") from None
        chol.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def logpdf(self, x) -> np.ndarray:
        """Log density at each row of ``x`` (a single vector gives a length-1 array)."""
        return gaussian_logpdf(x, self.mean, self.chol)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def allclose(self, other: "GaussianDensity", atol: float = 1e-9) -> bool:
        return (
            self.dim == other.dim
            and np.allclose(self.mean, other.mean, rtol=0.0, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=0.0, atol=atol)
        )

    def __eq__(self, other):
        if not isinstance(other, GaussianDensity):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    __hash__ = None


def _symmetrized_density(mean, cov) -> GaussianDensity:
    cov = np.asarray(cov, dtype=float)
    return GaussianDensity(mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True, eq=False)
class MotionModel:
    """Linear-Gaussian transition x' = F x + w, w ~ N(0, Q), with survival p_S."""

    F: np.ndarray
    Q: np.ndarray
    p_S: float = 1.0

    def __post_init__(self):
        F = _frozen(self.F, 2, "F")
        Q = _frozen(self.Q, 2, "Q")
        if F.shape[0] != F.shape[1] or Q.shape != F.shape:
            raise ValueError(f"F {F.shape} and Q {Q.shape} must be matching square matrices")
        _check_symmetric(Q, "Q")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12 * max(1.0, np.max(np.abs(Q))):
            raise ValueError("Q is not positive semidefinite")
        if not 0.0 <= self.p_S <= 1.0:
            raise ValueError(f"p_S must lie in [0, 1], got {self.p_S}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "p_S", float(self.p_S))

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    @classmethod
    def constant_velocity(cls, ndim: int, dt: float, noise: float, p_S: float = 1.0):
        """Nearly-constant-velocity model with state ordered [positions, velocities]."""
        eye = np.eye(ndim)
        F = np.block([[eye, dt * eye], [np.zeros((ndim, ndim)), eye]])
        q = np.array([[dt**4 / 4, dt**3 / 2], [dt**3 / 2, dt**2]]) * noise**2
        Q = np.kron(q, eye)
        return cls(F, Q, p_S)


@dataclass(frozen=True, eq=False)
class SensorModel:
    """Linear-Gaussian sensor with constant p_D and uniform Poisson clutter.

    ``region`` is a (d_z, 2) array of [low, high] bounds for the clutter box.
    ``clutter_density`` defaults to 1/volume(region); an explicit value is
    accepted unchecked so that normalization checks can be exercised against
    a deliberately wrong model.
    """

    H: np.ndarray
    R: np.ndarray
    p_D: float
    clutter_rate: float
    region: np.ndarray
    clutter_density: float | None = None
    R_chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        H = _frozen(self.H, 2, "H")
        R = _frozen(self.R, 2, "R")
        region = _frozen(self.region, 2, "region")
        if R.shape != (H.shape[0], H.shape[0]):
            raise ValueError(f"R must be {H.shape[0]}x{H.shape[0]}, got {R.shape}")
        if region.shape != (H.shape[0], 2) or np.any(region[:, 1] <= region[:, 0]):
            raise ValueError(f"region must be ({H.shape[0]}, 2) with low < high")
        _check_symmetric(R, "R")
        try:
            R_chol = np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R is not positive definite") from None
        if not 0.0 <= self.p_D <= 1.0:
            raise ValueError(f"p_D must lie in [0, 1], got {self.p_D}")
        if self.clutter_rate < 0.0:
            raise ValueError(f"clutter rate must be nonnegative, got {self.clutter_rate}")
        density = self.clutter_density
        if density is None:
            density = 1.0 / float(np.prod(region[:, 1] - region[:, 0]))
        R_chol.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "region", region)
        object.__setattr__(self, "R_chol", R_chol)
        object.__setattr__(self, "p_D", float(self.p_D))
        object.__setattr__(self, "clutter_rate", float(self.clutter_rate))
        object.__setattr__(self, "clutter_density", float(density))

    @property
    def z_dim(self) -> int:
        return self.H.shape[0]

    @property
    def x_dim(self) -> int:
        return self.H.shape[1]

    @property
    def volume(self) -> float:
        return float(np.prod(self.region[:, 1] - self.region[:, 0]))

    def in_region(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.all((z >= self.region[:, 0]) & (z <= self.region[:, 1]), axis=-1)

    def clutter_spatial_density(self, z) -> np.ndarray:
        """c(z): uniform on the box, zero outside."""
        return np.where(self.in_region(z), self.clutter_density, 0.0)

    def log_clutter_intensity(self, z) -> np.ndarray:
        """log kappa(z) = log(lambda c(z)); -inf outside the box or when lambda = 0."""
        inside = self.in_region(z)
        if self.clutter_rate == 0.0 or self.clutter_density == 0.0:
            return np.full(inside.shape, -np.inf)
        return np.where(inside, np.log(self.clutter_rate * self.clutter_density), -np.inf)

    def clutter_intensity(self, z) -> np.ndarray:
        return np.exp(self.log_clutter_intensity(z))


def _check_dim(v: np.ndarray, d: int, what: str) -> None:
    if v.shape[-1] != d:
        raise ValueError(f"{what} has dimension {v.shape[-1]}, expected {d}")


def single_log_likelihood(z, x, s: SensorModel) -> np.ndarray:
    """log N(z; H x, R), broadcast over rows of ``z`` and/or ``x``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_dim(z, s.z_dim, "measurement")
    _check_dim(x, s.x_dim, "state")
    resid = z - x @ s.H.T
    flat = resid.reshape(-1, s.z_dim)
    r = solve_triangular(s.R_chol, flat.T, lower=True)
    maha = np.sum(r * r, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(s.R_chol)))
    return (-0.5 * (s.z_dim * _LOG_2PI + logdet + maha)).reshape(resid.shape[:-1])


def single_likelihood(z, x, s: SensorModel):
    """f(z|x) for a single pair returns a float; batched inputs return an array."""
    out = np.exp(single_log_likelihood(z, x, s))
    return float(out[0]) if out.size == 1 else out


def predict_density(prior: GaussianDensity, mm: MotionModel) -> GaussianDensity:
    """Push a Gaussian through the linear motion model."""
    if prior.dim != mm.dim:
        raise ValueError(f"density has dim {prior.dim}, motion model has dim {mm.dim}")
    mean = mm.F @ prior.mean
    cov = mm.F @ prior.cov @ mm.F.T + mm.Q
    return _symmetrized_density(mean, cov)


def innovation(prior: GaussianDensity, s: SensorModel) -> tuple[np.ndarray, np.ndarray]:
    """Predicted measurement mean H m and covariance H P H^T + R."""
    if prior.dim != s.x_dim:
        raise ValueError(f"density has dim {prior.dim}, sensor expects {s.x_dim}")
    S = s.H @ prior.cov @ s.H.T + s.R
    return s.H @ prior.mean, 0.5 * (S + S.T)


def bayes_update_density(prior: GaussianDensity, z, s: SensorModel) -> GaussianDensity:
    """Kalman measurement update of ``prior`` with measurement ``z``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    _check_dim(z, s.z_dim, "measurement")
    zhat, S = innovation(prior, s)
    try:
        S_chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ValueError("innovation covariance is singular") from None
    PHt = prior.cov @ s.H.T
    # K = P H^T S^-1 via two triangular solves
    K = solve_triangular(S_chol, solve_triangular(S_chol, PHt.T, lower=True), lower=True, trans="T").T
    mean = prior.mean + K @ (z - zhat)
    # Joseph form keeps the covariance PSD
    IKH = np.eye(prior.dim) - K @ s.H
    cov = IKH @ prior.cov @ IKH.T + K @ s.R @ K.T
    return _symmetrized_density(mean, cov)


def map_estimate(d: GaussianDensity) -> np.ndarray:
    return d.mean.copy()


def clutter_set_log_density(Z, s: SensorModel) -> float:
    """log of e^{-lambda} prod_z kappa(z)."""
    Z = np.asarray(Z, dtype=float).reshape(-1, s.z_dim)
    return float(-s.clutter_rate + np.sum(s.log_clutter_intensity(Z))) if len(Z) else -s.clutter_rate


def clutter_set_density(Z, s: SensorModel) -> float:
    return float(np.exp(clutter_set_log_density(Z, s)))


def as_points(P, d: int) -> np.ndarray:
    """Coerce a point collection (array, list of vectors, or set type) to a (k, d) array."""
    P = getattr(P, "points", P)
    arr = np.asarray(P, dtype=float)
    if arr.size == 0:
        return np.zeros((0, d))
    arr = arr.reshape(-1, d) if arr.ndim < 2 else arr
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {arr.shape}")
    return arr
