"""OSPA miss-distance between finite sets and helpers for scoring tracker output."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from math import perm
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

EXHAUSTIVE_MIN_SIZE = 6
EXHAUSTIVE_MAX_INJECTIONS = 200_000


@dataclass(frozen=True)
class OspaParams:
    """Cutoff ``c`` (state units) and order ``p``."""

    c: float = 10.0
    p: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"cutoff c must be finite and positive, got {self.c}")
        if not (np.isfinite(self.p) and self.p >= 1):
            raise ValueError(f"order p must be finite and at least 1, got {self.p}")


def _points(X) -> np.ndarray:
    arr = np.asarray(getattr(X, "points", X), dtype=float)
    if arr.size == 0:
        return np.zeros((0, arr.shape[-1] if arr.ndim == 2 else 1))
    return arr.reshape(len(arr), -1) if arr.ndim != 2 else arr


def _canonical_pair(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # fixed argument order so that ospa(X, Y) and ospa(Y, X) run identical arithmetic
    if len(A) != len(B):
        return (A, B) if len(A) < len(B) else (B, A)
    sa, sb = np.sort(A, axis=None), np.sort(B, axis=None)
    diff = np.flatnonzero(sa != sb)
    if diff.size and sb[diff[0]] < sa[diff[0]]:
        return B, A
    return A, B


def optimal_assignment_cost(D: np.ndarray) -> float:
    """Minimum of sum_i D[i, sigma(i)] over injections sigma; requires rows <= columns."""
    a, b = D.shape
    if a == 0:
        return 0.0
    if a <= EXHAUSTIVE_MIN_SIZE and perm(b, a) <= EXHAUSTIVE_MAX_INJECTIONS:
        perms = np.array(list(itertools.permutations(range(b), a)))
        return float(D[np.arange(a), perms].sum(axis=1).min())
    rows, cols = linear_sum_assignment(D)
    return float(D[rows, cols].sum())


def ospa(X, Y, params: OspaParams = OspaParams()) -> float:
    """OSPA distance of order p with cutoff c; labels, if any, are ignored."""
    A, B = _canonical_pair(_points(X), _points(Y))
    a, b = len(A), len(B)
    if b == 0:
        return 0.0
    if a == 0:
        return float(params.c)
    if A.shape[1] != B.shape[1]:
        raise ValueError("sets have different state dimensions")
    d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    D = np.minimum(d, params.c) ** params.p
    total = optimal_assignment_cost(D) + params.c ** params.p * (b - a)
    return float((total / b) ** (1.0 / params.p))


def ospa_over_time(truth: Sequence, est: Sequence, params: OspaParams = OspaParams()) -> list[float]:
    if len(truth) != len(est):
        raise ValueError(f"sequence lengths differ: {len(truth)} vs {len(est)}")
    return [ospa(x, y, params) for x, y in zip(truth, est)]


def write_ospa_csv(path, truth: Sequence, est: Sequence, params: OspaParams = OspaParams(),
                   steps: Sequence[int] | None = None) -> list[float]:
    """Write columns k, ospa, cardinality_truth, cardinality_est; returns the OSPA series."""
    values = ospa_over_time(truth, est, params)
    steps = range(1, len(values) + 1) if steps is None else steps
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "ospa", "cardinality_truth", "cardinality_est"])
        for k, v, x, y in zip(steps, values, truth, est):
            w.writerow([k, repr(v), len(_points(x)), len(_points(y))])
    return values
