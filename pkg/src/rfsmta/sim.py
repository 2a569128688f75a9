"""Seeded scenario generation: labeled truth trajectories and cluttered measurement frames.

Randomness comes from counter-based Philox generators keyed by the run seed,
a stream name and the frame index, so truth, detections and clutter can be
replayed independently of one another.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .labeled import Label, LabeledStateSet
from .models import MotionModel, SensorModel
from .rfs import MeasurementSet

STREAMS = {"truth": 1, "detections": 2, "clutter": 3}


def stream(seed: int, name: str, k: int = 0) -> np.random.Generator:
    """Generator for the named stream at frame ``k``."""
    if name not in STREAMS:
        raise ValueError(f"unknown stream {name!r}; expected one of {sorted(STREAMS)}")
    ss = np.random.SeedSequence([int(seed), STREAMS[name], int(k)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TargetBirth:
    """Target appearing at step ``time`` with state ``state``; optional scheduled last step ``death``."""

    time: int
    state: tuple
    label: Label
    death: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "state", tuple(float(v) for v in np.ravel(self.state)))
        object.__setattr__(self, "label", Label(*self.label))
        if self.time < 1:
            raise ValueError("birth time must be at least 1")
        if self.death is not None and self.death < self.time:
            raise ValueError("death cannot precede birth")


@dataclass(frozen=True)
class Scenario:
    duration: int
    births: tuple[TargetBirth, ...]
    motion: MotionModel
    sensor: SensorModel
    seed: int = 0

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("duration must be at least 1")
        births = tuple(b if isinstance(b, TargetBirth) else TargetBirth(*b) for b in self.births)
        labels = [b.label for b in births]
        if len(set(labels)) != len(labels):
            raise ValueError("birth labels must be distinct")
        for b in births:
            if len(b.state) != self.motion.dim:
                raise ValueError(f"birth state for {b.label} has wrong dimension")
            if not self.sensor.in_region(self.sensor.H @ np.array(b.state)):
                raise ValueError(f"birth of {b.label} lies outside the surveillance region")
        object.__setattr__(self, "births", births)

    @property
    def region(self) -> np.ndarray:
        return self.sensor.region


@dataclass(frozen=True)
class Frame:
    """One scan. ``provenance[j]`` is the origin label of measurement j, or None for clutter."""

    k: int
    truth: LabeledStateSet
    measurements: MeasurementSet
    provenance: tuple

    def __post_init__(self):
        if len(self.provenance) != len(self.measurements):
            raise ValueError("provenance must cover every measurement exactly once")

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "truth": [[e.x.tolist(), list(e.label)] for e in self.truth],
            "measurements": self.measurements.points.tolist(),
        }

    def diagnostics_json(self) -> dict:
        return {"k": self.k, "provenance": [None if o is None else list(o) for o in self.provenance]}


def _gaussian_noise(rng: np.random.Generator, cov: np.ndarray) -> np.ndarray:
    # eigh tolerates singular covariances such as Q = 0
    return rng.multivariate_normal(np.zeros(len(cov)), cov, method="eigh")


def generate_truth(sc: Scenario) -> list[LabeledStateSet]:
    """Truth sets for steps 1..K; a target dies after its scheduled step or once Hx leaves the region."""
    alive: dict[Label, np.ndarray] = {}
    frames = []
    for k in range(1, sc.duration + 1):
        rng = stream(sc.seed, "truth", k)
        for label in sorted(alive):
            alive[label] = sc.motion.F @ alive[label] + _gaussian_noise(rng, sc.motion.Q)
        for b in sc.births:
            if b.time == k:
                alive[b.label] = np.array(b.state)
        for b in sc.births:
            if b.label in alive and b.death is not None and k > b.death:
                del alive[b.label]
        for label in sorted(alive):
            if not sc.sensor.in_region(sc.sensor.H @ alive[label]):
                del alive[label]
        frames.append(LabeledStateSet((x.copy(), label) for label, x in sorted(alive.items())))
    return frames


def generate_measurements(truth: LabeledStateSet, s: SensorModel, rng: np.random.Generator,
                          clutter_rng: np.random.Generator | None = None, k: int = 0) -> Frame:
    """Each target is detected with probability p_D; Poisson clutter is uniform over the region."""
    clutter_rng = rng if clutter_rng is None else clutter_rng
    items = []
    for e in truth:
        if rng.random() < s.p_D:
            z = s.H @ e.x + _gaussian_noise(rng, s.R)
            items.append((z, e.label))
    n_clutter = clutter_rng.poisson(s.clutter_rate) if s.clutter_rate > 0 else 0
    lo, hi = s.region[:, 0], s.region[:, 1]
    for z in clutter_rng.uniform(lo, hi, size=(n_clutter, s.z_dim)):
        items.append((z, None))
    if items:
        pts = np.stack([z for z, _ in items])
        order = np.lexsort(pts.T[::-1])
        Z = MeasurementSet(pts[order], dim=s.z_dim)
        prov = tuple(items[j][1] for j in order)
    else:
        Z, prov = MeasurementSet((), dim=s.z_dim), ()
    return Frame(k, truth, Z, prov)


def simulate(sc: Scenario) -> list[Frame]:
    frames = []
    for k, X in enumerate(generate_truth(sc), start=1):
        frames.append(generate_measurements(X, sc.sensor, stream(sc.seed, "detections", k),
                                            stream(sc.seed, "clutter", k), k))
    return frames


def write_frames(frames: Iterable[Frame], path, diagnostics_path=None) -> None:
    """Frames as JSON lines; provenance goes only to the optional diagnostics file."""
    frames = list(frames)
    with open(path, "w") as fh:
        for f in frames:
            fh.write(json.dumps(f.to_json()) + "\n")
    if diagnostics_path is not None:
        with open(diagnostics_path, "w") as fh:
            for f in frames:
                fh.write(json.dumps(f.diagnostics_json()) + "\n")


def read_frames(path) -> list[tuple[int, LabeledStateSet, MeasurementSet]]:
    out = []
    with open(path) as fh:
        for line in fh:
            doc = json.loads(line)
            X = LabeledStateSet((x, l) for x, l in doc["truth"])
            Z = np.array(doc["measurements"], dtype=float)
            out.append((doc["k"], X, MeasurementSet(Z, dim=Z.shape[1] if Z.ndim == 2 else None)))
    return out


def crossing_scenario(duration: int = 50, seed: int = 0, p_D: float = 0.95, clutter_rate: float = 1.0,
                      noise: float = 0.05, sigma_z: float = 1.0) -> Scenario:
    """Two constant-velocity targets in the plane whose paths cross mid-run."""
    mm = MotionModel.constant_velocity(2, 1.0, noise, p_S=0.99)
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    s = SensorModel(H, sigma_z ** 2 * np.eye(2), p_D, clutter_rate, [[-100, 100], [-100, 100]])
    v = 50.0 / duration
    births = (TargetBirth(1, (-25.0, -25.0, v, v), (1, 1)),
              TargetBirth(1, (-25.0, 25.0, v, -v), (1, 2)))
    return Scenario(duration, births, mm, s, seed)

