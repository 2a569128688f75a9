"""Command-line entry points: ``track``, ``verify`` and ``mta-map``.

A run is described by one JSON document with flat dotted keys, for example
``{"seed": 3, "sensor.p_D": 0.95, "filter.type": "glmb-gibbs"}``. Keys not
given take the defaults in :data:`DEFAULTS`; unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from .association import MapMtaTracker, TrackSet, enumerate_mtas
from .glmb_filter import (
    BirthEntry,
    BirthModel,
    GlmbTracker,
    estimate_states,
    initial_state,
    update,
)
from .labeled import GlmbComponent, GlmbDistribution, glmb_cardinality, labeled_set_integral
from .metrics import OspaParams, write_ospa_csv
from .models import GaussianDensity, MotionModel, SensorModel
from .quadrature import Grid
from .rfs import (
    clutter_set_integral,
    default_state_grid,
    likelihood_set_integral,
    multitarget_likelihood,
    multitarget_likelihood_partition_oracle,
    normalized_association_set_integral,
    relative_gap,
    verify_mta_rfs_identity,
)
from .sim import Scenario, TargetBirth, simulate, write_frames

FILTER_TYPES = ("glmb-exhaustive", "glmb-gibbs", "map-mta-tracker")

DEFAULTS: dict = {
    "seed": 0,
    "scenario.duration": 50,
    "scenario.births": [],
    "motion.model": "cv",
    "motion.ndim": 2,
    "motion.dt": 1.0,
    "motion.noise": 0.05,
    "motion.F": None,
    "motion.Q": None,
    "motion.p_S": 0.99,
    "sensor.H": None,
    "sensor.R": None,
    "sensor.sigma": 1.0,
    "sensor.p_D": 0.95,
    "sensor.clutter_rate": 1.0,
    "sensor.region": [[-100.0, 100.0], [-100.0, 100.0]],
    "sensor.clutter_density": None,
    "filter.type": "glmb-exhaustive",
    "filter.max_components": 100,
    "filter.gibbs_sweeps": 100,
    "filter.birth": None,
    "filter.birth_r": 0.01,
    "filter.birth_cov": None,
    "filter.initial": None,
    "mta.tracks": None,
    "ospa.c": 10.0,
    "ospa.p": 1.0,
    "ospa.indices": None,
    "output.dir": "out",
    "verify.instances": 12,
    "verify.grid_points": 400,
    "verify.clutter_density": None,
    "verify.tol.identity": 1e-4,
    "verify.tol.oracle": 1e-10,
    "verify.tol.likelihood": 1e-4,
    "verify.tol.normalized": 1e-5,
    "verify.tol.clutter": 1e-6,
    "verify.tol.labeled": 1e-5,
}


class ConfigError(Exception):
    pass


def load_config(path, seed: int | None = None, out: str | None = None) -> dict:
    """Read, validate and resolve a config file against the defaults."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    cfg = {**DEFAULTS, **doc}
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["output.dir"] = out
    _check(cfg)
    return cfg


def _check(cfg: dict) -> None:
    def need(key, ok, what):
        if not ok:
            raise ConfigError(f"config key {key!r} {what}, got {cfg[key]!r}")

    need("seed", isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2**64, "must be an unsigned 64-bit integer")
    need("scenario.duration", isinstance(cfg["scenario.duration"], int) and cfg["scenario.duration"] >= 1,
         "must be a positive integer")
    need("filter.type", cfg["filter.type"] in FILTER_TYPES, f"must be one of {FILTER_TYPES}")
    need("motion.model", cfg["motion.model"] in ("cv", "linear"), "must be 'cv' or 'linear'")
    for key in ("filter.max_components", "filter.gibbs_sweeps", "verify.instances", "verify.grid_points"):
        need(key, isinstance(cfg[key], int) and cfg[key] >= 1, "must be a positive integer")
    need("scenario.births", isinstance(cfg["scenario.births"], list), "must be a list")
    need("output.dir", isinstance(cfg["output.dir"], str) and cfg["output.dir"], "must be a path")


def _build(key: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"invalid value under {key!r}: {e}") from None


def motion_from(cfg) -> MotionModel:
    if cfg["motion.model"] == "cv":
        return _build("motion", MotionModel.constant_velocity, cfg["motion.ndim"], cfg["motion.dt"],
                      cfg["motion.noise"], cfg["motion.p_S"])
    if cfg["motion.F"] is None or cfg["motion.Q"] is None:
        raise ConfigError("config key 'motion.F' and 'motion.Q' are required when motion.model is 'linear'")
    return _build("motion", MotionModel, cfg["motion.F"], cfg["motion.Q"], cfg["motion.p_S"])


def sensor_from(cfg, mm: MotionModel) -> SensorModel:
    H = cfg["sensor.H"]
    if H is None:
        if cfg["motion.model"] != "cv":
            raise ConfigError("config key 'sensor.H' is required when motion.model is 'linear'")
        d = cfg["motion.ndim"]
        H = np.hstack([np.eye(d), np.zeros((d, mm.dim - d))])
    H = np.asarray(H, dtype=float)
    R = cfg["sensor.R"]
    if R is None:
        R = cfg["sensor.sigma"] ** 2 * np.eye(H.shape[0])
    return _build("sensor", SensorModel, H, R, cfg["sensor.p_D"], cfg["sensor.clutter_rate"],
                  cfg["sensor.region"], cfg["sensor.clutter_density"])


def scenario_from(cfg) -> Scenario:
    mm = motion_from(cfg)
    s = sensor_from(cfg, mm)
    births = []
    for j, b in enumerate(cfg["scenario.births"]):
        key = f"scenario.births[{j}]"
        if not isinstance(b, dict) or "state" not in b:
            raise ConfigError(f"config key {key!r} needs at least a 'state'")
        births.append(_build(key, TargetBirth, b.get("time", 1), b["state"],
                             b.get("label", (b.get("time", 1), j + 1)), b.get("death")))
    return _build("scenario", Scenario, cfg["scenario.duration"], tuple(births), mm, s, cfg["seed"])


def _default_cov(cfg, dim: int) -> np.ndarray:
    cov = cfg["filter.birth_cov"]
    return np.diag([4.0] * (dim // 2) + [1.0] * (dim - dim // 2)) if cov is None else np.asarray(cov, dtype=float)


def birth_from(cfg, sc: Scenario) -> BirthModel:
    given = cfg["filter.birth"]
    if given is None:
        cov = _default_cov(cfg, sc.motion.dim)
        given = [{"mean": list(b.state), "cov": cov.tolist(), "r": cfg["filter.birth_r"]} for b in sc.births]
    entries = []
    for j, e in enumerate(given):
        key = f"filter.birth[{j}]"
        dens = _build(key, GaussianDensity, e.get("mean"), e.get("cov"))
        entries.append(_build(key, BirthEntry, dens, e.get("r", cfg["filter.birth_r"]), e.get("steps")))
    return BirthModel(tuple(entries))


def initial_from(cfg):
    doc = cfg["filter.initial"]
    if doc is None:
        return initial_state()
    return initial_state(_build("filter.initial", GlmbDistribution.from_json, doc))


def tracks_from(cfg, sc: Scenario) -> list[GaussianDensity]:
    given = cfg["mta.tracks"]
    if given is None:
        if not sc.births:
            raise ConfigError("config key 'mta.tracks' is required when the scenario has no births")
        cov = _default_cov(cfg, sc.motion.dim)
        return [GaussianDensity(b.state, cov) for b in sc.births]
    return [_build(f"mta.tracks[{j}]", GaussianDensity, t.get("mean"), t.get("cov")) for j, t in enumerate(given)]


def _project(points: np.ndarray, cfg) -> np.ndarray:
    idx = cfg["ospa.indices"]
    return points if idx is None or len(points) == 0 else points[:, idx]


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def _write_manifest(out: Path, cfg: dict, command: str) -> None:
    # the output directory is not part of the run's identity
    resolved = {k: v for k, v in cfg.items() if k != "output.dir"}
    (out / "manifest.json").write_text(json.dumps({"command": command, "config": resolved}, indent=1) + "\n")


def _ospa_params(cfg) -> OspaParams:
    return _build("ospa", OspaParams, cfg["ospa.c"], cfg["ospa.p"])


def run_track(cfg: dict) -> int:
    if cfg["filter.type"] == "map-mta-tracker":
        return run_mta_map(cfg)
    sc = scenario_from(cfg)
    params = _ospa_params(cfg)
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    frames = simulate(sc)
    write_frames(frames, out / "frames.jsonl", out / "diagnostics.jsonl")
    tracker = GlmbTracker(sc.motion, sc.sensor, birth_from(cfg, sc),
                          method="gibbs" if cfg["filter.type"] == "glmb-gibbs" else "exhaustive",
                          max_components=cfg["filter.max_components"], gibbs_sweeps=cfg["filter.gibbs_sweeps"],
                          seed=cfg["seed"], state=initial_from(cfg))
    trace, estimates = [], []
    for f in frames:
        st = tracker.step(f.measurements)
        X = estimate_states(st)
        estimates.append(X)
        est = [{"label": list(e.label), "mean": e.x.tolist()} for e in X]
        trace.append({"k": f.k, "components": len(st.distribution),
                      "cardinality": glmb_cardinality(st.distribution).tolist(),
                      "estimates": est, "dropped_mass": st.dropped_mass})
    _write_jsonl(out / "trace.jsonl", trace)
    _write_jsonl(out / "estimates.jsonl", ({"k": t["k"], "estimates": t["estimates"]} for t in trace))
    write_ospa_csv(out / "ospa.csv", [_project(f.truth.points, cfg) if len(f.truth) else [] for f in frames],
                   [_project(X.points, cfg) if len(X) else [] for X in estimates], params,
                   [f.k for f in frames])
    _write_manifest(out, cfg, "track")
    return 0


def run_mta_map(cfg: dict) -> int:
    sc = scenario_from(cfg)
    params = _ospa_params(cfg)
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    frames = simulate(sc)
    write_frames(frames, out / "frames.jsonl", out / "diagnostics.jsonl")
    tracker = MapMtaTracker(sc.motion, sc.sensor, tracks_from(cfg, sc))
    records, estimates = [], []
    for f in frames:
        best = _build("mta", tracker.step, f.measurements)
        E = tracker.estimates()
        estimates.append(E)
        records.append({"k": f.k, "mta": list(best[1].assignments),
                        "estimates": [{"track": i, "mean": x.tolist()} for i, x in enumerate(E)]})
    _write_jsonl(out / "estimates.jsonl", records)
    write_ospa_csv(out / "ospa.csv", [_project(f.truth.points, cfg) if len(f.truth) else [] for f in frames],
                   [_project(E, cfg) for E in estimates], params, [f.k for f in frames])
    _write_manifest(out, cfg, "mta-map")
    return 0


# ---------------------------------------------------------------------------
# verification suite

# (n, m, clutter rate); a clutter-free scan never holds more measurements than tracks
VERIFY_INSTANCES = (
    (1, 0, 0.0), (1, 1, 0.0), (2, 2, 0.0), (3, 3, 0.0), (3, 2, 0.0),
    (1, 2, 0.5), (2, 0, 0.5), (2, 3, 0.5), (3, 4, 0.5), (3, 1, 0.5),
    (1, 4, 1.0), (2, 1, 1.0), (2, 4, 1.0), (3, 0, 1.0), (3, 3, 1.0),
)


def _verify_instance(j: int, base_seed: int, cfg: dict):
    """Seeded 1-D instance j: sensor, tracks and a measurement set near the tracks."""
    seed = int(base_seed) + j
    rng = np.random.default_rng(seed)
    n, m, lam = VERIFY_INSTANCES[j % len(VERIFY_INSTANCES)]
    s = SensorModel([[1.0]], [[0.5]], 0.9, lam, [[-20.0, 20.0]], cfg["verify.clutter_density"])
    ts = TrackSet(tuple(GaussianDensity([rng.uniform(-8, 8)], [[rng.uniform(0.5, 2.0)]]) for _ in range(n)))
    near = [ts[i].mean[0] + rng.normal(0, 1.5) for i in rng.permutation(n)[: min(n, m)]]
    Z = np.array(near + list(rng.uniform(-10, 10, m - len(near)))).reshape(m, 1)
    return seed, rng, s, ts, Z


def verify_suite(cfg: dict) -> list[dict]:
    records = []

    def rec(check, lhs, rhs, tol, seed, **info):
        gap = relative_gap(lhs, rhs)
        records.append({"check": check, "lhs": lhs, "rhs": rhs, "relative_gap": gap, "tolerance": tol,
                        "passed": bool(gap <= tol), "seed": seed, **info})

    points = cfg["verify.grid_points"]
    for j in range(cfg["verify.instances"]):
        seed, rng, s, ts, Z = _verify_instance(j, cfg["seed"], cfg)
        n, m = len(ts), len(Z)
        info = {"n": n, "m": m, "clutter_rate": s.clutter_rate}
        r = verify_mta_rfs_identity(Z, ts, s, default_state_grid(ts, points, Z=Z, s=s))
        rec("rfs_mta_identity", r.lhs, r.rhs, cfg["verify.tol.identity"], seed, **info)
        X = np.array([t.mean + rng.normal(0, 1, 1) for t in ts])
        if m <= 3:
            rec("likelihood_partition_oracle", multitarget_likelihood(Z, X, s),
                multitarget_likelihood_partition_oracle(Z, X, s), cfg["verify.tol.oracle"], seed, **info)
        if n <= 2:
            rec("likelihood_normalization", likelihood_set_integral(X, s, points=points), 1.0,
                cfg["verify.tol.likelihood"], seed, **info)
        mtas = list(enumerate_mtas(n, m))
        a = mtas[int(rng.integers(len(mtas)))]
        rec("normalized_association_normalization", normalized_association_set_integral(a, ts, s, points),
            1.0, cfg["verify.tol.normalized"], seed, mta=list(a.assignments), **info)
        if s.clutter_rate > 0:
            rec("clutter_normalization", clutter_set_integral(s, 8, points), float(poisson.cdf(8, s.clutter_rate)),
                cfg["verify.tol.clutter"], seed, **info)
        g = _verify_glmb(ts, Z, s)
        grid = Grid.covering([d.mean[0] for c in g for d in c.densities] or [0.0],
                             [np.sqrt(d.cov[0, 0]) for c in g for d in c.densities] or [1.0],
                             points=points)
        rec("glmb_labeled_normalization", labeled_set_integral(g, grid), 1.0, cfg["verify.tol.labeled"], seed,
            components=len(g), **info)
    return records


def _verify_glmb(ts: TrackSet, Z, s: SensorModel) -> GlmbDistribution:
    # one exhaustive update of a GLMB whose labels are the instance's tracks
    labels = [(0, i + 1) for i in range(len(ts))]
    prior = GlmbDistribution((GlmbComponent(labels, 1.0, ts.tracks),))
    st = update(initial_state(prior), Z, s, None)
    return st.distribution


def run_verify(cfg: dict) -> int:
    records = verify_suite(cfg)
    report = {"seed": cfg["seed"], "passed": all(r["passed"] for r in records), "checks": records}
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_report.json").write_text(json.dumps(report, indent=1) + "\n")
    _write_manifest(out, cfg, "verify")
    failing = [r for r in records if not r["passed"]]
    for r in failing:
        print(f"FAIL {r['check']} seed={r['seed']} gap={r['relative_gap']:.3e} tol={r['tolerance']:.1e}",
              file=sys.stderr)
    print(f"{len(records) - len(failing)}/{len(records)} checks passed; report in {out / 'verify_report.json'}")
    return 1 if failing else 0


COMMANDS = {"track": run_track, "verify": run_verify, "mta-map": run_mta_map}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="rfsmta", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="random seed (overrides seed)")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"rfsmta: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
