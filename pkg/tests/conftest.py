import numpy as np
import pytest

from rfsmta.association import TrackSet
from rfsmta.models import GaussianDensity, SensorModel


def sensor_1d(p_D=0.9, clutter_rate=1.0, R=0.5, region=(-20.0, 20.0), **kw):
    return SensorModel([[1.0]], [[R]], p_D, clutter_rate, [list(region)], **kw)


def random_tracks(rng, n, spread=8.0):
    return TrackSet(tuple(GaussianDensity([rng.uniform(-spread, spread)], [[rng.uniform(0.5, 2.0)]])
                          for _ in range(n)))


def random_scan(rng, ts, m):
    """m measurements: up to one near each track, the rest uniform."""
    near = [ts[i].mean[0] + rng.normal(0, 1.5) for i in rng.permutation(len(ts))[: min(len(ts), m)]]
    return np.array(near + list(rng.uniform(-10, 10, m - len(near)))).reshape(m, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
