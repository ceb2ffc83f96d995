import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spectraloc.lightsim import LightSource, Scene, Spot, Surface
from spectraloc.spectral import Spectrum, SubBandLayout

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def layout():
    return SubBandLayout.as7265x()


def small_scene_factory():
    """Three bands, one light, two non-proportional walls, four spots, two sensors."""
    lay = SubBandLayout((450.0, 550.0, 650.0), 400.0, 700.0)
    light = LightSource((0.0, 0.0, 2.5), Spectrum(lay, [5000.0, 6000.0, 5500.0]))
    walls = (
        Surface((-2.0, 0.0, 1.0), [0.8, 0.2, 0.1]),
        Surface((2.0, 0.0, 1.0), [0.1, 0.3, 0.9]),
    )
    spots = tuple(Spot(f"p{i}", x, y) for i, (x, y) in enumerate([(-1, -1), (-1, 1), (1, -1), (1, 1)]))
    offsets = (("front", (0.0, 0.1, 1.2)), ("hip", (0.15, 0.0, 0.9)))
    return Scene(lay, (light,), walls, spots, offsets)


@pytest.fixture
def small_scene():
    return small_scene_factory()


def rng(seed=0):
    return np.random.default_rng(seed)


# --- acceptance report ------------------------------------------------------------

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "details": []})
    entry["ok"] &= rep.passed
    if rep.when == "call":
        entry["details"] += [str(v) for k, v in item.user_properties if k == "measured"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        line = f"criterion {number}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["details"]:
            line += "  [" + "; ".join(e["details"]) + "]"
        terminalreporter.write_line(line)
