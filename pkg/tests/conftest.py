import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from railscope.floorplan import load_scenario, parse_floorplan

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.register_profile("thorough", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


SMALL_FP = """
emissivity_map_seed = 7

[die]
width_um = 400.0
height_um = 300.0
grid_pitch_um = 10.0

[material]
thermal_diffusivity_um2_per_s = 1413.7167
emissivity_contrast = 0.2

[[rails]]
id = "a"
name = "vcc_a_0p82"
nominal_voltage_v = 0.82

[[rails]]
id = "b"
name = "vcc_b_1p05"
nominal_voltage_v = 1.05

[[regions]]
name = "a_strap"
rail_id = "a"
kind = "supply"
shape = { rect = [20.0, 20.0, 100.0, 60.0] }
power_density_uw_per_um2 = 2.0
reflect_sensitivity = 0.3

[[regions]]
name = "a_logic"
rail_id = "a"
kind = "logic"
shape = { rect = [200.0, 20.0, 160.0, 120.0] }
power_density_uw_per_um2 = 1.0
reflect_sensitivity = 0.2
speckle_fill = 0.5
speckle_pitch_um = 20.0

[[regions]]
name = "b_ring"
rail_id = "b"
kind = "supply"
shape = { polygon = [[20.0, 200.0], [380.0, 200.0], [380.0, 280.0], [20.0, 280.0]] }
power_density_uw_per_um2 = 1.5
reflect_sensitivity = 0.1
"""


@pytest.fixture(scope="session")
def small_fp_text():
    return SMALL_FP


@pytest.fixture(scope="session")
def small_fp():
    return parse_floorplan(SMALL_FP)


@pytest.fixture(scope="session")
def pch():
    return load_scenario("pch_like.fp")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def diffusion_oracle():
    """Explicit-FD point-source response on 128x128 with mu = 6 px."""
    import oracles

    amp, lag, src = oracles.diffusion_lockin(n=128, mu=6.0)
    return {"amplitude": amp, "lag": lag, "source": src, "mu": 6.0}


def point_source_floorplan(mu_um=6.0, f_hz=50.0, n=128, pitch=1.0):
    """Single-pixel supply source at the centre of an n x n die."""
    from railscope.floorplan import Die, Floorplan, MaterialParams, Rail, Rect, Region

    alpha = math.pi * f_hz * mu_um**2
    c = (n // 2) * pitch
    return Floorplan(
        Die(n * pitch, n * pitch, pitch),
        (Rail("a", "vcc_a", 1.0),),
        (Region("a", Rect(c, c, pitch, pitch), "supply", 1.0, 0.0, name="dot"),),
        0,
        MaterialParams(thermal_diffusivity_um2_per_s=alpha, emissivity_contrast=0.0),
    )


@pytest.fixture(scope="session")
def pch_runs():
    """Default-configuration pipeline runs on the shipped scenario, computed once.

    Keys are ``(technique, rail)``; values are ``(PipelineResult, seconds)``.
    """
    import time

    from railscope.pipeline import run_pipeline, scenario_config

    cache = {}

    def get(technique, rail):
        key = (technique, rail)
        if key not in cache:
            cfg = scenario_config(f"{technique}_{rail}.toml")
            t = time.perf_counter()
            res = run_pipeline(cfg)
            cache[key] = (res, time.perf_counter() - t)
        return cache[key]

    return get


# -- acceptance summary ------------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_ac" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        name = report.nodeid.split("::test_ac")[1][:2]
        measured = dict(report.user_properties).get("measured", "")
        prev = _ACCEPTANCE.get(name)
        ok = report.passed and (prev is None or prev[0])
        _ACCEPTANCE[name] = (ok, "; ".join(m for m in (prev[1] if prev else "", measured) if m))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        ok, measured = _ACCEPTANCE[name]
        terminalreporter.write_line(f"AC{name} {'PASS' if ok else 'FAIL'}  {measured}")
