import numpy as np
import pytest

from probenv.dynamics import load_model
from probenv.envelope_db import build_database
from probenv.grid import PROTECTION_GRID, GridSpec
from probenv.reachability import BACKWARD, FORWARD, SamplerConfig, run_monte_carlo
from probenv.sim import SURROGATE_PEAK_A, maneuver_a, run_closed_loop
from probenv.trim import build_trim_set

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def fighter():
    return load_model("generic-fighter-6dof")


@pytest.fixture(scope="session")
def pendulum():
    return load_model("pendulum-2d")


@pytest.fixture(scope="session")
def trim_set(fighter):
    return build_trim_set(fighter)


@pytest.fixture(scope="session")
def small_trim_set(fighter):
    return build_trim_set(fighter, grid_steps=(3, 5))


@pytest.fixture(scope="session")
def scenario_samples(fighter, trim_set):
    cfg = SamplerConfig(T_f=1.5, N=10000, seed=0)
    return {d: run_monte_carlo(fighter, trim_set, cfg, d) for d in (FORWARD, BACKWARD)}


@pytest.fixture(scope="session")
def scenario_db(scenario_samples):
    db, _ = build_database(scenario_samples[FORWARD], scenario_samples[BACKWARD], GridSpec.parse(PROTECTION_GRID))
    return db


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario_runs(fighter, scenario_db):
    """Maneuver A analog flown with each protection mode, paired on seed 0."""
    man = maneuver_a(SURROGATE_PEAK_A)
    return {mode: run_closed_loop(fighter, fep_mode=mode, db=scenario_db,
                                  maneuver=man, T_end=10.0, seed=0)
            for mode in ("none", "scb", "prob")}
