"""Probabilistic flight envelope estimation and envelope protection.

The pipeline runs trim -> Monte Carlo reachable-set sampling -> kernel
density estimation -> gridded envelope database -> protected closed-loop
simulation.  Heavy imports stay inside the submodules; this module only
re-exports the main entry points.
"""

__version__ = "0.1.0"

from .dynamics import AircraftModel, load_model  # noqa: E402
from .envelope_db import EnvelopeDatabase, build_database  # noqa: E402
from .grid import GridSpec  # noqa: E402
from .reachability import SamplerConfig, SampleSet, run_monte_carlo  # noqa: E402
from .sim import maneuver_a, maneuver_b, run_closed_loop  # noqa: E402
from .trim import TrimSet, build_trim_set, solve_trim  # noqa: E402

__all__ = [
    "__version__",
    "AircraftModel",
    "EnvelopeDatabase",
    "GridSpec",
    "SampleSet",
    "SamplerConfig",
    "TrimSet",
    "build_database",
    "build_trim_set",
    "load_model",
    "maneuver_a",
    "maneuver_b",
    "run_closed_loop",
    "run_monte_carlo",
    "solve_trim",
]
