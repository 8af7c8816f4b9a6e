"""Shared fixtures. The closed-loop runs are expensive (several wall seconds
each), so they are session-scoped and shared between the acceptance suite and
the telemetry tests."""

import numpy as np
import pytest

from flipthrow import config_from_dict, run


@pytest.fixture(scope="session")
def default_config():
    return config_from_dict({})


@pytest.fixture(scope="session")
def nominal_report(default_config):
    return run(default_config)


@pytest.fixture(scope="session")
def capped_report():
    cfg = config_from_dict({"mission": {"profile": {"rate_cap": 11.0}}})
    return run(cfg)


@pytest.fixture(scope="session")
def trial_reports(default_config):
    """Eight missions from perturbed starts, mirroring the flip-trials CLI.

    Divergences are captured rather than raised so the repeatability
    criterion can report them as failures.
    """
    from flipthrow import SimDivergedError

    rng = np.random.default_rng(default_config.seed)
    offsets = rng.uniform(-0.05, 0.05, size=(8, 3))
    out = []
    for off in offsets:
        try:
            out.append({"offset": off, "report": run(default_config, initial_offset=off), "error": None})
        except SimDivergedError as exc:
            out.append({"offset": off, "report": None, "error": exc})
    return out
