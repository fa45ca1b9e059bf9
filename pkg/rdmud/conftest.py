import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch):
    """Tests never see a developer's seed, worker or log overrides."""
    for name in ("RDMUD_SEED", "RDMUD_WORKERS", "RDMUD_LOG_DIR"):
        monkeypatch.delenv(name, raising=False)
    yield
