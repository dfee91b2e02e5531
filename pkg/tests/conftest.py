from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

from golden_fixtures import FIXTURE, MOCK_DIR  # noqa: E402

from claimkit.dataset import load_dataset  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def fixture_path() -> Path:
    return FIXTURE


@pytest.fixture(scope="session")
def mock_dir() -> Path:
    return MOCK_DIR


@pytest.fixture()
def fixture_ds():
    return load_dataset(FIXTURE)


@pytest.fixture()
def worked_dialogue(fixture_ds):
    return fixture_ds["fx-01"].dialogue
