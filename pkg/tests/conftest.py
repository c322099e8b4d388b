import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from score_forge.kb import load_seed_kb  # noqa: E402
from score_forge.renderer import default_templates  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def kb():
    return load_seed_kb()


@pytest.fixture(scope="session")
def tables():
    return default_templates()


@pytest.fixture
def fixtures_dir():
    return FIXTURES
