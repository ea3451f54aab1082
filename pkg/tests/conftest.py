import sys
from pathlib import Path

import pytest

from rangedam.config import set_precision

# tests import shared oracles as a plain module
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(autouse=True)
def verify_mode():
    """Every test runs in verification precision unless it switches explicitly."""
    set_precision("verify")
    yield
    set_precision("verify")
