import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stackdet import RegistryEntry, SpeakerRegistry


@pytest.fixture
def toy_registry():
    return SpeakerRegistry(
        [
            RegistryEntry("50399530", "fvth", "phee"),
            RegistryEntry("00000002", "aaab", "bbba"),
            RegistryEntry("00000003", "aaac", "bbbc"),
        ]
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
