import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("singlat", deadline=None, max_examples=60)
settings.load_profile("singlat")

PHI_FRAC = (math.sqrt(5) - 1) / 2
# golden-ratio fractional part to 60 digits, for exact-input runs
PHI_FRAC_60 = "0.618033988749894848204586834365638117720309179805762862135449"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
