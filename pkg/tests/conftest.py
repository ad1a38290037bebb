import os

import hypothesis
import numpy as np
import pytest
from hypothesis import strategies as st

np.seterr(all="raise", under="ignore")

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=400, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


recharge_probs = st.floats(min_value=0.005, max_value=1.0, allow_nan=False)
open_probs = st.floats(min_value=0.005, max_value=0.995, allow_nan=False)
capacities = st.floats(min_value=0.0, max_value=2000.0, allow_nan=False)
positive_capacities = st.floats(min_value=1e-3, max_value=2000.0, allow_nan=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
