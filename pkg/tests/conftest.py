import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None,
)
settings.load_profile("ci")


@pytest.fixture
def three_point_line():
    """1-D points {0, 1, 10}: the hand-checkable selection instance."""
    return np.array([[0.0], [1.0], [10.0]])
