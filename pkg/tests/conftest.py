import pytest

from leafctl.fixtures import reference_model
from leafctl.model import BuildPlan


@pytest.fixture
def bench_model():
    """The model calibrated from the canonical bench dataset."""
    return reference_model()


@pytest.fixture
def plan_3_30():
    return BuildPlan(n=3, target_k=30.0)


@pytest.fixture
def plan_3_40():
    return BuildPlan(n=3, target_k=40.0)
