import pytest

from asmux.optimize import OptimizerSettings


@pytest.fixture
def light_settings() -> OptimizerSettings:
    """Small GA budget; the coordinate polish supplies the precision."""
    return OptimizerSettings(
        population=16,
        max_generations=20,
        stall_generations=6,
        restarts=1,
        seed=1234,
    )
