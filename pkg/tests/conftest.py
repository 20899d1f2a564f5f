import pytest

from hrtfkit import pipeline, testkit


@pytest.fixture(scope="session")
def small_world():
    """12 subjects, 3 components, 6 directions: fast exact-linear world."""
    return testkit.synth_generate(subjects=12, q=3, seed=7, n_directions=6)


@pytest.fixture(scope="session")
def small_model(small_world):
    return pipeline.train(small_world.archive, small_world.anthro, q=3)


@pytest.fixture(scope="session")
def full_world():
    """Production-scale world: 37 subjects, q=10, 50 directions."""
    return testkit.synth_generate(subjects=37, q=10, seed=42)


@pytest.fixture(scope="session")
def full_model(full_world):
    return pipeline.train(full_world.archive, full_world.anthro, q=10)
