"""Shared fixtures: the default system model and a cached synthetic
population of the three built-in motion classes, filtered once per session
(several test modules and the acceptance suite reuse it)."""

import numpy as np
import pytest

from skyprofiler.filtering import filter_population
from skyprofiler.kinematics import build_system
from skyprofiler.profiles import default_class_set
from skyprofiler.simulate import generate_population

POPULATION_SEED = 2024
PER_CLASS = 100
TRAJ_LENGTH = 100


@pytest.fixture(scope="session")
def default_model():
    return build_system(1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def builtin_population(default_model):
    return generate_population(
        default_class_set(),
        (PER_CLASS, PER_CLASS, PER_CLASS),
        default_model,
        TRAJ_LENGTH,
        rng_seed=POPULATION_SEED,
    )


@pytest.fixture(scope="session")
def filtered_population(default_model, builtin_population):
    return filter_population(builtin_population, default_model)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(7)
