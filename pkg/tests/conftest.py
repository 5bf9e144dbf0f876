"""Shared fixtures: one default phantom and one small prepared dataset.

Both are expensive (seconds), so they are session scoped; tests must not
mutate them.
"""

import numpy as np
import pytest

from igcip.harness import generate_phantom_population, prepare_dataset, uniform_manifest
from igcip.phantom import PhantomSpec, generate_phantom


@pytest.fixture(scope="session")
def spec():
    return PhantomSpec()


@pytest.fixture(scope="session")
def phantom(spec):
    return generate_phantom(spec, np.random.SeedSequence(7))


@pytest.fixture(scope="session")
def anatomy(phantom):
    return phantom.anatomy


@pytest.fixture(scope="session")
def gl(phantom):
    return phantom.gl


@pytest.fixture(scope="session")
def small_dataset(spec):
    """Four complete specimens (pre and post reference, no migration).

    Every study group contains all four specimens, so each study section is
    exercised.
    """
    manifest = uniform_manifest(4, pre_uct=True)
    phantoms = generate_phantom_population(spec, 4, 11)
    return prepare_dataset(phantoms, manifest, 7, spec=spec)


@pytest.fixture(scope="session")
def model(small_dataset):
    return small_dataset.model
