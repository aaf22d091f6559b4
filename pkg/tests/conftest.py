import functools

import pytest

from swiglab.scm import default_spec, sample_observational


@functools.lru_cache(maxsize=8)
def big_sample(scenario: str, seed: int = 1, n: int = 1_000_000, **overrides):
    spec = default_spec(scenario)
    if overrides:
        spec = spec.with_overrides(overrides)
    return spec, sample_observational(spec, n, seed=seed)


@pytest.fixture
def big():
    return big_sample
