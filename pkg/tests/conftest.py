import math

import numpy as np
import pytest
from scipy import integrate

from hcrcred.dataset import (CategorySpec, Dataset, DatasetSchema, GeneratorConfig, NoiseColumn,
                             VariableSpec, generate_synthetic)

SQRT3 = math.sqrt(3.0)


def two_category_config(n=20000, a1=0.5, noise=()):
    return GeneratorConfig(
        n=n,
        categories=(CategorySpec("c0", 0.5, (a1,)), CategorySpec("c1", 0.5, (-a1,))),
        noise=tuple(noise),
    )


def true_entropy_bits(a1):
    """E[log2 rho] for rho(x) = 1 + a1 sqrt(3)(2x-1), by adaptive quadrature."""
    rho = lambda x: 1.0 + a1 * SQRT3 * (2 * x - 1)
    val, _ = integrate.quad(lambda x: rho(x) * math.log2(rho(x)), 0.0, 1.0, epsabs=1e-13)
    return val


@pytest.fixture(scope="session")
def two_category():
    return generate_synthetic(two_category_config(), seed=11)


@pytest.fixture(scope="session")
def null_dataset():
    """Target independent of a continuous, a categorical and a binary feature."""
    cfg = GeneratorConfig(
        n=10000,
        categories=(CategorySpec("only", 1.0, ()),),
        noise=(NoiseColumn("u", "continuous", degree=4), NoiseColumn("cat", "categorical", 5),
               NoiseColumn("flag", "binary", p=0.3)),
    )
    return generate_synthetic(cfg, seed=5)


def small_schema():
    return DatasetSchema((VariableSpec("inc", "continuous", is_target=True),
                          VariableSpec("age", "continuous", feature_degree=3),
                          VariableSpec("edu", "categorical"),
                          VariableSpec("male", "binary")))


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(0)
    n = 60
    edu = rng.choice(["low", "mid", "high"], size=n)
    age = rng.integers(20, 70, size=n).astype(float)
    male = rng.integers(0, 2, size=n).astype(float)
    inc = 1000 + 20 * age + 300 * (edu == "high") + rng.normal(0, 100, n)
    return Dataset(small_schema(), {"inc": inc, "age": age, "edu": edu, "male": male})
