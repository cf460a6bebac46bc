import io

import numpy as np
import pytest

from eqte import Dataset


def make_dataset(n=200, seed=0, noise="normal", covariates=1, slope=2.0,
                 treatment_effect=5.0, noise_scale=1.0):
    """Linear-model toy data with a random binary treatment."""
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0, (n, covariates))
    d = rng.integers(0, 2, n)
    if noise == "normal":
        eps = rng.normal(0.0, noise_scale, n)
    elif noise == "exponential":
        eps = rng.exponential(noise_scale, n)
    else:
        raise ValueError(noise)
    y = 1.0 + treatment_effect * d + slope * X.sum(axis=1) + eps
    names = [f"x{i + 1}" for i in range(covariates)]
    return Dataset.from_arrays(y, d, X, names)


def csv_stream(text: str) -> io.BytesIO:
    return io.BytesIO(text.encode("utf-8"))


@pytest.fixture
def toy_data():
    return make_dataset()
