import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A tiny reusable dataset: HR 32x32, LR 16x16, 4 coils, 6 records."""
    from srrecon.masks import MaskSpec
    from srrecon.phantom import PhantomSpec, build_dataset

    out = tmp_path_factory.mktemp("smallds")
    return build_dataset(
        6,
        PhantomSpec(hr_dims=(32, 32), sigma_noise=0.01),
        MaskSpec(dims=(16, 16), target_af=3, center_size=(6, 6)),
        str(out),
        n_coils=4,
        base_seed=77,
    )
