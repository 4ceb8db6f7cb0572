import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240503))


@pytest.fixture
def disk_dataset(tmp_path):
    from edgeguide.synthetic import make_disk_dataset

    root = make_disk_dataset(str(tmp_path / "disks"), count=4, size=64, seed=0)
    return root
