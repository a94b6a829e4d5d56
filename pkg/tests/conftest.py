import numpy as np
import pytest

import pdsplit as pd


@pytest.fixture(scope="session")
def ct256():
    """The full-size geometry of the experiments: n=256, angles 0:10:179."""
    return pd.paralleltomo(256, np.arange(0.0, 180.0, 10.0))


@pytest.fixture(scope="session")
def ct64_noisy():
    """Desk-scale noisy test problem shared by the trend checks."""
    clean = pd.paralleltomo(64, np.arange(0.0, 180.0, 10.0))
    sigma = 0.01 * float(np.mean(np.abs(clean.projections)))
    noisy = pd.add_noise(clean.projections, gaussian_sigma=sigma,
                         impulse_fraction=0.05, impulse_scale=1.0, seed=0)
    return pd.TomoProblem(system_matrix=clean.system_matrix, projections=noisy,
                          ground_truth=clean.ground_truth, geometry=clean.geometry)
