import numpy as np
import pytest

from l1stream.homotopy import WeightedL1Problem


def random_instance(seed, M=50, N=128, density=0.1, snr_db=35.0, weight_frac=0.1,
                    random_weights=False):
    """Gaussian ``A``, sparse ``x0``, noise at ``snr_db``, weights ``0.1 ||A^T y||_inf``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((M, N)) / np.sqrt(M)
    x0 = np.zeros(N)
    k = max(1, int(round(density * N)))
    x0[rng.choice(N, k, replace=False)] = rng.standard_normal(k)
    clean = A @ x0
    sigma = np.sqrt(np.mean(clean ** 2) / 10 ** (snr_db / 10))
    y = clean + sigma * rng.standard_normal(M)
    tau = weight_frac * np.max(np.abs(A.T @ y))
    w = tau * (rng.uniform(0.5, 1.5, N) if random_weights else np.ones(N))
    return WeightedL1Problem(A, y, w), x0


@pytest.fixture
def instance():
    return random_instance
