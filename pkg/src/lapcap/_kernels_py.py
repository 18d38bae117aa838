"""Pure-Python (numpy/scipy) versions of the compiled kernels."""
import numpy as np
from scipy.spatial.distance import cdist, pdist


def mmd2_unbiased(x, y, bandwidth):
    """Unbiased squared MMD with a Gaussian kernel of the given bandwidth."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    m, n = len(x), len(y)
    if m < 2 or n < 2:
        raise ValueError("need at least two samples per side")
    scale = -0.5 / (bandwidth * bandwidth)
    kxx = np.exp(scale * pdist(x, "sqeuclidean")).sum()
    kyy = np.exp(scale * pdist(y, "sqeuclidean")).sum()
    kxy = np.exp(scale * cdist(x, y, "sqeuclidean")).sum()
    return float(2.0 * kxx / (m * (m - 1.0)) + 2.0 * kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n))


def pairwise_distances(z):
    """Condensed Euclidean distances in ``pdist`` order."""
    return pdist(np.ascontiguousarray(z, dtype=np.float64))
