"""Random weighted graphs for tests."""
import numpy as np

from hilbvol.grids import FiniteMetricSpace


def random_graph(rng, n_max=60, connected=True, density=3.0):
    N = int(rng.integers(2, n_max + 1))
    k = int(density * N)
    a = rng.integers(0, N, k)
    b = rng.integers(0, N, k)
    if connected:
        # a random spanning path keeps everything reachable
        perm = rng.permutation(N)
        a = np.concatenate([a, perm[:-1]])
        b = np.concatenate([b, perm[1:]])
    keep = a != b
    w = rng.uniform(0.05, 3.0, keep.sum())
    return FiniteMetricSpace.from_edges(N, a[keep], b[keep], w)
