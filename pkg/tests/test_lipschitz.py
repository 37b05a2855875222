import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hilbvol.banach import coordinate_partition, simplex_partition
from hilbvol.grids import FiniteMetricSpace, GridMetric, calibrate, cube_grid
from hilbvol.lipschitz import (
    LipschitzError,
    busemann,
    center_of_mass,
    edge_lipschitz,
    mcshane_extend,
    mcshane_naive,
    partial_lipschitz,
    separated_net,
    straighten_via_net,
)

from graphs import random_graph


def lipschitz_data(rng, G, k=None):
    k = k or int(rng.integers(1, min(G.n_nodes, 8) + 1))
    dom = rng.choice(G.n_nodes, k, replace=False)
    vals = rng.standard_normal(k)
    lam = partial_lipschitz(G, dom, vals)
    lam = lam * (1 + rng.random()) if lam > 0 else 1.0
    return dom, vals, lam


def test_single_point_extension():
    gm = cube_grid(16, 2)
    F = mcshane_extend(gm, [5], [2.0], 1.0)
    assert np.allclose(F, 2.0 - gm.distances_from([5]))


def test_two_point_interpolation():
    path = FiniteMetricSpace.from_edges(5, [0, 1, 2, 3], [1, 2, 3, 4], [1.0] * 4)
    F = mcshane_extend(path, [0, 4], [0.0, 4.0], 1.0)
    assert np.allclose(F, np.arange(5))
    assert edge_lipschitz(path, F) == pytest.approx(1)


def test_rejects_non_lipschitz_input():
    path = FiniteMetricSpace.from_edges(3, [0, 1], [1, 2], [1.0, 1.0])
    with pytest.raises(LipschitzError):
        mcshane_extend(path, [0, 2], [0.0, 5.0], 1.0)


def test_rejects_bad_domains():
    gm = cube_grid(4, 2)
    with pytest.raises(LipschitzError):
        mcshane_extend(gm, [], [], 1.0)
    with pytest.raises(LipschitzError):
        mcshane_extend(gm, [1, 1], [0.0, 0.0], 1.0)


def test_axis_extension_is_busemann():
    # identity values t on a ray: max_t (t - d(x, a(t))) is attained at the far
    # end because d(x, a(t)) - t never increases, so F = -b_a exactly
    m = 64
    gm = cube_grid(m, 2)
    axis = [gm.index((i, m // 2)) for i in range(m + 1)]
    t = gm.distances_from([axis[0]])[axis]
    F = mcshane_extend(gm, axis, t, 1.0)
    for y in range(0, gm.n_nodes, 37):
        assert F[y] == pytest.approx(-busemann(gm, axis, y).value, abs=1e-12)


def test_busemann_on_ray():
    gm = cube_grid(32, 2)
    ray = [gm.index((i, 3)) for i in range(33)]
    r = gm.distances_from([ray[0]])[ray]
    for s in (0, 7, 20):
        assert busemann(gm, ray, ray[s]).value == pytest.approx(-r[s], abs=1e-12)


def test_busemann_flat_and_taxicab():
    m = 128
    for stencil in (3, 1):
        gm = GridMetric(np.ones((m + 1, m + 1)), m, stencil)
        ray = [gm.index((i, 0)) for i in range(m + 1)]
        y = gm.index((20, 6))
        b = busemann(gm, ray, y).value
        y1, y2 = 20 / m, 6 / m
        if stencil == 1:
            assert b == pytest.approx(-y1 + y2, abs=1e-12)
        else:
            R = 1.0
            curvature = y2**2 / (2 * (R - y1))
            assert abs(b + y1) <= curvature + calibrate(2, 3, 256).eps * 1.1


def test_busemann_sequence_reported():
    gm = cube_grid(16, 2)
    res = busemann(gm, [gm.index((i, 0)) for i in range(17)], gm.index((3, 8)))
    assert len(res.sequence) == 17 and res.sequence[-1] == res.value
    with pytest.raises(LipschitzError):
        busemann(gm, [0], 1)


@given(st.integers(0, 2**32 - 1))
def test_mcshane_fast_equals_naive(seed):
    rng = np.random.default_rng(seed)
    G = random_graph(rng, connected=bool(seed % 3))
    dom, vals, lam = lipschitz_data(rng, G)
    fast = mcshane_extend(G, dom, vals, lam)
    slow = mcshane_naive(G, dom, vals, lam)
    assert np.array_equal(np.isinf(fast), np.isinf(slow))
    fin = np.isfinite(slow)
    assert np.allclose(fast[fin], slow[fin], atol=1e-12, rtol=0)


@given(st.integers(0, 2**32 - 1))
def test_mcshane_properties(seed):
    rng = np.random.default_rng(seed)
    G = random_graph(rng)
    dom, vals, lam = lipschitz_data(rng, G)
    F = mcshane_extend(G, dom, vals, lam)
    # agreement, Lipschitz preservation, idempotence
    assert np.array_equal(F[dom], vals)
    assert edge_lipschitz(G, F) <= lam * (1 + 1e-12)
    again = mcshane_extend(G, np.arange(G.n_nodes), F, lam)
    assert np.allclose(again, F, atol=1e-12)
    # a constant shift of the data shifts the extension
    assert np.allclose(mcshane_extend(G, dom, vals + 0.1, lam), F + 0.1, atol=1e-12)
    # minimality: every lam-Lipschitz extension, e.g. the largest one, dominates
    upper = -mcshane_extend(G, dom, -vals, lam)
    assert np.all(upper >= F - 1e-12)


@given(st.integers(0, 2**32 - 1))
def test_mcshane_monotone_in_data(seed):
    rng = np.random.default_rng(seed)
    G = random_graph(rng, n_max=40)
    dom = rng.choice(G.n_nodes, min(4, G.n_nodes), replace=False)
    lo = rng.standard_normal(len(dom)) * 0.1
    hi = lo + rng.random(len(dom)) * 0.05
    lam = max(partial_lipschitz(G, dom, lo), partial_lipschitz(G, dom, hi), 1e-3) * 1.01
    assert np.all(mcshane_extend(G, dom, hi, lam) >= mcshane_extend(G, dom, lo, lam) - 1e-12)


def test_zero_lipschitz_constant():
    gm = cube_grid(4, 2)
    F = mcshane_extend(gm, [0, 3], [2.0, 2.0], 0.0)
    assert np.all(F == 2.0)


# nets --------------------------------------------------------------------------

@given(st.integers(0, 2**32 - 1), st.floats(0.1, 4.0))
def test_net_separation_and_covering(seed, D):
    G = random_graph(np.random.default_rng(seed), n_max=40)
    net = separated_net(G, D)
    M = G.distance_matrix()
    sub = M[np.ix_(net, net)]
    assert np.all(sub[~np.eye(len(net), dtype=bool)] >= D)
    cover = M[net].min(axis=0)
    reach = np.isfinite(M[0])
    assert np.all(cover[reach] < D)


def test_net_extremes():
    gm = cube_grid(8, 2)
    assert len(separated_net(gm, 10.0)) == 1
    assert len(separated_net(gm, 1 / 8)) == gm.n_nodes


# straightening -------------------------------------------------------------------

def _net_setup(m=32, D=0.2):
    gm = cube_grid(m, 2)
    net = separated_net(gm, D)
    return gm, net, gm.positions()


@pytest.mark.parametrize("mu", [coordinate_partition(2), simplex_partition(2)])
def test_straighten_identity(mu):
    gm, net, pos = _net_setup()
    st_ = straighten_via_net(gm, net, pos[net], mu)
    eps = calibrate(2, 3, 256).eps
    assert np.all(st_.lipschitz <= 1 + eps)
    # per atom: |F_i(x) - l_i(x)| <= (lambda_i + 1) D via the nearest net point
    dev = np.abs(st_.atom_values - pos @ mu.functionals.T)
    assert np.all(dev <= (st_.lipschitz + 1) * 0.2 + 1e-12)
    assert np.allclose(st_.values[net], pos[net], atol=1e-12)


def test_straighten_constant():
    gm, net, pos = _net_setup()
    st_ = straighten_via_net(gm, net, np.tile([0.3, -0.1], (len(net), 1)), coordinate_partition(2))
    assert np.all(st_.lipschitz == 0)
    assert np.allclose(st_.values, [0.3, -0.1])


@pytest.mark.parametrize("mu", [coordinate_partition(2), simplex_partition(2)])
def test_straighten_fold_certificate(mu):
    gm, net, pos = _net_setup(m=48, D=0.15)
    fold = np.column_stack([0.5 - np.abs(pos[:, 0] - 0.5), pos[:, 1]])
    st_ = straighten_via_net(gm, net, fold[net], mu)
    eps = calibrate(2, 3, 256).eps
    assert st_.bound <= math.sqrt(2) * (1 + eps)
    # the certificate dominates the true per-edge L2 dilation of the output
    assert edge_lipschitz(gm, st_.values) <= st_.bound * (1 + 1e-12)
    dev = np.abs(st_.atom_values - fold @ mu.functionals.T)
    assert np.all(dev <= (st_.lipschitz + 1) * 0.15 + 1e-12)


def test_straighten_rejects_inexact_partition():
    from hilbvol.banach import PartitionOfUnity

    gm, net, pos = _net_setup()
    with pytest.raises(LipschitzError):
        straighten_via_net(gm, net, pos[net], PartitionOfUnity([1.0], [[1.0, 0.0]]))


# centers of mass -----------------------------------------------------------------------

def test_center_single_point():
    gm = cube_grid(8, 2)
    assert center_of_mass(gm, [17]) == 17


def test_center_path_middle():
    path = FiniteMetricSpace.from_edges(5, [0, 1, 2, 3], [1, 2, 3, 4], [1.0] * 4)
    assert center_of_mass(path, [0, 4]) == 2


def test_center_gaussian_cloud(rng):
    m = 32
    gm = cube_grid(m, 2)
    pos = gm.positions()
    nodes = rng.choice(gm.n_nodes, 40, replace=False)
    w = np.exp(-np.sum((pos[nodes] - [0.4, 0.6]) ** 2, axis=1) / 0.02)
    c = center_of_mass(gm, nodes, w)
    mean = (w @ pos[nodes]) / w.sum()
    assert np.abs(pos[c] - mean).max() <= 1 / m + 1e-12


def test_center_rejects_bad_weights():
    with pytest.raises(LipschitzError):
        center_of_mass(cube_grid(4, 2), [1, 2], [0.0, 0.0])
