"""Lipschitz extension, Busemann functions, separated nets, straightening
and discrete centers of mass on finite metric spaces and grids.

Every routine takes a ``space`` with the interface shared by
``GridMetric`` and ``FiniteMetricSpace``: ``n_nodes``, ``relax``,
``distances_from`` and ``edges``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .banach import PartitionOfUnity

LIP_RTOL = 1e-12


class LipschitzError(ValueError):
    pass


def _check_domain(space, domain, values):
    domain = np.atleast_1d(np.asarray(domain, dtype=np.int64))
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if domain.size == 0:
        raise LipschitzError("partial function has an empty domain")
    if domain.shape != values.shape:
        raise LipschitzError("domain and values differ in length")
    if len(np.unique(domain)) != len(domain):
        raise LipschitzError("domain has repeated nodes")
    if domain.min() < 0 or domain.max() >= space.n_nodes:
        raise LipschitzError("domain node out of range")
    if not np.all(np.isfinite(values)):
        raise LipschitzError("partial function has non-finite values")
    return domain, values


def mcshane_extend(space, domain, values, lam: float, check: bool = True) -> np.ndarray:
    """Smallest ``lam``-Lipschitz extension ``F(x) = max_y f0(y) - lam d(x, y)``.

    Computed with one value-initialized Dijkstra: labels ``-f0/lam`` on the
    domain relax to ``min_y (-f0(y)/lam + d(y, x))`` and ``F = -lam *`` that.
    ``f0`` is ``lam``-Lipschitz exactly when ``F`` agrees with it on the
    domain, which is how the precondition is checked.
    Nodes not connected to the domain get ``-inf``.
    """
    domain, values = _check_domain(space, domain, values)
    if lam < 0:
        raise LipschitzError("Lipschitz bound must be nonnegative")
    scale = max(np.abs(values).max(), 1.0)
    if lam == 0:
        if check and np.ptp(values) > LIP_RTOL * scale:
            raise LipschitzError("a 0-Lipschitz partial function must be constant")
        reach = space.distances_from(domain)
        return np.where(np.isfinite(reach), values.max(), -np.inf)
    init = np.full(space.n_nodes, np.inf)
    init[domain] = -values / lam
    F = -lam * space.relax(init, domain)
    if check:
        gap = float(np.max(F[domain] - values))
        if gap > 1e-12 * scale:
            raise LipschitzError(f"partial function is not {lam}-Lipschitz (defect {gap:.3e})")
    F[domain] = values
    return F


def mcshane_naive(space, domain, values, lam: float) -> np.ndarray:
    """The same extension by one distance field per domain point."""
    domain, values = _check_domain(space, domain, values)
    F = np.full(space.n_nodes, -np.inf)
    for y, v in zip(domain, values):
        F = np.maximum(F, v - lam * space.distances_from([y]))
    F[domain] = values
    return F


def edge_lipschitz(space, F, weights=None) -> float:
    """``max |F(a) - F(b)| / w(a, b)`` over the edges of the space."""
    a, b, w = space.edges()
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        diff = np.abs(F[a] - F[b])
    else:
        diff = np.linalg.norm(F[a] - F[b], axis=1)
    ok = np.isfinite(diff)
    return float(np.max(diff[ok] / w[ok])) if ok.any() else 0.0


def partial_lipschitz(space, domain, values) -> float:
    """Lipschitz constant of a partial function over all pairs of its domain."""
    domain, values = _check_domain(space, domain, values)
    best = 0.0
    for i, y in enumerate(domain[:-1]):
        d = space.distances_from([y])[domain[i + 1:]]
        diff = np.abs(values[i + 1:] - values[i])
        ok = d > 0
        if np.any(~ok & (diff > 0)):
            return np.inf
        if ok.any():
            best = max(best, float(np.max(diff[ok] / d[ok])))
    return best


@dataclass
class BusemannResult:
    value: float
    sequence: np.ndarray  # d(a(r_t), y) - r_t along the ray


def busemann(space, ray, y, radii=None) -> BusemannResult:
    """``d(a(r_max), y) - r_max`` for a ray given as an ordered node list.

    ``radii`` are the parameters ``r_t`` of the ray nodes; by default the
    distances from the first ray node.
    """
    ray = np.asarray(ray, dtype=np.int64)
    if ray.size < 2:
        raise LipschitzError("ray needs at least two nodes")
    if radii is None:
        radii = space.distances_from([ray[0]])[ray]
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise LipschitzError("ray parameters must increase")
    from_y = space.distances_from([int(y)])[ray]
    seq = from_y - radii
    return BusemannResult(float(seq[-1]), seq)


def separated_net(space, D: float, order=None) -> np.ndarray:
    """Greedy maximal ``D``-separated set.

    Nodes are scanned in ``order`` (index order by default); a node joins
    the net when its distance to the current net is at least ``D``. The
    result has pairwise distances ``>= D`` and every node lies within ``D``.
    """
    if not D > 0:
        raise LipschitzError("net spacing must be positive")
    N = space.n_nodes
    order = np.arange(N) if order is None else np.asarray(order, dtype=np.int64)
    cover = np.full(N, np.inf)
    net = []
    for v in order:
        if cover[v] >= D:
            net.append(int(v))
            cover[v] = 0.0
            cover = space.relax(cover, [v])
    return np.array(net, dtype=np.int64)


@dataclass
class Straightening:
    values: np.ndarray  # (N, n) output map
    atom_values: np.ndarray  # (N, k) extended coordinates l_i o f
    lipschitz: np.ndarray  # lambda_i per atom
    bound: float  # (sum c_i lambda_i^2)^(1/2)

    def to_json(self) -> dict:
        return {"lipschitz": self.lipschitz.tolist(), "l2_bound": self.bound}


def straighten_via_net(space, net, samples, mu: PartitionOfUnity, tol: float = 1e-9) -> Straightening:
    """Extend a map given on a separated net, one partition atom at a time.

    Each coordinate ``l_i o f`` is McShane-extended from the net with its own
    net Lipschitz constant, and the point is reassembled as
    ``A^-1 sum_i c_i l_i (l_i o F)``. The certificate bounds the pointwise
    L2-dilation of the output by ``(sum c_i lambda_i^2)^(1/2)``.
    """
    net = np.asarray(net, dtype=np.int64)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape != (net.size, mu.dim):
        raise LipschitzError(f"samples must have shape ({net.size}, {mu.dim})")
    if mu.residual() > tol * max(1.0, np.abs(mu.form.matrix).max()):
        raise LipschitzError(f"partition is not exact (residual {mu.residual():.3e})")
    dists = np.array([space.distances_from([v])[net] for v in net])
    off = ~np.eye(net.size, dtype=bool)
    if net.size > 1 and np.min(dists[off]) <= 0:
        raise LipschitzError("net points must be distinct and separated")
    coords = samples @ mu.functionals.T
    lams = np.zeros(len(mu.weights))
    ext = np.zeros((space.n_nodes, len(mu.weights)))
    for i in range(len(mu.weights)):
        g = coords[:, i]
        if net.size > 1:
            lam = float(np.max(np.abs(g[:, None] - g[None, :])[off] / dists[off]))
        else:
            lam = 0.0
        lams[i] = lam
        ext[:, i] = mcshane_extend(space, net, g, lam)
    F = mu.reconstruct(ext)
    bound = float(np.sqrt(mu.weights @ lams**2))
    return Straightening(F, ext, lams, bound)


def center_of_mass(space, nodes, weights=None) -> int:
    """Node minimizing ``sum_i w_i d(x, y_i)^2``; ties go to the lowest index."""
    nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    w = np.ones(nodes.size) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != nodes.shape or np.any(w < 0) or w.sum() <= 0:
        raise LipschitzError("weights must be nonnegative, not all zero, one per node")
    total = np.zeros(space.n_nodes)
    for y, wi in zip(nodes, w):
        if wi > 0:
            total += wi * space.distances_from([y]) ** 2
    return int(np.argmin(total))
