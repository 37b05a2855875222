"""Finite metric spaces and conformal grid metrics.

A ``GridMetric`` models the Riemannian metric ``phi^2 * Euclidean`` on a
lattice of nodes ``origin + frame @ index``. Edges join nodes whose index
offset lies in a stencil; an edge costs its Euclidean length times the mean
density at its endpoints. Distance fields come from the numba kernels in
``_kernels``.
"""
from __future__ import annotations

import gzip
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import _kernels
from .banach import sphere_directions

NODE_BUDGET = 40_000_000


class GridError(ValueError):
    pass


def stencil_offsets(dim: int, k: int) -> np.ndarray:
    """Index offsets of the stencil of radius ``k``.

    ``k = 1`` gives the 2*dim axis neighbours (a taxicab graph). For
    ``k >= 2`` all primitive offsets with Chebyshev norm at most ``k``.
    """
    if k < 1:
        raise GridError("stencil radius must be at least 1")
    if k == 1:
        E = np.eye(dim, dtype=np.int64)
        return np.concatenate([E, -E])
    out = []
    for o in itertools.product(range(-k, k + 1), repeat=dim):
        if any(o) and math.gcd(*[abs(c) for c in o]) == 1:
            out.append(o)
    return np.array(out, dtype=np.int64)


def _pad3(offsets: np.ndarray) -> np.ndarray:
    out = np.zeros((offsets.shape[0], 3), dtype=np.int64)
    out[:, : offsets.shape[1]] = offsets
    return out


@dataclass
class GridMetric:
    """Conformal metric on a (possibly masked, possibly periodic) lattice grid.

    Attributes
    ----------
    phi : ndarray
        Density at the nodes, one axis per dimension.
    m : int
        Resolution (nodes per unit length along the lattice generators).
    stencil : int
        Stencil radius, see ``stencil_offsets``.
    frame : (n, n) array
        Columns are the lattice steps; defaults to ``Id / m``.
    origin : (n,) array
        Position of index 0.
    periodic : bool
        Wrap every axis (a torus cell).
    mask : bool ndarray, optional
        Active nodes; inactive nodes carry no edges.
    cell_fraction : ndarray, optional
        Fraction of each lattice cell lying in the domain, used for the
        lumped quadrature; by default the share of active corners.
    """

    phi: np.ndarray
    m: int
    stencil: int = 3
    frame: np.ndarray | None = None
    origin: np.ndarray | None = None
    periodic: bool = False
    mask: np.ndarray | None = None
    cell_fraction: np.ndarray | None = None
    kind: str = "cube"
    _weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.phi = np.ascontiguousarray(self.phi, dtype=float)
        n = self.phi.ndim
        if n not in (1, 2, 3):
            raise GridError(f"grid dimension must be 1, 2 or 3, got {n}")
        if not np.all(np.isfinite(self.phi)) or np.any(self.phi <= 0):
            raise GridError("density must be finite and strictly positive")
        if self.phi.size > NODE_BUDGET:
            raise GridError(f"grid of {self.phi.size} nodes exceeds the node budget {NODE_BUDGET}")
        self.frame = np.eye(n) / self.m if self.frame is None else np.asarray(self.frame, dtype=float)
        self.origin = np.zeros(n) if self.origin is None else np.asarray(self.origin, dtype=float)
        if self.mask is None:
            self.mask = np.ones(self.phi.shape, dtype=bool)
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        if self.mask.shape != self.phi.shape:
            raise GridError("mask shape differs from density shape")
        offs = stencil_offsets(n, self.stencil)
        self._offsets = _pad3(offs)
        self._lengths = np.linalg.norm(offs @ self.frame.T, axis=1)

    # geometry -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.phi.ndim

    @property
    def shape(self) -> tuple:
        return self.phi.shape

    @property
    def n_nodes(self) -> int:
        return self.phi.size

    def index(self, idx) -> int:
        """Flat node number of a multi-index."""
        return int(np.ravel_multi_index(tuple(int(i) for i in idx), self.shape))

    def indices(self) -> np.ndarray:
        return np.indices(self.shape).reshape(self.dim, -1).T

    def positions(self) -> np.ndarray:
        return self.origin + self.indices() @ self.frame.T

    def nearest_node(self, x) -> int:
        idx = np.rint(np.linalg.solve(self.frame, np.asarray(x, float) - self.origin)).astype(int)
        if self.periodic:
            idx %= np.array(self.shape)
        elif np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise GridError(f"point {x} lies outside the grid")
        return self.index(idx)

    def scaled(self, c: float) -> "GridMetric":
        return GridMetric(c * self.phi, self.m, self.stencil, self.frame, self.origin, self.periodic, self.mask,
                          self.cell_fraction, self.kind)

    # shortest paths -----------------------------------------------------
    def _shape3(self):
        s = list(self.shape) + [1] * (3 - self.dim)
        return np.array(s, dtype=np.int64)

    def relax(self, init: np.ndarray, seeds=None) -> np.ndarray:
        """Value-initialized Dijkstra: ``min_y init[y] + d(y, x)`` for every node."""
        dist = np.array(init, dtype=float).ravel().copy()
        if dist.shape[0] != self.n_nodes:
            raise GridError("initial labels have the wrong size")
        active = self.mask.ravel()
        dist[~active] = np.inf
        if seeds is None:
            seeds = np.flatnonzero(np.isfinite(dist))
        seeds = np.asarray(seeds, dtype=np.int64)
        _kernels.grid_relax(dist, seeds, active, self.phi.ravel(), self._shape3(), self._offsets,
                            self._lengths, self.periodic)
        return dist

    def distances_from(self, sources) -> np.ndarray:
        sources = _as_sources(sources, self.n_nodes)
        init = np.full(self.n_nodes, np.inf)
        init[sources] = 0.0
        return self.relax(init, sources)

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Every undirected edge once, as arrays ``(a, b, weight)``."""
        idx = self.indices()
        shape = np.array(self.shape)
        flat_phi = self.phi.ravel()
        active = self.mask.ravel()
        A, B, W = [], [], []
        offs = self._offsets[:, : self.dim]
        for o, length in zip(offs, self._lengths):
            nz = o[o != 0]
            if nz[0] < 0:
                continue
            j = idx + o
            if self.periodic:
                j %= shape
                ok = np.ones(len(idx), dtype=bool)
            else:
                ok = np.all((j >= 0) & (j < shape), axis=1)
            a = np.flatnonzero(ok)
            b = np.ravel_multi_index(tuple(j[ok].T), self.shape)
            keep = active[a] & active[b]
            a, b = a[keep], b[keep]
            A.append(a)
            B.append(b)
            W.append(length * 0.5 * (flat_phi[a] + flat_phi[b]))
        return np.concatenate(A), np.concatenate(B), np.concatenate(W)

    def to_csr(self) -> sparse.csr_matrix:
        a, b, w = self.edges()
        N = self.n_nodes
        M = sparse.coo_matrix((np.concatenate([w, w]), (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(N, N))
        return M.tocsr()

    # quadrature -----------------------------------------------------------
    def quadrature_weights(self) -> np.ndarray:
        """Lumped cell-mass weights: each cell's in-domain volume split equally
        among its active corners (trapezoid rule on a full box)."""
        if self._weights is None:
            self._weights = _lumped_weights(self)
        return self._weights

    def volume(self, region=None) -> float:
        """Riemannian volume ``sum w * phi^n`` over an optional node mask or predicate."""
        return riemannian_volume(self, region)

    # io -------------------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "resolution": self.m,
            "stencil": self.stencil,
            "shape": list(self.shape),
            "density": self.phi.ravel().tolist(),
        }


def _as_sources(sources, N: int) -> np.ndarray:
    s = np.asarray(sources)
    if s.dtype == bool:
        s = np.flatnonzero(s.ravel())
    s = np.atleast_1d(s).astype(np.int64).ravel()
    if s.size == 0:
        raise GridError("source set is empty")
    if s.min() < 0 or s.max() >= N:
        raise GridError("source index out of range")
    return s


def _lumped_weights(gm: GridMetric) -> np.ndarray:
    n = gm.dim
    cell_vol = abs(float(np.linalg.det(gm.frame)))
    active = gm.mask.astype(float)
    corners = list(itertools.product((0, 1), repeat=n))
    if gm.periodic:
        views = [np.roll(active, shift=tuple(-c for c in cc), axis=tuple(range(n))) for cc in corners]
    else:
        sl = lambda cc: tuple(slice(c, s - 1 + c) for c, s in zip(cc, gm.shape))
        views = [active[sl(cc)] for cc in corners]
    count = sum(views)
    if gm.cell_fraction is not None:
        frac = np.asarray(gm.cell_fraction, dtype=float)
    else:
        frac = count / len(corners)
    share = np.where(count > 0, frac * cell_vol / np.maximum(count, 1), 0.0)
    w = np.zeros(gm.shape)
    for cc, v in zip(corners, views):
        contrib = share * v
        if gm.periodic:
            w += np.roll(contrib, shift=cc, axis=tuple(range(n)))
        else:
            w[tuple(slice(c, s - 1 + c) for c, s in zip(cc, gm.shape))] += contrib
    return w


def riemannian_volume(gm: GridMetric, region=None) -> float:
    """``sum_{nodes in region} w(x) phi(x)^n``.

    ``region`` is None (everything), a boolean node array, or a callable on
    an (N, n) array of positions.
    """
    w = gm.quadrature_weights()
    dens = w * gm.phi ** gm.dim
    if region is None:
        return float(dens.sum())
    if callable(region):
        region = np.asarray(region(gm.positions()), dtype=bool).reshape(gm.shape)
    region = np.asarray(region, dtype=bool).reshape(gm.shape)
    return float(dens[region].sum())


# constructors -----------------------------------------------------------------

def cube_grid(m: int, dim: int = 2, density=None, stencil: int | None = None) -> GridMetric:
    """Grid on the unit cube with ``m + 1`` nodes per axis.

    ``density`` is None (flat), a constant, an array of shape ``(m+1,)*dim``
    or a callable on an (N, dim) position array.
    """
    stencil = default_stencil(dim) if stencil is None else stencil
    shape = (m + 1,) * dim
    phi = _density_array(density, shape, np.indices(shape).reshape(dim, -1).T / m)
    return GridMetric(phi, m, stencil, kind="cube")


def torus_grid(m: int, dim: int = 2, density=None, stencil: int | None = None) -> GridMetric:
    """One periodic cell ``[0,1)^dim`` with ``m`` nodes per axis."""
    stencil = default_stencil(dim) if stencil is None else stencil
    shape = (m,) * dim
    phi = _density_array(density, shape, np.indices(shape).reshape(dim, -1).T / m)
    return GridMetric(phi, m, stencil, periodic=True, kind="torus")


def default_stencil(dim: int) -> int:
    return 3 if dim <= 2 else 2


def _density_array(density, shape, pos):
    if density is None:
        return np.ones(shape)
    if callable(density):
        return np.asarray(density(pos), dtype=float).reshape(shape)
    d = np.asarray(density, dtype=float)
    if d.ndim == 0:
        return np.full(shape, float(d))
    if d.shape != tuple(shape):
        raise GridError(f"density shape {d.shape} differs from grid shape {tuple(shape)}")
    return d


# finite metric spaces ----------------------------------------------------------

@dataclass
class FiniteMetricSpace:
    """Finite metric space given by a full distance matrix or a weighted graph.

    In graph form distances are shortest-path lengths.
    """

    matrix: np.ndarray | None = None
    graph: sparse.csr_matrix | None = None

    def __post_init__(self):
        if (self.matrix is None) == (self.graph is None):
            raise GridError("give exactly one of a distance matrix or a graph")
        if self.matrix is not None:
            D = np.asarray(self.matrix, dtype=float)
            if D.ndim != 2 or D.shape[0] != D.shape[1]:
                raise GridError("distance matrix must be square")
            if not np.allclose(D, D.T, rtol=1e-12, atol=0):
                raise GridError("distance matrix is not symmetric")
            if np.any(np.diag(D) != 0):
                raise GridError("distance matrix has a nonzero diagonal")
            if np.any(D < 0):
                raise GridError("negative distance")
            self.matrix = D
        else:
            G = sparse.csr_matrix(self.graph, dtype=float)
            G.sum_duplicates()
            G.eliminate_zeros()
            if G.shape[0] != G.shape[1]:
                raise GridError("adjacency must be square")
            if G.nnz and G.data.min() <= 0:
                raise GridError("edge weights must be positive")
            if G.nnz and abs(G - G.T).max() > 0:
                raise GridError("adjacency must be symmetric")
            G.sort_indices()
            self.graph = G

    @classmethod
    def from_edges(cls, n: int, a, b, w) -> "FiniteMetricSpace":
        a, b, w = (np.asarray(x) for x in (a, b, w))
        # parallel edges keep the lighter weight
        return cls(graph=_min_duplicates(n, np.concatenate([a, b]), np.concatenate([b, a]), np.concatenate([w, w])))

    @property
    def n_nodes(self) -> int:
        return (self.matrix if self.matrix is not None else self.graph).shape[0]

    def relax(self, init: np.ndarray, seeds=None) -> np.ndarray:
        dist = np.array(init, dtype=float).ravel().copy()
        if self.matrix is not None:
            finite = np.flatnonzero(np.isfinite(dist)) if seeds is None else np.asarray(seeds, dtype=np.int64)
            if finite.size:
                dist = np.minimum(dist, (dist[finite, None] + self.matrix[finite]).min(axis=0))
            return dist
        if seeds is None:
            seeds = np.flatnonzero(np.isfinite(dist))
        G = self.graph
        _kernels.csr_relax(dist, np.asarray(seeds, dtype=np.int64), G.indptr.astype(np.int64),
                           G.indices.astype(np.int64), G.data)
        return dist

    def distances_from(self, sources) -> np.ndarray:
        sources = _as_sources(sources, self.n_nodes)
        init = np.full(self.n_nodes, np.inf)
        init[sources] = 0.0
        return self.relax(init, sources)

    def edges(self):
        """Edges (graph form) or all pairs (matrix form), each once."""
        if self.matrix is not None:
            a, b = np.triu_indices(self.n_nodes, 1)
            return a, b, self.matrix[a, b]
        C = sparse.triu(self.graph, 1).tocoo()
        return C.row, C.col, C.data

    def distance_matrix(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return np.array([self.distances_from([i]) for i in range(self.n_nodes)])

    def triangle_violation(self, samples: int = 10_000, rng=None) -> float:
        """Largest ``d(x,z) - d(x,y) - d(y,z)`` over sampled triples (matrix form)."""
        D = self.distance_matrix()
        rng = np.random.default_rng(rng)
        i, j, k = rng.integers(0, self.n_nodes, size=(3, samples))
        return float(np.max(D[i, k] - D[i, j] - D[j, k]))


def _min_duplicates(n, a, b, w):
    order = np.lexsort((w, b, a))
    a, b, w = a[order], b[order], w[order]
    first = np.ones(len(a), dtype=bool)
    first[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    return sparse.csr_matrix((w[first], (a[first], b[first])), shape=(n, n))


def multi_dijkstra(space, sources) -> np.ndarray:
    """Shortest-path distance to the nearest source; unreachable nodes get inf."""
    return space.distances_from(sources)


# calibration -------------------------------------------------------------------

@dataclass
class Calibration:
    dim: int
    stencil: int
    resolution: int
    eps: float
    directions: np.ndarray
    ratios: np.ndarray

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "stencil": self.stencil,
            "resolution": self.resolution,
            "eps_stencil": self.eps,
            "directions": self.directions.tolist(),
            "ratios": self.ratios.tolist(),
        }


def calibrate(dim: int = 2, stencil: int | None = None, resolution: int = 256, directions: int = 64,
              radius: float = 0.45) -> Calibration:
    """Worst relative error ``|graph distance / Euclidean - 1|`` of the flat grid.

    One field from the centre node of the unit cube, read at the nodes
    nearest ``centre + radius * u`` for ``directions`` unit vectors ``u``.
    """
    stencil = default_stencil(dim) if stencil is None else stencil
    m = resolution + (resolution % 2)
    gm = cube_grid(m, dim, stencil=stencil)
    centre = np.full(dim, m // 2)
    dist = gm.distances_from([gm.index(centre)])
    U = sphere_directions(dim, directions)
    targets = np.rint(centre + radius * m * U).astype(int)
    eucl = np.linalg.norm(targets - centre, axis=1) / m
    graph = dist[np.ravel_multi_index(tuple(targets.T), gm.shape)]
    ratios = graph / eucl
    return Calibration(dim, stencil, resolution, float(np.max(np.abs(ratios - 1))), U, ratios)


# io ----------------------------------------------------------------------------

def _open_json(path):
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rt") as fh:
            return json.load(fh)
    with open(path) as fh:
        return json.load(fh)


def grid_from_json(data: dict, norm=None) -> GridMetric:
    """Build a grid from the metric file schema (see docs).

    Region grids are masked to the unit ball of ``norm``, which must be given.
    """
    from .besicovitch import region_grid, simplex_grid

    if not isinstance(data, dict):
        raise GridError("metric file must be a JSON object")
    for key in ("kind", "dim", "resolution", "density"):
        if key not in data:
            raise GridError(f"metric file: missing field '{key}'")
    kind, dim, m = data["kind"], int(data["dim"]), int(data["resolution"])
    if dim not in (1, 2, 3) or m < 1:
        raise GridError("metric file: fields 'dim' must be 1..3 and 'resolution' positive")
    stencil = int(data.get("stencil", default_stencil(dim)))
    dens = np.asarray(data["density"], dtype=float)
    if kind == "region":
        if norm is None:
            raise GridError("metric file: a region grid needs the norm of its domain")
        shape = region_grid(norm, m).shape
    elif kind == "torus":
        shape = (m,) * dim
    elif kind in ("cube", "simplex"):
        shape = (m + 1,) * dim
    else:
        raise GridError(f"metric file: field 'kind' must be cube, torus, simplex or region, got {kind!r}")
    if dens.size != int(np.prod(shape)):
        raise GridError(f"metric file: field 'density' has {dens.size} entries, expected {int(np.prod(shape))}")
    if not np.all(np.isfinite(dens)) or np.any(dens <= 0):
        raise GridError("metric file: field 'density' must be finite and positive")
    dens = dens.reshape(shape)
    if kind == "cube":
        return GridMetric(dens, m, stencil, kind="cube")
    if kind == "torus":
        return GridMetric(dens, m, stencil, periodic=True, kind="torus")
    if kind == "simplex":
        return simplex_grid(dim, m, dens, stencil=stencil)
    return region_grid(norm, m, dens, stencil=stencil)


def load_grid(path, norm=None) -> GridMetric:
    return grid_from_json(_open_json(path), norm)
