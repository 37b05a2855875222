"""Dihedral angles of small convex polytopes and their factorization into
products of simplices.

A polytope is ``{x : <u_j, x> <= b_j}`` with unit outward normals. Vertices
come from solving every n-subset of facet equations, which is fine for
n <= 4 and a few dozen facets.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

MAX_DIM = 4
ORTHO_TOL = 1e-8
NOT_A_PRODUCT = "NOT_A_PRODUCT"


class PolytopeError(ValueError):
    pass


@dataclass
class HPolytope:
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.asarray(self.offsets, dtype=float).ravel()
        if U.shape[0] != b.shape[0]:
            raise PolytopeError("normals and offsets differ in count")
        if not 1 <= U.shape[1] <= MAX_DIM:
            raise PolytopeError(f"dimension must be between 1 and {MAX_DIM}")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(b))):
            raise PolytopeError("non-finite facet data")
        lens = np.linalg.norm(U, axis=1)
        if np.any(lens == 0):
            raise PolytopeError("zero facet normal")
        self.normals = U / lens[:, None]
        self.offsets = b / lens

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @classmethod
    def from_vertices(cls, V) -> "HPolytope":
        V = np.atleast_2d(np.asarray(V, dtype=float))
        if V.shape[1] == 1:
            return cls(np.array([[1.0], [-1.0]]), np.array([V.max(), -V.min()]))
        hull = ConvexHull(V)
        eq = _merge_coplanar(hull.equations)
        return cls(eq[:, :-1], -eq[:, -1])

    def transformed(self, Q: np.ndarray, shift=None) -> "HPolytope":
        """Image under ``x -> Q x + shift`` with ``Q`` orthogonal."""
        shift = np.zeros(self.dim) if shift is None else np.asarray(shift, float)
        U = self.normals @ Q.T
        return HPolytope(U, self.offsets + U @ shift)

    def to_json(self) -> dict:
        return {"dim": self.dim,
                "facets": [{"normal": u.tolist(), "offset": float(b)} for u, b in zip(self.normals, self.offsets)]}

    @classmethod
    def from_json(cls, data: dict) -> "HPolytope":
        if "dim" not in data or "facets" not in data:
            raise PolytopeError("polytope file: needs fields 'dim' and 'facets'")
        U, b = [], []
        for i, f in enumerate(data["facets"]):
            if "normal" not in f or "offset" not in f:
                raise PolytopeError(f"polytope file: facet {i} needs 'normal' and 'offset'")
            if len(f["normal"]) != int(data["dim"]):
                raise PolytopeError(f"polytope file: facet {i} normal has length {len(f['normal'])}, expected {data['dim']}")
            U.append(f["normal"])
            b.append(f["offset"])
        return cls(np.array(U, dtype=float), np.array(b, dtype=float))

    @classmethod
    def load(cls, path) -> "HPolytope":
        return cls.from_json(json.loads(Path(path).read_text()))


def _merge_coplanar(eq: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep = []
    for e in eq:
        if not any(np.abs(e - k).max() < tol for k in keep):
            keep.append(e)
    return np.array(keep)


@dataclass
class VertexEnumeration:
    vertices: np.ndarray
    incidence: list  # per vertex, sorted facet indices
    redundant: list  # facet indices whose face has dimension < n - 1

    @property
    def facet_vertices(self) -> dict:
        out = {}
        for v, inc in enumerate(self.incidence):
            for j in inc:
                out.setdefault(j, []).append(v)
        return out


def _affine_rank(P: np.ndarray, tol: float = 1e-9) -> int:
    if len(P) <= 1:
        return 0
    D = P[1:] - P[0]
    return int(np.linalg.matrix_rank(D, tol=tol * max(1.0, np.abs(P).max())))


def check_bounded(P: HPolytope) -> None:
    """Raise unless the polytope is nonempty and bounded (2n linear programs)."""
    n = P.dim
    for i in range(n):
        for s in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -s
            res = linprog(c, A_ub=P.normals, b_ub=P.offsets, bounds=[(None, None)] * n, method="highs")
            if res.status == 2:
                raise PolytopeError("polytope is empty")
            if res.status == 3:
                raise PolytopeError("polytope is unbounded")
            if res.status != 0:
                raise PolytopeError(f"linear program failed: {res.message}")


def enumerate_vertices(P: HPolytope, tol: float = 1e-9) -> VertexEnumeration:
    """All vertices with their incident facets; facets of lower-dimensional
    faces are reported as redundant."""
    check_bounded(P)
    n, U, b = P.dim, P.normals, P.offsets
    scale = max(1.0, float(np.abs(b).max()))
    subsets = np.array(list(itertools.combinations(range(len(b)), n)), dtype=np.int64)
    A = U[subsets]
    rhs = b[subsets]
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-10
    X = np.linalg.solve(A[ok], rhs[ok][..., None])[..., 0]
    feas = np.all(X @ U.T <= b + tol * scale, axis=1)
    X = X[feas]
    verts = []
    for x in X:
        if not any(np.abs(x - v).max() <= 1e3 * tol * scale for v in verts):
            verts.append(x)
    if not verts:
        raise PolytopeError("no vertices found; polytope is degenerate")
    V = np.array(verts)
    order = np.lexsort(V.T[::-1])
    V = V[order]
    slack = np.abs(V @ U.T - b)
    incidence = [sorted(np.flatnonzero(row <= 1e3 * tol * scale).tolist()) for row in slack]
    fv = {}
    for v, inc in enumerate(incidence):
        for j in inc:
            fv.setdefault(j, []).append(v)
    redundant = [j for j in range(len(b)) if _affine_rank(V[fv.get(j, [])]) < n - 1 or j not in fv]
    # duplicates of the same facet are redundant beyond the first copy
    for i, j in itertools.combinations(range(len(b)), 2):
        if j not in redundant and i not in redundant and np.abs(U[i] - U[j]).max() < 1e-12 and abs(b[i] - b[j]) < tol * scale:
            redundant.append(j)
    return VertexEnumeration(V, incidence, sorted(redundant))


@dataclass
class DihedralAngle:
    facets: tuple
    angle: float


def dihedral_angles(P: HPolytope, enum: VertexEnumeration | None = None) -> list[DihedralAngle]:
    """Interior angle ``pi - angle(u_i, u_j)`` for every pair of facets meeting in an (n-2)-face."""
    enum = enumerate_vertices(P) if enum is None else enum
    n = P.dim
    fv = enum.facet_vertices
    live = [j for j in range(len(P.offsets)) if j not in enum.redundant]
    out = []
    for i, j in itertools.combinations(live, 2):
        common = sorted(set(fv[i]) & set(fv[j]))
        if not common or _affine_rank(enum.vertices[common]) != n - 2:
            continue
        c = float(np.clip(P.normals[i] @ P.normals[j], -1.0, 1.0))
        out.append(DihedralAngle((i, j), math.pi - math.acos(c)))
    return out


def is_acute(P: HPolytope, tol: float = 1e-9, angles=None) -> bool:
    angles = dihedral_angles(P) if angles is None else angles
    return all(a.angle <= math.pi / 2 + tol for a in angles)


@dataclass
class Block:
    dim: int
    facets: list
    vertices: np.ndarray  # block simplex vertices, in ambient coordinates inside the block span


@dataclass
class Factorization:
    blocks: list | None
    reason: str = ""
    vertex_gap: float | None = None  # reconstructed product vertices vs enumerated vertices

    @property
    def is_product(self) -> bool:
        return self.blocks is not None

    @property
    def block_dims(self) -> list:
        return sorted(b.dim for b in self.blocks) if self.blocks else []

    def to_json(self) -> dict:
        if not self.is_product:
            return {"result": NOT_A_PRODUCT, "reason": self.reason}
        return {"result": "PRODUCT", "block_dims": self.block_dims,
                "blocks": [{"dim": b.dim, "facets": b.facets} for b in self.blocks],
                "vertex_gap": self.vertex_gap}


def _groups(U: np.ndarray, tol: float) -> list[list[int]]:
    parent = list(range(len(U)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    G = np.abs(U @ U.T)
    for i, j in itertools.combinations(range(len(U)), 2):
        if G[i, j] > tol:
            parent[find(i)] = find(j)
    out = {}
    for i in range(len(U)):
        out.setdefault(find(i), []).append(i)
    return sorted(out.values())


def simplex_product_factorization(P: HPolytope, tol: float = ORTHO_TOL) -> Factorization:
    """Split the facet normals into mutually orthogonal groups and test
    whether each group of span dimension d consists of d+1 normals bounding
    a d-simplex. On success the product of the block simplices is rebuilt
    and compared with the enumerated vertex set."""
    enum = enumerate_vertices(P)
    live = [j for j in range(len(P.offsets)) if j not in enum.redundant]
    U, b = P.normals[live], P.offsets[live]
    n = P.dim
    blocks = []
    for g in _groups(U, tol):
        Ug = U[g]
        d = int(np.linalg.matrix_rank(Ug, tol=1e-9))
        if len(g) != d + 1:
            return Factorization(None, f"a group of {len(g)} facets spans dimension {d}")
        # positive dependency: the d+1 normals of a simplex have a one-dimensional
        # kernel with coefficients of one sign
        _, s, Vt = np.linalg.svd(Ug.T)
        w = Vt[-1]
        if not (np.all(w > 1e-12) or np.all(w < -1e-12)):
            return Factorization(None, "a group's normals do not positively span their span")
        Q = np.linalg.svd(Ug, full_matrices=False)[2][:d]  # orthonormal basis of the span (rows)
        A = Ug @ Q.T
        verts = []
        for k in range(d + 1):
            rows = [i for i in range(d + 1) if i != k]
            y = np.linalg.solve(A[rows], b[g][rows])
            verts.append(y @ Q)
        blocks.append(Block(d, [live[i] for i in g], np.array(verts)))
    if sum(bk.dim for bk in blocks) != n:
        return Factorization(None, "group spans do not fill the space")
    prod = np.array([np.sum(combo, axis=0) for combo in itertools.product(*[bk.vertices for bk in blocks])])
    V = enum.vertices
    if len(prod) != len(V):
        return Factorization(None, f"product has {len(prod)} vertices, polytope has {len(V)}")
    D = np.linalg.norm(prod[:, None, :] - V[None, :, :], axis=-1)
    gap = float(max(D.min(axis=1).max(), D.min(axis=0).max()))
    if gap > 1e-8 * max(1.0, float(np.abs(V).max())):
        return Factorization(None, f"rebuilt product vertices differ by {gap:.3e}")
    return Factorization(blocks, "", gap)


# corpora ---------------------------------------------------------------------------

def unit_cube(n: int) -> HPolytope:
    E = np.eye(n)
    return HPolytope(np.vstack([E, -E]), np.concatenate([np.ones(n), np.zeros(n)]))


def regular_simplex(n: int) -> HPolytope:
    from .banach import regular_simplex_vertices

    return HPolytope.from_vertices(regular_simplex_vertices(n))


def random_rotation(n: int, rng) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def _acute_simplex(d: int, rng, jitter: float = 0.15) -> np.ndarray:
    from .banach import regular_simplex_vertices

    base = regular_simplex_vertices(d)
    if d == 1:
        return np.array([[0.0], [0.5 + rng.random()]])
    while True:
        V = base * (0.5 + rng.random()) + jitter * rng.standard_normal(base.shape)
        if is_acute(HPolytope.from_vertices(V)):
            return V


def random_simplex_product(n: int, rng, dims=None) -> tuple[HPolytope, list]:
    """Rotated and shifted product of random acute simplices with block
    dimensions ``dims`` (a random partition of ``n`` by default)."""
    if dims is None:
        dims = []
        left = n
        while left:
            d = int(rng.integers(1, left + 1))
            dims.append(d)
            left -= d
    normals, offsets = [], []
    start = 0
    for d in dims:
        H = HPolytope.from_vertices(_acute_simplex(d, rng))
        U = np.zeros((len(H.offsets), n))
        U[:, start:start + d] = H.normals
        normals.append(U)
        offsets.append(H.offsets)
        start += d
    P = HPolytope(np.vstack(normals), np.concatenate(offsets))
    return P.transformed(random_rotation(n, rng), rng.standard_normal(n)), sorted(dims)


def random_obtuse_polytope(n: int, rng, points: int | None = None) -> HPolytope:
    """Hull of random points with more than ``2n`` facets."""
    points = points or (10 if n == 2 else 14)
    while True:
        X = rng.standard_normal((points, n))
        if n == 2:
            X /= np.linalg.norm(X, axis=1, keepdims=True)
        P = HPolytope.from_vertices(X)
        if len(P.offsets) > 2 * n:
            return P
