"""Finite-dimensional norms, quadratic forms and partitions of unity.

Points, linear maps and functionals are plain numpy arrays. A functional
``l`` acts by ``l @ x``; a linear map ``D`` of shape (target, source) acts
by ``D @ x``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

PSD_RTOL = 1e-10
SYM_RTOL = 1e-12


class NormError(ValueError):
    """Raised for malformed or degenerate norm data."""


def as_vector(x, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


@dataclass(frozen=True)
class QuadForm:
    """Positive semidefinite quadratic form ``h(x) = x @ A @ x``."""

    matrix: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise ValueError(f"quadratic form needs a square matrix, got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("quadratic form has non-finite entries")
        scale = max(np.abs(A).max(), 1e-300)
        if np.abs(A - A.T).max() > SYM_RTOL * scale:
            raise ValueError("quadratic form matrix is not symmetric")
        A = 0.5 * (A + A.T)
        eig = np.linalg.eigvalsh(A)
        if eig[0] < -PSD_RTOL * max(eig[-1], 0.0):
            raise ValueError(f"quadratic form is not positive semidefinite (min eigenvalue {eig[0]:.3e})")
        object.__setattr__(self, "matrix", A)

    @classmethod
    def identity(cls, dim: int) -> "QuadForm":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x) -> float:
        x = as_vector(x, self.dim)
        return float(x @ self.matrix @ x)

    def norm(self, x) -> float:
        return float(np.sqrt(max(self(x), 0.0)))

    def norms(self, X: np.ndarray) -> np.ndarray:
        """Row-wise ``sqrt(h(x))`` for a stack of points."""
        X = np.atleast_2d(X)
        return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", X, self.matrix, X), 0.0))

    def dual_norm(self, l) -> float:
        """Operator norm of the functional ``l`` with respect to ``sqrt(h)``."""
        l = as_vector(l, self.dim)
        return float(np.sqrt(l @ np.linalg.solve(self.matrix, l)))

    def sqrt_det(self) -> float:
        return float(np.sqrt(max(np.linalg.det(self.matrix), 0.0)))

    def pushforward(self, T: np.ndarray) -> "QuadForm":
        """Form ``y -> h(T^{-1} y)``."""
        Tinv = np.linalg.inv(T)
        return QuadForm(Tinv.T @ self.matrix @ Tinv)


@dataclass(frozen=True)
class PolytopeNorm:
    """Symmetric polytopal norm ``||x|| = max_j |<a_j, x>|``.

    One representative per +/- pair of facet functionals is stored, one per
    row of ``facets``. The unit ball is the intersection of the slabs
    ``|<a_j, x>| <= 1``.
    """

    facets: np.ndarray

    def __post_init__(self):
        F = np.array(self.facets, dtype=float)
        if F.ndim != 2 or F.shape[0] == 0 or F.shape[1] == 0:
            raise NormError(f"facets must be a nonempty (k, n) array, got shape {F.shape}")
        if not np.all(np.isfinite(F)):
            raise NormError("facets have non-finite entries")
        n = F.shape[1]
        if F.shape[0] < n or np.linalg.matrix_rank(F) < n:
            raise NormError("facet functionals do not span the space; the norm is degenerate")
        object.__setattr__(self, "facets", F)

    @property
    def dim(self) -> int:
        return self.facets.shape[1]

    def __call__(self, x) -> float:
        x = as_vector(x, self.dim)
        return float(np.abs(self.facets @ x).max())

    def norms(self, X: np.ndarray) -> np.ndarray:
        return np.abs(np.atleast_2d(X) @ self.facets.T).max(axis=1)

    def dual(self, l) -> float:
        return dual_norm_eval(self, l)

    def pushforward(self, T: np.ndarray) -> "PolytopeNorm":
        """Norm ``y -> ||T^{-1} y||``; facets transform as ``a -> T^{-T} a``."""
        return PolytopeNorm(np.linalg.solve(np.asarray(T, float).T, self.facets.T).T)

    def to_json(self) -> dict:
        return {"dim": self.dim, "facets": self.facets.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "PolytopeNorm":
        if not isinstance(data, dict) or "facets" not in data:
            raise NormError("norm file must be an object with a 'facets' field")
        facets = np.asarray(data["facets"], dtype=float)
        if "dim" in data and (facets.ndim != 2 or facets.shape[1] != int(data["dim"])):
            raise NormError(f"field 'facets': rows must have length dim={data['dim']}")
        return cls(facets)

    @classmethod
    def load(cls, path) -> "PolytopeNorm":
        return cls.from_json(json.loads(Path(path).read_text()))


def norm_eval(norm: PolytopeNorm, x) -> float:
    return norm(x)


@dataclass(frozen=True)
class DualNormBracket:
    value: float
    lower: float
    upper: float
    argmax: np.ndarray


def dual_norm_bracket(norm: PolytopeNorm, l) -> DualNormBracket:
    """``sup_{||x|| <= 1} <l, x>`` by linear programming, with a certificate.

    The lower end comes from the primal maximizer, the upper end from the
    LP duals ``y`` with ``sum_j y_j a_j = l`` (value ``sum |y_j|``).
    """
    l = as_vector(l, norm.dim)
    if not np.any(l):
        return DualNormBracket(0.0, 0.0, 0.0, np.zeros(norm.dim))
    F = norm.facets
    res = linprog(
        -l,
        A_ub=np.vstack([F, -F]),
        b_ub=np.ones(2 * F.shape[0]),
        bounds=[(None, None)] * norm.dim,
        method="highs",
    )
    if res.status != 0:
        raise NormError(f"dual norm LP failed: {res.message}")
    x = res.x
    lower = float(l @ x)
    y = -res.ineqlin.marginals
    k = F.shape[0]
    coef = y[:k] - y[k:]
    upper = float(np.abs(coef).sum())
    # the duals reproduce l only up to solver tolerance; absorb the mismatch
    upper += float(np.abs(l - coef @ F).sum()) * float(np.abs(x).max() + 1.0)
    upper = max(upper, lower)
    return DualNormBracket(lower, lower, upper, x)


def dual_norm_eval(norm: PolytopeNorm, l) -> float:
    return dual_norm_bracket(norm, l).value


def dual_norm_vertices_2d(norm: PolytopeNorm, l) -> float:
    """Dual norm by walking the unit polygon's vertices (dimension 2 only)."""
    if norm.dim != 2:
        raise ValueError("vertex walk is only implemented in dimension 2")
    l = as_vector(l, 2)
    return float(np.abs(unit_ball_polygon(norm) @ l).max())


def unit_ball_polygon(norm: PolytopeNorm) -> np.ndarray:
    """Counter-clockwise vertices of a planar unit ball.

    Walks the hull of the functionals ``{+-a_j}`` (the polar body); each
    hull edge ``(a_p, a_q)`` yields the ball vertex solving
    ``<a_p, x> = <a_q, x> = 1``. Facets off the hull never touch the ball.
    """
    if norm.dim != 2:
        raise ValueError("unit_ball_polygon needs a planar norm")
    hull = _convex_hull_2d(np.vstack([norm.facets, -norm.facets]))
    k = len(hull)
    return np.array([np.linalg.solve(np.vstack([hull[i], hull[(i + 1) % k]]), np.ones(2)) for i in range(k)])


def _convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; collinear points are dropped, output is CCW."""
    pts = sorted(map(tuple, np.unique(points, axis=0)))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-15:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-15:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))


@dataclass
class PartitionOfUnity:
    """Weighted squares ``sum_i c_i l_i l_i^T`` meant to reproduce ``form``.

    Functionals are stored unnormalized; callers normalize where needed.
    """

    weights: np.ndarray
    functionals: np.ndarray
    form: QuadForm = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.functionals = np.atleast_2d(np.asarray(self.functionals, dtype=float))
        if len(self.weights) == 0:
            raise ValueError("partition has no atoms")
        if len(self.weights) != len(self.functionals):
            raise ValueError("weights and functionals differ in length")
        if np.any(self.weights <= 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("partition weights must be finite and strictly positive")
        if np.any(~np.any(self.functionals != 0, axis=1)):
            raise ValueError("partition contains a zero functional")
        if self.form is None:
            self.form = QuadForm.identity(self.functionals.shape[1])
        if self.form.dim != self.functionals.shape[1]:
            raise ValueError("functional dimension differs from the reference form")

    @property
    def dim(self) -> int:
        return self.functionals.shape[1]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def gram(self) -> np.ndarray:
        L = self.functionals
        return (L * self.weights[:, None]).T @ L

    def residual(self) -> float:
        return partition_residual(self)

    def is_exact(self, tol: float = 1e-9) -> bool:
        return self.residual() <= tol * max(1.0, np.abs(self.form.matrix).max())

    def reconstruct(self, values: np.ndarray) -> np.ndarray:
        """Map per-atom real values to points: ``sum_i c_i v_i A^{-1} l_i``.

        For the Euclidean form this is ``sum_i c_i v_i l_i``; with
        ``values = L @ y`` it returns ``y`` exactly when the partition is exact.
        """
        values = np.asarray(values, dtype=float)
        axes = np.linalg.solve(self.form.matrix, self.functionals.T).T
        return (values * self.weights) @ axes


def partition_residual(mu: PartitionOfUnity) -> float:
    """Frobenius norm of ``sum_i c_i l_i l_i^T - A``."""
    return float(np.linalg.norm(mu.gram() - mu.form.matrix))


def coordinate_partition(n: int) -> PartitionOfUnity:
    return PartitionOfUnity(np.ones(n), np.eye(n))


def regular_simplex_vertices(n: int, edge: float = 1.0) -> np.ndarray:
    """Vertices (rows) of a regular n-simplex in R^n with the given edge length.

    Vertex 0 is the origin and vertex k lies in the span of e_1..e_k.
    """
    V = np.zeros((n + 1, n))
    for k in range(1, n + 1):
        c = V[:k].mean(axis=0)
        r2 = float(np.sum((V[0] - c) ** 2))
        V[k] = c
        V[k, k - 1] = np.sqrt(max(edge**2 - r2, 0.0))
    return V


def simplex_facet_normals(n: int) -> np.ndarray:
    """Outward unit normals of a regular n-simplex, row i opposite vertex i."""
    V = regular_simplex_vertices(n)
    c = V.mean(axis=0)
    U = c - V
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def simplex_partition(n: int) -> PartitionOfUnity:
    """n+1 unit facet normals of the regular simplex with weights n/(n+1).

    The normals satisfy ``sum u u^T = (n+1)/n Id``, so this partitions the
    Euclidean form.
    """
    return PartitionOfUnity(np.full(n + 1, n / (n + 1)), simplex_facet_normals(n))


def linf_norm(n: int) -> PolytopeNorm:
    return PolytopeNorm(np.eye(n))


def l1_norm(n: int) -> PolytopeNorm:
    """Cross-polytope norm: facets are the sign vectors (one per +/- pair)."""
    signs = np.array(np.meshgrid(*[[1.0, -1.0]] * n, indexing="ij")).reshape(n, -1).T
    return PolytopeNorm(signs[signs[:, 0] > 0])


def regular_polygon_norm(pairs: int, inradius: float = 1.0, phase: float = 0.0) -> PolytopeNorm:
    """Planar norm whose unit ball is a regular 2*pairs-gon with the given inradius."""
    t = phase + np.pi * np.arange(pairs) / pairs
    return PolytopeNorm(np.column_stack([np.cos(t), np.sin(t)]) / inradius)


def euclidean_sampled_norm(n: int, count: int, rng=None) -> PolytopeNorm:
    """Outer polytope approximation of the Euclidean ball from unit facet normals."""
    if n == 2:
        return regular_polygon_norm(count)
    rng = np.random.default_rng(rng)
    U = sphere_directions(n, count, rng)
    U[U[:, 0] < 0] *= -1
    return PolytopeNorm(U)


def sphere_directions(n: int, count: int, rng=None) -> np.ndarray:
    """Roughly uniform unit vectors (Fibonacci lattice for n=3, Gaussian otherwise)."""
    if n == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z**2)
        t = np.pi * (1 + 5**0.5) * i
        return np.column_stack([r * np.cos(t), r * np.sin(t), z])
    rng = np.random.default_rng(rng)
    X = rng.standard_normal((count, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)
