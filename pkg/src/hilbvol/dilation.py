"""L_q-dilations, Hilbert-Schmidt norms and Jacobians of linear maps."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .banach import PartitionOfUnity, PolytopeNorm, dual_norm_eval

HADAMARD_RTOL = 1e-12


def singular_values(D, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Singular values in decreasing order by one-sided (Hestenes) Jacobi.

    Columns are rotated pairwise until mutually orthogonal; the column norms
    are then the singular values. Working on ``D`` rather than ``D^T D``
    keeps small singular values to high relative accuracy.
    """
    A = np.array(D, dtype=float, ndmin=2)
    if A.shape[1] > A.shape[0]:
        A = A.T.copy()
    n = A.shape[1]
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai, aj = A[:, i], A[:, j]
                alpha = float(ai @ ai)
                beta = float(aj @ aj)
                gamma = float(ai @ aj)
                if abs(gamma) <= tol * math.sqrt(alpha) * math.sqrt(beta) or gamma == 0.0:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                if t == 0.0:
                    continue
                rotated = True
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                A[:, i], A[:, j] = c * ai - s * aj, s * ai + c * aj
        if not rotated:
            break
    return np.sort(np.linalg.norm(A, axis=0))[::-1]


def hs_norm(D) -> float:
    D = np.asarray(D, dtype=float)
    return float(np.sqrt(np.sum(D * D)))


def operator_norm(D) -> float:
    return float(singular_values(D)[0])


def lq_dilation(D, mu: PartitionOfUnity, q: float = 2.0, source_norm: PolytopeNorm | None = None) -> float:
    """``(sum_i c_i Lip(l_i o D)^q)^(1/q)``; ``q = inf`` gives the max.

    ``Lip(l o D)`` is the dual source norm of ``D^T l``: Euclidean when
    ``source_norm`` is None, otherwise the dual of the given polytope norm.
    """
    if not q >= 1:
        raise ValueError(f"q must lie in [1, inf], got {q}")
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape[0] != mu.dim:
        raise ValueError(f"map target dimension {D.shape[0]} differs from partition dimension {mu.dim}")
    pulled = mu.functionals @ D
    if source_norm is None:
        lips = np.linalg.norm(pulled, axis=1)
    else:
        if source_norm.dim != D.shape[1]:
            raise ValueError("source norm dimension differs from the map's source")
        lips = np.array([dual_norm_eval(source_norm, row) for row in pulled])
    if np.isinf(q):
        return float(lips.max())
    return float((mu.weights @ lips**q) ** (1.0 / q))


def jacobian_k(D, k: int) -> float:
    """Norm of the k-th exterior power: product of the k largest singular values."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if not 1 <= k <= min(D.shape):
        raise ValueError(f"k={k} out of range for a {D.shape[0]}x{D.shape[1]} map")
    return float(np.prod(singular_values(D)[:k]))


class HadamardCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def hadamard_check(D, n: int | None = None) -> HadamardCheck:
    """``Jac^[n](D) <= (n^{-1/2} ||D||_HS)^n`` with n the target dimension."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n = D.shape[0] if n is None else n
    if D.shape[1] < n:
        raise ValueError("source dimension must be at least n")
    lhs = jacobian_k(D, n)
    rhs = (hs_norm(D) / np.sqrt(n)) ** n
    return HadamardCheck(lhs, rhs, lhs <= rhs * (1 + HADAMARD_RTOL))


def is_homothety(D, rtol: float = 1e-9) -> bool:
    """Equality case of Hadamard's inequality: all singular values agree."""
    s = singular_values(D)
    return bool(s[0] - s[-1] <= rtol * max(s[0], 1e-300))


def weighted_hadamard_check(D) -> HadamardCheck:
    """``|det D| <= prod_i |row_i|``: each coordinate function's Lipschitz constant."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("weighted Hadamard check needs a square matrix")
    # compared in log space with scaled row norms, so tiny entries do not underflow
    sign, logdet = np.linalg.slogdet(D)
    big = np.abs(D).max(axis=1)
    if sign == 0 or np.any(big == 0):
        return HadamardCheck(0.0, float(np.prod(np.linalg.norm(D, axis=1))), True)
    lognorms = np.log(big) + np.log(np.linalg.norm(D / big[:, None], axis=1))
    logrhs = float(lognorms.sum())
    return HadamardCheck(math.exp(logdet), math.exp(logrhs), logdet <= logrhs + math.log1p(HADAMARD_RTOL))


class InverseLipIdentity(NamedTuple):
    inverse_lip: float
    volume_bound: float
    gap: float


def inverse_lip_identity(D) -> InverseLipIdentity:
    """Compare ``Lip(D^-1)`` with ``C * Jac^[n-1](D)``, ``C = 1/|det D|``.

    For invertible linear maps both equal ``1/sigma_min``. The determinant
    is taken from an LU factorization, independently of the singular values.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("inverse Lipschitz identity needs a square matrix")
    n = D.shape[0]
    det = abs(float(np.linalg.det(D)))
    if det <= 1e-12 * float(np.prod(np.linalg.norm(D, axis=1))):
        raise ValueError("matrix is numerically singular")
    s = singular_values(D)
    inv_lip = 1.0 / s[-1]
    bound = (float(np.prod(s[:-1])) if n > 1 else 1.0) / det
    return InverseLipIdentity(inv_lip, bound, abs(inv_lip - bound) / inv_lip)
