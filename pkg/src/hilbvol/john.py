"""John's Hilbertian form of a polytopal norm and its contact partition.

The John ellipsoid of the ball ``{|<a_j, x>| <= 1}`` is polar to the
minimum-volume ellipsoid containing ``{+-a_j}``. That ellipsoid is found
from the D-optimal design dual: maximize ``log det sum_j w_j a_j a_j^T``
over the simplex by Khachiyan/Wolfe-Atwood coordinate steps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .banach import (
    PartitionOfUnity,
    PolytopeNorm,
    QuadForm,
    dual_norm_eval,
    polygon_area,
    sphere_directions,
    unit_ball_polygon,
)

log = logging.getLogger(__name__)

WEIGHT_CUTOFF = 1e-9
REFRESH_EVERY = 64
POLISH_EVERY = 2048  # Newton restarts break zigzagging among nearly tied points


class MVEEError(ValueError):
    pass


@dataclass
class MVEEResult:
    """Ellipsoid ``{y : y^T M y <= 1}`` containing all ``+-points``."""

    M: np.ndarray
    weights: np.ndarray
    iterations: int
    converged: bool
    eps: float  # max_j g_j / n - 1 at the returned weights
    log_det_gap: float  # certified bound n * log(1 + eps)


def _design_matrix(P, w):
    return (P * w[:, None]).T @ P


def _leverages(P, Xinv):
    return np.einsum("ij,jk,ik->i", P, Xinv, P)


def lowner_mvee(points, tol: float = 1e-10, max_iter: int = 100_000, away_steps: bool = True,
                init_weights=None, polish: bool = True) -> MVEEResult:
    """Minimum-volume centered ellipsoid containing the symmetric set ``{+-p}``.

    Parameters
    ----------
    points : (k, n) array
        One representative of each +/- pair.
    tol : float
        Stop when ``max_j p_j^T X^-1 p_j <= n (1 + tol)``.
    away_steps : bool
        Enable Wolfe-Atwood away steps (drop weight from the worst support point).
    init_weights : (k,) array, optional
        Starting design; uniform by default.

    The returned ``M`` is scaled so that every point satisfies
    ``p^T M p <= 1`` exactly, whether or not the iteration converged.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    k, n = P.shape
    if k < n or np.linalg.matrix_rank(P) < n:
        raise MVEEError("points do not span the space")
    if init_weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(init_weights, dtype=float).copy()
        if w.shape != (k,) or np.any(w < 0) or w.sum() <= 0:
            raise MVEEError("initial weights must be a nonnegative vector of length k")
        w /= w.sum()
        if np.linalg.matrix_rank(_design_matrix(P, w)) < n:
            w = 0.5 * w + 0.5 / k
    Xinv = np.linalg.inv(_design_matrix(P, w))
    g = _leverages(P, Xinv)
    it = 0
    converged = False
    while it < max_iter:
        j = int(np.argmax(g))
        gmax = g[j]
        if gmax <= n * (1 + tol):
            converged = True
            break
        step_idx, alpha = j, (gmax - n) / (n * (gmax - 1))
        if away_steps:
            support = np.flatnonzero(w > 0)
            i = support[np.argmin(g[support])]
            gmin = g[i]
            if n - gmin > gmax - n and w[i] < 1:
                a_opt = (gmin - n) / (n * (gmin - 1)) if gmin > 1 else -np.inf
                step_idx, alpha = i, max(a_opt, -w[i] / (1 - w[i]))
        p = P[step_idx]
        gp = g[step_idx]
        w *= 1 - alpha
        w[step_idx] += alpha
        if w[step_idx] < 1e-300:
            w[step_idx] = 0.0
        it += 1
        if polish and it % POLISH_EVERY == 0:
            w, Xinv, g = _newton_polish(P, w, g)
            continue
        if it % REFRESH_EVERY == 0 or alpha > 1 - 1e-8:
            # a full step (possible only for n = 1) would divide by 1 - alpha below
            Xinv = np.linalg.inv(_design_matrix(P, w))
        else:
            # Sherman-Morrison for X' = (1 - a) X + a p p^T
            u = Xinv @ p
            Xinv = (Xinv - (alpha / (1 - alpha + alpha * gp)) * np.outer(u, u)) / (1 - alpha)
        g = _leverages(P, Xinv)
    if polish and converged:
        w, Xinv, g = _newton_polish(P, w, g)
    X = _design_matrix(P, w)
    Xinv = np.linalg.inv(X)
    g = _leverages(P, Xinv)
    gmax = float(g.max())
    eps = gmax / n - 1.0
    if not converged:
        log.warning("lowner_mvee stopped after %d iterations with eps=%.3e", it, eps)
    M = Xinv / gmax
    return MVEEResult(0.5 * (M + M.T), w, it, converged and eps <= max(tol, 1e-13), eps, n * np.log1p(max(eps, 0.0)))


def _newton_polish(P, w, g, steps: int = 30):
    """Newton iterations on the support for ``g_j = n``; keeps the better design."""
    n = P.shape[1]
    support = np.flatnonzero(w > WEIGHT_CUTOFF * w.max())
    S = P[support]
    ws = w[support].copy()
    best = (np.max(g) / n - 1.0, w.copy())
    for _ in range(steps):
        Xinv = np.linalg.inv(_design_matrix(S, ws))
        K = S @ Xinv @ S.T
        gs = np.diag(K).copy()
        # gradient of log det is g; hessian is -(K*K); constraint sum w = 1
        H = -(K * K)
        m = len(ws)
        KKT = np.zeros((m + 1, m + 1))
        KKT[:m, :m] = H
        KKT[:m, m] = 1.0
        KKT[m, :m] = 1.0
        rhs = np.concatenate([-gs, [0.0]])
        sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
        d = sol[:m]
        t = 1.0
        neg = d < 0
        if np.any(neg):
            t = min(1.0, 0.9 * float(np.min(-ws[neg] / d[neg])))
        if t <= 0:
            break
        ws = ws + t * d
        ws /= ws.sum()
        full = np.zeros_like(w)
        full[support] = ws
        Xinv_full = np.linalg.inv(_design_matrix(P, full))
        gf = _leverages(P, Xinv_full)
        eps = np.max(gf) / n - 1.0
        if eps < best[0]:
            best = (eps, full.copy())
        if eps < 1e-14 or np.abs(d).max() < 1e-16:
            break
    w = best[1]
    Xinv = np.linalg.inv(_design_matrix(P, w))
    return w, Xinv, _leverages(P, Xinv)


@dataclass
class JohnResult:
    form: QuadForm  # John's form; ||x||_form >= ||x|| with contact on the atoms
    partition: PartitionOfUnity
    iterations: int
    converged: bool
    decomposition_residual: float
    mass_gap: float
    domination_violation: float
    contact_indices: np.ndarray = field(default=None)

    @property
    def mass(self) -> float:
        return self.partition.mass

    def to_json(self) -> dict:
        return {
            "h_diamond": self.form.matrix.tolist(),
            "atoms": [
                {"facet": int(i), "weight": float(c), "functional": l.tolist()}
                for i, c, l in zip(self.contact_indices, self.partition.weights, self.partition.functionals)
            ],
            "mass": self.mass,
            "iterations": self.iterations,
            "converged": self.converged,
            "residuals": {
                "decomposition": self.decomposition_residual,
                "mass_gap": self.mass_gap,
                "domination_violation": self.domination_violation,
            },
        }


def john_form(norm: PolytopeNorm, tol: float = 1e-10, max_iter: int = 100_000, away_steps: bool = True,
              init_weights=None, domination_samples: int = 2000, rng=0) -> JohnResult:
    """John's form ``h`` of ``norm`` with its contact partition of unity.

    ``h`` has matrix ``A = M^{-1}`` where ``M`` is the Löwner ellipsoid of the
    facet functionals. Contact atoms are the functionals with non-negligible
    design weight; weights ``n w_j`` are corrected by a minimum-norm least
    squares step so that ``sum c_j a_j a_j^T = A``.
    """
    F = norm.facets
    n = norm.dim
    mv = lowner_mvee(F, tol=tol, max_iter=max_iter, away_steps=away_steps, init_weights=init_weights)
    A = np.linalg.inv(mv.M)
    A = 0.5 * (A + A.T)
    keep = np.flatnonzero(mv.weights > WEIGHT_CUTOFF * mv.weights.max())
    atoms = F[keep]
    c = n * mv.weights[keep]
    c = _reproject_weights(atoms, c, A)
    form = QuadForm(A)
    mu = PartitionOfUnity(c, atoms, form)
    samples = sphere_directions(n, domination_samples, rng)
    viol = john_domination_check(norm, form, samples)
    return JohnResult(
        form=form,
        partition=mu,
        iterations=mv.iterations,
        converged=mv.converged,
        decomposition_residual=mu.residual(),
        mass_gap=abs(mu.mass - n),
        domination_violation=viol,
        contact_indices=keep,
    )


def _sym_features(atoms):
    n = atoms.shape[1]
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return np.einsum("ki,kj->kij", atoms, atoms)[:, iu[0], iu[1]] * scale, iu, scale


def _reproject_weights(atoms, c, A):
    """Smallest correction ``delta`` with ``sum (c+delta)_j a_j a_j^T = A``."""
    Phi, iu, scale = _sym_features(atoms)
    target = A[iu] * scale
    delta = np.linalg.lstsq(Phi.T, target - Phi.T @ c, rcond=None)[0]
    c_new = c + delta
    if np.all(c_new > 0):
        return c_new
    log.warning("weight re-projection produced non-positive weights; keeping design weights")
    return c


def john_domination_check(norm: PolytopeNorm, form: QuadForm, samples) -> float:
    """Largest ``||x|| - ||x||_h`` over sample directions rescaled to ``||x|| = 1``."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    X = X[np.any(X != 0, axis=1)]
    X = X / norm.norms(X)[:, None]
    return float(np.max(1.0 - form.norms(X)))


def contact_dual_norms(norm: PolytopeNorm, result: JohnResult) -> tuple[np.ndarray, np.ndarray]:
    """Dual norms of the atoms in the Banach norm and in John's form."""
    L = result.partition.functionals
    banach = np.array([dual_norm_eval(norm, l) for l in L])
    hilbert = np.array([result.form.dual_norm(l) for l in L])
    return banach, hilbert


@dataclass
class BallVolume:
    value: float
    stderr: float
    lebesgue: float
    method: str


def unit_ball_lebesgue_volume(norm: PolytopeNorm, form: QuadForm | None = None, samples: int = 1_000_000,
                              seed: int = 0, strata: int = 64) -> tuple[float, float, str]:
    """Lebesgue volume of the unit ball: exact polygon area in the plane,
    stratified Monte Carlo otherwise (returns value, standard error, method)."""
    n = norm.dim
    if n == 1:
        return 2.0 / float(np.abs(norm.facets).max()), 0.0, "exact"
    if n == 2:
        return polygon_area(unit_ball_polygon(norm)), 0.0, "exact-polygon"
    if form is None:
        form = john_form(norm).form
    # John: the ball lies inside sqrt(n) times the John ellipsoid
    half = np.sqrt(n * np.diag(np.linalg.inv(form.matrix))) * (1 + 1e-9)
    box = float(np.prod(2 * half))
    rng = np.random.Generator(np.random.Philox(seed))
    per = max(samples // strata, 1)
    edges = np.linspace(-half[0], half[0], strata + 1)
    means, variances = [], []
    for s in range(strata):
        X = rng.uniform(-half, half, size=(per, n))
        X[:, 0] = rng.uniform(edges[s], edges[s + 1], size=per)
        inside = (norm.norms(X) <= 1.0).astype(float)
        means.append(inside.mean())
        variances.append(inside.var(ddof=1) / per if per > 1 else 0.0)
    means = np.array(means)
    value = box * means.mean()
    stderr = box * np.sqrt(np.sum(variances)) / strata
    return float(value), float(stderr), "stratified-monte-carlo"


def john_volume_of_unit_ball(norm: PolytopeNorm, form: QuadForm, samples: int = 1_000_000, seed: int = 0) -> BallVolume:
    """Volume of the unit ball measured by John's form: ``sqrt(det A) * Leb(B)``."""
    leb, err, method = unit_ball_lebesgue_volume(norm, form, samples=samples, seed=seed)
    scale = form.sqrt_det()
    return BallVolume(scale * leb, scale * err, leb, method)


def euclidean_ball_volume(n: int) -> float:
    from math import gamma, pi

    return pi ** (n / 2) / gamma(n / 2 + 1)
