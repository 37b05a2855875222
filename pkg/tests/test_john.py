import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbvol.banach import (
    PolytopeNorm,
    QuadForm,
    dual_norm_eval,
    euclidean_sampled_norm,
    l1_norm,
    linf_norm,
    regular_polygon_norm,
    sphere_directions,
)
from hilbvol.john import (
    MVEEError,
    contact_dual_norms,
    euclidean_ball_volume,
    john_domination_check,
    john_form,
    john_volume_of_unit_ball,
    lowner_mvee,
    unit_ball_lebesgue_volume,
)

from strategies import spanning_facets


def random_symmetric_norm(rng, n, pairs):
    return PolytopeNorm(rng.standard_normal((pairs, n)))


# Löwner ellipsoid ---------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_mvee_coordinate_points(n):
    r = lowner_mvee(np.eye(n))
    assert r.converged
    assert np.allclose(r.M, np.eye(n), atol=1e-12)
    assert np.allclose(r.weights, 1 / n, atol=1e-12)


def test_mvee_square_corners():
    r = lowner_mvee(np.array([[1.0, 1.0], [1.0, -1.0]]))
    assert np.allclose(r.M, np.eye(2) / 2, atol=1e-12)


def test_mvee_single_pair():
    r = lowner_mvee(np.array([[3.0]]))
    assert r.M[0, 0] == pytest.approx(1 / 9)


def test_mvee_rejects_non_spanning():
    with pytest.raises(MVEEError):
        lowner_mvee(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_mvee_budget_exhaustion_is_flagged(rng):
    P = rng.standard_normal((40, 4))
    r = lowner_mvee(P, max_iter=3, polish=False)
    assert not r.converged
    # still a valid enclosing ellipsoid
    assert np.all(np.einsum("ij,jk,ik->i", P, r.M, P) <= 1 + 1e-12)


@given(spanning_facets(dim=(1, 5), extra=(0, 20)))
def test_mvee_contains_points_and_is_optimal(P):
    r = lowner_mvee(P)
    g = np.einsum("ij,jk,ik->i", P, r.M, P)
    assert np.all(g <= 1 + 1e-12)
    # Kiefer-Wolfowitz: support points sit on the boundary
    support = r.weights > 1e-6 * r.weights.max()
    assert np.allclose(g[support], 1, atol=1e-8)


def test_away_steps_switch(rng):
    P = rng.standard_normal((30, 3))
    a = lowner_mvee(P, away_steps=True)
    b = lowner_mvee(P, away_steps=False, max_iter=400_000)
    assert np.allclose(a.M, b.M, atol=1e-7)


def test_nearly_tied_facets_converge():
    # many facets of a smooth-ish convex body; plain Frank-Wolfe zigzags here
    t = np.pi * np.arange(720) / 720
    r = 1 + 0.04 * np.cos(2 * t) + 0.02 * np.sin(6 * t)
    jr = john_form(PolytopeNorm(np.column_stack([np.cos(t), np.sin(t)]) * r[:, None]))
    assert jr.converged and jr.mass_gap <= 1e-9


# John form -----------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_john_linf(n):
    jr = john_form(linf_norm(n))
    assert np.linalg.norm(jr.form.matrix - np.eye(n)) <= 1e-8
    assert jr.mass == pytest.approx(n, abs=1e-12)
    assert np.allclose(jr.partition.weights, 1)


def test_john_l1_plane():
    jr = john_form(l1_norm(2))
    assert np.allclose(jr.form.matrix, 2 * np.eye(2), atol=1e-10)
    assert np.allclose(jr.partition.weights, 1, atol=1e-10)


def test_john_hexagon():
    jr = john_form(regular_polygon_norm(3))
    assert np.allclose(jr.form.matrix, np.eye(2), atol=1e-10)
    assert np.allclose(jr.partition.weights, 2 / 3, atol=1e-10)
    assert jr.mass == pytest.approx(2)


def test_domination_examples():
    assert john_domination_check(linf_norm(2), QuadForm(np.eye(2)), np.eye(2)) == pytest.approx(0, abs=1e-15)
    wrong = john_domination_check(l1_norm(2), QuadForm(np.eye(2)), np.array([[0.5, 0.5]]))
    assert wrong == pytest.approx(1 - 1 / math.sqrt(2))


def test_domination_euclidean_sampled():
    N = euclidean_sampled_norm(3, 400, rng=1)
    jr = john_form(N)
    assert john_domination_check(N, jr.form, sphere_directions(3, 5000)) <= 1e-9


@settings(max_examples=25)
@given(spanning_facets(dim=(2, 5), extra=(0, 25)))
def test_john_invariants(F):
    N = PolytopeNorm(F)
    jr = john_form(N)
    n = N.dim
    assert jr.converged
    assert jr.decomposition_residual <= 1e-8
    assert jr.mass_gap <= 1e-6
    assert jr.domination_violation <= 1e-9
    dual, hdual = contact_dual_norms(N, jr)
    assert np.allclose(dual, 1, atol=1e-6)
    assert np.allclose(hdual, 1, atol=1e-6)
    # independent dominance oracle: the form's unit ball contains no point of norm > 1
    X = sphere_directions(n, 3000, rng=0)
    X = X / jr.form.norms(X)[:, None]
    assert N.norms(X).max() <= 1 + 1e-9


@settings(max_examples=15)
@given(spanning_facets(dim=(2, 4), extra=(1, 15)), st.integers(0, 2**32 - 1))
def test_john_uniqueness_from_random_starts(F, seed):
    N = PolytopeNorm(F)
    ref = john_form(N).form.matrix
    rng = np.random.default_rng(seed)
    for _ in range(5):
        other = john_form(N, init_weights=rng.random(len(F)) + 1e-3).form.matrix
        assert np.linalg.norm(other - ref) <= 1e-6 * max(1, np.abs(ref).max())


@settings(max_examples=15)
@given(spanning_facets(dim=(2, 4), extra=(1, 15)), st.integers(0, 2**32 - 1))
def test_john_equivariance(F, seed):
    N = PolytopeNorm(F)
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((N.dim, N.dim)) + 2 * np.eye(N.dim)
    if abs(np.linalg.det(T)) < 0.1:
        return
    pushed = john_form(N.pushforward(T)).form.matrix
    expected = john_form(N).form.pushforward(T).matrix
    assert np.linalg.norm(pushed - expected) <= 1e-6 * max(1, np.abs(expected).max())


def test_john_random_corpus_timing(rng):
    import time

    for _ in range(5):
        N = random_symmetric_norm(rng, 6, 100)
        t = time.perf_counter()
        jr = john_form(N, domination_samples=10_000)
        assert time.perf_counter() - t < 5
        assert jr.decomposition_residual <= 1e-6 and jr.mass_gap <= 1e-6


def test_json_report_fields():
    out = john_form(linf_norm(2)).to_json()
    assert out["mass"] == pytest.approx(2)
    assert {"h_diamond", "atoms", "residuals"} <= set(out)


# volumes -------------------------------------------------------------------------

def test_volume_square_and_cross():
    for N in (linf_norm(2), l1_norm(2)):
        v = john_volume_of_unit_ball(N, john_form(N).form)
        assert v.value == pytest.approx(4, abs=1e-12)
        assert v.method == "exact-polygon"
        assert v.value > math.pi + 0.1


def test_volume_euclidean_polygon():
    N = regular_polygon_norm(128)
    v = john_volume_of_unit_ball(N, john_form(N).form)
    assert v.value == pytest.approx(math.pi, abs=1e-3)


@pytest.mark.parametrize("n", [3, 4])
def test_volume_monte_carlo_cube(n):
    N = linf_norm(n)
    v = john_volume_of_unit_ball(N, john_form(N).form, samples=200_000, seed=5)
    assert abs(v.value - 2**n) <= 5 * v.stderr + 1e-9
    assert v.value >= euclidean_ball_volume(n) * (1 - 1e-6)


def test_monte_carlo_deterministic_for_seed():
    N = l1_norm(3)
    a = unit_ball_lebesgue_volume(N, samples=50_000, seed=11)
    b = unit_ball_lebesgue_volume(N, samples=50_000, seed=11)
    assert a == b
    assert abs(a[0] - 4 / 3) <= 5 * a[1]


def test_euclidean_ball_volumes():
    assert euclidean_ball_volume(2) == pytest.approx(math.pi)
    assert euclidean_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_contact_atoms_touch_the_ball():
    N = regular_polygon_norm(7, phase=0.2)
    jr = john_form(N)
    for l in jr.partition.functionals:
        assert dual_norm_eval(N, l) == pytest.approx(1, abs=1e-9)
