import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbvol.acute import (
    NOT_A_PRODUCT,
    HPolytope,
    PolytopeError,
    dihedral_angles,
    enumerate_vertices,
    is_acute,
    random_obtuse_polytope,
    random_rotation,
    random_simplex_product,
    regular_simplex,
    simplex_product_factorization,
    unit_cube,
)


def prism():
    tri = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    V = np.array([np.append(p, z) for p in tri for z in (0.0, 1.0)])
    return HPolytope.from_vertices(V)


def hexagon():
    t = np.arange(6) * np.pi / 3
    return HPolytope.from_vertices(np.c_[np.cos(t), np.sin(t)])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_cube(n):
    P = unit_cube(n)
    e = enumerate_vertices(P)
    assert len(e.vertices) == 2**n and not e.redundant
    angles = dihedral_angles(P)
    assert len(angles) == 2 * n * (n - 1)
    assert all(a.angle == pytest.approx(np.pi / 2, abs=1e-12) for a in angles)
    assert is_acute(P)
    f = simplex_product_factorization(P)
    assert f.is_product and f.block_dims == [1] * n
    assert f.vertex_gap <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_regular_simplex(n):
    P = regular_simplex(n)
    assert len(enumerate_vertices(P).vertices) == n + 1
    angles = dihedral_angles(P)
    assert len(angles) == n * (n + 1) // 2
    assert all(a.angle == pytest.approx(math.acos(1 / n), abs=1e-10) for a in angles)
    assert simplex_product_factorization(P).block_dims == [n]


def test_obtuse_triangle():
    P = HPolytope.from_vertices([[0, 0], [1, 0], [-0.8, 0.3]])
    angles = sorted(a.angle for a in dihedral_angles(P))
    assert sum(angles) == pytest.approx(np.pi)
    assert max(angles) > np.pi / 2
    assert not is_acute(P)
    # every triangle is a simplex, acute or not
    assert simplex_product_factorization(P).block_dims == [2]


def test_prism_factors():
    P = prism()
    assert is_acute(P)
    f = simplex_product_factorization(P)
    assert f.block_dims == [1, 2]
    assert len(enumerate_vertices(P).vertices) == 6


def test_hexagon_is_not_a_product():
    P = hexagon()
    assert all(a.angle == pytest.approx(2 * np.pi / 3) for a in dihedral_angles(P))
    assert not is_acute(P)
    f = simplex_product_factorization(P)
    assert not f.is_product
    assert f.to_json()["result"] == NOT_A_PRODUCT and f.reason


def test_angle_convention_is_interior():
    P = HPolytope.from_vertices([[0, 0], [1, 0], [0, 1]])
    angles = sorted(a.angle for a in dihedral_angles(P))
    assert np.allclose(angles, [np.pi / 4, np.pi / 4, np.pi / 2])


def test_redundant_facet_is_reported_and_ignored():
    P = unit_cube(2)
    R = HPolytope(np.vstack([P.normals, [[1, 1]]]), np.append(P.offsets, 2.0))
    e = enumerate_vertices(R)
    assert e.redundant == [4]
    assert len(e.vertices) == 4
    assert simplex_product_factorization(R).block_dims == [1, 1]


def test_unbounded_and_empty():
    with pytest.raises(PolytopeError):
        enumerate_vertices(HPolytope([[1, 0], [0, 1]], [1, 1]))
    with pytest.raises(PolytopeError):
        enumerate_vertices(HPolytope([[1.0], [-1.0]], [-1, -1]))


def test_bad_input():
    with pytest.raises(PolytopeError):
        HPolytope([[0, 0]], [1])
    with pytest.raises(PolytopeError):
        HPolytope(np.eye(5), np.ones(5))
    with pytest.raises(PolytopeError):
        HPolytope([[1, 0]], [1, 2])


def test_json_roundtrip_and_diagnostics(tmp_path):
    P = prism()
    path = tmp_path / "p.json"
    path.write_text(json.dumps(P.to_json()))
    Q = HPolytope.load(path)
    assert np.allclose(Q.normals, P.normals) and np.allclose(Q.offsets, P.offsets)
    with pytest.raises(PolytopeError, match="facet 0"):
        HPolytope.from_json({"dim": 2, "facets": [{"normal": [1, 0, 0], "offset": 1}]})
    with pytest.raises(PolytopeError, match="facets"):
        HPolytope.from_json({"dim": 2})


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_random_products_factor(seed, n):
    rng = np.random.default_rng(seed)
    P, dims = random_simplex_product(n, rng)
    assert is_acute(P)
    f = simplex_product_factorization(P)
    assert f.is_product and f.block_dims == dims


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(2, 3))
def test_obtuse_not_product(seed, n):
    P = random_obtuse_polytope(n, np.random.default_rng(seed))
    assert not simplex_product_factorization(P).is_product


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    P = prism()
    Q = random_rotation(3, rng)
    R = P.transformed(Q, rng.normal(size=3))
    a = sorted(x.angle for x in dihedral_angles(P))
    b = sorted(x.angle for x in dihedral_angles(R))
    assert np.allclose(a, b, atol=1e-10)
    assert simplex_product_factorization(R).block_dims == [1, 2]


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_factorization_soundness(seed):
    # whenever a product is reported, the block facets are mutually orthogonal
    # and the rebuilt vertex set matches
    rng = np.random.default_rng(seed)
    P, _ = random_simplex_product(3, rng)
    f = simplex_product_factorization(P)
    for A, B in itertools.combinations(f.blocks, 2):
        assert np.abs(P.normals[A.facets] @ P.normals[B.facets].T).max() <= 1e-8
    assert f.vertex_gap <= 1e-8
