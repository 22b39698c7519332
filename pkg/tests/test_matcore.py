import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lyapgap import matcore
from lyapgap.errors import ConditioningError, GeometryError, InputError, SingularityError
from lyapgap.matcore import Subspace


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def square(d):
    return arrays(np.float64, (d, d), elements=finite)


def random_nested(rng, d):
    ell = int(rng.integers(1, d + 1))
    k = int(rng.integers(0, ell))
    F, _ = np.linalg.qr(rng.standard_normal((d, ell)))
    return Subspace(F[:, :k]), Subspace(F)


# --- svd ---------------------------------------------------------------

def test_svd_diagonal():
    assert np.allclose(matcore.svd(np.diag([3.0, 1.0])).s, [3, 1])


def test_svd_identity():
    assert np.allclose(matcore.singular_values(np.eye(5)), 1.0)


def test_svd_reconstruction(rng):
    A = rng.uniform(-1, 1, (4, 4))
    r = matcore.svd(A)
    assert np.max(np.abs(r.reconstruct() - A)) <= 1e-10
    assert np.allclose(r.u.T @ r.u, np.eye(4), atol=1e-12)
    assert np.allclose(r.v.T @ r.v, np.eye(4), atol=1e-12)
    assert np.all(np.diff(r.s) <= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6).flatmap(square))
def test_svd_matches_lapack(A):
    s = matcore.singular_values(A)
    ref = np.linalg.svd(A, compute_uv=False)
    assert np.allclose(s, ref, atol=1e-10 * max(1.0, ref[0]))


def test_svd_rank_deficient_completes_basis():
    A = np.outer([1.0, 2.0, 3.0], [1.0, 0.0, 1.0])
    r = matcore.svd(A)
    assert np.allclose(r.u.T @ r.u, np.eye(3), atol=1e-12)
    assert np.allclose(r.reconstruct(), A, atol=1e-12)
    assert r.s[1] < 1e-14


def test_svd_graded_relative_accuracy():
    # column-graded matrix: tiny singular values keep their relative accuracy
    rng = np.random.default_rng(1)
    C = rng.standard_normal((4, 4))
    D = np.diag(10.0 ** -np.arange(0, 16, 4))
    s = matcore.singular_values(C @ D)
    # product of singular values equals |det| to relative precision
    assert math.isclose(np.prod(s), abs(np.linalg.det(C)) * np.prod(np.diag(D)), rel_tol=1e-10)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_svd_rejects_nonfinite(bad):
    with pytest.raises(InputError):
        matcore.svd(np.array([[1.0, bad], [0.0, 1.0]]))


def test_as_matrix_rejects_nonsquare():
    with pytest.raises(InputError):
        matcore.as_matrix(np.ones((2, 3)))


def test_rectangular_svd():
    A = np.arange(6.0).reshape(2, 3)
    assert np.allclose(matcore.singular_values(A), np.linalg.svd(A, compute_uv=False))


# --- singular products ---------------------------------------------------

def test_singular_product_examples():
    D = np.diag([4.0, 2.0, 1.0])
    assert matcore.singular_product(D, 1, 2) == pytest.approx(8.0)
    assert matcore.singular_product(D, 1, 3) == pytest.approx(8.0)


def test_singular_product_det(rng):
    for _ in range(50):
        A = rng.standard_normal((3, 3))
        assert math.isclose(matcore.singular_product(A, 1, 3), abs(np.linalg.det(A)), rel_tol=1e-8)


@pytest.mark.parametrize("i,j", [(0, 1), (2, 1), (1, 4)])
def test_singular_product_bad_index(i, j):
    with pytest.raises(InputError):
        matcore.singular_product(np.eye(3), i, j)


def test_singular_values_2x2_vectorized(rng):
    M = rng.standard_normal((500, 2, 2))
    assert np.allclose(matcore.singular_values_2x2(M), np.linalg.svd(M, compute_uv=False), rtol=1e-12)


# --- subspaces -----------------------------------------------------------

def test_subspace_frame_orthonormal():
    with pytest.raises(InputError):
        Subspace(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_subspace_coordinate_and_contains():
    E1, E2 = Subspace.coordinate(4, 1), Subspace.coordinate(4, 2)
    assert E2.contains(E1) and not E1.contains(E2)
    assert Subspace.full(4).contains(E2)
    assert E2.contains(Subspace.zero(4))
    assert Subspace.span(np.array([[1, 1, 0, 0], [1, -1, 0, 0]]).T, 4).equals(E2)


def test_subspace_equality_frame_independent(rng):
    F, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    O, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    assert Subspace(F).equals(Subspace(F @ O))


# --- restricted operator ---------------------------------------------------

def test_restricted_identity(rng):
    U, V = random_nested(rng, 5)
    M = matcore.restricted_operator(np.eye(5), U, V)
    assert np.allclose(matcore.singular_values(M), 1.0)


def test_restricted_aligned_diagonal():
    M = matcore.restricted_operator(np.diag([4.0, 2.0, 1.0]), Subspace.coordinate(3, 1), Subspace.coordinate(3, 2))
    assert M.shape == (1, 1)
    assert abs(M[0, 0]) == pytest.approx(2.0)


def test_restricted_not_nested():
    with pytest.raises(GeometryError):
        matcore.restricted_operator(np.eye(3), Subspace.span([0, 0, 1], 3), Subspace.coordinate(3, 2))


def test_restricted_singular_B():
    with pytest.raises(ConditioningError):
        matcore.restricted_operator(np.diag([1.0, 1.0, 0.0]), Subspace.coordinate(3, 1), Subspace.coordinate(3, 2))


def test_nested_factorization(rng):
    for _ in range(200):
        d = int(rng.integers(2, 7))
        B = rng.standard_normal((d, d))
        U, V = random_nested(rng, d)
        whole = np.prod(matcore.singular_values(matcore.restricted_operator(B, Subspace.zero(d), V)))
        inner = np.prod(matcore.singular_values(matcore.restricted_operator(B, Subspace.zero(d), U))) if U.rank else 1.0
        quot = np.prod(matcore.singular_values(matcore.restricted_operator(B, U, V)))
        assert math.isclose(whole, inner * quot, rel_tol=1e-8)


def test_gram_schmidt_complete():
    inner = Subspace.coordinate(3, 1)
    W = matcore.gram_schmidt_complete(inner.frame, np.eye(3)[:, 1:], count=2)
    assert np.allclose(W.T @ W, np.eye(2))
    assert np.allclose(W[0], 0.0)


# --- exterior powers -------------------------------------------------------

def test_exterior_diag():
    E = matcore.exterior_power(np.diag([2.0, 3.0, 5.0]), 2)
    assert np.allclose(E, np.diag([6.0, 10.0, 15.0]))


def test_exterior_top_is_det(rng):
    A = rng.standard_normal((4, 4))
    assert matcore.exterior_power(A, 4) == pytest.approx(np.array([[np.linalg.det(A)]]))


def test_exterior_norm_all_k(rng):
    for d in range(2, 6):
        A = rng.standard_normal((d, d))
        s = matcore.singular_values(A)
        for k in range(1, d + 1):
            top = matcore.singular_values(matcore.exterior_power(A, k))[0]
            assert math.isclose(top, np.prod(s[:k]), rel_tol=1e-8)


def test_exterior_multiplicative(rng):
    A, B = rng.standard_normal((2, 4, 4))
    lhs = matcore.exterior_power(A @ B, 2)
    assert np.allclose(lhs, matcore.exterior_power(A, 2) @ matcore.exterior_power(B, 2))


def test_exterior_bad_k():
    with pytest.raises(InputError):
        matcore.exterior_power(np.eye(3), 0)


# --- determinant normalization ----------------------------------------------

def test_normalize_det_examples():
    assert np.allclose(matcore.normalize_det(np.diag([4.0, 1.0])), np.diag([2.0, 0.5]))
    S = np.array([[2.0, 3.0], [1.0, 2.0]])
    assert np.allclose(matcore.normalize_det(S), S, atol=1e-12)


def test_normalize_det_properties(rng):
    A = rng.standard_normal((4, 4))
    N = matcore.normalize_det(A)
    assert abs(abs(np.linalg.det(N)) - 1) < 1e-10
    ratio = N / A
    assert np.all(ratio > 0) and np.ptp(ratio) < 1e-12
    assert np.allclose(matcore.normalize_det(N), N, atol=1e-12)


def test_normalize_det_singular():
    with pytest.raises(SingularityError):
        matcore.normalize_det(np.diag([1.0, 0.0]))


# --- projective line ---------------------------------------------------------

def test_projective_jacobian_examples():
    assert matcore.projective_jacobian(np.eye(2), 0.3) == pytest.approx(1.0)
    D = np.diag([2.0, 1.0])
    assert matcore.projective_jacobian(D, math.pi / 2) == pytest.approx(2.0)
    assert 1 / matcore.projective_jacobian(D, 0.0) == pytest.approx(2.0)


def test_projective_jacobian_integrates_to_pi(rng):
    # the induced map is a diffeomorphism of RP^1 of length pi
    A = rng.standard_normal((2, 2))
    t = (np.arange(20000) + 0.5) * math.pi / 20000
    assert np.mean(matcore.projective_jacobian(A, t)) == pytest.approx(1.0, rel=1e-6)


def test_projective_jacobian_max_inverse(rng):
    grid = np.linspace(0, math.pi, 10000, endpoint=False)
    for _ in range(50):
        A = rng.standard_normal((2, 2))
        s = matcore.singular_values(A)
        best = np.max(1.0 / matcore.projective_jacobian(A, grid))
        assert best == pytest.approx(s[0] / s[1], rel=1e-4)


def test_projective_action_normalize_invariant(rng):
    A = rng.standard_normal((2, 2))
    N = matcore.normalize_det(A)
    t = np.linspace(0, math.pi, 50, endpoint=False)
    assert np.allclose(matcore.projective_action(A, t), matcore.projective_action(N, t))
    assert np.allclose(matcore.projective_jacobian(A, t), matcore.projective_jacobian(N, t), rtol=1e-8)


def test_projective_action_range(rng):
    t = rng.uniform(0, math.pi, 100)
    out = matcore.projective_action(rng.standard_normal((2, 2)), t)
    assert np.all((out >= 0) & (out < math.pi))


def test_projective_singular():
    with pytest.raises(SingularityError):
        matcore.projective_jacobian(np.array([[1.0, 2.0], [2.0, 4.0]]), 0.1)
