import numpy as np
import pytest

from riemopt.stiefel import (RankDeficiencyError, Stiefel, orthonormality_error, qf,
                             qr_retraction, sym, tangency_error, tangent_project,
                             vector_transport)


def random_frame(rng, d=6, k=3):
    return qf(rng.standard_normal((d, k)))


def gram_schmidt(a):
    # classical Gram-Schmidt oracle for the Q factor with positive diag(R)
    q = np.zeros_like(a)
    for j in range(a.shape[1]):
        v = a[:, j] - q[:, :j] @ (q[:, :j].T @ a[:, j])
        q[:, j] = v / np.linalg.norm(v)
    return q


def test_qf_matches_gram_schmidt(rng):
    for _ in range(20):
        a = rng.standard_normal((7, 3))
        np.testing.assert_allclose(qf(a), gram_schmidt(a), atol=1e-12)


def test_qf_rank_deficient():
    a = np.ones((4, 2))
    with pytest.raises(RankDeficiencyError):
        qf(a)


def test_retraction_values(rng):
    U = random_frame(rng)
    np.testing.assert_allclose(qr_retraction(U, np.zeros_like(U)), U, atol=1e-15)
    Q = qr_retraction(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
    np.testing.assert_allclose(Q[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)], rtol=1e-15)
    for _ in range(50):
        U = random_frame(rng)
        xi = tangent_project(U, rng.standard_normal(U.shape))
        assert orthonormality_error(qr_retraction(U, xi)) <= 1e-10


def test_retraction_first_order(rng):
    U = random_frame(rng)
    xi = tangent_project(U, rng.standard_normal(U.shape))
    ratios = [np.linalg.norm(qr_retraction(U, t * xi) - (U + t * xi)) / t**2
              for t in (1e-2, 1e-3, 1e-4)]
    assert max(ratios) < 10 * np.linalg.norm(xi) ** 2
    assert max(ratios) / min(ratios) < 2


def test_vector_transport(rng):
    U, V = random_frame(rng), random_frame(rng)
    xi = tangent_project(U, rng.standard_normal(U.shape))
    np.testing.assert_allclose(vector_transport(U, U, xi), xi, atol=1e-14)
    out = vector_transport(U, V, xi)
    assert tangency_error(V, out) <= 1e-12
    np.testing.assert_array_equal(vector_transport(U, V, np.zeros_like(U)), 0.0)
    assert np.linalg.norm(out) <= np.linalg.norm(xi) + 1e-12


def test_tangent_project(rng):
    U = random_frame(rng)
    np.testing.assert_allclose(tangent_project(U, U), 0.0, atol=1e-14)
    G = rng.standard_normal(U.shape)
    P = tangent_project(U, G)
    np.testing.assert_allclose(tangent_project(U, P), P, atol=1e-12)
    assert tangency_error(U, P) <= 1e-12
    # orthogonal projection: residual is normal, i.e. U S with S symmetric
    np.testing.assert_allclose(G - P, U @ sym(U.T @ G), atol=1e-12)


def test_stiefel_manifold(rng):
    man = Stiefel(6, 3)
    x = man.random_point(rng, count=2)
    assert man.contains(x).all()
    drift = x + 1e-6
    assert man.contains(man.project(drift)).all()
    assert man.distance(x, x).max() == 0
    with pytest.raises(ValueError):
        Stiefel(2, 3)
