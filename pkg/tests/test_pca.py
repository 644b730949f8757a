import numpy as np
import pytest

from riemopt.optim import Schedule
from riemopt.pca import (PcaConfig, PcaProblem, decade_spectrum, init_frame, optimality_gap,
                         pca_loss, pca_stochastic_grad, spiked_data, svd_oracle, train_pca)
from riemopt.stiefel import qf


def diag_problem():
    # second moment diag(3, 2, 1): rows sqrt(3n) e1, sqrt(2n) e2, sqrt(n) e3 over n = 3
    data = np.diag(np.sqrt([9.0, 6.0, 3.0]))
    return PcaProblem(data, 2)


def random_orthogonal(rng, k):
    return qf(rng.standard_normal((k, k)))


def test_loss_examples():
    d, k = 5, 3
    p = PcaProblem(np.eye(d)[:k], k)
    assert pca_loss(p, np.eye(d)[:, :k]) == pytest.approx(-1.0, rel=1e-15)
    comp = PcaProblem(np.eye(d)[:2], 2)
    assert pca_loss(comp, np.eye(d)[:, 2:4]) == 0.0
    with pytest.raises(ValueError):
        pca_loss(p, np.eye(d)[:, :2])


def test_loss_lower_bound_and_rotation(rng):
    p = PcaProblem(rng.standard_normal((40, 6)), 3)
    floor = -np.sum(p.data**2) / p.n
    for _ in range(20):
        U = qf(rng.standard_normal((6, 3)))
        f = pca_loss(p, U)
        assert floor <= f <= 0
        assert pca_loss(p, U @ random_orthogonal(rng, 3)) == pytest.approx(f, abs=1e-10)


def test_svd_oracle_examples(rng):
    p = diag_problem()
    sol = svd_oracle(p)
    assert sol.f_value == pytest.approx(-5.0, rel=1e-14)
    np.testing.assert_allclose(sol.U @ sol.U.T, np.diag([1.0, 1.0, 0.0]), atol=1e-14)
    assert pca_loss(p, sol.U) == pytest.approx(sol.f_value, abs=1e-10)
    full = PcaProblem(rng.standard_normal((30, 4)), 4)
    second = full.data.T @ full.data / full.n
    assert svd_oracle(full).f_value == pytest.approx(-np.trace(second), rel=1e-12)


def test_svd_oracle_matches_eigendecomposition(rng):
    p = PcaProblem(spiked_data(200, 8, seed=3), 3)
    w = np.linalg.eigvalsh(p.data.T @ p.data / p.n)
    assert svd_oracle(p).f_value == pytest.approx(-np.sum(w[-3:]), rel=1e-12)


def test_gap_examples(rng):
    p = diag_problem()
    sol = svd_oracle(p)
    assert optimality_gap(p, sol.U, sol) == 0.0
    # data spanning e1, e2 only: second moment diag(3, 2, 0, 0), complement e3, e4
    p4 = PcaProblem(np.diag(np.sqrt([6.0, 4.0, 0.0, 0.0]))[:2], 2)
    U = np.eye(4)[:, 2:]
    assert optimality_gap(p4, U, svd_oracle(p4)) == pytest.approx(5.0, rel=1e-14)
    V = qf(rng.standard_normal((4, 2)))
    g = optimality_gap(p4, V, svd_oracle(p4))
    assert optimality_gap(p4, V @ random_orthogonal(rng, 2), svd_oracle(p4)) == pytest.approx(g, abs=1e-12)


def test_gradient_tangent_and_fd(rng):
    p = PcaProblem(rng.standard_normal((10, 6)), 3)
    U = qf(rng.standard_normal((6, 3)))
    g = pca_stochastic_grad(p, U)
    sym = U.T @ g
    np.testing.assert_allclose(sym + sym.T, 0, atol=1e-12)
    h = 1e-6
    for _ in range(5):
        xi = rng.standard_normal((6, 3))
        xi -= U @ (U.T @ xi + xi.T @ U) / 2
        fd = (pca_loss(p, U + h * xi) - pca_loss(p, U - h * xi)) / (2 * h)
        assert np.sum(g * xi) == pytest.approx(fd, rel=1e-6)


def test_gradient_stationary_at_oracle(rng):
    p = diag_problem()
    assert np.linalg.norm(pca_stochastic_grad(p, svd_oracle(p).U)) <= 1e-8
    q = PcaProblem(spiked_data(300, 10, seed=1), 3)
    assert np.linalg.norm(pca_stochastic_grad(q, svd_oracle(q).U)) <= 1e-6


def test_full_frame_gradient_vanishes(rng):
    p = PcaProblem(rng.standard_normal((20, 5)), 5)
    U = qf(rng.standard_normal((5, 5)))
    assert np.linalg.norm(pca_stochastic_grad(p, U)) <= 1e-12 * np.linalg.norm(p.data) ** 2


def test_gradient_edge_cases():
    p = PcaProblem(np.zeros((5, 4)), 2)
    U = np.eye(4)[:, :2]
    np.testing.assert_array_equal(pca_stochastic_grad(p, U), 0.0)
    with pytest.raises(ValueError, match="empty batch"):
        pca_stochastic_grad(p, U, batch=[])


def test_problem_validation():
    with pytest.raises(ValueError):
        PcaProblem(np.ones((3, 2)), 3)
    with pytest.raises(ValueError):
        PcaProblem(np.ones((0, 2)), 1)


def cfg(iterations, optimizer="ramsgrad", seed=0):
    s = Schedule(alpha0=0.1, beta1=0.001, beta2=0.999, eps=1e-8)
    return PcaConfig(optimizer=optimizer, schedule=s, iterations=iterations, seed=seed)


def test_zero_iterations_returns_init():
    p = PcaProblem(spiked_data(50, 6, seed=0), 2)
    U, trace = train_pca(p, cfg(0, seed=5))
    np.testing.assert_array_equal(U, init_frame(p, 5))


def test_training_deterministic_orthonormal_and_improving():
    p = PcaProblem(spiked_data(200, 8, seed=2), 2)
    sol = svd_oracle(p)
    U1, t1 = train_pca(p, cfg(300, seed=4), oracle=sol)
    U2, _ = train_pca(p, cfg(300, seed=4), oracle=sol)
    np.testing.assert_array_equal(U1, U2)
    np.testing.assert_allclose(U1.T @ U1, np.eye(2), atol=1e-12)
    assert t1.epochs[-1]["gap"] < t1.epochs[0]["gap"]
    assert len(t1.objective) == 300 and t1.epochs[-1]["iter"] == 300


def test_decade_spectrum_and_data():
    assert decade_spectrum(7) == pytest.approx([10, 5, 2, 1, 0.5, 0.2, 0.1])
    x = spiked_data(20000, 4, spectrum=[9.0, 4.0], tail=1.0, seed=0)
    w = np.sort(np.linalg.eigvalsh(x.T @ x / len(x)))[::-1]
    np.testing.assert_allclose(w, [9, 4, 1, 1], rtol=0.06)
    with pytest.raises(ValueError):
        spiked_data(10, 2, spectrum=[1, 2, 3])
    with pytest.raises(ValueError):
        spiked_data(10, 2, spectrum=[-1])
