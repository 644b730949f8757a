import numpy as np
import pytest

from conftest import random_ball
from riemopt.poincare import (CLIP_RADIUS, DomainError, PoincareBall, distance, egrad_to_rgrad,
                              exp_map, gyration, log_map, mobius_add, parallel_transport,
                              project_to_clipped_ball, riemannian_inner, riemannian_norm)

X = np.array([0.3, 0.1])
Y = np.array([-0.2, 0.4])


def mobius_add_loop(x, y):
    # scalar transcription of the Mobius sum, used as an oracle
    xy = sum(a * b for a, b in zip(x, y))
    x2 = sum(a * a for a in x)
    y2 = sum(b * b for b in y)
    den = 1 + 2 * xy + x2 * y2
    return np.array([((1 + 2 * xy + y2) * a + (1 - x2) * b) / den for a, b in zip(x, y)])


def test_mobius_identity_and_inverse():
    y = np.array([0.2, -0.7])
    np.testing.assert_allclose(mobius_add(np.zeros(2), y), y, atol=0)
    x = np.array([0.5, 0.0])
    np.testing.assert_allclose(mobius_add(-x, x), 0.0, atol=1e-15)


def test_mobius_collinear_value():
    r = mobius_add(np.array([0.5, 0.0]), np.array([0.25, 0.0]))
    np.testing.assert_allclose(r, [0.75 / 1.125, 0.0], rtol=1e-15)
    assert abs(r[0] - 2 / 3) < 1e-15


def test_mobius_matches_scalar_oracle(rng):
    xs, ys = random_ball(rng, 50, 4), random_ball(rng, 50, 4)
    for x, y in zip(xs, ys):
        np.testing.assert_allclose(mobius_add(x, y), mobius_add_loop(x, y), rtol=1e-12, atol=1e-13)


def test_domain_error():
    with pytest.raises(DomainError):
        mobius_add(np.array([1.0, 0.0]), np.zeros(2))
    with pytest.raises(DomainError):
        distance(np.zeros(2), np.array([0.8, 0.8]))


def test_gyration_identities():
    z = np.array([1.0, 2.0])
    np.testing.assert_allclose(gyration(X, np.zeros(2), z), z, atol=1e-15)
    np.testing.assert_allclose(gyration(np.zeros(2), Y, z), z, atol=1e-15)
    assert abs(np.linalg.norm(gyration(X, Y, z)) - np.linalg.norm(z)) < 1e-12


def test_gyration_matches_mobius_composition(rng):
    # on ball points gyr[x,y]z = -(x+y) + (x + (y + z))
    for x, y, z in zip(random_ball(rng, 100, 3, 0.9), random_ball(rng, 100, 3, 0.9),
                       random_ball(rng, 100, 3, 0.9)):
        lhs = gyration(x, y, z)
        rhs = mobius_add_loop(-mobius_add_loop(x, y), mobius_add_loop(x, mobius_add_loop(y, z)))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_gyration_is_linear_in_z(rng):
    x, y = random_ball(rng, 2, 3, 0.9)
    a, b = rng.standard_normal((2, 3)) * 5
    np.testing.assert_allclose(gyration(x, y, 2 * a - 3 * b),
                               2 * gyration(x, y, a) - 3 * gyration(x, y, b), atol=1e-12)


def test_distance_values():
    assert distance(X, X) == 0.0
    assert abs(distance(np.zeros(2), np.array([0.5, 0.0])) - 2 * np.arctanh(0.5)) < 1e-15
    assert abs(distance(X, Y) - distance(Y, X)) < 1e-12


def test_distance_matches_arcosh_form(rng):
    xs, ys = random_ball(rng, 200, 5), random_ball(rng, 200, 5)
    diff = np.sum((xs - ys) ** 2, axis=1)
    den = (1 - np.sum(xs**2, axis=1)) * (1 - np.sum(ys**2, axis=1))
    np.testing.assert_allclose(distance(xs, ys), np.arccosh(1 + 2 * diff / den), rtol=1e-9)


def test_distance_clamped_at_clip_radius():
    x = np.array([CLIP_RADIUS, 0.0])
    assert np.isfinite(distance(x, -x))


def test_exp_map_values():
    np.testing.assert_array_equal(exp_map(X, np.zeros(2)), X)
    np.testing.assert_allclose(exp_map(np.zeros(2), np.array([0.5, 0.0])), [np.tanh(0.5), 0.0],
                               rtol=1e-15)
    assert abs(np.tanh(0.5) - 0.46212) < 1e-5


def test_exp_geodesic_property(rng):
    xs = random_ball(rng, 100, 3, 0.9)
    xis = rng.standard_normal((100, 3)) * 0.1
    np.testing.assert_allclose(distance(xs, exp_map(xs, xis)), riemannian_norm(xs, xis), atol=1e-9)


def test_log_map_values():
    np.testing.assert_array_equal(log_map(X, X), 0.0)
    np.testing.assert_allclose(exp_map(X, log_map(X, Y)), Y, atol=1e-9)


def test_log_norm_is_distance(rng):
    xs, ys = random_ball(rng, 100, 4), random_ball(rng, 100, 4)
    np.testing.assert_allclose(riemannian_norm(xs, log_map(xs, ys)), distance(xs, ys), atol=1e-9)


def test_distance_linear_along_geodesic(rng):
    x = random_ball(rng, 1, 3, 0.8)[0]
    xi = rng.standard_normal(3)
    ts = np.array([1e-4, 2e-4, 5e-4, 1e-3])
    d = np.array([distance(x, exp_map(x, t * xi)) for t in ts])
    np.testing.assert_allclose(d / ts, riemannian_norm(x, xi), rtol=1e-6)


def test_transport_values(rng):
    xi = np.array([0.7, -1.2])
    np.testing.assert_allclose(parallel_transport(X, X, xi), xi, atol=1e-15)
    np.testing.assert_allclose(parallel_transport(np.zeros(2), Y, xi), (1 - Y @ Y) * xi, atol=1e-15)
    xs, ys = random_ball(rng, 100, 3), random_ball(rng, 100, 3)
    xis = rng.standard_normal((100, 3))
    np.testing.assert_allclose(riemannian_norm(ys, parallel_transport(xs, ys, xis)),
                               riemannian_norm(xs, xis), rtol=1e-9)


def test_transport_maps_log_to_minus_log(rng):
    # transporting log_x(y) to y along the geodesic gives -log_y(x)
    for x, y in zip(random_ball(rng, 50, 3, 0.9), random_ball(rng, 50, 3, 0.9)):
        np.testing.assert_allclose(parallel_transport(x, y, log_map(x, y)), -log_map(y, x), atol=1e-9)


def test_egrad_to_rgrad(rng):
    eg = np.array([1.0, -2.0])
    np.testing.assert_allclose(egrad_to_rgrad(np.zeros(2), eg), eg / 4)
    np.testing.assert_array_equal(egrad_to_rgrad(X, np.zeros(2)), 0.0)
    v = rng.standard_normal((20, 2))
    rg = egrad_to_rgrad(X, eg)
    np.testing.assert_allclose(riemannian_inner(X, rg, v), v @ eg, atol=1e-10)


def test_egrad_to_rgrad_is_gradient_of_distance(rng):
    # <rgrad d(., y), xi>_x equals the directional derivative of d(., y)
    x, y = random_ball(rng, 2, 3, 0.8)
    xi = rng.standard_normal(3)
    h = 1e-6
    fd = (distance(exp_map(x, h * xi), y) - distance(exp_map(x, -h * xi), y)) / (2 * h)
    eg = np.array([(distance(x + h * e, y) - distance(x - h * e, y)) / (2 * h) for e in np.eye(3)])
    assert abs(riemannian_inner(x, egrad_to_rgrad(x, eg), xi) - fd) < 1e-6


def test_riemannian_inner():
    u, v = np.array([1.0, 2.0]), np.array([-0.5, 3.0])
    assert riemannian_inner(np.zeros(2), u, v) == 4 * (u @ v)
    assert riemannian_inner(X, u, u) > 0
    assert riemannian_inner(X, np.zeros(2), np.zeros(2)) == 0
    assert abs(riemannian_norm(X, u) ** 2 - riemannian_inner(X, u, u)) < 1e-12


def test_projection(rng):
    np.testing.assert_array_equal(project_to_clipped_ball(np.array([0.1, 0.2])), [0.1, 0.2])
    np.testing.assert_allclose(project_to_clipped_ball(np.array([2.0, 0.0])), [CLIP_RADIUS, 0.0],
                               rtol=1e-14)
    v = rng.standard_normal((1000, 5))
    v *= rng.uniform(0, 3, size=(1000, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
    assert np.all(np.linalg.norm(project_to_clipped_ball(v), axis=1) <= CLIP_RADIUS)


def test_ball_manifold_methods(rng):
    ball = PoincareBall(3)
    x = random_ball(rng, 4, 3, 0.9)
    y = random_ball(rng, 4, 3, 0.9)
    np.testing.assert_allclose(ball.exp(x, ball.log(x, y)), y, atol=1e-9)
    assert ball.contains(ball.project(x * 10)).all()
    assert ball.diameter() == pytest.approx(4 * np.arctanh(CLIP_RADIUS))
