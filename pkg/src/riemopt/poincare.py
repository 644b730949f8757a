"""Closed-form geometry of the Poincare ball of curvature -1.

Every function works on the last axis of its array arguments and broadcasts
over leading axes, so a stack of ``N`` points of dimension ``d`` is an array
of shape ``(N, d)``.

Public functions validate that base points lie strictly inside the unit ball
and raise :class:`DomainError` otherwise.  :class:`PoincareBall` wraps the
unchecked kernels for optimizer use, where intermediate points may touch the
boundary through rounding before being projected back.
"""

import numpy as np

from .manifold import Manifold

#: Radius of the constraint set ``{x : ||x|| <= 1 - 1e-5}``.
CLIP_RADIUS = 1.0 - 1e-5
#: ``atanh`` arguments are clamped to this value.
ATANH_CLAMP = 1.0 - 1e-15
#: Tangent vectors with Euclidean norm below this are treated as zero.
ZERO_TOL = 1e-15


class DomainError(ValueError):
    """A point does not lie strictly inside the unit ball."""


def _dot(x, y):
    # einsum beats sum(axis=-1) by ~2.5x on the small trailing axes used here
    return np.einsum("...i,...i->...", x, y)[..., None]


def _sqnorm(x):
    return _dot(x, x)


def _norm(x):
    return np.sqrt(_dot(x, x))


def _check_ball(*points):
    for p in points:
        if np.any(np.sum(np.square(p), axis=-1) >= 1.0):
            raise DomainError("point norm must be < 1 in the Poincare ball")


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


# -- unchecked kernels --------------------------------------------------------


def _mobius_add(x, y):
    xy = _dot(x, y)
    x2 = _sqnorm(x)
    y2 = _sqnorm(y)
    num = (1 + 2 * xy + y2) * x + (1 - x2) * y
    den = 1 + 2 * xy + x2 * y2
    return num / den


def _gyration(x, y, z):
    # Closed form of the Mobius composition; linear in z, so valid for any
    # ambient vector, not only ball points.
    xy = _dot(x, y)
    xz = _dot(x, z)
    yz = _dot(y, z)
    x2 = _sqnorm(x)
    y2 = _sqnorm(y)
    a = -xz * y2 + yz + 2 * xy * yz
    b = -yz * x2 - xz
    d = 1 + 2 * xy + x2 * y2
    return z + 2 * (a * x + b * y) / d


def _distance(x, y):
    r = np.sqrt(_dot(u := _mobius_add(-x, y), u))[..., 0]
    return 2 * np.arctanh(np.minimum(r, ATANH_CLAMP))


def _exp_map(x, xi):
    n = _norm(xi)
    safe = np.where(n < ZERO_TOL, 1.0, n)
    second = np.tanh(safe / (1 - _sqnorm(x))) * xi / safe
    second = np.where(n < ZERO_TOL, 0.0, second)
    return _mobius_add(x, second)


def _log_map(x, y):
    u = _mobius_add(-x, y)
    n = _norm(u)
    safe = np.where(n < ZERO_TOL, 1.0, n)
    out = (1 - _sqnorm(x)) * np.arctanh(np.minimum(safe, ATANH_CLAMP)) * u / safe
    return np.where(n < ZERO_TOL, 0.0, out)


def _parallel_transport(x, y, xi):
    return (1 - _sqnorm(y)) / (1 - _sqnorm(x)) * _gyration(y, -x, xi)


def _conformal(x):
    return 2.0 / (1 - _sqnorm(x))


# -- public API ---------------------------------------------------------------


def mobius_add(x, y):
    """Mobius addition ``x (+) y`` of two ball points."""
    x, y = _as_array(x), _as_array(y)
    _check_ball(x, y)
    return _mobius_add(x, y)


def gyration(x, y, z):
    """Apply the gyration ``gyr[x, y]`` to the ambient vector ``z``.

    For ball points ``z`` this equals ``(-(x (+) y)) (+) (x (+) (y (+) z))``.
    The map is linear and orthogonal in ``z``, which is how it acts on
    tangent vectors inside :func:`parallel_transport`.
    """
    x, y, z = _as_array(x), _as_array(y), _as_array(z)
    _check_ball(x, y)
    return _gyration(x, y, z)


def distance(x, y):
    """Geodesic distance ``2 atanh(||(-x) (+) y||)``."""
    x, y = _as_array(x), _as_array(y)
    _check_ball(x, y)
    return _distance(x, y)


def exp_map(x, xi):
    """Exponential map at ``x``; ``exp_map(x, 0)`` returns ``x`` exactly."""
    x, xi = _as_array(x), _as_array(xi)
    _check_ball(x)
    return _exp_map(x, xi)


def log_map(x, y):
    """Inverse of :func:`exp_map`: the tangent vector at ``x`` pointing to ``y``."""
    x, y = _as_array(x), _as_array(y)
    _check_ball(x, y)
    return _log_map(x, y)


def parallel_transport(x, y, xi):
    """Transport ``xi`` from ``T_x`` to ``T_y`` along the joining geodesic."""
    x, y, xi = _as_array(x), _as_array(y), _as_array(xi)
    _check_ball(x, y)
    return _parallel_transport(x, y, xi)


def egrad_to_rgrad(x, eg):
    """Rescale a Euclidean gradient into the Riemannian gradient at ``x``."""
    x, eg = _as_array(x), _as_array(eg)
    _check_ball(x)
    return (1 - _sqnorm(x)) ** 2 / 4 * eg


def riemannian_inner(x, u, v):
    """Metric ``4 / (1 - ||x||^2)^2 <u, v>`` at ``x``."""
    x, u, v = _as_array(x), _as_array(u), _as_array(v)
    _check_ball(x)
    return (_conformal(x) ** 2 * _dot(u, v))[..., 0]


def riemannian_norm(x, u):
    x, u = _as_array(x), _as_array(u)
    _check_ball(x)
    return (_conformal(x) * _norm(u))[..., 0]


def project_to_clipped_ball(x, radius=CLIP_RADIUS):
    """Radially rescale any point with norm above ``radius`` onto the sphere."""
    x = _as_array(x)
    n = _norm(x)
    # aim a few ulps inside so no norm routine sees the result above ``radius``
    target = radius * (1 - 8 * np.finfo(np.float64).eps)
    scale = np.where(n > radius, target / np.where(n > radius, n, 1.0), 1.0)
    return x * scale


class PoincareBall(Manifold):
    """Stack of ``count`` independent Poincare balls of dimension ``dim``.

    The constraint set of each component is the closed ball of radius
    ``radius`` (default ``1 - 1e-5``).
    """

    curvature = -1.0

    def __init__(self, dim, radius=CLIP_RADIUS):
        self.dim = dim
        self.radius = radius
        self.point_shape = (dim,)

    def exp(self, x, u):
        return _exp_map(x, u)

    def transport(self, x, y, u):
        return _parallel_transport(x, y, u)

    def egrad_to_rgrad(self, x, eg):
        return (1 - _sqnorm(x)) ** 2 / 4 * eg

    def project(self, x):
        return project_to_clipped_ball(x, self.radius)

    def norm(self, x, u):
        return (_conformal(x) * _norm(u))[..., 0]

    def distance(self, x, y):
        return _distance(x, y)

    def log(self, x, y):
        return _log_map(x, y)

    def contains(self, x):
        return np.linalg.norm(x, axis=-1) <= self.radius

    def diameter(self):
        return 4 * np.arctanh(self.radius)
