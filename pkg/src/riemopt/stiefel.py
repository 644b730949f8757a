"""Stiefel manifold ``St(k, d)`` with the embedded (Frobenius) metric.

The exponential map and parallel transport are replaced by the QR
retraction and its associated projection-based vector transport.  All
functions accept a single ``d x k`` matrix or a stack ``(..., d, k)``.
"""

import numpy as np

from .manifold import Manifold

ORTHO_TOL = 1e-10


class RankDeficiencyError(ValueError):
    """``U + xi`` has rank below ``k`` so its Q factor is undefined."""


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def qf(a, rtol=1e-12):
    """Q factor of the thin QR decomposition with ``diag(R) > 0``."""
    a = np.asarray(a, dtype=np.float64)
    q, r = np.linalg.qr(a)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    scale = np.max(np.abs(diag), axis=-1, keepdims=True)
    if np.any(np.abs(diag) <= rtol * np.maximum(scale, np.finfo(float).tiny)):
        raise RankDeficiencyError("matrix is rank deficient; no unique Q factor")
    signs = np.where(diag < 0, -1.0, 1.0)
    return q * signs[..., None, :]


def qr_retraction(u, xi):
    """Retract ``xi`` at ``u``: ``qf(u + xi)``."""
    return qf(np.asarray(u) + np.asarray(xi))


def vector_transport(u, v, xi):
    """Move ``xi`` into ``T_v St``: ``xi - v sym(v^T xi)``.

    ``u`` is the base point of ``xi``; the transport only depends on ``v``.
    """
    v = np.asarray(v, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    return xi - v @ sym(np.swapaxes(v, -1, -2) @ xi)


def tangent_project(u, g):
    """Orthogonal projection of an ambient matrix onto ``T_u St``.

    This is also the Euclidean-to-Riemannian gradient map under the embedded
    metric.
    """
    return vector_transport(u, u, g)


def orthonormality_error(u):
    u = np.asarray(u)
    k = u.shape[-1]
    gram = np.swapaxes(u, -1, -2) @ u
    return np.linalg.norm(gram - np.eye(k), axis=(-2, -1))


def tangency_error(u, xi):
    return np.linalg.norm(sym(np.swapaxes(u, -1, -2) @ xi), axis=(-2, -1))


class Stiefel(Manifold):
    """Stack of Stiefel components, each a ``d x k`` orthonormal frame."""

    curvature = 0.0

    def __init__(self, d, k):
        if not 1 <= k <= d:
            raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
        self.d = d
        self.k = k
        self.point_shape = (d, k)

    def exp(self, x, u):
        return qr_retraction(x, u)

    def transport(self, x, y, u):
        return vector_transport(x, y, u)

    def egrad_to_rgrad(self, x, eg):
        return tangent_project(x, eg)

    def project(self, x):
        drift = orthonormality_error(x)
        if np.any(drift > ORTHO_TOL):
            return qf(x)
        return x

    def norm(self, x, u):
        return np.linalg.norm(u, axis=(-2, -1))

    def distance(self, x, y):
        # chordal surrogate; the embedded metric has no closed-form geodesic distance
        return np.linalg.norm(np.asarray(y) - np.asarray(x), axis=(-2, -1))

    def contains(self, x):
        return orthonormality_error(x) <= ORTHO_TOL

    def random_point(self, rng, count=1):
        return qf(rng.standard_normal((count, self.d, self.k)))
