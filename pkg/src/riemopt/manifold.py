"""Component-manifold interface shared by the optimizers.

A manifold object describes one *kind* of component (a Poincare ball of a
given dimension, a Stiefel manifold, a real line, ...).  Points of a block
of ``N`` such components are stacked along axis 0, so that a product
manifold ``M_1 x ... x M_N`` with identical factors is a single array of
shape ``(N, *point_shape)``.  Heterogeneous products are lists of blocks,
see :class:`ProductManifold`.
"""

import numpy as np


class Manifold:
    """Operations every component manifold must provide.

    ``exp`` and ``transport`` may be first-order substitutes (a retraction
    and a vector transport).  ``norm`` returns one value per component.
    """

    point_shape = ()
    curvature = 0.0

    def exp(self, x, u):
        raise NotImplementedError

    def transport(self, x, y, u):
        raise NotImplementedError

    def egrad_to_rgrad(self, x, eg):
        raise NotImplementedError

    def project(self, x):
        raise NotImplementedError

    def norm(self, x, u):
        raise NotImplementedError

    def distance(self, x, y):
        raise NotImplementedError

    def contains(self, x):
        raise NotImplementedError

    def zeros_like(self, x):
        return np.zeros_like(x)


class Euclidean(Manifold):
    """Components that are copies of ``R^dim`` (``X_i = M_i``)."""

    def __init__(self, dim=1):
        self.dim = dim
        self.point_shape = (dim,)

    def exp(self, x, u):
        return x + u

    def transport(self, x, y, u):
        return u

    def egrad_to_rgrad(self, x, eg):
        return eg

    def project(self, x):
        return x

    def norm(self, x, u):
        return np.linalg.norm(u, axis=-1)

    def distance(self, x, y):
        return np.linalg.norm(y - x, axis=-1)

    def contains(self, x):
        return np.all(np.isfinite(x), axis=-1)


class ProductManifold:
    """Ordered blocks of identical components.

    ``blocks`` is a sequence of ``(manifold, count)`` pairs.  A point is a
    list holding one array of shape ``(count, *manifold.point_shape)`` per
    block; tangent vectors have the same layout.
    """

    def __init__(self, blocks):
        self.blocks = [(m, int(c)) for m, c in blocks]
        if not self.blocks:
            raise ValueError("product manifold needs at least one block")

    @property
    def manifolds(self):
        return [m for m, _ in self.blocks]

    @property
    def n_components(self):
        return sum(c for _, c in self.blocks)

    def check_point(self, x, name="point"):
        if len(x) != len(self.blocks):
            raise ValueError(
                f"{name} has {len(x)} blocks, manifold has {len(self.blocks)}")
        for (m, c), xi in zip(self.blocks, x):
            if np.shape(xi) != (c, *m.point_shape):
                raise ValueError(
                    f"{name} block shape {np.shape(xi)} != {(c, *m.point_shape)}")

    def zeros(self):
        return [np.zeros((c, *m.point_shape)) for m, c in self.blocks]

    def contains(self, x):
        return all(bool(np.all(m.contains(xi))) for m, xi in zip(self.manifolds, x))
