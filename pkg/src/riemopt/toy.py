"""Deterministic geodesically convex test problem on a product of balls.

``f(x) = 1/2 sum_i d(x_i, p_i)^2`` with fixed targets ``p_i`` inside the
clip radius.  Its minimum is ``f* = 0`` at ``x = p`` and its Riemannian
gradient is ``-log_{x_i}(p_i)``, so the convergence bounds can be checked
along a single run without any expectation.
"""

from dataclasses import dataclass

import numpy as np

from .manifold import ProductManifold
from .optim import RiemannianOptimizer, Schedule
from .poincare import CLIP_RADIUS, PoincareBall, _distance, _log_map


@dataclass
class ToyProblem:
    targets: np.ndarray
    radius: float = CLIP_RADIUS

    @property
    def n_components(self):
        return self.targets.shape[0]

    @property
    def dim(self):
        return self.targets.shape[1]

    @property
    def f_star(self):
        return 0.0

    def manifold(self):
        return ProductManifold([(PoincareBall(self.dim, self.radius), self.n_components)])

    def objective(self, x):
        return 0.5 * float(np.sum(_distance(x, self.targets) ** 2))

    def rgrad(self, x):
        return -_log_map(x, self.targets)

    def diameter(self):
        """Diameter of one clipped ball in the hyperbolic metric."""
        return 4 * np.arctanh(self.radius)

    def gradient_bound(self):
        """Exact ``sup_{x in X} ||grad f(x)||``.

        The farthest feasible point from ``p_i`` is the antipodal boundary
        point, at distance ``2 atanh(||p_i||) + 2 atanh(radius)``.
        """
        r = np.linalg.norm(self.targets, axis=-1)
        per = 2 * np.arctanh(r) + 2 * np.arctanh(self.radius)
        return float(np.sqrt(np.sum(per**2)))


def make_toy(n_components=4, dim=2, seed=0, max_norm=0.8):
    """Targets drawn uniformly in direction with norms in ``[0, max_norm]``."""
    rng = np.random.default_rng(seed)
    return ToyProblem(_random_ball_points(rng, n_components, dim, max_norm))


def _random_ball_points(rng, n, dim, max_norm):
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    return v * rng.uniform(0, max_norm, size=(n, 1))


def train_toy(problem, kind="ramsgrad", schedule=None, iterations=1000, seed=0,
              x0=None, accumulate_epsilon=False, record="steps", max_init_norm=0.8):
    """Run an optimizer on the toy problem.

    The trace's ``objective`` record holds ``f(x_k)`` for ``k = 1..iterations``,
    the iterate each step starts from.
    """
    schedule = schedule or Schedule()
    if x0 is None:
        rng = np.random.default_rng(seed + 1)
        x0 = _random_ball_points(rng, problem.n_components, problem.dim, max_init_norm)
    opt = RiemannianOptimizer(kind, problem.manifold(), [x0], schedule,
                              accumulate_epsilon=accumulate_epsilon, record=record)
    trace = opt.trace
    trace.f_star = problem.f_star
    for _ in range(iterations):
        x = opt.x[0]
        trace.objective.append(problem.objective(x))
        opt.step([problem.rgrad(x)])
    return opt.x[0], trace
