"""Principal component analysis as minimization on the Stiefel manifold.

``f(U) = -(1/n) sum_i ||U^T a_i||^2`` over ``U in St(k, d)``.  The data are
not mean-centred: the objective, the gradient and the SVD reference all use
the raw second-moment matrix ``(1/n) A^T A``.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .manifold import ProductManifold
from .optim import RiemannianOptimizer, Schedule
from .stiefel import Stiefel, qf, tangent_project


@dataclass
class PcaProblem:
    data: np.ndarray
    k: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("data must be a non-empty n x d matrix")
        if not 1 <= self.k <= self.data.shape[1]:
            raise ValueError(f"need 1 <= k <= d, got k={self.k}, d={self.data.shape[1]}")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]


@dataclass
class PcaSolution:
    U: np.ndarray
    f_value: float


def _check_frame(p, U):
    if np.shape(U) != (p.d, p.k):
        raise ValueError(f"U has shape {np.shape(U)}, expected {(p.d, p.k)}")


def pca_loss(p, U):
    _check_frame(p, U)
    proj = p.data @ U
    return -float(np.sum(proj * proj)) / p.n


def pca_egrad(p, U, batch=None):
    """Euclidean gradient ``-(2/|B|) sum_{i in B} a_i a_i^T U``."""
    rows = p.data if batch is None else p.data[np.asarray(batch, dtype=np.int64)]
    if rows.shape[0] == 0:
        raise ValueError("empty batch")
    return -2.0 / rows.shape[0] * rows.T @ (rows @ U)


def pca_stochastic_grad(p, U, batch=None):
    """Riemannian gradient of the minibatch objective (full batch if ``None``)."""
    _check_frame(p, U)
    return tangent_project(U, pca_egrad(p, U, batch))


def svd_oracle(p):
    """Top-``k`` right singular vectors of the data matrix and ``f(U*)``."""
    _, s, vt = np.linalg.svd(p.data, full_matrices=False)
    U = vt[: p.k].T
    if U.shape[1] < p.k:  # fewer rows than k
        U = qf(np.hstack([U, np.eye(p.d)[:, : p.k - U.shape[1]]]))
    return PcaSolution(U, -float(np.sum(s[: p.k] ** 2)) / p.n)


def optimality_gap(p, U, sol):
    """``f(U) - f(U*)``, clamped at zero."""
    return max(pca_loss(p, U) - sol.f_value, 0.0)


@dataclass
class PcaConfig:
    optimizer: str = "ramsgrad"
    schedule: Schedule = field(default_factory=Schedule)
    batch_size: int = 32
    iterations: int = 1000
    seed: int = 0
    accumulate_epsilon: bool = False
    record: str = None
    log_every: int = 1


def init_frame(p, seed):
    rng = np.random.default_rng(seed)
    return qf(rng.standard_normal((p.d, p.k)))


def train_pca(p, cfg, oracle=None):
    """Minibatch Riemannian optimization of the PCA objective.

    Batches of ``min(batch_size, n)`` rows are drawn without replacement at
    every step.  When ``oracle`` (a :class:`PcaSolution`) is given, the trace
    gets ``objective`` values ``f(U_k)`` for every step and ``epochs`` rows
    ``{"iter", "gap", "f", "alpha", "elapsed_ms"}`` every ``log_every`` steps plus the final point.
    """
    rng = np.random.default_rng(cfg.seed)
    U0 = qf(rng.standard_normal((p.d, p.k)))
    man = Stiefel(p.d, p.k)
    opt = RiemannianOptimizer(cfg.optimizer, ProductManifold([(man, 1)]), [U0[None]],
                              cfg.schedule, accumulate_epsilon=cfg.accumulate_epsilon,
                              record=cfg.record)
    trace = opt.trace
    if oracle is not None:
        trace.f_star = oracle.f_value
    bs = min(cfg.batch_size, p.n)
    started = time.perf_counter()

    def log(it, U):
        f = pca_loss(p, U)
        trace.epochs.append({"iter": it, "gap": max(f - oracle.f_value, 0.0), "f": f,
                             "alpha": cfg.schedule.alpha(it + 1),
                             "elapsed_ms": (time.perf_counter() - started) * 1000.0})

    for it in range(cfg.iterations):
        U = opt.x[0][0]
        if oracle is not None:
            if it % cfg.log_every == 0:
                log(it, U)
            trace.objective.append(pca_loss(p, U))
        batch = rng.choice(p.n, size=bs, replace=False)
        opt.step([pca_stochastic_grad(p, U, batch)[None]])
    U = opt.x[0][0].copy()
    if oracle is not None:
        log(cfg.iterations, U)
    return U, trace


def decade_spectrum(d, top=10.0):
    """``top * (1, .5, .2, .1, .05, .02, ...)``: the 10-5-2 pattern repeated per decade."""
    return [top / 10 * (10.0, 5.0, 2.0)[i % 3] * 10.0 ** (-(i // 3)) for i in range(d)]


def spiked_data(n=500, d=20, spectrum=None, tail=1.0, seed=0):
    """Gaussian rows with population second moment ``B diag(eig) B^T``.

    ``eig`` is ``spectrum`` padded with ``tail`` up to length ``d``; the
    default spectrum is :func:`decade_spectrum`.  ``B`` is a seeded random
    orthonormal basis.
    """
    rng = np.random.default_rng(seed)
    if spectrum is None:
        spectrum = decade_spectrum(d)
    if len(spectrum) > d:
        raise ValueError(f"spectrum has {len(spectrum)} values for d={d}")
    eig = np.full(d, float(tail))
    eig[: len(spectrum)] = spectrum
    if np.any(eig < 0):
        raise ValueError("spectrum must be non-negative")
    basis = qf(rng.standard_normal((d, d)))
    z = rng.standard_normal((n, d))
    return (z * np.sqrt(eig)) @ basis.T
