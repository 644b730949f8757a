"""Riemannian optimizers on product manifolds.

Four update rules share one state layout:

* ``rsgd``      -- ``x <- P[exp_x(-a g)]``
* ``radagrad``  -- per-component accumulated squared gradient norms
* ``radam``     -- first/second moments with transported momentum
* ``ramsgrad``  -- as ``radam`` but with the running max of the second moment

The adaptivity is per product component, not per coordinate: each component
``i`` carries a scalar ``v_i`` built from ``||g_i||^2`` in its own metric.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .manifold import ProductManifold
from .trace import RunTrace

logger = logging.getLogger(__name__)

OPTIMIZERS = ("rsgd", "radagrad", "radam", "ramsgrad")


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Learning-rate and moment hyper-parameters.

    ``kind="constant"`` uses ``alpha_n = alpha0``; ``kind="diminishing"`` uses
    ``alpha_n = alpha0 / n**eta``.  ``beta1_kind="constant"`` uses
    ``beta1_n = beta1`` and ``"geometric"`` uses ``beta1_n = beta1**n``.
    During the first ``burn_in_epochs`` epochs alpha is scaled by
    ``burn_in_factor``.
    """

    kind: str = "constant"
    alpha0: float = 0.1
    eta: float = 0.5
    beta1: float = 0.9
    beta1_kind: str = "constant"
    beta2: float = 0.999
    eps: float = 1e-8
    burn_in_epochs: int = 0
    burn_in_factor: float = 0.01

    def __post_init__(self):
        if self.kind not in ("constant", "diminishing"):
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        if self.beta1_kind not in ("constant", "geometric"):
            raise ScheduleError(f"unknown beta1 kind {self.beta1_kind!r}")
        if not (self.alpha0 > 0 and math.isfinite(self.alpha0)):
            raise ScheduleError(f"alpha0 must be positive, got {self.alpha0}")
        if self.kind == "diminishing" and not 0.5 <= self.eta < 1:
            raise ScheduleError(f"eta must lie in [1/2, 1), got {self.eta}")
        if not 0 <= self.beta1 < 1:
            raise ScheduleError(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not 0 <= self.beta2 < 1:
            raise ScheduleError(f"beta2 must lie in [0, 1), got {self.beta2}")
        if self.eps < 0:
            raise ScheduleError(f"eps must be >= 0, got {self.eps}")
        if self.burn_in_epochs < 0:
            raise ScheduleError("burn_in_epochs must be >= 0")
        if not self.burn_in_factor > 0:
            raise ScheduleError("burn_in_factor must be positive")

    def alpha(self, n, epoch=None):
        if n < 1:
            raise ScheduleError(f"iteration counter starts at 1, got {n}")
        a = self.alpha0 if self.kind == "constant" else self.alpha0 / n**self.eta
        if epoch is not None and epoch < self.burn_in_epochs:
            a *= self.burn_in_factor
        return a

    def beta1_at(self, n):
        if n < 1:
            raise ScheduleError(f"iteration counter starts at 1, got {n}")
        return self.beta1 if self.beta1_kind == "constant" else self.beta1**n

    def alphas(self, n_max):
        """``alpha_1 .. alpha_{n_max}`` without burn-in, as an array."""
        n = np.arange(1, n_max + 1, dtype=np.float64)
        if self.kind == "constant":
            return np.full(n_max, float(self.alpha0))
        return self.alpha0 / n**self.eta

    def beta1s(self, n_max):
        n = np.arange(1, n_max + 1, dtype=np.float64)
        if self.beta1_kind == "constant":
            return np.full(n_max, float(self.beta1))
        return self.beta1**n


def schedule_eval(sched, n, epoch=None):
    """Return ``(alpha_n, beta1_n)`` for iteration ``n`` in ``epoch``."""
    return sched.alpha(n, epoch), sched.beta1_at(n)


@dataclass
class ScheduleReport:
    ok: bool
    first_violation: int = None
    reason: str = ""


def validate_sequences(alpha, beta1, n_max=10_000, rtol=1e-12):
    """Check that ``beta1_n`` and ``alpha_n (1 - beta1_n)`` are non-increasing.

    ``alpha`` and ``beta1`` are callables of the 1-based iteration counter.
    The sweep covers ``n = 2 .. n_max``.
    """
    prev_a, prev_b = alpha(1), beta1(1)
    for n in range(2, n_max + 1):
        a, b = alpha(n), beta1(n)
        if b > prev_b * (1 + rtol):
            return ScheduleReport(False, n, f"beta1 increases at n={n}: {prev_b} -> {b}")
        lhs, rhs = a * (1 - b), prev_a * (1 - prev_b)
        if lhs > rhs * (1 + rtol):
            return ScheduleReport(
                False, n, f"alpha_n(1-beta1_n) increases at n={n}: {rhs:.6g} -> {lhs:.6g}")
        prev_a, prev_b = a, b
    return ScheduleReport(True)


def validate_schedule(sched, n_max=10_000):
    """Check the step-size hypotheses of the convergence theorem.

    Burn-in is ignored: it multiplies alpha by a constant for a prefix of
    epochs, which by construction breaks monotonicity when it ends.
    """
    report = validate_sequences(sched.alpha, sched.beta1_at, n_max)
    if report.ok and sched.burn_in_epochs > 0:
        report.reason = "burn-in phase not covered by the check"
    return report


@dataclass
class OptimizerState:
    """Iterate and moment estimates; ``n`` is the index of the next step.

    ``v`` and ``v_hat`` hold one scalar per component, per block.  ``m_norm``
    and ``grad_norm`` describe the most recent step and are measured at the
    point the step started from.
    """

    manifold: ProductManifold
    x: list
    tau: list
    v: list
    v_hat: list
    n: int = 1
    m_norm: list = field(default=None, repr=False)
    grad_norm: list = field(default=None, repr=False)
    step_norm: list = field(default=None, repr=False)


def init_state(manifold, x0):
    """Fresh state at ``x0`` with zero momentum and second moments."""
    x0 = [np.array(xi, dtype=np.float64) for xi in x0]
    manifold.check_point(x0, "x0")
    counts = [c for _, c in manifold.blocks]
    return OptimizerState(
        manifold=manifold,
        x=x0,
        tau=[np.zeros_like(xi) for xi in x0],
        v=[np.zeros(c) for c in counts],
        v_hat=[np.zeros(c) for c in counts],
    )


def _per_component(values, like):
    # reshape (count,) so it broadcasts against (count, *point_shape)
    return values.reshape(values.shape + (1,) * (like.ndim - 1))


def _safe_divide(num, den):
    den = _per_component(den, num)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=np.broadcast_to(den > 0, num.shape))
    return out


def _check_grad(state, g):
    state.manifold.check_point(g, "gradient")


def _move(m, x, step):
    y = m.project(m.exp(x, step))
    return y


def _moment_step(state, g, sched, epoch, accumulate_epsilon, use_max):
    _check_grad(state, g)
    alpha, beta1 = schedule_eval(sched, state.n, epoch)
    beta2, eps = sched.beta2, sched.eps
    xs, taus, vs, vhats = [], [], [], []
    m_norms, g_norms, s_norms = [], [], []
    for (man, _), x, gi, tau, v_prev, vh_prev in zip(
            state.manifold.blocks, state.x, g, state.tau, state.v, state.v_hat):
        gn = man.norm(x, gi)
        m = beta1 * tau + (1 - beta1) * gi
        v = beta2 * v_prev + (1 - beta2) * gn**2
        vh = np.maximum(vh_prev, v) if use_max else v
        if accumulate_epsilon:
            vh = vh + eps
            denom = np.sqrt(vh)
        else:
            denom = np.sqrt(vh + eps)
        step = -alpha * _safe_divide(m, denom)
        y = _move(man, x, step)
        xs.append(y)
        taus.append(man.transport(x, y, m))
        vs.append(v)
        vhats.append(vh)
        m_norms.append(man.norm(x, m))
        g_norms.append(gn)
        s_norms.append(man.norm(x, step))
    return replace(state, x=xs, tau=taus, v=vs, v_hat=vhats, n=state.n + 1,
                   m_norm=m_norms, grad_norm=g_norms, step_norm=s_norms)


def ramsgrad_step(state, g, sched, epoch=None, accumulate_epsilon=False):
    """One step of the modified RAMSGrad update.

    By default ``v_hat`` stores ``max(v_hat_prev, v)`` and ``eps`` only enters
    the denominator as ``sqrt(v_hat + eps)``.  With ``accumulate_epsilon``
    the stored value is ``max(v_hat_prev, v) + eps``, which grows by ``eps``
    every iteration.
    """
    return _moment_step(state, g, sched, epoch, accumulate_epsilon, use_max=True)


def radam_step(state, g, sched, epoch=None, accumulate_epsilon=False):
    """RAMSGrad without the running max: ``v_hat = v``."""
    return _moment_step(state, g, sched, epoch, accumulate_epsilon, use_max=False)


def rsgd_step(state, g, sched, epoch=None, accumulate_epsilon=False):
    _check_grad(state, g)
    alpha = sched.alpha(state.n, epoch)
    xs, g_norms, s_norms = [], [], []
    for (man, _), x, gi in zip(state.manifold.blocks, state.x, g):
        step = -alpha * gi
        xs.append(_move(man, x, step))
        g_norms.append(man.norm(x, gi))
        s_norms.append(man.norm(x, step))
    return replace(state, x=xs, n=state.n + 1, m_norm=None,
                   grad_norm=g_norms, step_norm=s_norms)


def radagrad_step(state, g, sched, epoch=None, accumulate_epsilon=False):
    """Component-wise AdaGrad: ``v += ||g||^2``, step ``-a g / sqrt(v + eps)``."""
    _check_grad(state, g)
    alpha = sched.alpha(state.n, epoch)
    xs, vs, g_norms, s_norms = [], [], [], []
    for (man, _), x, gi, v_prev in zip(state.manifold.blocks, state.x, g, state.v):
        gn = man.norm(x, gi)
        v = v_prev + gn**2
        step = -alpha * _safe_divide(gi, np.sqrt(v + sched.eps))
        xs.append(_move(man, x, step))
        vs.append(v)
        g_norms.append(gn)
        s_norms.append(man.norm(x, step))
    return replace(state, x=xs, v=vs, v_hat=list(vs), n=state.n + 1, m_norm=None,
                   grad_norm=g_norms, step_norm=s_norms)


STEP_FUNCTIONS = {
    "rsgd": rsgd_step,
    "radagrad": radagrad_step,
    "radam": radam_step,
    "ramsgrad": ramsgrad_step,
}


def _max(arrays):
    return max(float(np.max(a)) for a in arrays) if arrays else 0.0


class RiemannianOptimizer:
    """Stateful driver around the step functions with optional tracing.

    ``record`` is ``None`` (nothing), ``"steps"`` (per-step maxima over
    components) or ``"components"`` (additionally the full per-component
    norms, one row per step).
    """

    def __init__(self, kind, manifold, x0, schedule, accumulate_epsilon=False,
                 record=None):
        if kind not in STEP_FUNCTIONS:
            raise ValueError(f"unknown optimizer {kind!r}; choose from {OPTIMIZERS}")
        if record not in (None, "steps", "components"):
            raise ValueError(f"bad record mode {record!r}")
        self.kind = kind
        self.schedule = schedule
        self.accumulate_epsilon = accumulate_epsilon
        self.record = record
        self.state = init_state(manifold, x0)
        self.trace = RunTrace(kind=kind, accumulate_epsilon=accumulate_epsilon)
        self._step = STEP_FUNCTIONS[kind]

    @property
    def x(self):
        return self.state.x

    @property
    def n(self):
        return self.state.n

    def step(self, rgrad, epoch=None):
        n = self.state.n
        self.state = self._step(self.state, rgrad, self.schedule, epoch,
                                self.accumulate_epsilon)
        if self.record:
            self._log(n, epoch)
        return self.state

    def _log(self, n, epoch):
        s, t = self.state, self.trace
        t.alpha.append(self.schedule.alpha(n, epoch))
        t.beta1.append(self.schedule.beta1_at(n))
        t.grad_norm_max.append(_max(s.grad_norm))
        t.step_norm_max.append(_max(s.step_norm))
        if s.m_norm is not None:
            sqrt_vhat = [np.sqrt(vh) for vh in s.v_hat]
            t.m_norm_max.append(_max(s.m_norm))
            t.sqrt_vhat_max.append(_max(sqrt_vhat))
        if self.record == "components":
            t.grad_norm.append(np.concatenate(s.grad_norm))
            if s.m_norm is not None:
                t.m_norm.append(np.concatenate(s.m_norm))
                t.sqrt_vhat.append(np.concatenate([np.sqrt(vh) for vh in s.v_hat]))
