"""Computable convergence bounds and trace-based measurements.

* :func:`zeta` -- curvature distortion factor of the comparison inequality
* :func:`theorem1_bound` -- bound on the averaged suboptimality of RAMSGrad
  with arbitrary (constant or diminishing) step sizes
* :func:`theorem2_regret_bound` -- regret bound of the original RAMSGrad,
  evaluated on a recorded trace
* :func:`lemma2_check` -- ``||m_k|| <= G`` and ``sqrt(v_hat_k) <= G`` scan
"""

import math
from dataclasses import dataclass

import numpy as np

from .optim import validate_schedule, ScheduleError

ZETA_VARIANTS = ("printed", "literature")


def zeta(kappa, c, variant="printed"):
    """Distortion factor ``zeta(kappa, c) >= 1`` for curvature ``kappa <= 0``.

    ``variant="printed"`` evaluates ``sqrt(|k| c) / tanh(sqrt(|k| c))``;
    ``variant="literature"`` uses ``sqrt(|k|) c / tanh(sqrt(|k|) c)``.
    Both tend to 1 as their argument goes to 0.
    """
    if kappa > 0:
        raise ValueError(f"kappa must be <= 0, got {kappa}")
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    if variant == "printed":
        s = math.sqrt(abs(kappa) * c)
    elif variant == "literature":
        s = math.sqrt(abs(kappa)) * c
    else:
        raise ValueError(f"unknown zeta variant {variant!r}")
    if s < 1e-8:
        return 1.0 + s * s / 3.0
    return s / math.tanh(s)


@dataclass
class BoundParams:
    """Constants entering the bounds.

    ``beta11`` defaults to the schedule's ``beta1_1``.  ``empirical`` marks
    ``G`` and ``D`` as estimated from a run rather than known a priori.
    """

    N: int
    G: float
    D: float
    kappas: tuple
    epsilon: float
    schedule: object
    beta11: float = None
    beta2: float = None
    zeta_variant: str = "printed"
    empirical: bool = False

    def __post_init__(self):
        self.kappas = tuple(float(k) for k in self.kappas)
        if len(self.kappas) != self.N:
            raise ValueError(f"need {self.N} curvature bounds, got {len(self.kappas)}")
        if self.G <= 0 or self.D <= 0:
            raise ValueError("G and D must be positive")
        if any(k > 0 for k in self.kappas):
            raise ValueError("curvature lower bounds must be <= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.beta11 is None:
            self.beta11 = self.schedule.beta1_at(1)
        if self.beta2 is None:
            self.beta2 = self.schedule.beta2

    def zeta_sum(self):
        return sum(zeta(k, self.D, self.zeta_variant) for k in self.kappas)


@dataclass
class Theorem1Bound:
    n: int
    term1: float
    term2: float
    term3: float
    hypotheses_ok: bool = True

    @property
    def total(self):
        return self.term1 + self.term2 + self.term3


def _check_theorem1(p, n_max, strict):
    if p.epsilon <= 0:
        raise ValueError("the averaged-suboptimality bound needs epsilon > 0")
    report = validate_schedule(p.schedule, n_max=max(2, min(n_max, 10_000)))
    if strict and not report.ok:
        raise ScheduleError(report.reason)
    return report.ok


def theorem1_curve(p, ns, strict=False):
    """Evaluate the averaged-suboptimality bound at every ``n`` in ``ns``.

    Returns a list of :class:`Theorem1Bound`.  When the schedule violates the
    monotonicity hypotheses the values are still computed but flagged with
    ``hypotheses_ok=False``; ``strict=True`` raises instead.
    """
    ns = np.asarray(list(ns), dtype=np.int64)
    if ns.size == 0:
        return []
    if np.any(ns < 1):
        raise ValueError("n must be >= 1")
    n_max = int(ns.max())
    ok = _check_theorem1(p, n_max, strict)
    alphas = p.schedule.alphas(n_max)
    cum_alpha = np.cumsum(alphas)
    cum_beta = np.cumsum(p.schedule.beta1s(n_max))
    one_minus = 1.0 - p.beta11
    c_first = p.N * p.G * p.D**2 / (2 * one_minus)
    c_second = p.G**2 / (2 * math.sqrt(p.epsilon) * one_minus) * p.zeta_sum()
    c_third = p.N * p.G * p.D / one_minus
    out = []
    for n in ns:
        i = n - 1
        out.append(Theorem1Bound(
            n=int(n),
            term1=c_first / (n * alphas[i]),
            term2=c_second * cum_alpha[i] / n,
            term3=c_third * cum_beta[i] / n,
            hypotheses_ok=ok,
        ))
    return out


def theorem1_bound(p, n, strict=False):
    """Bound on ``(1/n) sum_k f(x_k) - f(x*)`` after ``n`` iterations."""
    return theorem1_curve(p, [n], strict=strict)[0]


def corollary1_constants(p):
    """``(C1, C2)`` of the constant-step envelope ``O(1/n) + C1 a + C2 b``."""
    one_minus = 1.0 - p.beta11
    c1 = p.G**2 / (math.sqrt(p.epsilon) * one_minus) * p.zeta_sum()
    c2 = p.N * p.G * p.D / one_minus
    return c1, c2


def corollary1_envelope(p, n):
    c1, c2 = corollary1_constants(p)
    alpha = p.schedule.alpha0
    return (p.N * p.G * p.D**2 / (2 * alpha * (1 - p.beta11)) / n
            + c1 * alpha + c2 * p.schedule.beta1)


@dataclass
class Theorem2Bound:
    T: int
    term1: float
    term2: float
    term3: float

    @property
    def total(self):
        return self.term1 + self.term2 + self.term3


def theorem2_regret_bound(trace, p, alpha, T=None):
    """Regret bound of RAMSGrad with ``alpha_t = alpha / sqrt(t)``.

    Needs a trace recorded with ``record="components"``.  The adaptive
    denominator is ``sqrt(v_hat + eps)`` when epsilon was not accumulated
    into ``v_hat``, matching what the optimizer actually divided by.
    """
    beta1, beta2 = p.beta11, p.beta2
    if beta2 <= 0:
        raise ValueError("beta2 must be positive for the regret bound")
    gamma = beta1 / math.sqrt(beta2)
    if gamma >= 1:
        raise ValueError(f"gamma = beta1/sqrt(beta2) = {gamma:.4g} must be < 1")
    sqrt_vhat = trace.component_array("sqrt_vhat")
    grads = trace.component_array("grad_norm")
    T = len(sqrt_vhat) if T is None else T
    if not 1 <= T <= len(sqrt_vhat):
        raise ValueError(f"T={T} outside recorded range 1..{len(sqrt_vhat)}")
    sqrt_vhat, grads = sqrt_vhat[:T], grads[:T]
    if not trace.accumulate_epsilon:
        sqrt_vhat = np.sqrt(sqrt_vhat**2 + p.epsilon)
    t = np.arange(1, T + 1, dtype=np.float64)
    alpha_t = alpha / np.sqrt(t)
    beta1_t = np.asarray(trace.beta1[:T], dtype=np.float64)
    d2 = p.D**2
    term1 = math.sqrt(T) * d2 / (2 * alpha * (1 - beta1)) * float(np.sum(sqrt_vhat[-1]))
    term2 = d2 / (2 * (1 - beta1)) * float(np.sum(beta1_t[:, None] * sqrt_vhat / alpha_t[:, None]))
    zetas = np.array([zeta(k, p.D, p.zeta_variant) for k in p.kappas])
    scale = alpha * math.sqrt(1 + math.log(T)) / (
        (1 - beta1) ** 2 * (1 - gamma) * math.sqrt(1 - beta2))
    term3 = scale * float(np.sum((zetas + 1) / 2 * np.sqrt(np.sum(grads**2, axis=0))))
    return Theorem2Bound(T, term1, term2, term3)


def averaged_suboptimality(values, f_star):
    """``(1/n) sum_{k<=n} f(x_k) - f*`` for every prefix length ``n``.

    ``values`` is a sequence of objective values or a trace with an
    ``objective`` record.
    """
    values = getattr(values, "objective", values)
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty objective trace")
    if not math.isfinite(f_star):
        raise ValueError("f_star must be finite")
    return np.cumsum(values) / np.arange(1, values.size + 1) - f_star


def measured_regret(values, f_star):
    """Cumulative ``sum_t (f_t(x_t)) - f_*`` for a deterministic objective."""
    values = np.asarray(getattr(values, "objective", values), dtype=np.float64)
    return np.cumsum(values - f_star)


@dataclass
class Lemma2Report:
    status: str
    step: int = None
    quantity: str = None
    value: float = None
    bound: float = None

    @property
    def ok(self):
        return self.status == "ok"


def lemma2_check(trace, G_obs=None, tol=1e-9):
    """Scan a trace for ``||m_k|| > G`` or ``sqrt(v_hat_k) > G``.

    ``G_obs`` defaults to the running maximum of observed gradient norms,
    which is the tightest bound the inequalities can be checked against.
    Steps in the report are 1-based.
    """
    if not trace.has_moments:
        return Lemma2Report("not applicable")
    if trace.accumulate_epsilon:
        return Lemma2Report("not applicable", quantity="epsilon accumulated into v_hat")
    grads = np.asarray(trace.grad_norm_max, dtype=np.float64)
    if G_obs is None:
        bound = np.maximum.accumulate(grads)
    else:
        bound = np.full(len(trace.m_norm_max), float(G_obs))
    for name in ("m_norm_max", "sqrt_vhat_max"):
        vals = np.asarray(getattr(trace, name), dtype=np.float64)
        bad = np.nonzero(vals > bound[: len(vals)] + tol)[0]
        if bad.size:
            k = int(bad[0])
            return Lemma2Report("violation", k + 1, name.replace("_max", ""),
                                float(vals[k]), float(bound[k]))
    return Lemma2Report("ok")


def estimate_G(trace):
    return float(np.max(trace.grad_norm_max)) if trace.grad_norm_max else 0.0


def estimate_diameter(manifold, snapshots):
    """Largest per-component distance between any two recorded iterates.

    ``snapshots`` is a sequence of arrays with shape ``(N, *point_shape)``.
    """
    best = 0.0
    for i in range(len(snapshots)):
        for j in range(i + 1, len(snapshots)):
            d = manifold.distance(snapshots[i], snapshots[j])
            best = max(best, float(np.max(d)))
    return best
