"""Per-iteration run records shared by the optimizers, tasks and bounds."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunTrace:
    """What happened during one optimization run.

    Per-step scalars are maxima over all product components; the per-component
    arrays are only filled when the optimizer was created with
    ``record="components"``.  ``objective[k]`` is ``f(x_{k+1})`` in 0-based
    storage, i.e. the objective at the iterate the ``k``-th step started from.
    """

    kind: str = "ramsgrad"
    accumulate_epsilon: bool = False
    alpha: list = field(default_factory=list)
    beta1: list = field(default_factory=list)
    grad_norm_max: list = field(default_factory=list)
    m_norm_max: list = field(default_factory=list)
    sqrt_vhat_max: list = field(default_factory=list)
    step_norm_max: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    m_norm: list = field(default_factory=list)
    sqrt_vhat: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    f_star: float = None
    epochs: list = field(default_factory=list)

    def __len__(self):
        return len(self.alpha)

    @property
    def has_moments(self):
        return self.kind in ("ramsgrad", "radam") and len(self.m_norm_max) > 0

    def component_array(self, name):
        """Stack a per-component record into a ``(steps, components)`` array."""
        rows = getattr(self, name)
        if not rows:
            raise ValueError(f"trace has no per-component '{name}' record")
        return np.vstack(rows)
