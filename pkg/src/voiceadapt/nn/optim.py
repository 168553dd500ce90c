from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDiverged, ValidationError


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params: list, grads: list):
    """Bias-corrected Adam update, applied to ``params`` in place.

    ``params`` and ``grads`` are parallel lists of arrays.  Moments are created
    lazily on the first call.  Returns ``(params, state)``.
    """
    if len(params) != len(grads):
        raise ValidationError(f"{len(params)} parameters but {len(grads)} gradients")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged("diverged: non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ValidationError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state
