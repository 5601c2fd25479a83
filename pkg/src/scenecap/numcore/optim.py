"""ADAM with bias correction over named parameter collections."""
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Return ``(new_params, new_state)`` after one ADAM update.

    Inputs are left untouched; moments are created lazily on the first step.
    """
    if set(grads) != set(params):
        raise ValueError("params and grads must share names")
    t = state.step + 1
    m_new, v_new, out = {}, {}, {}
    for name, p in params.items():
        g = grads[name].data if isinstance(grads[name], Tensor) else np.asarray(grads[name], float)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ValueError(f"moment shape mismatch for {name!r}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        out[name] = Tensor(p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps),
                           requires_grad=p.requires_grad)
        m_new[name] = m
        v_new[name] = v
    new_state = AdamState(state.lr, state.beta1, state.beta2, state.eps, t, m_new, v_new)
    return out, new_state
