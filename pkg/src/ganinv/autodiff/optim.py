"""SGD and Adam over lists of arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ganinv.errors import ConfigError, NumericError, ShapeError


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


def optimizer_step(state: OptimizerState, params, grads) -> list[np.ndarray]:
    """Return updated copies of ``params``; ``state`` is advanced in place.

    A non-finite gradient refuses the step: nothing is updated and
    :class:`NumericError` is raised.
    """
    params = [np.asarray(p, dtype=np.float64) for p in params]
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    if len(params) != len(grads):
        raise ShapeError("one gradient per parameter is required")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient; step refused")

    if state.kind == "sgd":
        state.step += 1
        return [p - state.lr * g for p, g in zip(params, grads)]

    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        state.m[i], state.v[i] = m, v
        out.append(p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
    return out
