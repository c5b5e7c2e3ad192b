"""Deterministic first-order minimizer shared by the alignment and
splat-optimization stages.

Moment-estimated (Adam-style) descent direction with a cosine-decayed base
step and Armijo backtracking.  A candidate step is only accepted if it does
not increase the objective (the sufficient-decrease margin is floored at
zero because the momentum direction is not guaranteed to be a descent
direction), so the recorded objective trace is non-increasing by
construction.  Failing to find an acceptable step is treated as a plateau,
not an error; a non-finite objective or gradient raises
:class:`OptimizationError` with the iteration index.

``evaluate`` and ``gradient`` are split so that the forward state of an
accepted candidate (already evaluated during the line search) can be
reused as the next iteration's linearization point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Params = dict[str, np.ndarray]


class OptimizationError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass
class DescentConfig:
    iterations: int = 1000
    step_size: float = 1e-2
    cosine_decay: bool = True
    armijo_c: float = 1e-4
    max_backtracks: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_scale: dict[str, float] = field(default_factory=dict)


def minimize(params: Params,
             evaluate: Callable[[Params], tuple[float, object, dict]],
             gradient: Callable[[Params, object], Params],
             cfg: DescentConfig,
             post_step: Callable[[Params], None] | None = None,
             ) -> tuple[Params, list[dict]]:
    """Minimize ``evaluate`` over a dict of arrays.

    evaluate(params) -> (loss, cache, info); gradient(params, cache) -> grads.
    Returns (optimized params, trace of per-iteration info dicts).  The info
    dict of the state at each iteration is recorded (index 0 = initial).
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    loss, cache, info = evaluate(params)
    if not math.isfinite(loss):
        raise OptimizationError("initial objective is non-finite", 0)
    trace = [dict(info, iteration=0)]
    moment1 = {k: np.zeros_like(v) for k, v in params.items()}
    moment2 = {k: np.zeros_like(v) for k, v in params.items()}

    for it in range(1, cfg.iterations + 1):
        grads = gradient(params, cache)
        directional = 0.0
        direction: Params = {}
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise OptimizationError("gradient is non-finite", it)
            moment1[k] = cfg.beta1 * moment1[k] + (1 - cfg.beta1) * g
            moment2[k] = cfg.beta2 * moment2[k] + (1 - cfg.beta2) * g * g
            m_hat = moment1[k] / (1.0 - cfg.beta1 ** it)
            v_hat = moment2[k] / (1.0 - cfg.beta2 ** it)
            d = cfg.lr_scale.get(k, 1.0) * m_hat / (np.sqrt(v_hat) + cfg.eps)
            direction[k] = d
            directional += float(np.sum(g * d))
        # momentum can point uphill; flooring the margin keeps acceptance
        # equivalent to plain non-increase in that case
        directional = max(directional, 0.0)

        base = cfg.step_size
        if cfg.cosine_decay:
            base *= 0.5 * (1.0 + math.cos(math.pi * (it - 1) / max(cfg.iterations, 1)))

        eta = 1.0
        accepted = False
        saw_finite = False
        for _ in range(cfg.max_backtracks):
            cand = {k: params[k] - base * eta * direction[k] for k in params}
            if post_step is not None:
                post_step(cand)
            new_loss, new_cache, new_info = evaluate(cand)
            if math.isfinite(new_loss):
                saw_finite = True
                if new_loss <= loss - cfg.armijo_c * base * eta * directional:
                    params, loss, cache, info = cand, new_loss, new_cache, new_info
                    accepted = True
                    break
            eta *= 0.5
        if not accepted and not saw_finite:
            raise OptimizationError("objective became non-finite for every step size", it)
        trace.append(dict(info, iteration=it))

    return params, trace
