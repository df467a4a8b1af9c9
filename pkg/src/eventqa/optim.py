"""Adam with decoupled weight decay and a linear warmup/decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import GradientError, Tensor


@dataclass
class OptimizerConfig:
    lr: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    weight_decay: float = 0.95
    warmup: float = 0.1
    max_grad_norm: float | None = 1.0


def linear_warmup_decay(step: int, total_steps: int, warmup: float) -> float:
    """Multiplier on the peak learning rate at 1-based `step`.

    Rises linearly from 0 over the first `warmup` fraction of steps, then
    falls linearly to 0 at `total_steps`. With `total_steps <= 0` the
    schedule is disabled and the multiplier is 1.
    """
    if total_steps <= 0:
        return 1.0
    warm = warmup * total_steps
    progress = step / total_steps
    if step < warm:
        return step / warm
    return max(0.0, (1.0 - progress) / max(1e-12, 1.0 - warmup))


@dataclass
class OptimizerState:
    config: OptimizerConfig
    total_steps: int = 0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a name->Tensor parameter dict.

    Names listed in `no_decay` (layer-norm gains and all biases, by
    convention) skip the decoupled weight-decay term.
    """

    def __init__(self, params: dict[str, Tensor], config: OptimizerConfig | None = None,
                 total_steps: int = 0, no_decay: set[str] | None = None):
        self.params = params
        self.state = OptimizerState(config or OptimizerConfig(), total_steps)
        self.no_decay = set(no_decay or ())
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    @property
    def lr(self) -> float:
        cfg = self.state.config
        return cfg.lr * linear_warmup_decay(self.state.step + 1, self.state.total_steps, cfg.warmup)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        st, cfg = self.state, self.state.config
        missing = [n for n, p in self.params.items() if p.grad is None]
        if len(missing) == len(self.params):
            raise GradientError("optimizer step before any backward pass")
        lr = self.lr
        st.step += 1
        grads = {n: p.grad for n, p in self.params.items() if p.grad is not None}
        if cfg.max_grad_norm is not None:
            norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
            if norm > cfg.max_grad_norm:
                factor = cfg.max_grad_norm / norm
                grads = {n: g * g.dtype.type(factor) for n, g in grads.items()}
        bc1 = 1.0 - cfg.beta1**st.step
        bc2 = 1.0 - cfg.beta2**st.step
        for name, g in grads.items():
            p = self.params[name]
            m = st.m[name]
            v = st.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
            if name not in self.no_decay and cfg.weight_decay:
                update = update + cfg.weight_decay * p.data
            p.data -= (lr * update).astype(p.dtype, copy=False)
