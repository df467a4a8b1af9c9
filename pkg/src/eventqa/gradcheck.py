"""Central finite-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor


class InvalidCheck(RuntimeError):
    """Raised when the function under test is not deterministic."""


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    tol: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def as_record(self) -> dict:
        return {
            "name": self.name,
            "expected": "analytic == finite difference",
            "observed": float(self.max_rel_error),
            "tolerance": self.tol,
            "pass": bool(self.passed),
        }


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    tol: float = 1e-4,
    h: float = 1e-5,
    max_entries: int | None = 40,
    seed: int = 0,
    name: str = "grad_check",
    floor: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients of scalar `f()` w.r.t. `params` with
    central differences.

    `f` closes over `params` and must be deterministic; params should be
    float64. At most `max_entries` randomly chosen entries per parameter
    are perturbed. The relative error for one entry is
    |a - n| / max(|a|, |n|, floor).
    """
    base = f()
    again = f()
    if not np.array_equal(base.data, again.data):
        raise InvalidCheck(f"{name}: function is not deterministic")
    for p in params:
        p.grad = None
    base.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            a = float(ga.reshape(-1)[i])
            err = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, err)
            count += 1
    for p in params:
        p.grad = None
    return GradCheckReport(name, worst, tol, count)
