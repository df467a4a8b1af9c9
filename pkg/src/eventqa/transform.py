"""Invertible affine event map e -> M e + b and Gaussian checks of what it
does to entropy and mutual information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from . import autograd as ag
from .autograd import ShapeError, Tensor

MAX_CONDITION = 1e12


class SingularityError(np.linalg.LinAlgError):
    pass


class EventTransform:
    """Trainable affine map applied row-wise: rows @ M.T + b."""

    def __init__(self, d: int, rng: np.random.Generator | None = None, eps: float = 0.02,
                 dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        m = np.eye(d) + eps * rng.standard_normal((d, d))
        self.M = Tensor(m.astype(dtype), requires_grad=True, name="transform.M")
        self.b = Tensor(np.zeros(d, dtype=dtype), requires_grad=True, name="transform.b")
        if self.det() == 0.0:
            raise SingularityError("initial transformation matrix is singular")

    @property
    def d(self) -> int:
        return self.M.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        return {"transform.M": self.M, "transform.b": self.b}

    def __call__(self, rows: Tensor) -> Tensor:
        return self.transform(rows)

    def transform(self, rows: Tensor) -> Tensor:
        if rows.shape[-1] != self.d:
            raise ShapeError(f"transform expects width {self.d}, got {rows.shape[-1]}")
        return ag.matmul(rows, ag.transpose(self.M)) + self.b

    def det(self) -> float:
        return float(np.linalg.det(self.M.data.astype(np.float64)))

    def log_abs_det(self) -> float:
        return float(np.linalg.slogdet(self.M.data.astype(np.float64))[1])

    def invert(self, rows) -> np.ndarray:
        """e = M^-1 (e' - b), evaluated in float64."""
        m = self.M.data.astype(np.float64)
        cond = np.linalg.cond(m)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise SingularityError(f"transformation matrix is numerically singular (cond={cond:.3g})")
        data = rows.data if isinstance(rows, Tensor) else np.asarray(rows)
        shifted = data.astype(np.float64) - self.b.data.astype(np.float64)
        return np.linalg.solve(m, shifted.T).T

    def report(self) -> dict:
        m = self.M.data.astype(np.float64)
        return {
            "det": float(np.linalg.det(m)),
            "log_abs_det": float(np.linalg.slogdet(m)[1]),
            "condition": float(np.linalg.cond(m)),
        }


class IdentityTransform:
    """Stand-in used when the transformation matrix is ablated."""

    def __init__(self, d: int):
        self._d = d

    @property
    def d(self) -> int:
        return self._d

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def __call__(self, rows: Tensor) -> Tensor:
        return self.transform(rows)

    def transform(self, rows: Tensor) -> Tensor:
        if rows.shape[-1] != self._d:
            raise ShapeError(f"transform expects width {self._d}, got {rows.shape[-1]}")
        return rows

    def invert(self, rows) -> np.ndarray:
        data = rows.data if isinstance(rows, Tensor) else np.asarray(rows)
        return data.astype(np.float64)

    def report(self) -> dict:
        return {"det": 1.0, "log_abs_det": 0.0, "condition": 1.0}


# ---------------------------------------------------------------------------
# Gaussian oracles


@dataclass
class PropertyReport:
    name: str
    expected: float
    observed: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.observed - self.expected) <= self.tolerance

    def as_record(self) -> dict:
        return {
            "name": self.name,
            "expected": self.expected,
            "observed": float(self.observed),
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
        }


def _check_pd(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim == 0:
        sigma = sigma.reshape(1, 1)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    return sigma


def gaussian_entropy(sigma) -> float:
    """Differential entropy in nats: 0.5 * ln((2 pi e)^d det sigma)."""
    sigma = _check_pd(sigma)
    d = sigma.shape[0]
    _, logdet = np.linalg.slogdet(sigma)
    return 0.5 * (d * np.log(2 * np.pi * np.e) + logdet)


def gaussian_mutual_information(joint, d1: int) -> float:
    """I(x1; x2) for a jointly Gaussian vector whose first d1 coordinates
    are x1."""
    joint = _check_pd(joint)
    s11 = joint[:d1, :d1]
    s22 = joint[d1:, d1:]
    return 0.5 * (np.linalg.slogdet(s11)[1] + np.linalg.slogdet(s22)[1] - np.linalg.slogdet(joint)[1])


def _invertible(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.shape[0] != m.shape[1]:
        raise ValueError("transformation matrix must be square")
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularityError("transformation matrix is singular")
    return m


def knn_entropy(samples: np.ndarray, k: int = 3) -> float:
    """Kozachenko-Leonenko k-nearest-neighbour entropy estimate in nats."""
    x = np.asarray(samples, dtype=np.float64)
    n, d = x.shape
    dist, _ = cKDTree(x).query(x, k=k + 1)
    eps = dist[:, -1]
    log_unit_ball = d / 2 * np.log(np.pi) - gammaln(d / 2 + 1)
    return float(digamma(n) - digamma(k) + log_unit_ball + d * np.mean(np.log(eps)))


def check_property1(m, b, sigma, tol: float = 1e-9) -> PropertyReport:
    """Entropy shift of an affine map: S(M e + b) - S(e) versus ln|det M|."""
    m = _invertible(m)
    sigma = _check_pd(sigma)
    if m.shape[0] != sigma.shape[0]:
        raise ValueError("dimension mismatch between map and covariance")
    _ = np.broadcast_to(np.asarray(b, dtype=np.float64), (m.shape[0],))  # bias only shifts the mean
    shifted = m @ sigma @ m.T
    observed = gaussian_entropy(shifted) - gaussian_entropy(sigma)
    expected = float(np.linalg.slogdet(m)[1])
    return PropertyReport("entropy_shift_closed_form", expected, observed, tol)


def check_property1_monte_carlo(m, b, sigma, n_samples: int = 200_000, seed: int = 0,
                                tol: float = 0.05, k: int = 3) -> PropertyReport:
    """Same shift, estimated from samples of e and M e + b."""
    m = _invertible(m)
    sigma = _check_pd(sigma)
    rng = np.random.default_rng(seed)
    e = rng.multivariate_normal(np.zeros(sigma.shape[0]), sigma, size=n_samples)
    e2 = e @ m.T + np.asarray(b, dtype=np.float64)
    observed = knn_entropy(e2, k) - knn_entropy(e, k)
    expected = float(np.linalg.slogdet(m)[1])
    return PropertyReport("entropy_shift_monte_carlo", expected, observed, tol)


def check_property2(m, b, joint, tol: float = 1e-9) -> PropertyReport:
    """Mutual information of an event pair before and after mapping both
    members through the same affine map."""
    m = _invertible(m)
    joint = _check_pd(joint)
    d = m.shape[0]
    if joint.shape[0] != 2 * d:
        raise ValueError("joint covariance must cover both members of the pair")
    _ = np.broadcast_to(np.asarray(b, dtype=np.float64), (d,))
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = m
    block[d:, d:] = m
    before = gaussian_mutual_information(joint, d)
    after = gaussian_mutual_information(block @ joint @ block.T, d)
    return PropertyReport("mutual_information_invariance", before, after, tol)
