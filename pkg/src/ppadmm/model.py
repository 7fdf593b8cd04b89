"""
Regularized ERM objective for binary classification.

Each node holds ``O(f, D_i) = (C / B_i) * sum_n L(y_n f.x_n) + (rho / N) * R(f)``
with ``R(f) = |f|^2 / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import solver
from .errors import DimensionMismatch, NonFinite, SolverDidNotConverge

NORM_CAP = 1.0 + 1e-12


class Loss(Protocol):
    """Margin loss ``L(z)`` with first and second derivatives (vectorized)."""

    name: str
    c1: float

    def value(self, z: np.ndarray) -> np.ndarray: ...

    def d1(self, z: np.ndarray) -> np.ndarray: ...

    def d2(self, z: np.ndarray) -> np.ndarray: ...


class LogisticLoss:
    """``log(1 + exp(-z))``; bounded slope 1 and curvature 1/4."""

    name = "logistic"
    c1 = 0.25

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return np.maximum(0.0, -z) + np.log1p(np.exp(-np.abs(z)))

    def d1(self, z):
        # -1 / (1 + e^z), written to avoid overflow on either side
        z = np.asarray(z, dtype=float)
        e = np.exp(-np.abs(z))
        return np.where(z >= 0, -e / (1.0 + e), -1.0 / (1.0 + e))

    def d2(self, z):
        z = np.asarray(z, dtype=float)
        # s(1 - s) with s in [1/2, 1]: 1 - s is exact, so the product never rounds above 1/4
        s = 1.0 / (1.0 + np.exp(-np.abs(z)))
        return s * (1.0 - s)


class QuadraticLoss:
    """``(1 - z)^2 / 2``. Solver tests only; its slope is unbounded."""

    name = "quadratic"
    c1 = 1.0

    def value(self, z):
        return 0.5 * (1.0 - np.asarray(z, dtype=float)) ** 2

    def d1(self, z):
        return np.asarray(z, dtype=float) - 1.0

    def d2(self, z):
        return np.ones_like(np.asarray(z, dtype=float))


LOGISTIC = LogisticLoss()


def logistic_loss(z: float) -> dict:
    """Value and first two derivatives of the logistic loss at a scalar."""
    z = float(z)
    if not np.isfinite(z):
        raise NonFinite(f"logistic loss needs a finite argument, got {z}")
    return {
        "value": float(LOGISTIC.value(z)),
        "first_derivative": float(LOGISTIC.d1(z)),
        "second_derivative": float(LOGISTIC.d2(z)),
    }


@dataclass(frozen=True)
class LabeledDataset:
    """Feature rows with unit-norm cap and +-1 labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if x.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(x)):
            raise NonFinite("features contain NaN or inf")
        if y.size and not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be exactly +1 or -1")
        norms = np.linalg.norm(x, axis=1)
        if norms.size and norms.max() > NORM_CAP:
            raise ValueError(f"feature row norm {norms.max():.6g} exceeds 1")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def B(self) -> int:
        return int(self.labels.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class ErmConfig:
    C: float
    rho: float
    n_nodes: int
    c1: float = 0.25

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")

    @property
    def reg_weight(self) -> float:
        """Per-node regularizer weight ``rho / N``."""
        return self.rho / self.n_nodes

    def check_sizes(self, datasets: Sequence[LabeledDataset]) -> None:
        b_min = min(ds.B for ds in datasets)
        if self.C > b_min:
            raise ValueError(f"C={self.C} exceeds smallest local sample count {b_min}")


@dataclass(frozen=True)
class CurvatureConstants:
    m: np.ndarray
    M: np.ndarray

    @property
    def m_o(self) -> float:
        return float(self.m.min())

    @property
    def M_O(self) -> float:
        return float(self.M.max())


def _margins(f, data):
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.shape[0] != data.d:
        raise DimensionMismatch(f"classifier has shape {f.shape}, data dimension is {data.d}")
    return data.labels * (data.features @ f)


def local_objective(f, data: LabeledDataset, cfg: ErmConfig, loss: Loss = LOGISTIC) -> float:
    z = _margins(f, data)
    f = np.asarray(f, dtype=float)
    return float(cfg.C / data.B * loss.value(z).sum() + cfg.reg_weight * 0.5 * f @ f)


def local_gradient(f, data: LabeledDataset, cfg: ErmConfig, loss: Loss = LOGISTIC) -> np.ndarray:
    z = _margins(f, data)
    w = data.labels * loss.d1(z)
    return cfg.C / data.B * (data.features.T @ w) + cfg.reg_weight * np.asarray(f, dtype=float)


def local_value_and_gradient(f, data: LabeledDataset, cfg: ErmConfig, loss: Loss = LOGISTIC):
    z = _margins(f, data)
    f = np.asarray(f, dtype=float)
    scale = cfg.C / data.B
    val = scale * loss.value(z).sum() + cfg.reg_weight * 0.5 * f @ f
    grad = scale * (data.features.T @ (data.labels * loss.d1(z))) + cfg.reg_weight * f
    return float(val), grad


def curvature_constants(datasets: Sequence[LabeledDataset], cfg: ErmConfig) -> CurvatureConstants:
    """Strong convexity ``m_i`` and gradient Lipschitz ``M_i`` per node.

    The logistic part adds no uniform strong convexity, so ``m_i = rho/N``;
    ``M_i = C * c1 * max_n |x_n|^2 + rho/N``.
    """
    m = np.full(len(datasets), cfg.reg_weight)
    M = np.array(
        [cfg.C * cfg.c1 * (float(np.max(np.sum(ds.features**2, axis=1))) if ds.B else 0.0) + cfg.reg_weight for ds in datasets]
    )
    return CurvatureConstants(m=m, M=M)


def erm_objective(f, datasets: Sequence[LabeledDataset], cfg: ErmConfig, loss: Loss = LOGISTIC) -> float:
    """Global objective: sum of local objectives at a common classifier."""
    return sum(local_objective(f, ds, cfg, loss) for ds in datasets)


def erm_value_and_gradient(f, datasets, cfg, loss: Loss = LOGISTIC):
    val, grad = 0.0, np.zeros(datasets[0].d)
    for ds in datasets:
        v, g = local_value_and_gradient(f, ds, cfg, loss)
        val += v
        grad = grad + g
    return val, grad


def centralized_solve(
    datasets: Sequence[LabeledDataset],
    cfg: ErmConfig,
    tol: float = 1e-10,
    loss: Loss = LOGISTIC,
    max_iter: int = 200_000,
    x0=None,
) -> np.ndarray:
    """Minimizer of the pooled ERM objective to gradient norm ``tol``."""
    if cfg.rho <= 0:
        raise ValueError("centralized_solve needs rho > 0 for a unique minimizer")
    d = datasets[0].d
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    rep = solver.minimize(lambda f: erm_value_and_gradient(f, datasets, cfg, loss), x0, tol=tol, max_iter=max_iter)
    if not rep.converged:
        raise SolverDidNotConverge(f"centralized solve stopped at gradient norm {rep.gradient_norm:.3e}")
    return rep.solution
