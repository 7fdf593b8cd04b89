"""
Penalty-perturbation noise, the parameter condition on the dual step, and
the cumulative privacy-loss accountant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidScale, IsolatedNode
from .graph import Network
from .model import ErmConfig, LabeledDataset


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-node geometric noise scales ``alpha_i(t) = alpha1_i * q_i**(t-1)``."""

    alpha1: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha1, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        a, q = np.broadcast_arrays(a, q)
        if np.any(a <= 0) or np.any(q <= 0):
            raise InvalidScale("noise scales and ratios must be positive")
        object.__setattr__(self, "alpha1", a.copy())
        object.__setattr__(self, "q", q.copy())

    @classmethod
    def uniform(cls, alpha1: float, q: float, n_nodes: int) -> "NoiseSchedule":
        return cls(np.full(n_nodes, float(alpha1)), np.full(n_nodes, float(q)))

    def alpha_at(self, node: int, t: int) -> float:
        return float(self.alpha1[node] * self.q[node] ** (t - 1))

    def table(self, T: int) -> np.ndarray:
        """``(T, N)`` array of ``alpha_i(t)`` for ``t = 1..T``."""
        t = np.arange(T)[:, None]
        return self.alpha1[None, :] * self.q[None, :] ** t


def sample_penalty_noise(alpha: float, d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from the density proportional to ``exp(-alpha * |eps|_2)`` on R^d.

    The norm is Gamma(shape=d, scale=1/alpha); the direction is a normalized
    standard-normal vector.
    """
    if not alpha > 0 or not np.isfinite(alpha):
        raise InvalidScale(f"alpha must be a positive finite number, got {alpha}")
    if d < 1:
        raise DimensionMismatch("dimension must be at least 1")
    radius = rng.gamma(shape=d, scale=1.0 / alpha)
    u = rng.standard_normal(d)
    nrm = np.linalg.norm(u)
    while nrm == 0.0:
        u = rng.standard_normal(d)
        nrm = np.linalg.norm(u)
    return radius * u / nrm


@dataclass
class ValidationResult:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def check_theta_condition(theta, datasets: Sequence[LabeledDataset], cfg: ErmConfig, net: Network) -> ValidationResult:
    """Strict check of ``2 c1 < (B_i / C) (rho/N + 2 theta V_i)`` at every node.

    ``theta`` may be a scalar or one value per node. Violating node indices
    are returned in ``violations``.
    """
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (net.n_nodes,))
    bad = []
    for i, ds in enumerate(datasets):
        v = len(net.neighbors(i))
        rhs = ds.B / cfg.C * (cfg.reg_weight + 2.0 * theta[i] * v)
        if not 2.0 * cfg.c1 < rhs:
            bad.append(i)
    return ValidationResult(bad)


def dvp_dual_shift(lam, eta: float, V_i: int, eps) -> np.ndarray:
    """Dual variable after absorbing penalty noise: ``lam + eta * V_i * eps``."""
    lam = np.asarray(lam, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if lam.shape != eps.shape:
        raise DimensionMismatch(f"dual {lam.shape} vs noise {eps.shape}")
    return lam + eta * V_i * eps


@dataclass
class PrivacyLedger:
    """Per-node, per-iteration privacy-loss terms and their running sums.

    ``terms[t-1, i]`` is ``C (1.4 c1 + alpha_i(t)) / (eta_i(t) V_i B_i)``.
    """

    terms: np.ndarray
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        self.terms = np.asarray(self.terms, dtype=float)
        self.cumulative = np.cumsum(self.terms, axis=0)

    @property
    def beta(self) -> float:
        return float(self.cumulative[-1].max()) if self.terms.size else 0.0

    @property
    def prefix(self) -> np.ndarray:
        """Network bound after each iteration, ``P(t)`` for ``t = 1..T``."""
        return self.cumulative.max(axis=1)

    def P(self, t: int) -> float:
        return 0.0 if t == 0 else float(self.cumulative[t - 1].max())

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "t", "term", "cumulative"])
            T, N = self.terms.shape
            for i in range(N):
                for t in range(T):
                    w.writerow([i, t + 1, repr(float(self.terms[t, i])), repr(float(self.cumulative[t, i]))])
            w.writerow([])
            w.writerow(["beta", repr(self.beta)])


def privacy_terms(eta: np.ndarray, alpha: np.ndarray, degrees, sizes, C: float, c1: float) -> np.ndarray:
    """Elementwise accountant terms from ``(T, N)`` tables of eta and alpha."""
    degrees = np.asarray(degrees, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    return C * (1.4 * c1 + alpha) / (eta * degrees[None, :] * sizes[None, :])


def privacy_bound(eta_sched, noise_sched: NoiseSchedule, cfg: ErmConfig, net: Network, sizes, T: int) -> PrivacyLedger:
    """Cumulative bound ``max_i sum_t C(1.4 c1 + alpha_i(t)) / (eta_i(t) V_i B_i)``."""
    degrees = net.degrees
    if np.any(degrees == 0):
        raise IsolatedNode(f"nodes {np.flatnonzero(degrees == 0).tolist()} have no neighbors")
    sizes = np.asarray(sizes, dtype=float)
    if sizes.shape != (net.n_nodes,):
        raise DimensionMismatch("one sample count per node required")
    return PrivacyLedger(privacy_terms(eta_sched.table(T), noise_sched.table(T), degrees, sizes, cfg.C, cfg.c1))
