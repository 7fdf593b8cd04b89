"""
Post-hoc analysis of traces: first-order optimality residuals, the
per-iteration rate bound and its empirical contraction check, and the
reconstruction attack available to an observer who knows a node's penalties.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NotInColumnSpace, NotStronglyConvex, UnknownSchedule, ZeroMatrix
from .graph import Network, laplacian, psd_sqrt, signless_laplacian, spectral_bounds
from .model import LOGISTIC, ErmConfig, LabeledDataset, Loss, curvature_constants, local_gradient

PINV_RCOND = 1e-10
COLSPACE_TOL = 1e-8
CERT_SLACK = 1e-8


def stacked_gradient(fhat: np.ndarray, datasets: Sequence[LabeledDataset], cfg: ErmConfig, loss: Loss = LOGISTIC) -> np.ndarray:
    """Rows are ``grad O(f_i, D_i)``."""
    return np.stack([local_gradient(fhat[i], ds, cfg, loss) for i, ds in enumerate(datasets)])


def _sqrt_lap(net: Network) -> np.ndarray:
    return psd_sqrt(laplacian(net))


def recover_Y(Lambda: np.ndarray, net: Network, sqrt_lap: Optional[np.ndarray] = None) -> np.ndarray:
    """Minimum-norm ``Y`` with ``sqrt(D - A) Y = 2 Lambda``.

    Raises :class:`NotInColumnSpace` if ``Lambda`` has a component along the
    all-ones direction.
    """
    Lambda = np.asarray(Lambda, dtype=float)
    if Lambda.ndim == 1:
        Lambda = Lambda[:, None]
    if Lambda.shape[0] != net.n_nodes:
        raise DimensionMismatch("one dual row per node required")
    S = _sqrt_lap(net) if sqrt_lap is None else sqrt_lap
    scale = max(1.0, float(np.linalg.norm(Lambda)))
    ones = np.ones(net.n_nodes) / np.sqrt(net.n_nodes)
    null_part = np.linalg.norm(ones @ Lambda)
    if null_part > COLSPACE_TOL * scale:
        raise NotInColumnSpace(f"dual matrix has null-space component {null_part:.3e}")
    Y = np.linalg.pinv(S, rcond=PINV_RCOND, hermitian=True) @ (2.0 * Lambda)
    if np.linalg.norm(S @ Y - 2.0 * Lambda) > COLSPACE_TOL * scale:
        raise NotInColumnSpace("least-squares residual exceeds 1e-8")
    return Y


def optimal_dual(fhat: np.ndarray, datasets, cfg: ErmConfig, net: Network, loss: Loss = LOGISTIC) -> np.ndarray:
    """Minimum-norm ``Y*`` solving ``grad O(fhat) + sqrt(D - A) Y = 0`` in least squares."""
    S = _sqrt_lap(net)
    G = stacked_gradient(np.asarray(fhat, dtype=float), datasets, cfg, loss)
    return -np.linalg.pinv(S, rcond=PINV_RCOND, hermitian=True) @ G


def optimality_residual(fhat, Y, datasets, cfg: ErmConfig, net: Network, loss: Loss = LOGISTIC) -> dict:
    """Frobenius norms of the two first-order optimality conditions."""
    fhat = np.asarray(fhat, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if fhat.shape != Y.shape or fhat.shape[0] != net.n_nodes:
        raise DimensionMismatch("fhat and Y must both be N x d")
    S = _sqrt_lap(net)
    G = stacked_gradient(fhat, datasets, cfg, loss)
    return {
        "stationarity": float(np.linalg.norm(G + S @ Y)),
        "consensus": float(np.linalg.norm(S @ fhat)),
    }


@dataclass(frozen=True)
class RateInputs:
    theta: float
    W: np.ndarray
    net: Network
    m_o: float
    M_O: float
    mu: float = 2.0

    def __post_init__(self):
        if not self.mu > 1:
            raise ValueError("mu must exceed 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        w = np.asarray(self.W, dtype=float)
        if w.ndim == 2:
            w = np.diag(w)
        if np.any(w <= 0):
            raise ValueError("penalties must be positive")
        object.__setattr__(self, "W", w)


def _sv_or_zero(m):
    try:
        s = spectral_bounds(m)
        return s.sigma_min_nonzero, s.sigma_max
    except ZeroMatrix:
        return 0.0, 0.0


def rate_spectra(inputs: RateInputs) -> dict:
    L = laplacian(inputs.net)
    Q = signless_laplacian(inputs.net)
    W = np.diag(inputs.W)
    sig_lap = spectral_bounds(L).sigma_min_nonzero
    _, sig_tilde = _sv_or_zero(W @ Q)
    bar_min, bar_max = _sv_or_zero((W - inputs.theta * np.eye(len(inputs.W))) @ L)
    return {"sigma_min_lap": sig_lap, "sigma_tilde_max": sig_tilde, "sigma_bar_min": bar_min, "sigma_bar_max": bar_max}


def delta_lower_bound(inputs: RateInputs, t: Optional[int] = None) -> float:
    """Lower bound on the per-iteration contraction ``delta(t)``.

    ``min{theta s / (mu^2 st),
          (2 m_o + 2 sb_min) / ((mu^2 M_O^2 + mu sb_max^2) / (theta s (mu - 1)) + st)}``
    with ``s`` the smallest nonzero singular value of ``D - A``,
    ``st = sigma_max(W (D + A))`` and ``sb = sigma(W - theta I)(D - A)``.
    ``t`` is informational; ``inputs.W`` already holds ``W(t)``.
    """
    if not inputs.m_o > 0:
        raise NotStronglyConvex("rate bound needs m_o > 0")
    if np.any(inputs.W < inputs.theta * (1 - 1e-12)):
        raise ValueError("rate bound needs W(t) >= theta I")
    sp = rate_spectra(inputs)
    th, mu = inputs.theta, inputs.mu
    s, st, bmin, bmax = sp["sigma_min_lap"], sp["sigma_tilde_max"], sp["sigma_bar_min"], sp["sigma_bar_max"]
    first = th * s / (mu**2 * st)
    second = (2 * inputs.m_o + 2 * bmin) / ((mu**2 * inputs.M_O**2 + mu * bmax**2) / (th * s * (mu - 1)) + st)
    return float(min(first, second))


@dataclass(frozen=True)
class ContractionRow:
    t: int
    delta: float
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + CERT_SLACK)


def _jnorm2(dY, dF, theta, WQ):
    return float(np.sum(dY * dY) / theta + np.sum(dF * (WQ @ dF)))


def contraction_certificate(
    trace,
    fstar: np.ndarray,
    net: Network,
    cfg: ErmConfig,
    datasets: Sequence[LabeledDataset],
    mu: float = 2.0,
    loss: Loss = LOGISTIC,
) -> list[ContractionRow]:
    """Check ``(1 + delta(t)) |Z(t) - Z*|_J(t)^2 <= |Z(t-1) - Z*|_J(t)^2`` along a trace.

    ``Z`` stacks ``Y`` (recovered from the duals) over the primal matrix;
    ``Z*`` uses the consensual ``f*`` and the minimum-norm optimal dual.
    ``J(t) = blockdiag(I / theta, W(t)(D + A))``.
    """
    if not mu > 1:
        raise ValueError("mu must exceed 1")
    theta = np.unique(trace.theta)
    if theta.size != 1:
        raise ValueError("certificate needs a common dual step")
    theta = float(theta[0])
    N = net.n_nodes
    S = _sqrt_lap(net)
    Q = signless_laplacian(net)
    Fstar = np.tile(np.asarray(fstar, dtype=float), (N, 1))
    Ystar = optimal_dual(Fstar, datasets, cfg, net, loss)
    cc = curvature_constants(datasets, cfg)
    Ys = [recover_Y(trace.lam[t], net, S) for t in range(trace.T + 1)]
    rows = []
    for t in range(1, trace.T + 1):
        W = trace.eta[t]
        WQ = np.diag(W) @ Q
        delta = delta_lower_bound(RateInputs(theta, W, net, cc.m_o, cc.M_O, mu), t)
        lhs = (1.0 + delta) * _jnorm2(Ys[t] - Ystar, trace.f[t] - Fstar, theta, WQ)
        rhs = _jnorm2(Ys[t - 1] - Ystar, trace.f[t - 1] - Fstar, theta, WQ)
        rows.append(ContractionRow(t, delta, lhs, rhs))
    return rows


def certificate_to_csv(rows: Sequence[ContractionRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "delta", "lhs", "rhs", "holds"])
        for r in rows:
            w.writerow([r.t, repr(r.delta), repr(r.lhs), repr(r.rhs), int(r.holds)])


def recompute_duals(trace, net: Network, node: int, theta: float) -> np.ndarray:
    """Replay the dual recursion for one node from broadcast primal iterates."""
    lam = np.zeros((trace.T + 1, trace.f.shape[2]))
    nb = list(net.neighbors(node))
    for t in range(1, trace.T + 1):
        lam[t] = lam[t - 1] + 0.5 * theta * (len(nb) * trace.f[t, node] - trace.f[t, nb].sum(axis=0))
    return lam


def attack_reconstruct(
    trace,
    net: Network,
    node: int,
    known: LabeledDataset,
    cfg: ErmConfig,
    eta: Optional[Sequence[float]],
    theta: Optional[float],
    loss: Loss = LOGISTIC,
) -> dict:
    """Estimate the one unknown sample of ``node`` from its KKT conditions.

    The observer knows every other sample of the node (``known``), all
    broadcast iterates of the node and its neighbors, the dual step, and
    the node's penalties ``eta[t-1] = eta_i(t)``. Each iteration yields

        rhs(t) = eps_i(t) + C / (2 eta_i(t) V_i B_i) * y1 L'(y1 f_i(t).x1) x1,

    computed entirely from observed quantities. Averaging over ``t`` washes
    out the zero-mean noise and leaves a multiple of the hidden feature
    vector; its sign is not identified.

    Raises :class:`UnknownSchedule` when the penalties are withheld.
    """
    if eta is None or theta is None:
        raise UnknownSchedule("penalty schedule of the target node is not available to the observer")
    eta = np.asarray(eta, dtype=float)
    T = trace.T
    if eta.shape[0] < T:
        raise UnknownSchedule(f"penalties known for {eta.shape[0]} of {T} iterations")
    nb = list(net.neighbors(node))
    V = len(nb)
    B = known.B + 1
    lam = recompute_duals(trace, net, node, theta)
    f = trace.f
    terms = np.zeros((T, f.shape[2]))
    for t in range(1, T + 1):
        fi = f[t, node]
        z = known.labels * (known.features @ fi)
        known_grad = cfg.C / B * (known.features.T @ (known.labels * loss.d1(z)))
        k = 1.0 / (2.0 * eta[t - 1] * V)
        terms[t - 1] = (
            -k * known_grad
            - k * (cfg.reg_weight * fi + 2.0 * lam[t - 1])
            - (1.0 / (2.0 * V)) * (len(nb) * (2.0 * fi - f[t - 1, node]) - f[t - 1, nb].sum(axis=0))
        )
    return {"estimate": terms.mean(axis=0), "per_t_terms": terms, "duals": lam}


def abs_cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def attack_to_csv(result: dict, path: str | Path) -> None:
    terms = result["per_t_terms"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"term{k}" for k in range(terms.shape[1])])
        for t, row in enumerate(terms, start=1):
            w.writerow([t] + [repr(float(v)) for v in row])
