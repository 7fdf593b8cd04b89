"""
Consensus ADMM over a network: the modified method with private per-node
penalties, its penalty-perturbed and dual-perturbed variants, and the
conventional four-step form kept as an equivalence oracle.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import solver
from .errors import DimensionMismatch, ScheduleInvalid, SolverDidNotConverge, ThetaConditionViolated
from .graph import Network
from .model import LOGISTIC, ErmConfig, LabeledDataset, Loss, local_value_and_gradient
from .privacy import NoiseSchedule, ValidationResult, check_theta_condition, sample_penalty_noise

log = logging.getLogger(__name__)

MECHANISMS = ("none", "pp", "dvp")

# stream tags for SeedSequence so init and noise draws never collide
_INIT_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True)
class PenaltySchedule:
    """Geometric private penalties ``eta_i(t) = eta1_i * q_i**(t-1)`` and dual step ``theta``.

    ``theta`` is a scalar by default; a per-node array is accepted for
    experiments where the dual step is itself private.
    """

    eta1: np.ndarray
    q: np.ndarray
    theta: float | np.ndarray

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.eta1, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        e, q = np.broadcast_arrays(e, q)
        object.__setattr__(self, "eta1", e.copy())
        object.__setattr__(self, "q", q.copy())
        th = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", float(th) if th.ndim == 0 else th.copy())

    @classmethod
    def uniform(cls, eta1: float, q: float, theta: float, n_nodes: int) -> "PenaltySchedule":
        return cls(np.full(n_nodes, float(eta1)), np.full(n_nodes, float(q)), theta)

    @classmethod
    def constant(cls, theta: float, n_nodes: int) -> "PenaltySchedule":
        return cls.uniform(theta, 1.0, theta, n_nodes)

    @property
    def n_nodes(self) -> int:
        return self.eta1.shape[0]

    def theta_vec(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.theta, dtype=float), (self.n_nodes,)).copy()

    def table(self, T: int) -> np.ndarray:
        """``(T, N)`` array of ``eta_i(t)`` for ``t = 1..T``."""
        t = np.arange(T)[:, None]
        with np.errstate(over="ignore"):
            return self.eta1[None, :] * self.q[None, :] ** t


def penalty_at(s: PenaltySchedule, node: int, t: int) -> float:
    if t < 1:
        raise ValueError("penalties are indexed from t = 1")
    return float(s.eta1[node] * s.q[node] ** (t - 1))


@dataclass(frozen=True)
class ScheduleViolation:
    node: int
    t: int
    condition: str

    def __str__(self):
        return f"node {self.node}, t={self.t}: {self.condition}"


def validate_schedules(s: PenaltySchedule, T: int) -> ValidationResult:
    """Check ``eta_i(t+1) >= eta_i(t) >= theta > 0`` and finiteness for ``t <= T``.

    Violations are collected, not raised. Only the first violation of each
    kind per node is reported.
    """
    out = []
    theta = s.theta_vec()
    if np.any(theta <= 0):
        for i in np.flatnonzero(theta <= 0):
            out.append(ScheduleViolation(int(i), 0, "theta > 0"))
    eta = s.table(T + 1)
    for i in range(s.n_nodes):
        col = eta[:, i]
        nonfinite = np.flatnonzero(~np.isfinite(col[:T]))
        if nonfinite.size:
            out.append(ScheduleViolation(i, int(nonfinite[0]) + 1, "eta finite"))
        below = np.flatnonzero(col[:T] < theta[i])
        if below.size:
            out.append(ScheduleViolation(i, int(below[0]) + 1, "eta >= theta"))
        dec = np.flatnonzero(col[1:] < col[:-1])
        if dec.size:
            t = int(dec[0]) + 1
            out.append(ScheduleViolation(i, t, f"eta({t + 1}) >= eta({t})"))
    return ValidationResult(out)


@dataclass(frozen=True)
class NodeState:
    f: np.ndarray
    lam: np.ndarray


@dataclass
class IterateTrace:
    """Full record of a run.

    Arrays are indexed by iteration first: ``f[t]`` is the ``(N, d)`` matrix
    of primal iterates after iteration ``t`` (``t = 0`` is the
    initialization). ``eta[t]`` and ``eps[t]`` are the penalty and noise used
    to produce iteration ``t``; row 0 holds NaN / zeros.
    """

    f: np.ndarray
    lam: np.ndarray
    eps: np.ndarray
    eta: np.ndarray
    theta: np.ndarray
    mechanism: str
    inner_iterations: np.ndarray
    run_id: str = "0"
    extras: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.f.shape[0] - 1

    @property
    def n_nodes(self) -> int:
        return self.f.shape[1]

    def state(self, t: int, i: int) -> NodeState:
        return NodeState(self.f[t, i].copy(), self.lam[t, i].copy())

    def consensus_residual(self, net: Network) -> np.ndarray:
        """``max`` over edges of ``|f_i(t) - f_j(t)|_2`` for every ``t``."""
        if not net.edges:
            return np.zeros(self.T + 1)
        i, j = np.array(net.edge_list()).T
        return np.linalg.norm(self.f[:, i, :] - self.f[:, j, :], axis=2).max(axis=1)

    def to_csv(self, path: str | Path, net: Network) -> None:
        """Summary CSV: one row per node per iteration."""
        cres = self.consensus_residual(net)
        fn = np.linalg.norm(self.f, axis=2)
        en = np.linalg.norm(self.eps, axis=2)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run_id", "t", "node", "f_norm", "consensus_residual", "eta", "eps_norm"])
            for t in range(self.T + 1):
                for i in range(self.n_nodes):
                    w.writerow([self.run_id, t, i, repr(float(fn[t, i])), repr(float(cres[t])), repr(float(self.eta[t, i])), repr(float(en[t, i]))])

    def vectors_to_csv(self, path: str | Path) -> None:
        """Full primal vectors, one row per node per iteration."""
        d = self.f.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run_id", "t", "node"] + [f"f{k}" for k in range(d)])
            for t in range(self.T + 1):
                for i in range(self.n_nodes):
                    w.writerow([self.run_id, t, i] + [repr(float(v)) for v in self.f[t, i]])


def node_rng(seed: int, stream: int, node: int, t: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, int(node), int(t)]))


def initial_primal(n_nodes: int, d: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """Seeded standard-normal starting points, one independent stream per node."""
    return np.stack([scale * node_rng(seed, _INIT_STREAM, i).standard_normal(d) for i in range(n_nodes)])


def _solve_scaled(fun, x0, scale, tol, max_iter):
    # divide by the penalty curvature so the tolerance acts on a displacement scale
    rep = solver.minimize(lambda x: tuple(v / scale for v in fun(x)), x0, tol=tol, max_iter=max_iter)
    if not rep.converged:
        raise SolverDidNotConverge(f"primal update stopped at scaled gradient norm {rep.gradient_norm:.3e}")
    return rep


def madmm_primal_update(
    data: LabeledDataset,
    cfg: ErmConfig,
    state: NodeState,
    neighbor_f: Sequence[np.ndarray],
    eta: float,
    noise: Optional[np.ndarray] = None,
    *,
    form: str = "penalty",
    loss: Loss = LOGISTIC,
    tol: float = solver.DEFAULT_TOL,
    max_iter: int = solver.DEFAULT_MAX_ITER,
    x0: Optional[np.ndarray] = None,
    return_report: bool = False,
):
    """One node's primal step.

    Minimizes ``O(f) + 2 lam.f + eta * sum_j |f + eps - (f_i(t) + f_j(t)) / 2|^2``.
    With ``form="dual"`` the noise is moved into the dual,
    ``lam + eta V eps``, and the penalty is left unperturbed; both forms have
    the same minimizer.

    The subproblem is handed to the solver divided by ``max(1, 2 eta V)``,
    so ``tol`` bounds the stationarity residual divided by that factor.
    The solver is warm-started from ``f_i(t)`` unless ``x0`` is given.
    """
    if not eta > 0:
        raise ValueError("penalty must be positive")
    f_t = np.asarray(state.f, dtype=float)
    lam = np.asarray(state.lam, dtype=float)
    d = f_t.shape[0]
    anchors = np.array([0.5 * (f_t + np.asarray(fj, dtype=float)) for fj in neighbor_f]).reshape(-1, d)
    V = anchors.shape[0]
    eps = np.zeros(d) if noise is None else np.asarray(noise, dtype=float)
    if eps.shape != (d,) or lam.shape != (d,):
        raise DimensionMismatch("state, noise and classifier dimensions must agree")
    if form == "penalty":
        lin, shift = 2.0 * lam, eps
    elif form == "dual":
        lin, shift = 2.0 * (lam + eta * V * eps), np.zeros(d)
    else:
        raise ValueError(f"unknown form {form!r}")

    def fun(f):
        v, g = local_value_and_gradient(f, data, cfg, loss)
        r = f + shift - anchors
        return v + lin @ f + eta * np.sum(r * r), g + lin + 2.0 * eta * r.sum(axis=0)

    scale = max(1.0, 2.0 * eta * V)
    rep = _solve_scaled(fun, f_t if x0 is None else x0, scale, tol, max_iter)
    return (rep.solution, rep) if return_report else rep.solution


def dual_update(state: NodeState, own_f_next, neighbor_f_next: Sequence[np.ndarray], theta: float) -> np.ndarray:
    """``lam + (theta / 2) * sum_j (f_i(t+1) - f_j(t+1))``."""
    lam = np.asarray(state.lam, dtype=float)
    own = np.asarray(own_f_next, dtype=float)
    if own.shape != lam.shape:
        raise DimensionMismatch("dual and primal dimensions differ")
    acc = np.zeros_like(lam)
    for fj in neighbor_f_next:
        fj = np.asarray(fj, dtype=float)
        if fj.shape != lam.shape:
            raise DimensionMismatch("neighbor primal dimension differs")
        acc += own - fj
    return lam + 0.5 * theta * acc


NoiseSource = Callable[[int, int], np.ndarray]


def run(
    net: Network,
    datasets: Sequence[LabeledDataset],
    cfg: ErmConfig,
    schedule: PenaltySchedule,
    mechanism: str = "none",
    noise_schedule: Optional[NoiseSchedule] = None,
    T: int = 100,
    seed: int = 0,
    *,
    f0: Optional[np.ndarray] = None,
    noise_source: Optional[NoiseSource] = None,
    loss: Loss = LOGISTIC,
    tol: float = solver.DEFAULT_TOL,
    max_iter: int = solver.DEFAULT_MAX_ITER,
    workers: int = 1,
    run_id: str = "0",
    check: bool = True,
) -> IterateTrace:
    """Run ``T`` synchronous rounds of (primal for all nodes) then (dual for all nodes).

    Parameters
    ----------
    mechanism : {"none", "pp", "dvp"}
        ``"pp"`` perturbs the penalty term with noise drawn at scale
        ``alpha_i(t)``; ``"dvp"`` forces ``eta_i(t) = theta`` and adds
        ``theta V_i eps`` to the dual before the primal step.
    noise_source : callable, optional
        ``(node, t) -> eps`` replacing the sampler; lets two runs share draws.
    f0 : ndarray, optional
        ``(N, d)`` initialization; default is seeded standard normal.
    workers : int
        Threads for the per-node primal updates. Results do not depend on it.
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"mechanism must be one of {MECHANISMS}")
    N, d = net.n_nodes, datasets[0].d
    if len(datasets) != N or schedule.n_nodes != N:
        raise DimensionMismatch("need one dataset and one schedule entry per node")
    if mechanism == "dvp":
        schedule = PenaltySchedule(schedule.theta_vec(), np.ones(N), schedule.theta)
    if check:
        v = validate_schedules(schedule, T)
        if not v.ok:
            raise ScheduleInvalid(v.violations)
        tc = check_theta_condition(schedule.theta_vec(), datasets, cfg, net)
        if not tc.ok:
            if mechanism == "none":
                log.warning("theta condition fails at nodes %s (not needed for convergence)", tc.violations)
            else:
                raise ThetaConditionViolated(tc.violations)
    if mechanism != "none" and noise_source is None and noise_schedule is None:
        raise ValueError("private mechanisms need a noise schedule or a noise source")

    theta = schedule.theta_vec()
    eta_tab = schedule.table(T)
    F = np.zeros((T + 1, N, d))
    LAM = np.zeros((T + 1, N, d))
    EPS = np.zeros((T + 1, N, d))
    ETA = np.full((T + 1, N), np.nan)
    INNER = np.zeros((T + 1, N), dtype=int)
    F[0] = initial_primal(N, d, seed) if f0 is None else np.asarray(f0, dtype=float)
    nbrs = net.neighbor_lists

    def draw(i, t):
        if mechanism == "none":
            return np.zeros(d)
        if noise_source is not None:
            return np.asarray(noise_source(i, t), dtype=float)
        return sample_penalty_noise(noise_schedule.alpha_at(i, t), d, node_rng(seed, _NOISE_STREAM, i, t))

    def primal(i, t):
        eta = eta_tab[t - 1, i]
        eps = draw(i, t)
        f_new, rep = madmm_primal_update(
            datasets[i], cfg, NodeState(F[t - 1, i], LAM[t - 1, i]), [F[t - 1, j] for j in nbrs[i]], eta, eps,
            form="dual" if mechanism == "dvp" else "penalty", loss=loss, tol=tol, max_iter=max_iter, return_report=True,
        )
        return f_new, eps, eta, rep.iterations

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(1, T + 1):
            results = list(pool.map(lambda i: primal(i, t), range(N))) if pool else [primal(i, t) for i in range(N)]
            for i, (f_new, eps, eta, its) in enumerate(results):
                F[t, i], EPS[t, i], ETA[t, i], INNER[t, i] = f_new, eps, eta, its
            # broadcast barrier, then dual updates
            for i in range(N):
                LAM[t, i] = dual_update(NodeState(F[t - 1, i], LAM[t - 1, i]), F[t, i], [F[t, j] for j in nbrs[i]], theta[i])
    finally:
        if pool:
            pool.shutdown()
    return IterateTrace(f=F, lam=LAM, eps=EPS, eta=ETA, theta=theta, mechanism=mechanism, inner_iterations=INNER, run_id=run_id)


def conventional_admm_run(
    net: Network,
    datasets: Sequence[LabeledDataset],
    cfg: ErmConfig,
    eta: float,
    T: int,
    f0: np.ndarray,
    *,
    loss: Loss = LOGISTIC,
    tol: float = solver.DEFAULT_TOL,
    max_iter: int = solver.DEFAULT_MAX_ITER,
) -> IterateTrace:
    """Four-step ADMM with explicit edge variables ``w_ij`` and duals ``lam^a_ij``, ``lam^b_ij``.

    Duals start at zero and ``w_ij(0) = (f_i(0) + f_j(0)) / 2``. The returned
    trace carries ``lam_i = sum_j lam^a_ij`` and, in ``extras``, the per-pair
    histories ``w``, ``lam_a``, ``lam_b`` keyed by ordered pair ``(i, j)``.
    """
    N, d = net.n_nodes, datasets[0].d
    nbrs = net.neighbor_lists
    pairs = [(i, j) for i in range(N) for j in nbrs[i]]
    f = np.asarray(f0, dtype=float).copy()
    w = {(i, j): 0.5 * (f[i] + f[j]) for i, j in pairs}
    la = {p: np.zeros(d) for p in pairs}
    lb = {p: np.zeros(d) for p in pairs}
    hist_w = {p: [w[p].copy()] for p in pairs}
    hist_a = {p: [la[p].copy()] for p in pairs}
    hist_b = {p: [lb[p].copy()] for p in pairs}

    F = np.zeros((T + 1, N, d))
    LAM = np.zeros((T + 1, N, d))
    F[0] = f
    for t in range(1, T + 1):
        f_new = np.zeros_like(f)
        for i in range(N):
            V = len(nbrs[i])
            # f_i appears in f_i - w_ij (duals lam^a_ij) and in w_ji - f_i (duals lam^b_ji)
            lin = sum((la[(i, j)] - lb[(j, i)] for j in nbrs[i]), np.zeros(d))
            targets = np.array([w[(i, j)] for j in nbrs[i]] + [w[(j, i)] for j in nbrs[i]]).reshape(-1, d)

            def fun(x, i=i, lin=lin, targets=targets):
                v, g = local_value_and_gradient(x, datasets[i], cfg, loss)
                r = x - targets
                return v + lin @ x + 0.5 * eta * np.sum(r * r), g + lin + eta * r.sum(axis=0)

            f_new[i] = _solve_scaled(fun, f[i], max(1.0, 2.0 * eta * V), tol, max_iter).solution
        f = f_new
        for i, j in pairs:
            w[(i, j)] = (la[(i, j)] - lb[(i, j)]) / (2.0 * eta) + 0.5 * (f[i] + f[j])
        for i, j in pairs:
            la[(i, j)] = la[(i, j)] + eta * (f[i] - w[(i, j)])
            lb[(i, j)] = lb[(i, j)] + eta * (w[(i, j)] - f[j])
        for p in pairs:
            hist_w[p].append(w[p].copy())
            hist_a[p].append(la[p].copy())
            hist_b[p].append(lb[p].copy())
        F[t] = f
        for i in range(N):
            LAM[t, i] = sum((la[(i, j)] for j in nbrs[i]), np.zeros(d))
    return IterateTrace(
        f=F, lam=LAM, eps=np.zeros_like(F), eta=np.vstack([np.full(N, np.nan), np.full((T, N), eta)]),
        theta=np.full(N, eta), mechanism="conventional", inner_iterations=np.zeros((T + 1, N), dtype=int),
        extras={"w": {p: np.array(v) for p, v in hist_w.items()},
                "lam_a": {p: np.array(v) for p, v in hist_a.items()},
                "lam_b": {p: np.array(v) for p, v in hist_b.items()}},
    )
