"""
Multi-run experiments driven by a JSON config: metrics, accountant ledger,
trace exports and a machine-readable summary.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import data as data_mod
from . import graph
from .engine import MECHANISMS, PenaltySchedule, initial_primal, run, validate_schedules
from .errors import ConfigError, IterationOutOfRange, PPADMMError, LengthMismatch, ScheduleInvalid, ThetaConditionViolated
from .model import LOGISTIC, ErmConfig, LabeledDataset
from .privacy import NoiseSchedule, PrivacyLedger, check_theta_condition, privacy_bound

log = logging.getLogger(__name__)

DEFAULTS: dict[str, Any] = {
    "network": {"kind": "ring_chord", "n_nodes": 5},
    "data": {"source": "synthetic", "per_node": 100, "d": 5, "separation": 1.0, "partition": "even"},
    "erm": {"C": 1.0, "rho": 1.0, "c1": 0.25},
    "penalty": {"eta1": 0.5, "q": 1.0, "theta": 0.5},
    "noise": None,
    "mechanism": "none",
    "T": 100,
    "n_runs": 10,
    "seed": 0,
    "init_scale": 1.0,
    "inner_tol": 1e-9,
    "workers": 1,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """Resolved experiment: network, per-node data, objective, schedules and protocol."""

    raw: dict
    net: graph.Network
    datasets: list
    erm: ErmConfig
    schedule: PenaltySchedule
    noise: Optional[NoiseSchedule]
    mechanism: str
    T: int
    n_runs: int
    seed: int
    init_scale: float
    inner_tol: float
    workers: int

    @property
    def digest(self) -> str:
        return config_digest(self.raw)

    def effective_schedule(self) -> PenaltySchedule:
        if self.mechanism == "dvp":
            th = self.schedule.theta_vec()
            return PenaltySchedule(th, np.ones_like(th), self.schedule.theta)
        return self.schedule


def config_digest(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _network(spec: dict, base_dir: Path) -> graph.Network:
    kind = spec.get("kind", "ring_chord")
    n = spec.get("n_nodes")
    if kind == "ring_chord":
        return graph.ring_with_chord(n)
    if kind == "path":
        return graph.path_graph(n)
    if kind == "cycle":
        return graph.cycle_graph(n)
    if kind == "complete":
        return graph.complete_graph(n)
    if kind == "erdos_renyi":
        return graph.erdos_renyi(n, spec.get("p", 0.3), spec.get("seed", 0))
    if kind == "edges":
        if "edge_file" in spec:
            return graph.read_edge_list(base_dir / spec["edge_file"], n)
        return graph.build_network(n, spec["edges"])
    raise ConfigError(f"unknown network kind {kind!r}")


def _datasets(spec: dict, n_nodes: int, seed: int, base_dir: Path) -> list[LabeledDataset]:
    src = spec.get("source", "synthetic")
    data_seed = spec.get("seed", seed)
    if src == "synthetic":
        return data_mod.synthetic(n_nodes, spec["d"], spec["per_node"], data_seed, spec.get("separation", 1.0), spec.get("spread", 1.0))
    if src == "file":
        full = data_mod.read_dataset(base_dir / spec["path"])
        if spec.get("limit"):
            full = data_mod._subset(full, np.arange(min(spec["limit"], full.B)))
        return data_mod.partition(full, n_nodes, spec.get("partition", "even"), data_seed)
    raise ConfigError(f"unknown data source {src!r}")


def _per_node(value, n: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(n, float(arr[0]))
    if arr.size != n:
        raise ConfigError(f"{name} needs 1 or {n} values, got {arr.size}")
    return arr


def load_config(source: dict | str | Path, seed: Optional[int] = None) -> ExperimentConfig:
    """Resolve a config dict (or JSON file) into an :class:`ExperimentConfig`.

    ``seed`` overrides the config's seed. Relative paths resolve against the
    config file's directory.
    """
    base_dir = Path(".")
    if not isinstance(source, dict):
        base_dir = Path(source).resolve().parent
        try:
            source = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    raw = _merge(DEFAULTS, source)
    if seed is not None:
        raw["seed"] = int(seed)
    mech = raw["mechanism"]
    if mech not in MECHANISMS:
        raise ConfigError(f"mechanism must be one of {MECHANISMS}")
    try:
        return _resolve(raw, base_dir)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PPADMMError):
            raise
        raise ConfigError(f"bad config: {exc!r}") from exc


def _resolve(raw: dict, base_dir: Path) -> ExperimentConfig:
    mech = raw["mechanism"]
    net = _network(raw["network"], base_dir)
    raw["network"]["n_nodes"] = net.n_nodes
    N = net.n_nodes
    datasets = _datasets(raw["data"], N, raw["seed"], base_dir)
    e = raw["erm"]
    erm = ErmConfig(C=float(e["C"]), rho=float(e["rho"]), n_nodes=N, c1=float(e.get("c1", 0.25)))
    try:
        erm.check_sizes(datasets)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    p = raw["penalty"]
    theta = p["theta"]
    theta = float(theta) if np.ndim(theta) == 0 else _per_node(theta, N, "theta")
    schedule = PenaltySchedule(_per_node(p["eta1"], N, "eta1"), _per_node(p["q"], N, "q"), theta)
    noise = None
    if raw.get("noise"):
        n = raw["noise"]
        noise = NoiseSchedule(_per_node(n["alpha1"], N, "alpha1"), _per_node(n.get("q", 1.0), N, "noise q"))
    if mech != "none" and noise is None:
        raise ConfigError("private mechanisms need a noise block")
    return ExperimentConfig(
        raw=raw, net=net, datasets=datasets, erm=erm, schedule=schedule, noise=noise, mechanism=mech,
        T=int(raw["T"]), n_runs=int(raw["n_runs"]), seed=int(raw["seed"]),
        init_scale=float(raw["init_scale"]), inner_tol=float(raw["inner_tol"]), workers=int(raw["workers"]),
    )


def validate(cfg: ExperimentConfig) -> None:
    """Raise before any compute if schedules or the dual step are unusable."""
    sched = cfg.effective_schedule()
    v = validate_schedules(sched, cfg.T)
    if not v.ok:
        raise ScheduleInvalid(v.violations)
    tc = check_theta_condition(sched.theta_vec(), cfg.datasets, cfg.erm, cfg.net)
    if not tc.ok:
        if cfg.mechanism == "none":
            log.warning("theta condition fails at nodes %s", tc.violations)
        else:
            raise ThetaConditionViolated(tc.violations)


def average_loss(trace, t: int, datasets: Sequence[LabeledDataset], loss=LOGISTIC) -> float:
    """``(1/N) sum_i (1/B_i) sum_n L(y f_i(t).x)``: no loss weight, no regularizer."""
    if not 0 <= t <= trace.T:
        raise IterationOutOfRange(f"iteration {t} outside 0..{trace.T}")
    return float(np.mean([loss.value(ds.labels * (ds.features @ trace.f[t, i])).mean() for i, ds in enumerate(datasets)]))


def loss_series(trace, datasets: Sequence[LabeledDataset], loss=LOGISTIC) -> np.ndarray:
    """``L(t)`` for every iteration of a trace."""
    per_node = [loss.value(ds.labels[None, :] * (trace.f[:, i, :] @ ds.features.T)).mean(axis=1) for i, ds in enumerate(datasets)]
    return np.mean(per_node, axis=0)


def aggregate_runs(series: Sequence[Sequence[float]]) -> dict:
    """Pointwise mean and max-minus-min over runs."""
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise LengthMismatch(f"runs have different lengths {sorted(lengths)}")
    arr = np.asarray(series, dtype=float)
    return {"L_mean": arr.mean(axis=0), "L_range": arr.max(axis=0) - arr.min(axis=0)}


def run_seed(seed: int, run_index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(run_index)]).generate_state(1)[0])


def ledger_for(cfg: ExperimentConfig) -> Optional[PrivacyLedger]:
    if cfg.mechanism == "none":
        return None
    return privacy_bound(cfg.effective_schedule(), cfg.noise, cfg.erm, cfg.net, [ds.B for ds in cfg.datasets], cfg.T)


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class ExperimentResult:
    traces: list
    losses: np.ndarray
    ledger: Optional[PrivacyLedger]
    summary: dict


def execute(cfg: ExperimentConfig, run_workers: int = 1) -> ExperimentResult:
    """Run all seeded repetitions in memory."""
    validate(cfg)
    N, d = cfg.net.n_nodes, cfg.datasets[0].d

    def one(l):
        s = run_seed(cfg.seed, l)
        return run(
            cfg.net, cfg.datasets, cfg.erm, cfg.schedule, cfg.mechanism, cfg.noise, cfg.T, s,
            f0=initial_primal(N, d, s, cfg.init_scale), tol=cfg.inner_tol, workers=cfg.workers,
            run_id=str(l), check=False,
        )

    if run_workers > 1:
        with ThreadPoolExecutor(max_workers=run_workers) as pool:
            traces = list(pool.map(one, range(cfg.n_runs)))
    else:
        traces = [one(l) for l in range(cfg.n_runs)]
    losses = np.array([loss_series(tr, cfg.datasets) for tr in traces])
    agg = aggregate_runs(losses)
    ledger = ledger_for(cfg)
    cres = np.array([tr.consensus_residual(cfg.net) for tr in traces])
    summary = {
        "beta": None if ledger is None else ledger.beta,
        "L_mean_final": float(agg["L_mean"][-1]),
        "L_range_final": float(agg["L_range"][-1]),
        "consensus_residual_final": float(cres[:, -1].max()),
        "iterations": cfg.T,
        "n_runs": cfg.n_runs,
        "mechanism": cfg.mechanism,
        "config_digest": cfg.digest,
    }
    return ExperimentResult(traces, losses, ledger, summary)


def write_outputs(cfg: ExperimentConfig, res: ExperimentResult, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    P = np.concatenate([[0.0], res.ledger.prefix]) if res.ledger is not None else None
    paths["metrics"] = out / "metrics.csv"
    with open(paths["metrics"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "t", "L", "P", "consensus_residual"])
        for tr, L in zip(res.traces, res.losses):
            cres = tr.consensus_residual(cfg.net)
            for t in range(cfg.T + 1):
                w.writerow([tr.run_id, t, _fmt(L[t]), "" if P is None else _fmt(P[t]), _fmt(cres[t])])
    agg = aggregate_runs(res.losses)
    paths["aggregate"] = out / "aggregate.csv"
    with open(paths["aggregate"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "L_mean", "L_range", "P"])
        for t in range(cfg.T + 1):
            w.writerow([t, _fmt(agg["L_mean"][t]), _fmt(agg["L_range"][t]), "" if P is None else _fmt(P[t])])
    if res.ledger is not None:
        paths["ledger"] = out / "ledger.csv"
        res.ledger.to_csv(paths["ledger"])
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    for tr in res.traces:
        tr.to_csv(traces_dir / f"trace_run{tr.run_id}.csv", cfg.net)
        tr.vectors_to_csv(traces_dir / f"vectors_run{tr.run_id}.csv")
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps(res.summary, indent=2, sort_keys=True) + "\n")
    (out / "config.resolved.json").write_text(json.dumps(cfg.raw, indent=2, sort_keys=True) + "\n")
    return paths


def run_experiment(cfg: ExperimentConfig, out: str | Path, plots: bool = False, run_workers: int = 1) -> dict:
    """Validate, execute ``n_runs`` seeded runs and write every output file.

    Validation errors propagate before the output directory is touched.
    Returns the summary dict.
    """
    res = execute(cfg, run_workers=run_workers)
    out = Path(out)
    write_outputs(cfg, res, out)
    if plots:
        from . import plotting

        plotting.experiment_figures(out, res, cfg)
    return res.summary
