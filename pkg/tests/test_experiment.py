import json
import math

import numpy as np
import pytest

from ppadmm import experiment
from ppadmm.engine import IterateTrace
from ppadmm.errors import ConfigError, IterationOutOfRange, LengthMismatch, ThetaConditionViolated
from ppadmm.model import LabeledDataset
from ppadmm.privacy import privacy_bound

from conftest import ROOT

SMALL = {"data": {"per_node": 20, "d": 3}, "T": 15, "n_runs": 2}


def _trace(f):
    f = np.asarray(f, dtype=float)
    z = np.zeros_like(f)
    return IterateTrace(f=f, lam=z, eps=z, eta=np.zeros(f.shape[:2]), theta=np.ones(f.shape[1]), mechanism="none",
                        inner_iterations=np.zeros(f.shape[:2], dtype=int))


def test_average_loss_examples():
    ds = [LabeledDataset(np.array([[1.0, 0.0]]), np.array([1.0]))]
    assert experiment.average_loss(_trace([[[0.0, 0.0]]]), 0, ds) == pytest.approx(math.log(2))
    assert experiment.average_loss(_trace([[[1.0, 0.0]]]), 0, ds) == pytest.approx(math.log1p(math.exp(-1)))
    with pytest.raises(IterationOutOfRange):
        experiment.average_loss(_trace([[[0.0, 0.0]]]), 1, ds)


def test_aggregate_runs():
    agg = experiment.aggregate_runs([[0.5], [0.7]])
    assert agg["L_mean"][0] == pytest.approx(0.6) and agg["L_range"][0] == pytest.approx(0.2)
    assert experiment.aggregate_runs([[0.3, 0.2]])["L_range"].tolist() == [0.0, 0.0]
    with pytest.raises(LengthMismatch):
        experiment.aggregate_runs([[0.1], [0.1, 0.2]])


def test_summary_and_outputs(tmp_path):
    cfg = experiment.load_config(dict(SMALL, mechanism="pp", noise={"alpha1": 3.0, "q": 1.01}, penalty={"q": 1.05}))
    summary = experiment.run_experiment(cfg, tmp_path)
    for name in ("metrics.csv", "aggregate.csv", "ledger.csv", "summary.json", "traces/trace_run0.csv"):
        assert (tmp_path / name).exists()
    assert (tmp_path / "metrics.csv").read_text().splitlines()[0] == "run,t,L,P,consensus_residual"
    recomputed = privacy_bound(cfg.schedule, cfg.noise, cfg.erm, cfg.net, [d.B for d in cfg.datasets], cfg.T).beta
    assert abs(summary["beta"] - recomputed) <= 1e-12
    assert set(json.loads((tmp_path / "summary.json").read_text())) >= {"beta", "L_mean_final", "L_range_final", "iterations", "config_digest"}


def test_pp_beats_dvp_in_summary(tmp_path):
    base = json.loads((ROOT / "configs" / "private_pp.json").read_text())
    base.update(T=20, n_runs=1)
    pp = experiment.run_experiment(experiment.load_config(base), tmp_path / "pp")
    dvp = experiment.run_experiment(experiment.load_config(dict(base, mechanism="dvp")), tmp_path / "dvp")
    assert pp["beta"] < dvp["beta"]


def test_invalid_theta_aborts_without_outputs(tmp_path):
    cfg = experiment.load_config(dict(SMALL, mechanism="pp", noise={"alpha1": 1.0}, erm={"C": 20.0, "rho": 0.0},
                                      penalty={"eta1": 0.01, "theta": 0.01}))
    with pytest.raises(ThetaConditionViolated):
        experiment.run_experiment(cfg, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_bad_configs():
    with pytest.raises(ConfigError):
        experiment.load_config({"mechanism": "laplace"})
    with pytest.raises(ConfigError):
        experiment.load_config({"mechanism": "pp"})
    with pytest.raises(ConfigError):
        experiment.load_config({"network": {"kind": "torus"}})


def test_seed_override_changes_digest():
    a = experiment.load_config(SMALL)
    b = experiment.load_config(SMALL, seed=5)
    assert b.seed == 5 and a.digest != b.digest


def test_varying_penalty_config_reaches_consensus(tmp_path):
    raw = json.loads((ROOT / "configs" / "varying_penalties.json").read_text())
    summary = experiment.run_experiment(experiment.load_config(dict(raw, n_runs=2)), tmp_path)
    assert summary["consensus_residual_final"] < 1e-4
