import numpy as np
import pytest

from ppadmm import data, graph, model, privacy
from ppadmm.engine import PenaltySchedule
from ppadmm.errors import InvalidScale


def test_noise_is_seeded_and_validated():
    a = privacy.sample_penalty_noise(2.0, 4, np.random.default_rng(1))
    b = privacy.sample_penalty_noise(2.0, 4, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(InvalidScale):
        privacy.sample_penalty_noise(0.0, 4, np.random.default_rng(1))


def test_noise_norm_variance():
    rng = np.random.default_rng(3)
    r = np.linalg.norm([privacy.sample_penalty_noise(2.0, 3, rng) for _ in range(20000)], axis=1)
    # Gamma(3, 1/2): mean 1.5, variance 0.75
    assert r.mean() == pytest.approx(1.5, rel=0.02)
    assert r.var() == pytest.approx(0.75, rel=0.05)


def test_theta_condition_boundary_is_strict():
    net = graph.path_graph(2)
    ds = data.synthetic(2, 2, 1, 0)
    # 2 c1 = 0.5 vs (1 / 1)(0 + 2 * 0.25 * 1) = 0.5: equality fails
    cfg = model.ErmConfig(C=1.0, rho=0.0, n_nodes=2)
    assert privacy.check_theta_condition(0.25, ds, cfg, net).violations == [0, 1]
    assert privacy.check_theta_condition(0.2500001, ds, cfg, net).ok


def test_ledger_prefix_is_nondecreasing_and_csv(tmp_path):
    net = graph.ring_with_chord(5)
    cfg = model.ErmConfig(C=1.0, rho=1.0, n_nodes=5)
    led = privacy.privacy_bound(PenaltySchedule.uniform(0.5, 1.05, 0.5, 5), privacy.NoiseSchedule.uniform(1.0, 1.1, 5), cfg, net, [10] * 5, 20)
    assert np.all(np.diff(led.prefix) > 0)
    assert led.P(20) == led.beta and led.P(0) == 0.0
    led.to_csv(tmp_path / "l.csv")
    text = (tmp_path / "l.csv").read_text().splitlines()
    assert text[0] == "node,t,term,cumulative" and text[-1].startswith("beta,")


def test_dvp_shift():
    np.testing.assert_allclose(privacy.dvp_dual_shift(np.ones(2), 0.5, 2, np.array([1.0, -1.0])), [2.0, 0.0])
