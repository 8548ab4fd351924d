"""Black-box gradient estimators against analytic oracles."""

import numpy as np
import pytest

from shiftbench.attacks import (AttackConfig, estimate_gradient, nes_gradient,
                                run_attack, spsa_gradient)
from shiftbench.data import Image
from shiftbench.models import linear_fixture, linear_fixture_example
from shiftbench.models.nets import FeedForwardClassifier
from shiftbench.rng import substream


def test_constant_loss_gives_zero_estimates():
    fn = lambda x: 3.25
    x = np.zeros(6)
    g, cost = nes_gradient(fn, x, 10, 0.01, substream(0, "nes"))
    assert np.all(g == 0.0) and cost == 20
    g, cost = spsa_gradient(fn, x, 10, 0.01, substream(0, "spsa"))
    assert np.all(g == 0.0) and cost == 20


def test_invalid_sample_counts_and_sigma_rejected():
    fn = lambda x: float(x.sum())
    with pytest.raises(ValueError, match="even"):
        nes_gradient(fn, np.zeros(3), 5, 0.01, substream(1, "a"))
    with pytest.raises(ValueError, match="even"):
        spsa_gradient(fn, np.zeros(3), 3, 0.01, substream(1, "b"))
    with pytest.raises(ValueError, match="sigma"):
        nes_gradient(fn, np.zeros(3), 4, 0.0, substream(1, "c"))
    with pytest.raises(ValueError):
        AttackConfig(method="nes", est_samples=7)


def test_nes_quadratic_cosine_over_20_seeds():
    # L(x) = ||x - x0||^2, analytic gradient 2(x - x0)
    x0 = substream(2, "center").uniform(-1, 1, size=27)
    fn = lambda x: float(((x - x0) ** 2).sum())
    for seed in range(20):
        rng = substream(3, seed, "probe")
        x = rng.uniform(-1, 1, size=27)
        analytic = 2.0 * (x - x0)
        est, cost = nes_gradient(fn, x, 1000, 0.01, substream(4, seed, "nes"))
        assert cost == 2000
        cos = est @ analytic / (np.linalg.norm(est) * np.linalg.norm(analytic))
        assert cos >= 0.95


def test_spsa_unbiased_on_linear_loss():
    w = np.array([1.0, -1.0])
    fn = lambda x: float(w @ x)
    x = np.array([0.3, 0.7])
    est, cost = spsa_gradient(fn, x, 500, 0.01, substream(5, "spsa"))
    assert cost == 1000
    assert np.all(np.abs(est - w) <= 0.05 * np.abs(w))


def test_estimate_gradient_on_constant_model_is_zero():
    model = FeedForwardClassifier({"w0": np.zeros((3, 2)), "b0": np.array([0.5, -0.5])},
                                  (1, 1, 3), ["a", "b"])
    ex = linear_fixture_example()
    for method in ["nes", "spsa"]:
        cfg = AttackConfig(method=method, est_samples=8)
        g, _ = estimate_gradient(model, ex.image, ex.label, cfg, substream(6, method))
        assert np.all(g == 0.0)


@pytest.mark.parametrize("method", ["nes", "spsa"])
def test_black_box_query_accounting_and_oracle(method):
    model = linear_fixture()
    ex = linear_fixture_example()
    cfg = AttackConfig(method=method, epsilon=0.06, steps=4, est_samples=12, seed=7)
    out = run_attack(model, ex, cfg)
    assert out.queries == 4 * 12 * 2
    # plenty of budget: the estimated sign steps should flip the linear model
    assert out.success


def test_black_box_below_threshold_fails():
    model = linear_fixture()
    ex = linear_fixture_example()
    cfg = AttackConfig(method="nes", epsilon=0.04, steps=6, est_samples=16, seed=8)
    out = run_attack(model, ex, cfg)
    assert not out.success
    assert out.linf_distance <= 0.04 + 1e-6
