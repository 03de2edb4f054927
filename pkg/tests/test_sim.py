from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from learnfam.errors import OutOfSupport
from learnfam.sim import (
    SimConfig, gen_laplace, gen_loggamma, generate, loggamma_mean, population_grid, true_score,
)


def test_standard_laplace_moments():
    data = gen_laplace(SimConfig("laplace", m=20, n=5000, theta_sd=0.0, seed=0))
    assert abs(np.median(data.values)) < 0.02
    assert data.values.var() == pytest.approx(2.0, rel=0.03)
    assert np.all(data.theta == 0.0)


def test_laplace_group_ks():
    data = gen_laplace(SimConfig("laplace", m=3, n=4000, theta_sd=0.1, seed=1))
    for i in range(3):
        x = data.group_values(i)
        ks = stats.kstest(x, stats.laplace(loc=data.theta[i]).cdf).statistic
        assert ks < 1.36 / np.sqrt(x.size)


def test_reproducible_and_independent_of_m():
    a = generate(SimConfig("laplace", m=10, n=50, seed=3))
    b = generate(SimConfig("laplace", m=10, n=50, seed=3))
    assert np.array_equal(a.values, b.values)
    c = generate(SimConfig("laplace", m=25, n=50, seed=3))
    assert np.array_equal(a.group_values(7), c.group_values(7))
    assert a.theta[7] == c.theta[7]


def test_loggamma_mean_at_three():
    cfg = SimConfig("loggamma", m=1, n=200_000, theta_mean=3.0, theta_sd=0.0, seed=5)
    x = gen_loggamma(cfg).values
    assert loggamma_mean(3.0) == pytest.approx(0.6**-3)
    se = x.std() / np.sqrt(x.size)
    assert abs(x.mean() - loggamma_mean(3.0)) < 4 * se


def test_loggamma_support_and_gamma_moments():
    data = gen_loggamma(SimConfig("loggamma", m=4, n=50_000, theta_mean=2.0, theta_sd=0.0, seed=6))
    assert data.values.min() >= 1.0
    g = np.log(data.values)
    assert g.mean() == pytest.approx(2.0 * 0.4, rel=0.01)
    assert g.var() == pytest.approx(2.0 * 0.16, rel=0.03)


def test_small_shape_concentrates_at_one():
    data = gen_loggamma(SimConfig("loggamma", m=1, n=2000, theta_mean=1e-3, theta_sd=0.0, seed=2))
    assert data.values.min() >= 1.0
    assert np.median(data.values) < 1.0001


def test_nonpositive_thetas_are_redrawn():
    data = gen_loggamma(SimConfig("loggamma", m=200, n=2, theta_mean=0.0, theta_sd=1.0, seed=9))
    assert np.all(data.theta > 0)


def test_true_score_values():
    assert true_score("laplace", -3.0) == -1.0
    assert true_score("loggamma", np.e**np.e) == pytest.approx(1.614)
    with pytest.raises(OutOfSupport):
        true_score("loggamma", 0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig("laplace", m=0, n=5)
    with pytest.raises(ValueError):
        SimConfig("laplace", m=2, n=5, theta_sd=-1)
    with pytest.raises(ValueError):
        SimConfig("normal", m=2, n=5)
    with pytest.raises(ValueError):
        SimConfig("laplace", m=2, n=(5, 0))


def test_per_group_sizes():
    data = generate(SimConfig("laplace", m=3, n=(4, 7, 2), seed=0))
    assert data.group_counts().tolist() == [4, 7, 2]


@pytest.mark.parametrize("family,mean,sd", [("laplace", 0.0, 0.1), ("loggamma", 3.0, 0.5)])
def test_population_grid_moments(family, mean, sd):
    x, w = population_grid(SimConfig(family, m=1, n=1, theta_mean=mean, theta_sd=sd))
    assert w.sum() == pytest.approx(1.0)
    if family == "laplace":
        # mixture mean = theta mean; variance = 2 + sd^2
        assert w @ x == pytest.approx(mean, abs=1e-6)
        assert w @ x**2 == pytest.approx(2 + sd**2, rel=1e-4)
    else:
        g = np.log(x)
        assert w @ g == pytest.approx(0.4 * mean, rel=1e-4)
