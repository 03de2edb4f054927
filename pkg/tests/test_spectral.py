from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from learnfam.basis import eval_basis, make_spline_basis
from learnfam.data import Dataset
from learnfam.errors import InvalidB
from learnfam.scan import MomentSummary, summarize
from learnfam.spectral import bootstrap_T, eval_T, fit_sufficient_statistic, rayleigh_quotient, scree
from learnfam.sim import SimConfig, generate


@pytest.fixture(scope="module")
def laplace():
    data = generate(SimConfig("laplace", m=400, n=100, theta_sd=0.3, seed=4))
    spec = make_spline_basis(7, data.values)
    summary = summarize(data, spec)
    return data, spec, summary, fit_sufficient_statistic(summary)


def test_rayleigh_maximal_against_random_directions(laplace):
    _, _, summary, fit = laplace
    best = rayleigh_quotient(summary, fit.coefficients[0])
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((10_000, summary.d))
    A, W = summary.between, summary.within
    q = np.einsum("ij,jk,ik->i", dirs, A, dirs) / np.einsum("ij,jk,ik->i", dirs, W, dirs)
    assert np.all(q <= best * (1 + 1e-9))
    # the leading eigenvalue is the maximum quotient (up to the tiny ridge)
    assert best == pytest.approx(fit.eigenvalues[0], rel=1e-6)


def test_normalised_and_signed(laplace):
    data, _, _, fit = laplace
    T = eval_T(fit, data.values)
    assert abs(T.mean()) < 1e-10
    assert T.std(ddof=1) == pytest.approx(1.0, abs=1e-10)
    assert np.corrcoef(T, data.values)[0, 1] > 0


def _transformed(summary, M, c):
    return dataclasses.replace(
        summary,
        between=M.T @ summary.between @ M,
        within=M.T @ summary.within @ M,
        grand_mean=M.T @ summary.grand_mean + c,
        group_means=summary.group_means @ M + c,
        cov_xs=M.T @ summary.cov_xs,
    )


def test_affine_invariance(laplace):
    _, spec, summary, fit = laplace
    rng = np.random.default_rng(11)
    x = np.linspace(-4, 4, 801)
    S = eval_basis(spec, x)
    t1 = eval_T(fit, x)
    for _ in range(20):
        M = rng.standard_normal((summary.d, summary.d))
        c = rng.standard_normal(summary.d)
        f2 = fit_sufficient_statistic(_transformed(summary, M, c))
        t2 = f2.scales[0] * ((S @ M + c) @ f2.coefficients[0] - f2.offsets[0])
        assert np.corrcoef(t1, t2)[0, 1] ** 2 >= 1 - 1e-8
        assert np.corrcoef(t1, t2)[0, 1] > 0  # sign rule is invariant too


def test_affine_invariance_exact_without_ridge(laplace):
    # the default ridge is not basis invariant; with it off, even a badly
    # conditioned transform leaves the fit unchanged
    _, spec, summary, _ = laplace
    x = np.linspace(-4, 4, 801)
    S = eval_basis(spec, x)
    base = eval_T(fit_sufficient_statistic(summary, ridge=0.0), x)
    U, _, Vt = np.linalg.svd(np.random.default_rng(2).standard_normal((summary.d, summary.d)))
    M = U @ np.diag(np.logspace(0, -3, summary.d)) @ Vt
    c = np.ones(summary.d)
    f2 = fit_sufficient_statistic(_transformed(summary, M, c), ridge=0.0)
    t2 = f2.scales[0] * ((S @ M + c) @ f2.coefficients[0] - f2.offsets[0])
    np.testing.assert_allclose(t2, base, atol=1e-6)


def _toy(A, W):
    d = A.shape[0]
    return MomentSummary(
        counts=np.array([10, 10]), group_means=np.zeros((2, d)), grand_mean=np.zeros(d),
        between=A, within=W, cov_xs=np.arange(1.0, d + 1), x_var=1.0, x_mean=0.0,
    )


def test_diagonal_toy():
    fit = fit_sufficient_statistic(_toy(np.diag([1.0, 5.0, 2.0]), np.eye(3)), k=2)
    np.testing.assert_allclose(fit.eigenvalues, [5, 2, 1], rtol=1e-6)
    b = fit.coefficients / np.linalg.norm(fit.coefficients, axis=1, keepdims=True)
    np.testing.assert_allclose(np.abs(b), [[0, 1, 0], [0, 0, 1]], atol=1e-8)


def test_tie_is_flagged_and_deterministic():
    f1 = fit_sufficient_statistic(_toy(np.eye(3), np.eye(3)))
    f2 = fit_sufficient_statistic(_toy(np.eye(3), np.eye(3)))
    assert "eigenvalue_tie" in f1.flags
    assert np.array_equal(f1.coefficients, f2.coefficients)


def test_rank_two_scree():
    # mixture of three fixed laws with random weights: group means of any
    # statistic are affine in two parameters, so the between signal has rank 2
    rng = np.random.default_rng(1)
    groups = []
    for _ in range(300):
        w = rng.dirichlet([4.0, 4.0, 4.0])
        comp = rng.choice(3, size=400, p=w)
        groups.append(np.where(comp == 0, rng.normal(-2, 0.5, 400), np.where(comp == 1, rng.normal(0, 0.5, 400),
                                                                              rng.normal(2.5, 0.5, 400))))
    data = Dataset.from_groups(groups)
    spec = make_spline_basis(8, data.values)
    lam = scree(fit_sufficient_statistic(summarize(data, spec), k=2))
    assert lam[0] > 10 and lam[1] > 10
    assert np.all(lam[2:] < 1.6)


def test_bootstrap_reproducible_and_aligned(laplace):
    data, spec, _, fit = laplace
    a = bootstrap_T(data, spec, B=4, seed=7)
    b = bootstrap_T(data, spec, B=4, seed=7)
    for x, y in zip(a, b):
        assert np.array_equal(x.coefficients, y.coefficients)
    grid = np.linspace(-2, 2, 41)
    for f in a:
        assert np.corrcoef(eval_T(f, grid), eval_T(fit, grid))[0, 1] > 0.9


def test_bootstrap_invalid_B(laplace):
    data, spec, _, _ = laplace
    with pytest.raises(InvalidB):
        bootstrap_T(data, spec, B=0, seed=0)


def test_laplace_statistic_is_step_like(laplace):
    _, _, _, fit = laplace
    lo, hi = eval_T(fit, np.array([-1.5, 1.5]))
    mid = eval_T(fit, np.array([-0.2, 0.2]))
    # most of the rise happens near zero
    assert (mid[1] - mid[0]) > 0.3 * (hi - lo)
