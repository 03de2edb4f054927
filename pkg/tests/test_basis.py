from __future__ import annotations

import numpy as np
import pytest

from learnfam.basis import BasisSpec, eval_basis, make_piecewise_basis, make_spline_basis
from learnfam.errors import InvalidDf, NonFiniteInput, TooFewDistinctValues


def truncated_power_basis(x, knots):
    """Classical natural cubic spline basis (intercept, x, and K-2 cubic terms)."""
    k = np.asarray(knots)
    K = k.size

    def d(j):
        return (np.clip(x - k[j], 0, None) ** 3 - np.clip(x - k[-1], 0, None) ** 3) / (k[-1] - k[j])

    cols = [np.ones_like(x), x] + [d(j) - d(K - 2) for j in range(K - 2)]
    return np.column_stack(cols)


@pytest.fixture(scope="module")
def spec():
    rng = np.random.default_rng(3)
    return make_spline_basis(11, rng.standard_normal(20_000))


def test_shape_and_knot_count(spec):
    assert spec.df == 11
    assert len(spec.knots) == 10
    assert eval_basis(spec, 0.3).shape == (11,)
    assert eval_basis(spec, np.linspace(-1, 1, 7)).shape == (7, 11)


def test_span_matches_truncated_power_basis(spec):
    lo, hi = spec.boundary
    x = np.linspace(lo, hi, 2001)
    ref = truncated_power_basis(x, [lo, *spec.knots, hi])
    ours = eval_basis(spec, x)
    coef, *_ = np.linalg.lstsq(ref, ours, rcond=None)
    resid = ours - ref @ coef
    assert np.max(np.abs(resid)) < 1e-8 * max(1.0, np.max(np.abs(ours)))
    # and the two spaces have the same dimension (ours plus a constant)
    assert np.linalg.matrix_rank(np.column_stack([np.ones_like(x), ours]), tol=1e-8) == ref.shape[1]


def test_clamped_outside_boundary(spec):
    lo, hi = spec.boundary
    np.testing.assert_array_equal(eval_basis(spec, lo - 100.0), eval_basis(spec, lo))
    np.testing.assert_array_equal(eval_basis(spec, hi + 1e6), eval_basis(spec, hi))


def second_derivative_limit(spec, at, sgn, h=1e-3):
    """One-sided limit of S'' at ``at`` from the side given by ``sgn``."""
    x = at + sgn * h * np.arange(2, 12)
    f0, f1, f2 = (eval_basis(spec, x + j * h) for j in (-1, 0, 1))
    d2 = (f2 - 2 * f1 + f0) / h**2
    return np.polyfit(x - at, d2, 1)[1], np.max(np.abs(d2))


def test_second_derivative_vanishes_at_boundary(spec):
    lo, hi = spec.boundary
    inner = max(second_derivative_limit(spec, k, 1)[1] for k in spec.knots)
    for b, sgn in ((lo, 1), (hi, -1)):
        limit, _ = second_derivative_limit(spec, b, sgn)
        assert np.max(np.abs(limit)) < 1e-4 * inner


def test_c2_smoothness_inside(spec):
    # S'' is linear on each knot interval; its one-sided limits must agree at every knot
    scale, gaps = 0.0, []
    for k in spec.knots:
        (left, s1), (right, s2) = second_derivative_limit(spec, k, -1), second_derivative_limit(spec, k, 1)
        scale = max(scale, s1, s2)
        gaps.append(np.max(np.abs(left - right)))
    assert max(gaps) < 1e-4 * max(1.0, scale)


def test_deterministic(spec):
    x = np.random.default_rng(0).standard_normal(100)
    assert np.array_equal(eval_basis(spec, x), eval_basis(spec, x.copy()))


def test_knots_at_training_quantiles():
    v = np.arange(1, 1001, dtype=float)
    spec = make_spline_basis(4, v)
    np.testing.assert_allclose(spec.knots, np.quantile(v, [0.25, 0.5, 0.75]))
    np.testing.assert_allclose(spec.boundary, np.quantile(v, [0.005, 0.995]))


def test_invalid_df():
    with pytest.raises(InvalidDf):
        make_spline_basis(1, np.arange(100.0))


def test_too_few_distinct_values():
    with pytest.raises(TooFewDistinctValues):
        make_spline_basis(11, np.repeat([1.0, 2.0, 3.0], 50))


def test_non_finite_rejected(spec):
    with pytest.raises(NonFiniteInput):
        eval_basis(spec, np.nan)


def test_dict_round_trip(spec):
    back = BasisSpec.from_dict(spec.to_dict())
    assert back == spec
    assert back.version == spec.version
    x = np.linspace(-3, 3, 11)
    assert np.array_equal(eval_basis(back, x), eval_basis(spec, x))


def test_version_tag_checked(spec):
    d = spec.to_dict()
    d["knots"][0] += 1e-9
    with pytest.raises(ValueError):
        BasisSpec.from_dict(d)


def test_piecewise_step_and_ramp():
    # f0 = indicator of x >= 0, f1 = x on [-1, 1]
    coef = np.array([
        [[0.0, 0.0], [1.0, 0.0]],
        [[-1.0, 1.0], [0.0, 1.0]],
    ])
    spec = make_piecewise_basis([-1.0, 0.0, 1.0], coef)
    out = eval_basis(spec, np.array([-2.0, -0.5, 0.0, 0.25, 3.0]))
    np.testing.assert_allclose(out[:, 0], [0, 0, 1, 1, 1])
    np.testing.assert_allclose(out[:, 1], [-1, -0.5, 0, 0.25, 1])
