"""Closed-form bound tests against hand-evaluated formulas."""

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given
from hypothesis import strategies as st

from .error_handling import ConfigError
from .matrix_factory import gen_kerdock, gram_gold
from .model_core import GramMatrix
from .theory_bounds import (
    BoundParams,
    beta1,
    beta2,
    check_rdd_condition,
    check_rddf_condition,
    decorrelator_user_error,
    dft_coherence_bound,
    eps_range,
    implied_pe_bound,
    pe_bound_decorrelator,
    pe_bound_rdd,
    pe_bound_rddf,
    q_function,
    snr_min,
    snr_min_db,
    snr_requirement,
    summarize,
    tau,
    xi_range,
)


def _params(**overrides):
    values = dict(alpha=1.0, N=100, K=2, sigma2=0.005, mu=0.05, r=1.0)
    values.update(overrides)
    return BoundParams.uniform(**values)


def test_tau_reference_value():
    npt.assert_allclose(tau(_params(sigma2=1.0)), 4.29193, atol=1e-5)
    npt.assert_allclose(tau(_params(sigma2=1.0, lambda_max_ginv=4.0, row_energy=9.0)), 6 * 4.29193, atol=1e-4)


@given(st.floats(min_value=1e-6, max_value=10.0))
def test_tau_is_linear_in_sigma(sigma):
    base = tau(_params(sigma2=1.0))
    npt.assert_allclose(tau(_params(sigma2=sigma ** 2)), sigma * base, rtol=1e-12)


def test_implied_bound_reference_value():
    npt.assert_allclose(implied_pe_bound(1.0, 100), 1.859e-3, rtol=1e-3)
    assert implied_pe_bound(1.0, 1) == math.inf


def test_snr_min():
    params = _params()
    npt.assert_allclose(snr_min(params), 200.0)
    npt.assert_allclose(snr_min_db(params), 23.0103, atol=1e-4)
    gold = _params(lambda_max_ginv=gram_gold(100, L=1023).lambda_max_inv)
    npt.assert_allclose(snr_min(gold), 200.0 * 924 / 1023)
    assert snr_min(_params(sigma2=0.0)) == math.inf
    npt.assert_allclose(snr_requirement(100), 8 * math.log(100))


def test_conditions():
    holding = _params(sigma2=1e-4)
    report = check_rdd_condition(holding)
    npt.assert_allclose(report.lhs, 0.85)
    npt.assert_allclose(report.rhs, 2 * tau(holding))
    assert report.holds
    assert check_rddf_condition(holding).holds

    failing = _params(sigma2=1e-4, mu=0.4)
    assert not check_rdd_condition(failing).holds
    assert not check_rddf_condition(failing).holds


def test_near_far_separates_rdd_from_rddf():
    # r_max/r_min = 4 penalizes RDD only
    params = BoundParams(1.0, 100, 2, 1e-6, 0.2, 1.0, 4.0, (4.0, 1.0))
    assert not check_rdd_condition(params).holds
    assert check_rddf_condition(params).holds
    assert math.isnan(beta1(params))
    assert pe_bound_rdd(params) == math.inf
    assert pe_bound_rddf(params) < math.inf


def test_threshold_ranges():
    params = _params(sigma2=1e-4)
    t = tau(params)
    low, high = xi_range(params)
    npt.assert_allclose(low, 2 * 0.05 + t)
    npt.assert_allclose(high, 1 - 0.05 - t)
    low, high = eps_range(params)
    npt.assert_allclose(low, t)
    npt.assert_allclose(high, min(1 - 0.05, 1.0) - t)

    assert xi_range(_params(mu=0.6)) is None
    assert eps_range(_params(mu=1.0)) is None
    assert xi_range(params, K0=10) is None


def test_betas_and_bounds():
    params = _params()
    npt.assert_allclose(beta1(params), 0.85 ** 2)
    npt.assert_allclose(beta2(params), 0.85 ** 2)
    x = 200 * 0.85 ** 2
    expected = (200 / math.sqrt(math.pi)) * (x / 2) ** -0.5 * math.exp(-x / 8)
    npt.assert_allclose(pe_bound_rdd(params), expected)
    assert math.isnan(beta2(_params(mu=1 / 3)))
    assert pe_bound_rddf(_params(mu=1 / 3)) == math.inf


def test_bounds_decrease_with_snr():
    values = [pe_bound_rddf(_params(sigma2=s)) for s in (0.05, 0.01, 0.005, 0.001)]
    assert values == sorted(values, reverse=True)
    assert pe_bound_rdd(_params(sigma2=0.0)) == 0.0


def test_decorrelator_bound():
    expected = (100 / (2 * math.sqrt(math.pi))) * (200 / 2) ** -0.5 * math.exp(-100)
    npt.assert_allclose(pe_bound_decorrelator(200, 100), expected)
    assert pe_bound_decorrelator(0.0, 100) == math.inf


def test_dft_coherence_bound():
    bound, floor = dft_coherence_bound(100, 1000, 2.0)
    npt.assert_allclose(bound, math.sqrt(4 * (2 * math.log(1000) + 2) / 100))
    npt.assert_allclose(floor, 1 - 2 * math.exp(-2))
    with pytest.raises(ConfigError):
        dft_coherence_bound(0, 10, 1.0)


def test_q_function_and_user_error():
    npt.assert_allclose(q_function(0.0), 0.5)
    npt.assert_allclose(q_function(1.959963984540054), 0.025, rtol=1e-9)
    errors = decorrelator_user_error(np.array([1.0, 2.0]), 0.25, GramMatrix.identity(2))
    npt.assert_allclose(errors, q_function(np.array([2.0, 4.0])))
    npt.assert_array_equal(decorrelator_user_error(np.ones(2), 0.0, GramMatrix.identity(2)), [0.0, 0.0])


def test_from_instance_measures_kerdock():
    A = gen_kerdock(16)
    params = BoundParams.from_instance(A, GramMatrix.identity(256), np.ones(256), 2, 0.005, 1.0)
    npt.assert_allclose(params.mu, 0.25, atol=1e-12)
    npt.assert_allclose(params.row_energy, 16.0, rtol=1e-10)
    assert params.row_energy_in_bracket()
    summary = summarize(params)
    assert summary["rdd_condition_holds"] is False
    assert summary["xi_range"] is None
    assert summary["pe_bound_rdd"] > 1.0


def test_validation():
    with pytest.raises(ConfigError):
        _params(alpha=0.0)
    with pytest.raises(ConfigError):
        _params(K=101)
    with pytest.raises(ConfigError):
        _params(mu=1.5)
    with pytest.raises(ConfigError):
        BoundParams(1.0, 10, 2, 0.1, 0.1, 1.0, 1.0, (1.0,))


def test_gain_range_takes_worst_gains_for_eps():
    params = BoundParams.gain_range(1.0, 100, 3, 0.0, 0.6, r_min=1.0, r_max=1.5)
    assert params.sorted_gains == (1.5, 1.0, 1.0)
    # 1.5 (1 - 2 mu) is negative, so no eps works
    assert eps_range(params) is None

    spread = BoundParams.gain_range(1.0, 100, 2, 0.0, 0.1, r_min=1.0, r_max=1.5)
    npt.assert_allclose(eps_range(spread)[1], 0.9)
    assert eps_range(spread)[1] < eps_range(_params(sigma2=0.0, mu=0.1, r=1.5))[1]
