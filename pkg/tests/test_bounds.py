import math

import numpy as np
import pytest

from core.bounds import (
    AssumptionConstants,
    assumption_constants,
    error_rates,
    imc_complexity_terms,
    imc_excess_risk_bound,
    kappa2_constant,
    m_condition_threshold,
    theorem_bound,
)
from core.errors import ArgumentError, UnboundedLossError
from core.imc import LossConstants, LossSpec
from core.synthgen import block_model_pmf, one_hot, uniform_pmf

UNIT_LOSS = LossConstants(lipschitz=1.0, loss_bound=1.0)


def _unit_constants(**overrides):
    values = dict(
        kappa1=1.0,
        kappa2=1.0,
        kappa_star=1.0,
        gamma=1.0,
        p_star=0.005,
        x_star=1.0,
        y_star=1.0,
        script_p_star=1.0,
        r=4.0,
        d=4,
    )
    values.update(overrides)
    return AssumptionConstants(**values)


def test_uniform_world_constants():
    ones = np.ones((20, 1))
    constants = assumption_constants(uniform_pmf(20, 20), ones, ones, 1.0, 1)
    assert constants.kappa1 == pytest.approx(1.0)
    assert constants.kappa2 == pytest.approx(1.0)
    assert constants.kappa_star == pytest.approx(1.0)
    assert constants.gamma == pytest.approx(1.0)
    assert constants.p_star == pytest.approx(1.0 / 20)
    assert constants.script_p_star == pytest.approx(1.0)
    assert constants.r == pytest.approx(1.0)


def test_block_model_gamma():
    for groups in (2, 4, 5):
        pmf = block_model_pmf(groups, 5, 0.5)
        x = one_hot(np.repeat(np.arange(groups), 5), groups)
        constants = assumption_constants(pmf, x, x, float(groups), groups)
        assert constants.gamma == pytest.approx((groups + 1) / 2.0)
        assert constants.kappa1 == pytest.approx(1.0)
        assert constants.x_star == 1.0 and constants.y_star == 1.0
        assert constants.script_p_star == 1.0


def test_kappa2_of_equal_group_indicators():
    x = one_hot(np.repeat(np.arange(4), 5), 4)
    assert kappa2_constant(x, x) == pytest.approx(1.0)


def test_kappa_star_of_constructed_spectrum():
    pmf = np.kron(np.diag([2.0, 1.0]), np.ones((3, 3)))
    pmf /= pmf.sum()
    x = one_hot(np.repeat(np.arange(2), 3), 2)
    constants = assumption_constants(pmf, x, x, 1.0, 2)
    assert constants.kappa_star == pytest.approx(2.0)
    assert constants.spectral_norm == pytest.approx(2.0 * constants.eigengap)


def test_constants_are_at_least_one(rng):
    for _ in range(20):
        pmf = rng.dirichlet(np.ones(64)).reshape(8, 8)
        x, y = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
        constants = assumption_constants(pmf, x, y, 1.0, 2)
        assert constants.kappa1 >= 1.0 - 1e-12
        assert constants.gamma >= 1.0 - 1e-12


def test_assumption_constants_rejects_shape_mismatch():
    with pytest.raises(ArgumentError):
        assumption_constants(uniform_pmf(4, 4), np.ones((4, 2)), np.ones((3, 2)), 1.0, 2)


def test_spectral_norm_is_bounded_by_largest_marginal(rng):
    for _ in range(100):
        m, n = rng.integers(2, 15, size=2)
        pmf = rng.dirichlet(np.ones(m * n) * rng.uniform(0.1, 2.0)).reshape(m, n)
        p_star = max(pmf.sum(axis=1).max(), pmf.sum(axis=0).max())
        assert np.linalg.norm(pmf, ord=2) <= p_star + 1e-12
        assert p_star <= 1.0 + 1e-12


def test_leading_singular_value_under_uniform_marginals(rng):
    for _ in range(20):
        pmf = block_model_pmf(4, 5, rng.uniform(0.0, 1.0))
        x, y = rng.normal(size=(20, 4)), rng.normal(size=(20, 4))
        constants = assumption_constants(pmf, x, y, 1.0, 4)
        sigma1, _ = imc_complexity_terms(pmf, x, y)
        limit = constants.x_star * constants.y_star * math.sqrt(constants.kappa1 * constants.kappa2 / 4)
        assert sigma1 <= limit + 1e-9


def test_threshold_value():
    threshold = m_condition_threshold(1.0, 1.0, 200, 200, 0.05)
    assert threshold == pytest.approx(470.0 * math.log(4.0 * 400 / 0.05) * 400)
    assert threshold == pytest.approx(1.95e6, rel=1e-2)


def test_bound_reference_value():
    report = theorem_bound(_unit_constants(), 200, 200, 10**5, 10**3, 0.05, UNIT_LOSS)
    log_union = math.log(12.0 * 400 / 0.05)
    expected = (
        2.0 * math.log(6.0 / 0.05) / math.sqrt(1000)
        + 16.0 * math.log(8.0 * math.e) * math.sqrt(16.0 / 1000)
        + 75.0 * log_union * math.sqrt(400 * 4.0 / 1e5)
        + 25.0 * log_union * math.sqrt(400 * 4.0 / 1e8)
    )
    assert report.total == pytest.approx(expected, rel=1e-12)
    assert report.total == pytest.approx(116.516, rel=1e-4)
    assert report.term_unlabeled == pytest.approx(108.834, rel=1e-4)
    assert not report.m_condition_met


def test_zero_loss_constants_give_zero_bound():
    zero = LossConstants(lipschitz=0.0, loss_bound=0.0)
    report = theorem_bound(_unit_constants(), 200, 200, 10**5, 10**3, 0.05, zero)
    assert report.total == 0.0


def test_more_labels_shrink_every_labeled_term():
    small = theorem_bound(_unit_constants(), 200, 200, 10**5, 1000, 0.05, UNIT_LOSS)
    large = theorem_bound(_unit_constants(), 200, 200, 10**5, 2000, 0.05, UNIT_LOSS)
    assert large.term_hoeffding < small.term_hoeffding
    assert large.term_labeled < small.term_labeled
    assert large.term_cross < small.term_cross
    assert large.term_unlabeled == small.term_unlabeled


def test_total_is_monotone_in_sample_sizes():
    totals_m = [
        theorem_bound(_unit_constants(), 200, 200, M, 1000, 0.05, UNIT_LOSS).total
        for M in (10**4, 10**5, 10**6, 10**7)
    ]
    totals_n = [
        theorem_bound(_unit_constants(), 200, 200, 10**5, N, 0.05, UNIT_LOSS).total
        for N in (10, 100, 1000, 10000)
    ]
    assert np.all(np.diff(totals_m) < 0)
    assert np.all(np.diff(totals_n) < 0)


def test_condition_flag_follows_threshold():
    threshold = m_condition_threshold(1.0, 1.0, 200, 200, 0.05)
    below = theorem_bound(_unit_constants(), 200, 200, int(threshold) - 1, 1000, 0.05, UNIT_LOSS)
    above = theorem_bound(_unit_constants(), 200, 200, int(threshold) + 1, 1000, 0.05, UNIT_LOSS)
    assert not below.m_condition_met
    assert above.m_condition_met


def test_appendix_form_coefficients():
    main = theorem_bound(_unit_constants(), 200, 200, 10**5, 100, 0.05, UNIT_LOSS)
    alt = theorem_bound(_unit_constants(), 200, 200, 10**5, 100, 0.05, UNIT_LOSS, appendix_form=True)
    assert alt.term_hoeffding == pytest.approx(1.25 * main.term_hoeffding)
    assert alt.term_labeled == pytest.approx(0.5 * (1.0 + 1.0 / 10.0) * main.term_labeled)
    assert alt.term_unlabeled == main.term_unlabeled
    assert alt.term_cross == main.term_cross
    assert alt.appendix_form


def test_unbounded_loss_is_rejected():
    with pytest.raises(UnboundedLossError, match="bounded-loss assumption"):
        theorem_bound(_unit_constants(), 200, 200, 10**5, 10**3, 0.05, LossSpec())
    with pytest.raises(UnboundedLossError):
        theorem_bound(_unit_constants(), 200, 200, 10**5, 10**3, 0.05, LossSpec(kind="clipped-squared"))
    clipped = LossSpec(kind="clipped-squared", clip_range=(0.0, 1.0))
    assert theorem_bound(_unit_constants(), 200, 200, 10**5, 10**3, 0.05, clipped).total > 0


def test_theorem_bound_argument_checks():
    with pytest.raises(ArgumentError):
        theorem_bound(_unit_constants(), 200, 200, 0, 10, 0.05, UNIT_LOSS)
    with pytest.raises(ArgumentError):
        theorem_bound(_unit_constants(), 200, 200, 10, 10, 1.0, UNIT_LOSS)


def test_complexity_terms_special_cases():
    sigma1, sigma2 = imc_complexity_terms(np.zeros((3, 3)), np.eye(3), np.eye(3))
    assert sigma1 == 0.0 and sigma2 == 0.0
    sigma1, sigma2 = imc_complexity_terms(uniform_pmf(2, 2), np.eye(2), np.eye(2))
    assert sigma1 == pytest.approx(1.0 / math.sqrt(2.0))
    assert sigma2 == pytest.approx(1.0 / math.sqrt(2.0))


def test_complexity_terms_match_a_loop(rng):
    pmf = rng.dirichlet(np.ones(30)).reshape(6, 5)
    x, y = rng.normal(size=(6, 3)), rng.normal(size=(5, 3))

    left = np.zeros((3, 3))
    right = np.zeros((3, 3))
    for i in range(6):
        for j in range(5):
            left += pmf[i, j] * (y[j] @ y[j]) * np.outer(x[i], x[i])
            right += pmf[i, j] * (x[i] @ x[i]) * np.outer(y[j], y[j])

    sigma1, sigma2 = imc_complexity_terms(pmf, x, y)
    assert sigma1 == pytest.approx(math.sqrt(np.linalg.eigvalsh(left)[-1]))
    assert sigma2 == pytest.approx(math.sqrt(np.linalg.eigvalsh(right)[-1]))


def test_imc_excess_risk_bound_value():
    value = imc_excess_risk_bound(0.5, 0.25, 2.0, 1.0, 1.0, 2, 100, 0.05, UNIT_LOSS)
    log_4 = math.log(4.0)
    expected = (
        8.0 / 10.0 * 2.0 * 0.5 * (1.0 + math.sqrt(log_4))
        + 12.0 / 100.0 * 2.0 * (1.0 + log_4)
        + math.sqrt(math.log(40.0) / 200.0)
    )
    assert value == pytest.approx(expected)
    zero = LossConstants(lipschitz=0.0, loss_bound=0.0)
    assert imc_excess_risk_bound(0.5, 0.25, 2.0, 1.0, 1.0, 2, 100, 0.05, zero) == 0.0


def test_error_rates():
    rates = error_rates(_unit_constants(), 200, 200, 10**5, 10**3, UNIT_LOSS)
    more_labels = error_rates(_unit_constants(), 200, 200, 10**5, 10**4, UNIT_LOSS)
    assert rates.unlabeled_rate > 0 and rates.labeled_rate > 0
    assert more_labels.labeled_rate < rates.labeled_rate
    assert more_labels.unlabeled_rate < rates.unlabeled_rate
    assert rates.labeled_rate == pytest.approx(math.sqrt(16.0 / 1000))
