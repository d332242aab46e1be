import math

import pytest

from errors import DegenerateVariance, ShapeMismatch
from stats import P_FLOOR, student_t, t_tests, two_sided_p, welch_t

A = [1, 2, 3, 4, 5]
B = [2, 3, 4, 5, 6]


@pytest.mark.parametrize("test", [student_t, welch_t])
def test_equal_variance_reference_values(test):
    res = test(A, B)
    assert res.statistic == pytest.approx(-1.0, abs=1e-12)
    assert res.df == pytest.approx(8.0, abs=1e-12)
    assert res.p_value == pytest.approx(0.3465935070873343, abs=1e-10)
    assert not res.clamped


def test_welch_degrees_of_freedom_with_unequal_variances():
    a = [1.0, 2.0, 3.0, 4.0]
    b = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0]
    res = welch_t(a, b)
    s1, s2 = (5.0 / 3.0) / 4, 350.0 / 6
    assert res.df == pytest.approx((s1 + s2) ** 2 / (s1 ** 2 / 3 + s2 ** 2 / 5))
    assert res.statistic == pytest.approx((2.5 - 35.0) / math.sqrt(s1 + s2))
    assert res.df < student_t(a, b).df


def test_symmetric_in_sign():
    assert student_t(B, A).statistic == pytest.approx(1.0)
    assert student_t(B, A).p_value == pytest.approx(student_t(A, B).p_value)


def test_two_sided_p_limits():
    assert two_sided_p(0.0, 10.0) == (1.0, False)
    assert two_sided_p(math.inf, 10.0) == (P_FLOOR, True)
    p, clamped = two_sided_p(1e6, 200.0)
    assert p == P_FLOOR and clamped


def test_constant_samples_with_different_means():
    res = student_t([1.0, 1.0, 1.0], [2.0, 2.0, 2.0])
    assert res.statistic == -math.inf
    assert res.p_value == P_FLOOR and res.clamped


def test_constant_equal_samples_are_degenerate():
    with pytest.raises(DegenerateVariance):
        student_t([3.0, 3.0], [3.0, 3.0])
    with pytest.raises(DegenerateVariance):
        welch_t([3.0, 3.0], [3.0, 3.0])


def test_needs_two_observations():
    with pytest.raises(ShapeMismatch):
        student_t([1.0], [1.0, 2.0])


def test_t_tests_runs_both():
    assert set(t_tests(A, B)) == {"student_t", "welch_t"}


def test_welch_equals_pooled_for_equal_variances():
    a, b = [1, 2, 3, 4, 5], [3, 4, 5, 6, 7]
    pooled, welch = student_t(a, b), welch_t(a, b)
    assert welch.statistic == pytest.approx(pooled.statistic, abs=1e-12)
    assert welch.df == pytest.approx(pooled.df, abs=1e-12)
    assert welch.p_value == pytest.approx(pooled.p_value, abs=1e-12)
