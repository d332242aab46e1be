"""
Two-sample t-tests for timing comparisons.

Both the pooled-variance (Student) and unequal-variance (Welch) tests are
two-sided.  p-values come from the t-distribution tail through the
regularized incomplete beta function::

    p = I_{df / (df + t²)}(df / 2, 1 / 2)
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc

from errors import DegenerateVariance, ShapeMismatch

logger = logging.getLogger(__name__)

P_FLOOR = 1e-300


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    df: float
    p_value: float
    clamped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def two_sided_p(t: float, df: float) -> tuple[float, bool]:
    """Two-sided tail probability; values below ``P_FLOOR`` are clamped and flagged."""
    if np.isinf(t):
        return P_FLOOR, True
    p = float(betainc(0.5 * df, 0.5, df / (df + t * t)))
    if p < P_FLOOR:
        return P_FLOOR, True
    return min(p, 1.0), False


def _moments(sample) -> tuple[np.ndarray, int, float, float]:
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size < 2:
        raise ShapeMismatch(f"t-test needs at least 2 observations per sample, got {x.size}")
    return x, x.size, float(x.mean()), float(x.var(ddof=1))


def _statistic(diff: float, se: float) -> float:
    if se == 0.0:
        # Both samples constant but with different means.
        return float(np.copysign(np.inf, diff))
    return diff / se


def student_t(sample_a, sample_b) -> TTestResult:
    """Pooled-variance two-sample t-test."""
    _, n1, m1, v1 = _moments(sample_a)
    _, n2, m2, v2 = _moments(sample_b)
    if v1 == 0.0 and v2 == 0.0 and m1 == m2:
        raise DegenerateVariance("both samples are constant and equal")
    df = n1 + n2 - 2
    pooled = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
    t = _statistic(m1 - m2, np.sqrt(pooled * (1.0 / n1 + 1.0 / n2)))
    p, clamped = two_sided_p(t, df)
    return TTestResult(statistic=t, df=float(df), p_value=p, clamped=clamped)


def welch_t(sample_a, sample_b) -> TTestResult:
    """Unequal-variance (Welch) two-sample t-test with Welch–Satterthwaite degrees of freedom."""
    _, n1, m1, v1 = _moments(sample_a)
    _, n2, m2, v2 = _moments(sample_b)
    if v1 == 0.0 and v2 == 0.0 and m1 == m2:
        raise DegenerateVariance("both samples are constant and equal")
    s1, s2 = v1 / n1, v2 / n2
    t = _statistic(m1 - m2, np.sqrt(s1 + s2))
    if s1 + s2 == 0.0:
        df = float(n1 + n2 - 2)
    else:
        df = (s1 + s2) ** 2 / (s1 * s1 / (n1 - 1) + s2 * s2 / (n2 - 1))
    p, clamped = two_sided_p(t, df)
    return TTestResult(statistic=t, df=float(df), p_value=p, clamped=clamped)


def t_tests(sample_a, sample_b) -> dict[str, TTestResult]:
    """Both tests on the same pair of samples."""
    return {"student_t": student_t(sample_a, sample_b), "welch_t": welch_t(sample_a, sample_b)}
