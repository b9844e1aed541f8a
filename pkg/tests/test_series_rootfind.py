import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from rumorperc.rootfind import FixedPointError, FixedPointProblem, bisect_sign_change, smallest_fixed_point
from rumorperc.series import Decay, SeriesError, log_cumprod, sum_series


@pytest.mark.parametrize("r", [0.1, 0.5, 0.9, 0.99])
def test_geometric_series(r):
    sv = sum_series(lambda k: r ** k.astype(float), Decay("geometric", rate=r), start=1)
    assert sv.value == pytest.approx(r / (1 - r), rel=1e-11)


@pytest.mark.parametrize("s", [1.5, 2.0, 3.0, 4.5])
def test_power_series_against_zeta(s):
    sv = sum_series(lambda k: k.astype(float) ** -s, Decay("power", rate=s), start=1, tol=1e-10)
    assert abs(sv.value - special.zeta(s)) <= max(sv.remainder, 1e-10) * 10


def test_finite_series_is_exact():
    sv = sum_series(lambda k: k.astype(float), Decay("finite", last=10), start=1)
    assert sv.value == 55 and sv.remainder == 0


def test_divergent_power_rejected():
    with pytest.raises(SeriesError):
        sum_series(lambda k: 1.0 / k, Decay("power", rate=1.0), start=1)


def test_log_cumprod():
    f = np.array([0.5, 0.5, 0.0, 0.3])
    out = np.exp(log_cumprod(f))
    np.testing.assert_allclose(out, [0.5, 0.25, 0.0, 0.0])


def test_smallest_root_binary_branching():
    # s = (1 + s^2) / 2 ... tangent at 1; s = 1/4 + 3/4 s^2 has roots 1/3 and 1
    res = smallest_fixed_point(FixedPointProblem(lambda s: 0.25 + 0.75 * s * s))
    assert res.value == pytest.approx(1 / 3, abs=1e-11)


def test_secant_acceleration_never_overshoots():
    # near-critical: roots 1 - eps-ish and 1
    q = 0.499
    g = lambda s: q + (1 - q) * s * s
    res = smallest_fixed_point(FixedPointProblem(g, tol=1e-14))
    exact = q / (1 - q)
    assert res.value <= exact + 1e-12
    assert res.value == pytest.approx(exact, abs=1e-9)


def test_decreasing_map_rejected():
    with pytest.raises(FixedPointError):
        smallest_fixed_point(FixedPointProblem(lambda t: 1.0 - t, convex=False))


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.01, 0.45), b=st.floats(0.0, 0.5))
def test_agrees_with_bisection_oracle(a, b):
    c = 1.0 - a - b
    g = lambda s: a + b * s + c * s ** 3
    res = smallest_fixed_point(FixedPointProblem(g, tol=1e-14))
    ref = bisect_sign_change(lambda s: g(s) - s, 0.0, 1.0)
    if b + 3 * c > 1:
        assert ref is not None and abs(res.value - ref) < 1e-9
    else:
        assert res.value > 1 - 1e-5
