import math

import numpy as np
import pytest

from rumorperc.dist import Bernoulli, Binomial, Geometric, LawError, PowerLawExample, Table, TailPower
from rumorperc.line import (DIES, SURVIVES_AS, SURVIVES_POS, calibrate_spreader_constant, fireworks_survival,
                            fireworks_tail_class, ratio_power_law, reverse_final_law, reverse_survival_class,
                            spreader_count_tail, spreader_density, spreader_tail_bound, stall_product)
from rumorperc.sim import reach_probability


def _products(R, n):
    """prod_{i<j} P(R <= i) for j = 0..n-1 by a plain loop."""
    out, acc = np.empty(n), 1.0
    for j in range(n):
        out[j] = acc
        acc *= 1.0 - float(R.tail(j + 1))
    return out


def test_powerlaw_example_survival_is_one_half():
    # telescoping product 2/((j+1)(j+2)) sums to 1
    r = fireworks_survival(PowerLawExample())
    assert r.classification == SURVIVES_POS
    assert r.probability == pytest.approx(0.5, abs=1e-11)
    assert r.bound_low <= 0.5 <= r.bound_high


@pytest.mark.parametrize("R", [PowerLawExample(), TailPower(3.0, 1.0, 0.9), TailPower(1.5, 1.0, 0.5, 2)], ids=str)
def test_survival_matches_reach_probability_far_out(R):
    # P(site n informed) decreases to P(V); the gap is the chance to die beyond n
    p = fireworks_survival(R).probability
    far = reach_probability(R, 4000)
    assert p <= far + 1e-12
    assert far - p < 5e-3


@pytest.mark.parametrize("R", [Geometric(0.5), Binomial(4, 0.5), TailPower(0.5, 1.0)], ids=str)
def test_dying_laws(R):
    r = fireworks_survival(R)
    assert r.classification == DIES and r.probability == 0.0
    assert reach_probability(R, 4000) < 0.02


def test_no_zero_at_first_steps_survives_surely():
    # P(R <= 0) = P(R <= 1) = 0 makes every product vanish
    assert fireworks_survival(TailPower(2.0, 1.0)).classification == SURVIVES_AS


@pytest.mark.parametrize("R,cls", [(TailPower(2.0, 1.0), SURVIVES_POS), (TailPower(0.5, 1.0), DIES),
                                   (Geometric(0.9), DIES), (TailPower(1.0, 1.0, 1.0, 2), DIES)], ids=str)
def test_tail_limit_classes(R, cls):
    assert fireworks_tail_class(R).classification == cls


def test_reverse_classes():
    assert reverse_survival_class(Geometric(0.5)).classification == DIES
    assert reverse_survival_class(PowerLawExample()).classification == SURVIVES_AS
    assert reverse_survival_class(Table([0.0, 1.0])).classification == SURVIVES_AS


def test_stall_product_bernoulli():
    assert stall_product(Bernoulli(0.3)).value == pytest.approx(0.7, abs=1e-15)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_stall_product_geometric_against_loop(p):
    R = Geometric(p)
    direct = math.prod(1.0 - p ** (k + 1) for k in range(2000))
    sv = stall_product(R)
    assert abs(sv.value - direct) <= 1e-13 + sv.remainder


def test_reverse_final_law_rejects_infinite_mean_and_no_zero():
    with pytest.raises(LawError):
        reverse_final_law(PowerLawExample())
    with pytest.raises(LawError):
        reverse_final_law(Table([0.0, 1.0]))
    law = reverse_final_law(Geometric(0.5))
    assert law.pmf(np.arange(400)).sum() == pytest.approx(1.0, abs=1e-12)


def test_density_constants_against_loop():
    R = TailPower(3.0, 1.0, 0.9)
    n = 2_000_000
    a = _products(R, n + 1)
    mu = a.sum()
    k = np.arange(1, n + 1)
    second = np.sum(k.astype(float) ** 2 * R.tail(k) * a[k - 1])
    dc = spreader_density(R)
    assert dc.mu == pytest.approx(mu, rel=1e-5)
    assert dc.density == pytest.approx(1 / mu, rel=1e-5)
    assert dc.sigma2 == pytest.approx(second - mu * mu, rel=1e-3)


def test_density_with_infinite_variance():
    dc = spreader_density(PowerLawExample())
    assert dc.mu == pytest.approx(2.0, abs=1e-10)
    assert math.isinf(dc.sigma2)


def test_density_zero_when_mu_infinite():
    dc = spreader_density(Geometric(0.8))
    assert math.isinf(dc.mu) and dc.density == 0.0


@pytest.mark.parametrize("R", [Geometric(0.6), PowerLawExample(), Binomial(3, 0.5)], ids=str)
def test_spreader_count_tail_against_direct_simulation(R):
    rng = np.random.default_rng(11)
    n, L = 40_000, 40
    radii = R.sample(rng, (n, L))
    reach = radii[:, 0].copy()
    count = np.ones(n, dtype=np.int64)
    for u in range(1, L):
        alive = reach >= u
        count += alive
        reach = np.where(alive, np.maximum(reach, u + radii[:, u]), reach)
    exact = spreader_count_tail(R, 20)
    for k in range(1, 21):
        emp = (count >= k).mean()
        sd = math.sqrt(max(exact[k] * (1 - exact[k]), 1e-6) / n)
        assert abs(emp - exact[k]) < 5 * sd, k


def test_spreader_tail_bounds_validate_inputs():
    with pytest.raises(LawError):
        spreader_tail_bound("i", 5, r=0.5, C_r=1.0)
    with pytest.raises(LawError):
        spreader_tail_bound("iv", 5, alpha=0.3, C=1.0)
    with pytest.raises(LawError):
        spreader_tail_bound("v", 5)
    assert spreader_tail_bound("i", 0, r=0.5, C_r=0.1) == 1.0


def test_regime_i_closed_form():
    assert spreader_tail_bound("i", 5, r=0.1, C_r=0.2) == pytest.approx((math.exp(0.2) * 0.1) ** 5 / 0.2, rel=1e-14)


def test_regime_i_closed_form_is_not_dominating():
    # P(R > k) = 0.3^(k+1) <= 0.3 * 0.3^k meets the hypothesis, yet the exact
    # tail decays at about 0.54 per step against e^0.3 * 0.3 ~ 0.405
    R = Geometric(0.3)
    exact = spreader_count_tail(R, 40)
    assert exact[4] <= spreader_tail_bound("i", 4, r=0.3, C_r=0.3, R=R)
    assert all(exact[k] > spreader_tail_bound("i", k, r=0.3, C_r=0.3, R=R) for k in range(5, 41))


def test_regime_iv_calibrated_constant():
    R = ratio_power_law(0.75)
    np.testing.assert_allclose(R.cdf(np.arange(6)), ((np.arange(6) + 1) / (np.arange(6) + 2)) ** 0.75, rtol=1e-14)
    shape = lambda k: k ** -0.25
    C = calibrate_spreader_constant(R, shape, 2, 200)
    exact = spreader_count_tail(R, 200)
    assert all(exact[k] <= C * shape(k) * (1 + 1e-12) for k in range(2, 201))
    assert spreader_tail_bound("iv", 10_000, alpha=0.75, C=C) == pytest.approx(min(1.0, C / 10.0))
