import numpy as np
import pytest

from rumorperc.coverage import (COVERS, INCONCLUSIVE, NEVER, BooleanConfig, MarkovCoverageConfig, PowerTail,
                                boolean_criteria, boolean_sweep, markov_coverage_criteria, markov_sweep,
                                parse_power_tail, sim_boolean_1d, sim_markov_coverage)
from rumorperc.dist import Geometric, LawError, TailPower


def _paint(xi, rho, T, h):
    """Grid coverage by painting each interval's grid points."""
    n = int(round(T / h)) + 1
    diff = np.zeros(n + 1, dtype=np.int64)
    lo = np.ceil(xi / h - 1e-9).astype(np.int64)
    hi = np.floor((xi + rho) / h + 1e-9).astype(np.int64)
    hi = np.minimum(hi, n - 1)
    keep = lo <= hi
    np.add.at(diff, lo[keep], 1)
    np.add.at(diff, hi[keep] + 1, -1)
    return np.cumsum(diff[:n]) > 0


@pytest.mark.parametrize("seed,lam,a", [(0, 0.5, 1.0), (1, 2.0, 1.2), (2, 0.2, 0.8), (3, 1.0, 2.0)])
def test_boolean_sweep_matches_grid_painting(seed, lam, a):
    rng = np.random.default_rng(seed)
    T, h = 1000.0, 1e-3
    n = rng.poisson(lam * T)
    xi = np.sort(rng.uniform(0, T, n))
    rho = PowerTail(1.0, a).sample(rng, n)
    g_lo, g_hi = boolean_sweep(xi, rho, T)
    grid = np.arange(int(round(T / h)) + 1) * h
    painted = _paint(xi, rho, T, h)
    in_gap = np.zeros(grid.size, dtype=bool)
    for lo, hi in zip(g_lo, g_hi):
        i0, i1 = np.searchsorted(grid, [lo, hi])
        in_gap[i0:i1] = True
    # disagreement only at grid points within rounding of a gap endpoint
    bad = np.nonzero(painted == in_gap)[0]
    ends = np.concatenate([g_lo, g_hi])
    assert all(np.min(np.abs(ends - grid[i])) < 2e-9 for i in bad)


def test_boolean_sweep_empty_process():
    lo, hi = boolean_sweep(np.array([]), np.array([]), 5.0)
    assert lo.tolist() == [0.0] and hi.tolist() == [5.0]


@pytest.mark.parametrize("seed", range(4))
def test_markov_sweep_against_double_loop(seed):
    rng = np.random.default_rng(seed)
    T = 400
    x = (rng.random(T) < 0.3).astype(np.int8)
    rho = Geometric(0.7).sample(rng, T)
    ref = np.zeros(T, dtype=bool)
    for j in range(T):
        if x[j]:
            ref[j: j + rho[j] + 1] = True
    np.testing.assert_array_equal(markov_sweep(x, rho), ref)


@pytest.mark.parametrize("p01,p10,c,cls", [(0.5, 0.5, 3.0, COVERS), (0.1, 0.9, 3.0, NEVER),
                                           (0.5, 0.5, 0.5, NEVER), (0.5, 0.5, 2.0, INCONCLUSIVE)])
def test_markov_criteria(p01, p10, c, cls):
    # j P(rho > j) -> c for tailpow:c,1; compare pi1 with 1/c
    rep = markov_coverage_criteria(MarkovCoverageConfig(p01, p10, TailPower(c, 1.0)))
    assert rep.classification == cls
    assert rep.details["pi1"] == pytest.approx(p01 / (p01 + p10))


def test_markov_light_tail_never_covers():
    assert markov_coverage_criteria(MarkovCoverageConfig(0.9, 0.1, Geometric(0.9))).classification == NEVER


@pytest.mark.parametrize("lam,a,d,cls", [(1.0, 0.5, 1, COVERS), (2.0, 1.0, 1, COVERS), (0.5, 1.0, 1, NEVER),
                                         (1.0, 1.0, 1, INCONCLUSIVE), (1.0, 2.0, 1, INCONCLUSIVE),
                                         (1.0, 1.0, 2, COVERS), (1.0, 3.0, 2, NEVER)])
def test_boolean_criteria(lam, a, d, cls):
    assert boolean_criteria(BooleanConfig(lam, PowerTail(1.0, a), d)).classification == cls


def test_unreliable_item_is_flagged():
    rep = boolean_criteria(BooleanConfig(1.0, PowerTail(1.0, 2.0)))
    assert rep.flags and rep.classification == INCONCLUSIVE
    assert rep.details["full_coverage_Rd"] is False


def test_power_tail_parsing():
    assert parse_power_tail("tail=pow:2,0.5") == PowerTail(2.0, 0.5)
    for bad in ("geom:0.5", "pow:1", "pow:-1,1"):
        with pytest.raises(LawError):
            parse_power_tail(bad)


def test_power_tail_sampler():
    rng = np.random.default_rng(4)
    t = PowerTail(2.0, 1.5)
    x = t.sample(rng, 200_000)
    for q in (3.0, 10.0):
        assert abs((x > q).mean() - t(q)) < 5 * np.sqrt(t(q) / 200_000)


def test_simulated_trends_follow_criteria():
    rng = np.random.default_rng(5)
    heavy = [sim_boolean_1d(BooleanConfig(1.0, PowerTail(1.0, 0.7), horizon=2e4), rng) for _ in range(20)]
    light = [sim_boolean_1d(BooleanConfig(0.3, PowerTail(1.0, 1.0), horizon=2e4), rng) for _ in range(20)]
    assert np.median([t.last_uncovered for t in heavy]) < np.median([t.last_uncovered for t in light])
    assert np.mean([t.covered_fraction for t in heavy]) > np.mean([t.covered_fraction for t in light])


def test_markov_simulation_stats():
    rng = np.random.default_rng(6)
    cfg = MarkovCoverageConfig(0.5, 0.5, Geometric(0.3), horizon=5000)
    t = sim_markov_coverage(cfg, rng)
    assert 0 < t.covered_fraction < 1
    assert t.n_gaps >= 1 and 0 < t.last_uncovered <= 5000
