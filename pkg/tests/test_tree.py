import math

import numpy as np
import pytest
from scipy import optimize

from rumorperc.dist import Binomial, Geometric, PointMass, SequenceLaw
from rumorperc.line import DIES, SURVIVES_AS, SURVIVES_POS
from rumorperc.tree import (TreeError, cone_fixed_points, cone_size_bounds, cone_survival_bounds, disk_bounds,
                            growth_dim, hetero_cone_check, parse_tree, reverse_cone_class,
                            spherical_survival_check)


def _cone_size(d, R, rng):
    """|I| on the homogeneous tree: a child is informed while the parent's remaining reach is >= 1."""
    stack = [(int(R.sample(rng, 1)[0]), d + 1)]
    n = 1
    while stack:
        r, k = stack.pop()
        if r < 1:
            continue
        for x in R.sample(rng, k):
            n += 1
            stack.append((max(r - 1, int(x)), d))
    return n


def _cone_survives(d, R, rng, big=3000):
    front = np.array([R.sample(rng, 1)[0]])
    while True:
        front = front[front >= 1]
        if front.size == 0:
            return False
        if front.size > big:
            return True
        parent = np.repeat(front - 1, d)
        front = np.maximum(parent, R.sample(rng, parent.size))


def _moment(R, x, expo):
    k = np.arange(0, 400)
    return float(np.sum(R.pmf(k) * x ** expo(k)))


@pytest.mark.parametrize("text", ["homog:3", "plus:2", "periodic:2,3", "sphsym:1,2,3", "gw:offspring=binom:3:0.6"])
def test_tree_literals(text):
    spec = parse_tree(text)
    assert spec.literal == text


@pytest.mark.parametrize("text", ["homog:1", "periodic:1,3", "gw:offspring=binom:2:0.3", "gw:binom:3:0.5",
                                  "star:3", "sphsym:0"])
def test_bad_tree_literals(text):
    with pytest.raises(TreeError):
        parse_tree(text)


def test_sphsym_from_file(tmp_path):
    (tmp_path / "deg.txt").write_text("1 2\n3\n")
    spec = parse_tree("sphsym:file=deg.txt", base_dir=tmp_path)
    assert [spec.children(j) for j in range(5)] == [1, 2, 3, 3, 3]


def test_children():
    assert parse_tree("homog:3").children(0) == 4 and parse_tree("homog:3").children(5) == 3
    assert [parse_tree("periodic:2,5").children(j) for j in range(4)] == [2, 5, 2, 5]


@pytest.mark.parametrize("d,R", [(2, Geometric(0.3)), (3, Geometric(0.25)), (2, Binomial(2, 0.4))], ids=str)
def test_fixed_points_against_brentq(d, R):
    rho, psi = cone_fixed_points(d, R)
    p0 = float(R.pmf(0))
    f = lambda x: _moment(R, x, lambda k: d ** k.astype(float)) + (1 - x) * p0 - x
    g = lambda x: _moment(R, x, lambda k: d * (d ** k.astype(float) - 1) / (d - 1)) - x
    # smallest root: bracket from 0 up to the first sign change on a grid
    for fun, val in ((f, rho), (g, psi)):
        xs = np.linspace(0, 1 - 1e-9, 4001)
        vals = np.array([fun(x) for x in xs])
        i = int(np.nonzero(vals <= 0)[0][0])
        ref = optimize.brentq(fun, xs[i - 1], xs[i], xtol=1e-15) if i else 0.0
        assert val == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("d,R", [(2, Geometric(0.3)), (3, Geometric(0.25)), (2, Binomial(2, 0.4))], ids=str)
def test_survival_bounds_bracket_simulation(d, R):
    lo, hi = cone_survival_bounds(d, R, "plus")
    rng = np.random.default_rng(2)
    n = 6000
    p = sum(_cone_survives(d, R, rng) for _ in range(n)) / n
    se = math.sqrt(max(p * (1 - p), 1e-4) / n)
    assert lo - 4 * se <= p <= hi + 4 * se


@pytest.mark.parametrize("d,p", [(4, 0.1), (2, 0.1), (3, 0.15)])
def test_size_bounds_bracket_simulation(d, p):
    R = Geometric(p)
    lo, hi = cone_size_bounds(d, R)
    rng = np.random.default_rng(1)
    s = np.array([_cone_size(d, R, rng) for _ in range(20000)])
    se = s.std() / math.sqrt(s.size)
    assert lo - 4 * se <= s.mean() <= hi + 4 * se


def test_size_bounds_need_subcritical_moment():
    with pytest.raises(TreeError):
        cone_size_bounds(2, Geometric(0.4))


def test_full_tree_bounds_ordered():
    lo, hi = cone_survival_bounds(3, Geometric(0.25), "full")
    plo, phi = cone_survival_bounds(3, Geometric(0.25), "plus")
    assert 0 <= lo <= hi <= 1
    # one more child at the root can only help
    assert lo >= plo - 1e-12 and hi >= phi - 1e-12


@pytest.mark.parametrize("d,p,cls", [(2, 0.6, SURVIVES_AS), (3, 0.4, SURVIVES_AS), (2, 0.2, DIES)])
def test_reverse_cone_class(d, p, cls):
    assert reverse_cone_class(d, Geometric(p)).classification == cls


def test_reverse_cone_stalled_series_by_loop():
    d, R = 3, Geometric(0.3)
    rep = reverse_cone_class(d, R)
    tails = [0.3 ** n for n in range(1, 600)]
    acc, total = 1.0, 0.0
    for n, t in enumerate(tails, start=1):
        total += d ** n * t * acc
        acc *= 1 - t
    assert rep.details["phi2"] == pytest.approx(total, rel=1e-11)
    assert rep.classification == (SURVIVES_POS if total > 1 else DIES)


def test_growth_dims():
    assert growth_dim(parse_tree("homog:3")) == pytest.approx(math.log(3))
    assert growth_dim(parse_tree("periodic:2,8")) == pytest.approx(math.log(4))
    # one slow level then d = 4 forever; the worst 64-window includes the 1
    assert growth_dim(parse_tree("sphsym:1,4"), 64) == pytest.approx(63 * math.log(4) / 64)
    with pytest.raises(TreeError):
        growth_dim(parse_tree("gw:offspring=binom:3:0.6"))


def test_spherical_check_uses_stall_product():
    rep = spherical_survival_check(parse_tree("homog:3"), Geometric(0.5))
    limit = 1 - math.prod(1 - 0.5 ** (k + 1) for k in range(200))
    assert rep.details["limit_root"] == pytest.approx(limit, abs=1e-12)
    assert rep.classification == (SURVIVES_POS if limit > 1 / 3 else "inconclusive")


def test_disk_bounds_values():
    (b,) = disk_bounds(d=3)
    assert b.lower == pytest.approx(math.sqrt(4 / 3) - 1)
    assert b.upper == pytest.approx(1 - math.sqrt(2 / 3))
    assert b.lower < b.upper
    (s,) = disk_bounds(dim=math.log(3))
    assert s.upper == pytest.approx(b.upper)
    (g,) = disk_bounds(Delta=4)
    assert g.lower == pytest.approx(b.lower)
    with pytest.raises(TreeError):
        disk_bounds()
    with pytest.raises(TreeError):
        disk_bounds(site_pc=1.5)


def test_hetero_cone_constant_sequence():
    seq = SequenceLaw.constant(PointMass(1))
    rep = hetero_cone_check(seq, 3, 2)
    # inner products: k=0 -> P(R<1)=0, k=1 -> P(R<2)P(R<1)=0, so the value is d^n
    assert rep.details["probe_min"] == pytest.approx(9.0)
    assert rep.classification == SURVIVES_POS
