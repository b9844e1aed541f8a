"""Closed-form analytics for the direct and reverse processes on the half-line."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import INF, Law, LawError, PointMass, SequenceLaw, TailDescriptor, power_descriptor
from .series import Decay, SeriesError, SeriesValue, sum_series

DIES = "dies_as"
SURVIVES_POS = "survives_pos_prob"
SURVIVES_AS = "survives_as"
INCONCLUSIVE = "inconclusive"


@dataclass
class SurvivalReport:
    classification: str
    probability: Optional[float] = None
    bound_low: Optional[float] = None
    bound_high: Optional[float] = None
    remainder_bound: float = 0.0
    criterion_used: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.probability is not None and not -1e-12 <= self.probability <= 1 + 1e-12:
            raise ValueError(f"probability out of range: {self.probability}")
        if (self.bound_low is not None and self.bound_high is not None
                and self.bound_low > self.bound_high + 1e-12):
            raise ValueError("bound_low > bound_high")


# --------------------------------------------------------------------------
# series of running products prod_{i<j} P(R <= i)


def _first_zero_cdf(R: Law, limit: int = 64) -> Optional[int]:
    """Smallest i with P(R <= i) == 0, if any below ``limit``."""
    cdf = np.asarray(R.cdf(np.arange(limit)))
    z = np.nonzero(cdf == 0.0)[0]
    return int(z[-1]) if z.size and z[0] == 0 else None


def _running_products(R: Law):
    """terms(j) = prod_{i=0}^{j-1} P(R <= i), for consecutive chunks of j."""
    state = {"next": None, "log": 0.0}

    def terms(j: np.ndarray) -> np.ndarray:
        j0 = int(j[0])
        if state["next"] is None:
            # log prod_{i<j0} P(R <= i)
            if j0 > 0:
                with np.errstate(divide="ignore"):
                    state["log"] = float(np.sum(np.log1p(-R.tail(np.arange(1, j0 + 1)))))
            state["next"] = j0
        if j0 != state["next"]:
            raise RuntimeError("running products must be consumed in order")
        # factor for step j -> j+1 is P(R <= j) = 1 - tail(j+1)
        with np.errstate(divide="ignore"):
            logs = np.log1p(-R.tail(j + 1))
        cum = state["log"] + np.concatenate([[0.0], np.cumsum(logs[:-1])])
        state["log"] = float(cum[-1] + logs[-1])
        state["next"] = int(j[-1]) + 1
        return np.exp(cum)

    return terms


def _products_decay(desc: TailDescriptor, shift: float = 0.0) -> Optional[Decay]:
    """Decay of k**shift * prod_{i<k} P(R <= i) for a law whose series converges."""
    if desc.kind == "regular":
        a, b, e = desc.power, desc.log_power, desc.loglog_power
        if a == 1.0 and b == 0.0 and e == 0.0:
            s = desc.coef - shift
            return Decay("power", rate=s) if s > 1.0 else None
        return Decay("fast")
    if desc.kind == "bounds" and desc.nt_liminf is not None:
        s = desc.nt_liminf - shift
        return Decay("power", rate=s) if s > 1.0 else None
    return None


def survival_series(R: Law, tol: float = 1e-12) -> SeriesValue:
    """S = sum_{j>=1} prod_{i<j} P(R <= i); raises SeriesError when not summable."""
    z = _first_zero_cdf(R)
    if z is not None:
        k = np.arange(1, z + 1)
        vals = _running_products(R)(k) if k.size else np.zeros(0)
        return SeriesValue(math.fsum(vals.tolist()), 0.0, int(k.size))
    conv = R.descriptor.survival_series_converges()
    if conv is False:
        return SeriesValue(INF, 0.0, 0)
    decay = _products_decay(R.descriptor) if conv else None
    if decay is None:
        raise SeriesError(f"cannot certify convergence of the survival series for {R.literal}")
    return sum_series(_running_products(R), decay, start=1, tol=tol)


def fireworks_survival(R: Law, tol: float = 1e-12) -> SurvivalReport:
    """P(V) = 1 / (1 + sum_{j>=1} prod_{i<j} P(R <= i))."""
    try:
        sv = survival_series(R, tol)
    except SeriesError as exc:
        return SurvivalReport(INCONCLUSIVE, bound_low=0.0, bound_high=1.0,
                              remainder_bound=INF, criterion_used="survival-series",
                              details={"reason": str(exc)})
    if math.isinf(sv.value):
        return SurvivalReport(DIES, probability=0.0, bound_low=0.0, bound_high=0.0,
                              criterion_used="survival-series-divergent")
    p = 1.0 / (1.0 + sv.value)
    # |d(1/(1+S))/dS| <= p^2
    rem = p * p * sv.remainder
    cls = SURVIVES_POS if p < 1.0 else SURVIVES_AS
    return SurvivalReport(cls, probability=p, bound_low=max(0.0, p - rem), bound_high=min(1.0, p + rem),
                          remainder_bound=rem, criterion_used="survival-series",
                          details={"series": sv.value, "terms": sv.terms})


def fireworks_tail_class(R: Law) -> SurvivalReport:
    """Classify from L = lim n P(R >= n)."""
    desc = R.descriptor
    if desc.kind == "unknown":
        raise LawError(f"{R.literal} has no tail descriptor")
    lo, hi = desc.nt_limits()
    det = {"L_inf": lo, "L_sup": hi}
    if lo is not None and lo > 1.0:
        return SurvivalReport(SURVIVES_POS, criterion_used="n-tail-limit>1", details=det)
    if hi is not None and hi < 1.0:
        return SurvivalReport(DIES, probability=0.0, criterion_used="n-tail-limit<1", details=det)
    if lo == hi == 1.0 and getattr(R, "dominated_by_inverse_shift", lambda: False)():
        return SurvivalReport(DIES, probability=0.0, criterion_used="n-tail-limit=1,tail<=1/(n-1)",
                              details=det)
    return SurvivalReport(INCONCLUSIVE, criterion_used="n-tail-limit", details=det)


# --------------------------------------------------------------------------
# spreader tails


def spreader_count_tail(R: Law, kmax: int) -> np.ndarray:
    """Exact P(M >= k), k = 0..kmax, for the direct process (M = final spreaders).

    The informed set is {0..m} with m the final reach, so M >= k iff the reach
    is at least k - 1; dynamic programming over the running reach, capped at kmax.
    """
    cap = kmax
    dist = np.zeros(cap + 1)
    dist[:cap] = R.pmf(np.arange(cap))
    dist[cap] = R.tail(cap)
    pmf = np.asarray(R.pmf(np.arange(cap + 1)))
    cdf = np.cumsum(pmf)
    out = np.zeros(kmax + 1)
    out[:2] = 1.0
    for u in range(1, kmax):
        alive = dist[u:]
        p_alive = alive.sum()
        out[u + 1] = p_alive
        if p_alive == 0.0:
            break
        # reach <- max(reach, u + R_u) on the alive states x = u..cap
        n = cap - u
        below = np.concatenate([[0.0], np.cumsum(alive[:-1])])  # P(u <= reach < x)
        new = alive[:n] * cdf[:n] + below[:n] * pmf[:n]
        top = alive[n] + below[n] * (1.0 - cdf[n - 1])
        dist[u:cap] = new
        dist[cap] = top
    return out


def spreader_tail_bound(regime: str, k: int, *, r: float = None, C_r: float = None,
                        alpha: float = None, beta: float = 0.0, C: float = None,
                        R: Optional[Law] = None, probe: int = 200) -> float:
    """Upper bound on P(M >= k) in one of four tail regimes.

    i:   P(R > k) <= C_r r^k            ->  (e^{C_r} r)^k / C_r
    ii:  P(R > k) ~ (log k)^beta k^-alpha ->  C (log k)^beta k^-alpha
    iii: P(R > k) = r / k               ->  C (ln k)^{3+r} / k^{2-(1+r)^2}
    iv:  P(R <= k) ~ ((k+1)/(k+2))^alpha ->  C / k^{1-alpha}

    The regime i value is the printed closed form; it is not a dominating
    bound in general (geom:0.3 with C_r = 0.3 exceeds it from k = 5 on).
    """
    if k < 1:
        return 1.0
    if regime == "i":
        if r is None or C_r is None or not 0 < r < 1 or not 0 < C_r < math.log(1 / r):
            raise LawError("regime i needs r in (0,1) and C_r in (0, log 1/r)")
        if R is not None:
            ks = np.arange(1, probe + 1)
            if np.any(np.asarray(R.tail(ks + 1)) > C_r * r ** ks * (1 + 1e-12)):
                raise LawError("P(R > k) <= C_r r^k fails on the probe range")
        raw = math.exp(k * (C_r + math.log(r))) / C_r
    elif regime == "ii":
        if alpha is None or alpha <= 1 or C is None:
            raise LawError("regime ii needs alpha > 1 and a constant C")
        raw = C * math.log(k) ** beta * k ** -alpha if k > 1 else INF
    elif regime == "iii":
        if r is None or not 0 < r < 1 or C is None:
            raise LawError("regime iii needs r in (0,1) and a constant C")
        raw = C * math.log(k) ** (3 + r) / k ** (2 - (1 + r) ** 2) if k > 1 else INF
    elif regime == "iv":
        if alpha is None or not 0.5 < alpha < 1 or C is None:
            raise LawError("regime iv needs alpha in (1/2, 1) and a constant C")
        raw = C / k ** (1 - alpha)
    else:
        raise LawError(f"unknown regime {regime!r}")
    return min(1.0, raw)


def calibrate_spreader_constant(R: Law, shape, k_lo: int, k_hi: int) -> float:
    """Smallest C with P(M >= k) <= C * shape(k) on [k_lo, k_hi] (exact tail by DP)."""
    tail = spreader_count_tail(R, k_hi)
    ks = np.arange(k_lo, k_hi + 1)
    return float(max(tail[k] / shape(k) for k in ks))


def ratio_power_law(alpha: float) -> Law:
    """P(R <= k) = ((k+1)/(k+2))**alpha, the law of the fourth tail regime."""
    from .dist import CustomTail

    return CustomTail(lambda k: -np.expm1(alpha * np.log(k / (k + 1.0))),
                      TailDescriptor.regular(alpha, 1.0), name=f"ratiopow:{alpha!r}")


# --------------------------------------------------------------------------
# reverse process


def reverse_survival_class(R: Law) -> SurvivalReport:
    if R.p0 == 0.0:
        # every vertex reaches its left neighbour
        return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="no-zero-radius")
    fin = R.descriptor.mean_finite()
    if fin is None:
        raise LawError(f"cannot classify E(R) for {R.literal}")
    if fin:
        return SurvivalReport(DIES, probability=0.0, criterion_used="finite-mean")
    return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="infinite-mean")


@dataclass(frozen=True)
class GeometricLaw:
    """P(Z = k) = p (1-p)^k."""

    p: float
    remainder: float

    def pmf(self, k):
        k = np.asarray(k)
        return self.p * (1.0 - self.p) ** k


def stall_product(R: Law, tol: float = 1e-14) -> SeriesValue:
    """prod_{k>=0} P(R <= k), as exp(-sum), with remainder on the product."""
    if R.p0 == 0.0:
        return SeriesValue(0.0, 0.0, 0)
    if R.descriptor.mean_finite() is not True:
        return SeriesValue(0.0, 0.0, 0)
    decay = R.descriptor.tail_decay()
    with np.errstate(divide="ignore"):
        sv = sum_series(lambda k: -np.log1p(-R.tail(k)), decay, start=1, tol=tol)
    p = math.exp(-sv.value)
    return SeriesValue(p, p * math.expm1(sv.remainder), sv.terms)


def reverse_final_law(R: Law, tol: float = 1e-14) -> GeometricLaw:
    """Law of Z, the final number of reverse spreaders, when E(R) < infinity."""
    if R.p0 == 0.0:
        raise LawError("P(R = 0) = 0: the product vanishes and the reverse process never stalls")
    if R.descriptor.mean_finite() is not True:
        raise LawError("E(R) is infinite (or unclassifiable): the reverse process survives")
    sv = stall_product(R, tol)
    return GeometricLaw(sv.value, sv.remainder)


@dataclass(frozen=True)
class DensityConstants:
    mu: float
    sigma2: float
    density: float
    remainder: float = 0.0


def spreader_density(R: Law, tol: float = 1e-12) -> DensityConstants:
    """mu = 1 + sum_j prod_{i<j} P(R<=i); sigma^2 = sum_k k^2 P(R>k-1) prod_{i<=k-2} P(R<=i) - mu^2."""
    sv = survival_series(R, tol)
    if math.isinf(sv.value):
        return DensityConstants(INF, INF, 0.0)
    mu = 1.0 + sv.value
    if not mu > 0 or (np.asarray(stall_product(R).value) != 0.0):
        raise LawError("finite mu must come with a vanishing stall product")
    z = _first_zero_cdf(R)
    run = _running_products(R)

    def terms(k):
        # a_{k-2} = prod_{i<=k-2} = running product at index k-1
        return k.astype(float) ** 2 * R.tail(k) * run(k - 1)

    if z is not None:
        k = np.arange(1, z + 3)
        second = math.fsum(terms(k).tolist())
        rem2 = 0.0
    else:
        decay = _products_decay(R.descriptor, shift=1.0)
        if decay is None:
            return DensityConstants(mu, INF, 1.0 / mu, sv.remainder)
        # k^2 weighting slows power decay; the constants only feed CLT checks
        sv2 = sum_series(terms, decay, start=1, tol=max(tol, 1e-9))
        second, rem2 = sv2.value, sv2.remainder
    sigma2 = second - mu * mu
    return DensityConstants(mu, sigma2, 1.0 / mu, sv.remainder + rem2 + 2 * mu * sv.remainder)


# --------------------------------------------------------------------------
# heterogeneous sequences


def _laws(seq: SequenceLaw, n: int) -> list[Law]:
    return [seq[i] for i in range(n)]


def hetero_fireworks_bound(seq: SequenceLaw, m: int = 1, t: int = 1, tol: float = 1e-12,
                           probe_n: int = 400) -> SurvivalReport:
    """Sufficient conditions for survival (summability, product bound) and extinction (union bound)."""
    if m < 1 or t < 1:
        raise LawError("m and t must be >= 1")
    seq.check_gaps(probe_n)
    laws = _laws(seq, probe_n + 1)
    below_m = np.array([law.cdf(m - 1) for law in laws])
    details: dict = {"assumption_P(R_n<m)_in_(0,1)": bool(np.all((below_m > 0) & (below_m < 1)))}

    if np.all(below_m == 0.0) and seq.kind == "constant":
        return SurvivalReport(SURVIVES_AS, probability=1.0, bound_low=1.0, bound_high=1.0,
                              criterion_used="product-bound", details=details)

    # summability of [P(R_n < tm)]^t
    terms = np.array([law.cdf(t * m - 1) for law in laws]) ** t
    details["criterion_i_partial_sum"] = float(terms.sum())
    summable = None
    if seq.kind == "constant":
        summable = bool(terms[0] == 0.0)
    elif seq.kind == "drop":
        summable = True if t * m >= 2 else power_descriptor(seq.weights.descriptor, t).mean_finite()
    elif seq.kind in ("jump", "shifted"):
        summable = False
    details["criterion_i_summable"] = summable

    # product lower bound prod_j [1 - prod_{i<=j} P(R_{j-i} < (i+1)m)]
    inner = np.empty(probe_n + 1)
    for j in range(probe_n + 1):
        prod = 1.0
        for i in range(j + 1):
            prod *= laws[j - i].cdf((i + 1) * m - 1)
            if prod < 1e-300:
                prod = 0.0
                break
        inner[j] = prod
    prefix = float(np.prod(1.0 - inner))
    details["product_bound_prefix"] = prefix
    product_low = None
    if np.all(inner == 0.0) and seq.kind == "constant":
        product_low = 1.0
    elif seq.kind == "drop" and m == 1:
        # inner_j = b_j exactly (R <= 1 < 2)
        b = seq.weights
        if b.summable():
            sv = sum_series(lambda k: -np.log1p(-np.minimum(b(k), 1 - 1e-300)),
                            b.descriptor.tail_decay(), start=probe_n + 1, tol=tol)
            product_low = prefix * math.exp(-sv.value - sv.remainder)
    if product_low is not None:
        details["product_bound"] = product_low

    if product_low is not None and product_low > 0:
        cls = SURVIVES_AS if product_low >= 1.0 else SURVIVES_POS
        return SurvivalReport(cls, bound_low=product_low, bound_high=1.0,
                              criterion_used="product-bound", details=details)
    if summable:
        return SurvivalReport(SURVIVES_POS, criterion_used="summable-short-radii", details=details)

    # union bound: P(V_n) <= sum_{k<n} P(R_k >= u_n - u_k)
    if seq.positions is None:
        n = probe_n
        ub = sum(laws[k].tail(n - k) for k in range(n))
        details["union_bound_at_probe"] = float(ub)
        if seq.kind in ("jump", "shifted") and seq.weights.n_times_to_zero():
            return SurvivalReport(DIES, probability=0.0, bound_low=0.0, bound_high=0.0,
                                  criterion_used="union-bound(n b_n -> 0)", details=details)
    if seq.kind == "constant":
        base = fireworks_survival(seq.base, tol)
        base.details.update(details)
        return base
    return SurvivalReport(INCONCLUSIVE, criterion_used="hetero-fireworks", details=details)


def hetero_reverse_class(seq: SequenceLaw, tol: float = 1e-12, probe_n: int = 400) -> SurvivalReport:
    """Reverse process with index-dependent radii."""
    if seq.kind == "constant":
        rep = reverse_survival_class(seq.base)
        rep.details["reduction"] = "constant sequence"
        return rep
    laws = _laws(seq, 2 * probe_n + 2)
    details = {
        "reach_sum_prefix_n0": float(sum(laws[k].tail(k) for k in range(1, probe_n + 1))),
    }
    b = seq.weights
    if seq.kind in ("jump", "shifted"):
        # sum_k P(R_{n+k} >= k) compares with sum b
        if b.summable() is False:
            return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="reach-sum-divergent",
                                  details=details)
        if b.summable() is True:
            details["reach_sum_divergent"] = False
    if seq.kind == "drop":
        # prod_k P(R_{n+k} < k) = b_{n+1}
        if b.summable():
            return SurvivalReport(SURVIVES_POS, criterion_used="stall-products-summable", details=details)
    return SurvivalReport(INCONCLUSIVE, criterion_used="hetero-reverse", details=details)
