"""Random station counts: on the half-line and on Galton-Watson trees."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dist import (INF, CustomTail, Law, LawError, SequenceLaw, TailDescriptor, annealed_radius,
                   annealed_sequence, station_transform)
from .line import (DIES, INCONCLUSIVE, SURVIVES_AS, SURVIVES_POS, SurvivalReport, _products_decay,
                   hetero_fireworks_bound, hetero_reverse_class)
from .rootfind import FixedPointProblem, smallest_fixed_point
from .series import Decay, SeriesError, sum_series
from .tree import stalled_series


@dataclass
class EnvSpec:
    N: object
    R: object
    substrate: str = "line"
    D: Optional[Law] = None
    root_stations_rule: str = "min_support"

    def __post_init__(self):
        if self.substrate not in ("line", "gw"):
            raise LawError(f"unknown substrate {self.substrate!r}")
        if self.substrate == "gw":
            if self.D is None or self.D.pmf(1) >= 1.0 or not self.D.mean() > 1.0:
                raise LawError("gw substrate needs a supercritical offspring law with P(D=1) < 1")
        if self.root_stations_rule not in ("sampled", "min_support"):
            raise LawError("root_stations_rule must be 'sampled' or 'min_support'")

    @property
    def root_stations(self) -> Optional[int]:
        """Station count at the root under ``min_support``; None when sampled."""
        if self.root_stations_rule == "sampled":
            return None
        return min_positive_support(self.N)


def min_positive_support(N: Law, limit: int = 1 << 20) -> int:
    k = 1
    while k < limit:
        if N.pmf(k) > 0:
            return k
        k += 1
    raise LawError("station law has no positive atom")


def _designed(N: Law, R: Law) -> Optional[float]:
    """liminf f certified by construction when one law was built for the other."""
    for a, b in ((N, R), (R, N)):
        target = getattr(a, "design_for", None)
        if target is not None and target.literal == b.literal:
            return a.design_f_liminf
    return None


# --------------------------------------------------------------------------
# half-line


def env_line_criteria(N: Law, R: Law) -> SurvivalReport:
    """Fireworks with N_x stations per site, f(n) = n (1 - phi_N(P(R<n)))."""
    cert = _designed(N, R)
    if cert is not None and cert > 1.0:
        return SurvivalReport(SURVIVES_POS, criterion_used="design-certificate",
                              details={"f_liminf_at_least": cert})
    if N.tail(1) == 0.0:
        return SurvivalReport(DIES, probability=0.0, criterion_used="no-stations")
    ann = station_transform(R.descriptor, N)
    f_lo, f_hi = ann.nt_limits()
    r_lo, r_hi = R.descriptor.nt_limits()
    n_fin = N.descriptor.mean_finite()
    EN = N.mean() if n_fin else INF
    det = {"f_liminf": f_lo, "f_limsup": f_hi, "E(N)": EN, "nP(R>=n)": (r_lo, r_hi)}
    if f_hi is not None and f_hi < 1.0:
        return SurvivalReport(DIES, probability=0.0, criterion_used="limsup f < 1", details=det)
    if f_lo is not None and f_lo > 1.0:
        return SurvivalReport(SURVIVES_POS, criterion_used="liminf f > 1", details=det)
    if n_fin and r_hi is not None and r_hi < 1.0 / EN:
        return SurvivalReport(DIES, probability=0.0, criterion_used="limsup nP(R>=n) < 1/E(N)", details=det)
    if n_fin and R.descriptor.mean_finite():
        return SurvivalReport(DIES, probability=0.0, criterion_used="E(N), E(R) finite", details=det)
    # phi_N'(P(R<n)) -> E(N), infinite when E(N) is
    if r_lo is not None and r_lo > 0 and (not n_fin or r_lo * EN > 1.0):
        return SurvivalReport(SURVIVES_POS, criterion_used="liminf nP(R>=n) phi'(P(R<n)) > 1",
                              details=det)
    return SurvivalReport(INCONCLUSIVE, criterion_used="station criteria", details=det)


def _native_products(N: Law, R: Law):
    """terms(j) = prod_{i<j} phi_N(P(R <= i)), evaluated with the station pgf directly."""
    state = {"log": 0.0, "next": 1}

    def terms(j):
        if int(j[0]) != state["next"]:
            raise RuntimeError("products must be consumed in order")
        with np.errstate(divide="ignore"):
            logs = np.log(N.pgf_array(R.cdf(j - 1)))
        cum = state["log"] + np.cumsum(logs)
        state["log"] = float(cum[-1])
        state["next"] = int(j[-1]) + 1
        return np.exp(cum)

    return terms


def env_fireworks_survival(N: Law, R: Law, tol: float = 1e-12) -> SurvivalReport:
    """P(V) = 1 / (1 + sum_{j>=1} prod_{i<j} phi_N(P(R<=i)))."""
    ann = station_transform(R.descriptor, N)
    phis = N.pgf_array(R.cdf(np.arange(64)))
    zero = np.nonzero(phis == 0.0)[0]
    if zero.size:
        k = np.arange(1, int(zero[0]) + 1)
        S = math.fsum(_native_products(N, R)(k).tolist()) if k.size else 0.0
        rem = 0.0
    else:
        conv = ann.survival_series_converges()
        if conv is False:
            return SurvivalReport(DIES, probability=0.0, bound_low=0.0, bound_high=0.0,
                                  criterion_used="survival-series-divergent")
        decay = _products_decay(ann) if conv else None
        if decay is None:
            return SurvivalReport(INCONCLUSIVE, bound_low=0.0, bound_high=1.0, remainder_bound=INF,
                                  criterion_used="survival-series",
                                  details={"reason": "convergence not certified"})
        sv = sum_series(_native_products(N, R), decay, start=1, tol=tol)
        S, rem = sv.value, sv.remainder
    p = 1.0 / (1.0 + S)
    r = p * p * rem
    return SurvivalReport(SURVIVES_POS if p < 1 else SURVIVES_AS, probability=p,
                          bound_low=max(0.0, p - r), bound_high=min(1.0, p + r), remainder_bound=r,
                          criterion_used="survival-series", details={"series": S})


def env_reverse_W(N: Law, R: Law, tol: float = 1e-12) -> SurvivalReport:
    """Reverse process from W = sum_{n>=0} [1 - phi_N(P(R<n))]."""
    cert = _designed(N, R)
    if cert is not None and cert > 1.0:
        return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="design-certificate",
                              details={"W": INF})
    stall0 = float(N.pgf_array(R.cdf(0)))
    if stall0 == 0.0:
        # every station reaches its neighbour
        return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="no-stall",
                              details={"phi_N(P(R<1))": 0.0})
    ann = station_transform(R.descriptor, N)
    fin = ann.mean_finite()
    if fin is False:
        return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="W infinite", details={"W": INF})
    if fin is None:
        return SurvivalReport(INCONCLUSIVE, criterion_used="W undecided")

    def terms(n):
        return N.pgf_complement(R.tail(n))

    decay = ann.tail_decay()
    try:
        W = sum_series(terms, decay, start=0, tol=tol).value
    except SeriesError:
        W = None
    return SurvivalReport(DIES, probability=0.0, criterion_used="W finite", details={"W": W})


def env_hetero_criteria(seqN: SequenceLaw, seqR: SequenceLaw, tol: float = 1e-12, probe_n: int = 400,
                        process: str = "fireworks") -> SurvivalReport:
    """Heterogeneous station/radius sequences via the index-wise annealed counterpart."""
    ann = annealed_sequence(seqN, seqR)
    if process == "fireworks":
        rep = hetero_fireworks_bound(ann, tol=tol, probe_n=probe_n)
        # prefix of sum_n prod_{i<=n} phi_{N_i}(P(R_i < n-i+1))
        n_pre = min(probe_n, 200)
        vals = []
        for n in range(n_pre):
            lp = 0.0
            for i in range(n + 1):
                lp += math.log(max(float(seqN[i].pgf_array(seqR[i].cdf(n - i))), 1e-300))
            vals.append(math.exp(lp))
        rep.details["native_prefix_sum"] = math.fsum(vals)
        return rep
    if process == "reverse":
        return hetero_reverse_class(ann, tol=tol, probe_n=probe_n)
    raise LawError("process must be 'fireworks' or 'reverse'")


# --------------------------------------------------------------------------
# constructions


def _bisect_vec(fn, target: np.ndarray, lo: float, hi: float, iters: int = 80) -> np.ndarray:
    """Smallest t in [lo, hi] with fn(t) >= target, fn non-decreasing."""
    a = np.full_like(target, lo)
    b = np.full_like(target, hi)
    for _ in range(iters):
        m = 0.5 * (a + b)
        ok = fn(m) >= target
        b = np.where(ok, m, b)
        a = np.where(ok, a, m)
    return b


def design_counterpart(direction: str, given: Law, eps: float = 0.1, delta: float = 0.5,
                       probe: int = 10_000) -> Law:
    """Build N for a given unbounded R (or R for a given N) so that the pair survives."""
    if direction == "R_for_N":
        N = given
        if N.tail(1) == 0.0:
            raise LawError("R_for_N needs P(N=0) < 1")
        p0 = N.p0

        def tail(n):
            n = np.asarray(n, dtype=float)
            target = np.where(n > 0, 2.0 / np.maximum(n, 1.0), INF)
            reach = target <= 1.0 - p0
            t = _bisect_vec(lambda x: N.pgf_complement(x), np.where(reach, target, 0.0), 0.0, 1.0)
            return np.where(reach, t, 1.0)

        desc = TailDescriptor("unknown")
        nd = N.descriptor
        if nd.mean_finite():
            desc = TailDescriptor.regular(2.0 / N.mean(), 1.0)
        elif nd.kind == "regular" and nd.power < 1 and not nd.log_power and not nd.loglog_power:
            g = nd.coef * math.gamma(1.0 - nd.power)
            desc = TailDescriptor.regular((2.0 / g) ** (1.0 / nd.power), 1.0 / nd.power)
        law = CustomTail(tail, desc, name=f"design_R({N.literal})")
        law.design_for, law.design_f_liminf = N, 2.0
        n = np.arange(1, probe + 1)
        f = n * N.pgf_complement(law.tail(n))
        if np.any(f[n >= 3] < 2.0 * (1 - 1e-9)) and np.all(2.0 / n[n >= 3] <= 1 - p0):
            raise LawError("constructed radius law fails its defining inequality")
        return law
    if direction == "N_for_R":
        R = given
        if R.support_max is not None:
            raise LawError("N_for_R needs an unbounded radius law")
        if not eps > 0 or not 0 < delta < 1:
            raise LawError("need eps > 0 and delta in (0, 1)")
        c = (1.0 + eps) / delta
        ld = math.log1p(-delta)

        def x(n):
            # ln(1-delta) / ln P(R<n), +inf once the tail underflows
            with np.errstate(divide="ignore", over="ignore"):
                lt = np.log1p(-np.asarray(R.tail(n), dtype=float))
                return np.where(lt < 0, ld / np.where(lt < 0, lt, -1.0), INF)

        def nstar(m):
            # smallest n with x_n > m - 1, i.e. ceil(x_n) >= m
            m = np.asarray(m, dtype=float)
            lo = np.ones_like(m)
            hi = np.ones_like(m)
            while True:
                need = x(hi.astype(np.int64)) <= m - 1
                if not need.any():
                    break
                hi = np.where(need, hi * 2, hi)
            for _ in range(64):
                if np.all(hi - lo <= 0):
                    break
                mid = np.floor((lo + hi) / 2)
                ok = x(mid.astype(np.int64)) > m - 1
                hi = np.where(ok, mid, hi)
                lo = np.where(ok, lo, mid + 1)
            return hi

        def tail(m):
            return np.minimum(1.0, c / nstar(m))

        law = CustomTail(tail, TailDescriptor("unknown"), name=f"design_N({R.literal})")
        law.design_for, law.design_f_liminf = R, 1.0 + eps
        n = np.arange(1, probe + 1)
        xs = x(n)
        fin = xs < 2.0 ** 52  # exact integer arithmetic in doubles
        lhs = law.tail(np.ceil(xs[fin]).astype(np.int64))
        if np.any(lhs < np.minimum(1.0, c / n[fin]) * (1 - 1e-12)):
            raise LawError("constructed station law fails its defining inequality")
        return law
    raise LawError("direction must be 'N_for_R' or 'R_for_N'")


# --------------------------------------------------------------------------
# Galton-Watson trees


@dataclass
class GWAnalysis:
    mu_D: float
    Phi_at: dict = field(default_factory=dict)
    phi1: float = INF
    phi2: float = INF
    M_c: float = INF
    pi: float = 0.0


def gw_phi(env: EnvSpec, t: float, tol: float = 1e-12) -> float:
    """Phi(t) = sum_n P(R~ = n) t^n for the annealed radius R~."""
    if t < 0:
        raise LawError("Phi needs t >= 0")
    return annealed_radius(env.N, env.R).pgf(t)


def gw_extinction(D: Law, tol: float = 1e-13) -> float:
    return smallest_fixed_point(FixedPointProblem(lambda s: float(D.pgf_array(s)), tol=tol)).value


def gw_fireworks_class(D: Law, N: Law, R: Law) -> SurvivalReport:
    env = EnvSpec(N, R, "gw", D)
    mu = D.mean()
    phi0 = gw_phi(env, 0.0)
    phi_mu = gw_phi(env, mu)
    det = {"mu_D": mu, "Phi(0)": phi0, "Phi(mu_D)": phi_mu, "P(N=0)": N.p0}
    if phi_mu - 1 > phi0:
        crit = "Phi(mu)-1 > Phi(0)" + (", given a station at the root" if N.p0 > 0 else "")
        return SurvivalReport(SURVIVES_POS, criterion_used=crit, details=det)
    k = D.support_max
    if k is not None:
        phik = gw_phi(env, float(k))
        det["Phi(k)"] = phik
        if phik <= 2 - 1 / k:
            return SurvivalReport(DIES, probability=0.0, criterion_used="k-bounded, Phi(k) <= 2-1/k",
                                  details=det)
    return SurvivalReport(INCONCLUSIVE, criterion_used="gw fireworks", details=det)


def gw_reverse_class(D: Law, N: Law, R: Law, tol: float = 1e-12) -> tuple[SurvivalReport, GWAnalysis]:
    env = EnvSpec(N, R, "gw", D)
    mu = D.mean()
    ann = annealed_radius(N, R)
    rate = ann.descriptor.root_rate()
    out = GWAnalysis(mu_D=mu, pi=gw_extinction(D))
    out.Phi_at = {0.0: gw_phi(env, 0.0), mu: gw_phi(env, mu)}
    if rate is None:
        return SurvivalReport(INCONCLUSIVE, criterion_used="no tail descriptor"), out
    out.M_c = INF if rate == 0 else 1.0 / rate
    det = {"mu_D": mu, "M_c": out.M_c}
    if rate * mu > 1 or (rate * mu == 1 and ann.descriptor.coef is not None):
        out.phi1 = out.phi2 = INF
        return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="phi1 infinite", details=det), out
    if rate * mu == 1:
        return SurvivalReport(INCONCLUSIVE, criterion_used="boundary mu_D = M_c", details=det), out
    def tails(n):
        # log space: mu^n overflows long before the geometric tail stops mattering
        with np.errstate(divide="ignore"):
            return np.exp(np.log(np.asarray(ann.tail(n), dtype=float)) + n * math.log(mu))

    d = ann.descriptor
    decay = Decay("finite", last=d.support_max) if d.kind == "finite" else Decay("geometric", rate=d.ratio * mu)
    out.phi1 = sum_series(tails, decay, start=1, tol=tol).value
    out.phi2 = stalled_series(ann, mu, tol)
    det.update(phi1=out.phi1, phi2=out.phi2)
    if out.phi2 > 1:
        crit = "phi2 > 1" + (" (positive, below 1, per tree)" if N.p0 > 0 else "")
        return SurvivalReport(SURVIVES_POS, criterion_used=crit, details=det), out
    return SurvivalReport(DIES, probability=0.0, criterion_used="phi2 <= 1", details=det), out
