"""Tree substrates; cone and disk percolation analytics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dist import INF, Law, LawError, SequenceLaw, parse_law
from .line import (DIES, INCONCLUSIVE, SURVIVES_AS, SURVIVES_POS, SurvivalReport,
                   stall_product)
from .rootfind import FixedPointProblem, smallest_fixed_point
from .series import Decay, sum_series


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeSpec:
    """Rooted tree substrate.

    kind: ``homog`` (every vertex has d+1 neighbours), ``plus`` (root has d
    children), ``sphsym`` (vertices at depth j have ``degrees[j]`` children,
    last value repeated), ``periodic`` (depth j has ``degrees[j % k]``
    children) or ``gw`` (i.i.d. offspring counts).
    """

    kind: str
    d: int = 0
    degrees: tuple = ()
    offspring: Optional[Law] = None
    literal: str = ""

    def __post_init__(self):
        if self.kind in ("homog", "plus"):
            if self.d < 2:
                raise TreeError(f"{self.kind} tree needs d >= 2")
        elif self.kind == "periodic":
            if not self.degrees or min(self.degrees) < 2:
                raise TreeError("periodic tree needs degrees >= 2")
        elif self.kind == "sphsym":
            if not self.degrees or min(self.degrees) < 1:
                raise TreeError("spherically symmetric tree needs degrees >= 1")
        elif self.kind == "gw":
            D = self.offspring
            if D is None:
                raise TreeError("gw tree needs an offspring law")
            if D.pmf(1) >= 1.0 or not D.mean() > 1.0:
                raise TreeError("gw tree must be supercritical with P(D=1) < 1")
        else:
            raise TreeError(f"unknown tree kind {self.kind!r}")

    def children(self, depth: int) -> int:
        """Children per vertex at ``depth`` (deterministic kinds only)."""
        if self.kind == "homog":
            return self.d + 1 if depth == 0 else self.d
        if self.kind == "plus":
            return self.d
        if self.kind == "periodic":
            return self.degrees[depth % len(self.degrees)]
        if self.kind == "sphsym":
            return self.degrees[min(depth, len(self.degrees) - 1)]
        raise TreeError("gw trees have random offspring")

    @property
    def is_gw(self) -> bool:
        return self.kind == "gw"


def parse_tree(text: str, base_dir: Optional[Path] = None) -> TreeSpec:
    lit = text.strip()
    head, _, rest = lit.partition(":")
    try:
        if head in ("homog", "plus"):
            return TreeSpec(head, d=int(rest), literal=lit)
        if head == "periodic":
            return TreeSpec("periodic", degrees=tuple(int(x) for x in rest.split(",")), literal=lit)
        if head == "sphsym":
            if rest.startswith("file="):
                path = Path(rest[5:])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                degs = tuple(int(x) for x in path.read_text().split())
            else:
                degs = tuple(int(x) for x in rest.split(","))
            return TreeSpec("sphsym", degrees=degs, literal=lit)
        if head == "gw":
            if not rest.startswith("offspring="):
                raise TreeError("gw literal must read gw:offspring=<law>")
            return TreeSpec("gw", offspring=parse_law(rest[len("offspring="):]), literal=lit)
    except (ValueError, OSError) as exc:
        raise TreeError(f"bad tree literal {lit!r}: {exc}") from exc
    raise TreeError(f"unknown tree literal {lit!r}")


# --------------------------------------------------------------------------
# cone percolation on T_d


def _exp_moment(R: Law, x: float, d: int, scale: float, shift: float) -> float:
    """E(x ** (scale * (d**R - shift))) for x in [0, 1]."""
    if x >= 1.0:
        return 1.0
    lx = math.log(x) if x > 0 else -INF
    total = 0.0
    k = 0
    smax = R.support_max
    while True:
        pk = R.pmf(k)
        expo = scale * (float(d) ** k - shift)
        if expo == 0.0:
            term = pk
        else:
            term = pk * math.exp(expo * lx) if lx > -INF else 0.0
        total += term
        k += 1
        if smax is not None and k > smax:
            return total
        # remainder <= tail(k) * x^(scale (d^k - shift)), tiny once the exponent is huge
        if scale * (float(d) ** k - shift) * (-lx) > 745 or R.tail(k) < 1e-18:
            return total


def cone_regime(d: int, R: Law) -> SurvivalReport:
    """Three-way test on the rooted tree from p0 = P(R=0) and E(d^R)."""
    if d < 2:
        raise TreeError("d must be >= 2")
    p0 = R.p0
    edr = R.power_mean(d)
    det = {"p0": p0, "E(d^R)": edr, "(1-p0)d": (1 - p0) * d}
    if (1 - p0) * d > 1:
        return SurvivalReport(SURVIVES_POS, criterion_used="(1-p0)d>1", details=det)
    if edr > 1 + p0:
        return SurvivalReport(SURVIVES_POS, criterion_used="E(d^R)>1+p0", details=det)
    if edr <= 2 - 1 / d:
        return SurvivalReport(DIES, probability=0.0, criterion_used="E(d^R)<=2-1/d", details=det)
    return SurvivalReport(INCONCLUSIVE, criterion_used="cone-regime", details=det)


@dataclass
class ConeAnalysis:
    p0: float
    e_dR: float
    rho: float
    psi: float
    surv_low: Optional[float] = None
    surv_high: Optional[float] = None
    size_low: Optional[float] = None
    size_high: Optional[float] = None
    iterations: dict = field(default_factory=dict)


def cone_fixed_points(d: int, R: Law, tol: float = 1e-13) -> tuple[float, float]:
    """Smallest roots of E(x^{d^R}) + (1-x)p0 = x and E(x^{d(d^R-1)/(d-1)}) = x."""
    return _cone_fixed_points(d, R, tol)[:2]


def _cone_fixed_points(d: int, R: Law, tol: float):
    if d < 2:
        raise TreeError("d must be >= 2")
    p0 = R.p0

    def g_rho(t):
        return _exp_moment(R, t, d, 1.0, 0.0) + (1.0 - t) * p0

    def g_psi(t):
        return _exp_moment(R, t, d, d / (d - 1.0), 1.0)

    r1 = smallest_fixed_point(FixedPointProblem(g_rho, tol=tol))
    r2 = smallest_fixed_point(FixedPointProblem(g_psi, tol=tol))
    return r1.value, r2.value, {"rho": r1.iterations, "psi": r2.iterations}


def cone_survival_bounds(d: int, R: Law, where: str = "plus", tol: float = 1e-13) -> tuple[float, float]:
    rho, psi, _ = _cone_fixed_points(d, R, tol)
    if where == "plus":
        return 1.0 - rho, 1.0 - psi
    if where == "full":
        p0 = R.p0
        low = 1.0 - (1.0 - rho ** ((d + 1) / d)) * p0 - _exp_moment(R, rho, d, (d + 1) / d, 0.0)
        high = 1.0 - _exp_moment(R, psi, d, (d + 1) / (d - 1.0), 1.0)
        return low, high
    raise TreeError("where must be 'plus' or 'full'")


def cone_size_bounds(d: int, R: Law) -> tuple[float, float]:
    """Bounds on E|I| for the full tree, valid when E(d^R) < 2 - 1/d."""
    e = R.power_mean(d)
    p0 = R.p0
    if not e < 2 - 1 / d:
        raise TreeError(f"E(d^R) = {e} is not below 2 - 1/d")
    low = (d + e - p0) / (d * (1 - e + p0))
    high = (e + d - 2) / (2 * d - 1 - d * e)
    return low, high


def cone_size_bounds_geometric_printed(d: int, p: float) -> tuple[float, float]:
    """Geometric-radius specialisation as printed in the literature (upper differs in sign of p)."""
    low = (1 - d * p + p - p * p) / (1 - 2 * d * p + d * p * p)
    high = (1 - d * p - p) / (1 - 2 * d * p)
    return low, high


def cone_analysis(d: int, R: Law, tol: float = 1e-13) -> ConeAnalysis:
    rho, psi, iters = _cone_fixed_points(d, R, tol)
    low, high = cone_survival_bounds(d, R, "full", tol)
    out = ConeAnalysis(R.p0, R.power_mean(d), rho, psi, low, high, iterations=iters)
    try:
        out.size_low, out.size_high = cone_size_bounds(d, R)
    except TreeError:
        out.size_low, out.size_high = None, None
    return out


def reverse_cone_class(d: int, R: Law, tol: float = 1e-12) -> SurvivalReport:
    """Reverse process on T_d from sum d^n P(R>=n) and its stalled variant."""
    if d < 2:
        raise TreeError("d must be >= 2")
    desc = R.descriptor
    rate = desc.root_rate()
    if rate is None:
        return SurvivalReport(INCONCLUSIVE, criterion_used="no tail descriptor")
    if rate * d > 1 or (rate * d == 1 and desc.coef is not None):
        return SurvivalReport(SURVIVES_AS, probability=1.0, criterion_used="sum d^n P(R>=n) diverges",
                              details={"root_rate": rate})
    if rate * d == 1:
        return SurvivalReport(INCONCLUSIVE, criterion_used="boundary root rate")
    phi2 = stalled_series(R, float(d), tol)
    det = {"phi2": phi2}
    if phi2 <= 1.0:
        return SurvivalReport(DIES, probability=0.0, criterion_used="stalled series <= 1", details=det)
    return SurvivalReport(SURVIVES_POS, criterion_used="stalled series > 1", details=det)


def stalled_series(R: Law, mu: float, tol: float) -> float:
    """sum_{n>=1} mu^n P(R>=n) prod_{j=1}^{n-1} (1 - P(R>=j)), finite root rate assumed."""
    desc = R.descriptor
    lm = math.log(mu)
    state = {"log": 0.0, "next": 1}

    def terms(n):
        tails = np.asarray(R.tail(n), dtype=float)
        with np.errstate(divide="ignore"):
            logs = np.log1p(-tails)
        cum = state["log"] + np.concatenate([[0.0], np.cumsum(logs[:-1])])
        state["log"] = float(cum[-1] + logs[-1])
        with np.errstate(divide="ignore"):
            return np.exp(n * lm + np.log(tails) + cum)

    if desc.kind == "finite":
        return sum_series(terms, Decay("finite", last=desc.support_max), start=1).value
    return sum_series(terms, Decay("geometric", rate=desc.ratio * mu), start=1, tol=tol).value


def hetero_cone_check(seq: SequenceLaw, d: int, n: int, j_probe: int = 200) -> SurvivalReport:
    """Evaluate d^n prod_{k<n} [1 - prod_{i<=k} P(R_{jn+i} < k+1-i)] over j."""
    if d < 2 or n < 1:
        raise TreeError("need d >= 2 and n >= 1")
    vals = np.empty(j_probe + 1)
    for j in range(j_probe + 1):
        outer = 1.0
        for k in range(n):
            inner = 1.0
            for i in range(k + 1):
                inner *= seq[j * n + i].cdf(k - i)
            outer *= 1.0 - inner
        vals[j] = d ** n * outer
    det = {"probe_min": float(vals.min()), "probe_values_head": vals[:8].tolist()}
    period = getattr(seq, "period", None)
    settled = seq.kind == "constant" or (period is not None and j_probe + 1 >= period)
    if settled:
        cls = SURVIVES_POS if vals.min() > 1.0 else INCONCLUSIVE
        return SurvivalReport(cls, criterion_used="block liminf > 1", details=det)
    return SurvivalReport(INCONCLUSIVE, criterion_used="block liminf (probe only)", details=det)


# --------------------------------------------------------------------------
# spherically symmetric trees


def growth_dim(spec: TreeSpec, n: int = 64) -> float:
    """Lower growth rate min_v (1/n) ln M_n(v); exact for homog/plus/periodic."""
    if spec.kind in ("homog", "plus"):
        return math.log(spec.d)
    if spec.kind == "periodic":
        return float(np.mean(np.log(spec.degrees)))
    if spec.kind == "sphsym":
        L = len(spec.degrees)
        logs = np.log([spec.children(j) for j in range(L + n)])
        windows = np.convolve(logs, np.ones(n), mode="valid")[: L + 1]
        return float(windows.min() / n)
    raise TreeError("growth_dim of a Galton-Watson tree is ln(mu_D), see env")


def spherical_survival_check(spec: TreeSpec, R: Law, depth: int = 200) -> SurvivalReport:
    """Compare lim rho_n^{1/n} with exp(-dim inf), rho_n = prod_{k<n}[1 - prod_{i<=k} P(R<=i)]."""
    if spec.is_gw:
        raise TreeError("spherical check needs a deterministic tree")
    dim = growth_dim(spec, depth)
    cdf = np.asarray(R.cdf(np.arange(depth)))
    inner = np.cumprod(cdf)
    with np.errstate(divide="ignore"):
        log_rho = np.cumsum(np.log1p(-inner))
    trend = np.exp(log_rho / np.arange(1, depth + 1))
    sp = stall_product(R)
    limit = 1.0 - sp.value
    err = sp.remainder + 1e-12
    threshold = math.exp(-dim)
    det = {"dim_inf": dim, "limit_root": limit, "trend_last": float(trend[-1]),
           "threshold": threshold, "depth": depth}
    smax = R.support_max
    if smax is not None and smax >= 1:
        q = float(np.prod(np.asarray(R.cdf(np.arange(smax)))))
        det["bounded_threshold"] = math.log(1.0 / (1.0 - q)) if q < 1 else INF
    if limit - threshold > err:
        return SurvivalReport(SURVIVES_POS, criterion_used="root-limit > exp(-dim)", details=det)
    return SurvivalReport(INCONCLUSIVE, criterion_used="root-limit vs exp(-dim)", details=det)


# --------------------------------------------------------------------------
# disk percolation


@dataclass(frozen=True)
class DiskBounds:
    lower: float
    upper: float
    source: str
    note: str = ""


def disk_bounds(Delta: Optional[int] = None, d: Optional[int] = None, dim: Optional[float] = None,
                site_pc: Optional[float] = None) -> list[DiskBounds]:
    """Bounds on the critical geometric parameter of disk percolation."""
    out = []
    if Delta is not None:
        if Delta < 2:
            raise TreeError("Delta must be >= 2")
        out.append(DiskBounds(-1 + math.sqrt(1 + 1 / (Delta - 1)), 1.0, "bounded-degree"))
    if d is not None:
        if d < 2:
            raise TreeError("d must be >= 2")
        printed = -1 + math.sqrt(1 - 1 / d)
        out.append(DiskBounds(-1 + math.sqrt(1 + 1 / d), 1 - math.sqrt(1 - 1 / d), "homogeneous-tree",
                              note=f"printed lower {printed:.6g} is vacuous; lower uses max degree d+1"))
    if dim is not None:
        out.append(DiskBounds(0.0, 1 - math.sqrt(1 - math.exp(-dim)), "spherically-symmetric"))
    if site_pc is not None:
        if not 0 < site_pc <= 1:
            raise TreeError("site percolation threshold must be in (0, 1]")
        out.append(DiskBounds(0.0, site_pc, "site-comparison"))
    if not out:
        raise TreeError("disk_bounds needs Delta, d, dim or site_pc")
    return out
