"""Eventual coverage: Markov-driven segments on N and the Poisson Boolean model on R_+."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .dist import INF, Law, LawError

COVERS = "covers_as"
NEVER = "never_covers"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class PowerTail:
    """Continuous tail P(rho > x) = min(1, c x^-a)."""

    c: float
    a: float

    def __post_init__(self):
        if self.c <= 0 or self.a <= 0:
            raise LawError("power tail needs c > 0 and a > 0")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, self.c * x ** -self.a)

    def nt_limit(self) -> float:
        """lim x P(rho > x)."""
        return INF if self.a < 1 else (self.c if self.a == 1 else 0.0)

    def moment_infinite(self, d: int) -> bool:
        return self.a <= d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = 1.0 - rng.random(size)  # (0, 1]
        return (self.c / u) ** (1.0 / self.a)


def parse_power_tail(text: str) -> PowerTail:
    t = text.strip()
    if t.startswith("tail="):
        t = t[5:]
    if not t.startswith("pow:"):
        raise LawError(f"continuous tail must read pow:c,a, got {text!r}")
    try:
        c, a = (float(v) for v in t[4:].split(","))
    except ValueError as exc:
        raise LawError(f"bad continuous tail {text!r}") from exc
    return PowerTail(c, a)


@dataclass(frozen=True)
class MarkovCoverageConfig:
    p01: float
    p10: float
    rho_law: Law
    horizon: int = 10_000

    def __post_init__(self):
        if not (0 < self.p01 < 1 and 0 < self.p10 < 1):
            raise LawError("transition probabilities must lie in (0, 1)")
        if self.horizon < 1:
            raise LawError("horizon must be >= 1")

    @property
    def pi1(self) -> float:
        return self.p01 / (self.p10 + self.p01)


@dataclass(frozen=True)
class BooleanConfig:
    lam: float
    tail: PowerTail
    d: int = 1
    horizon: float = 1e4

    def __post_init__(self):
        if not self.lam > 0:
            raise LawError("intensity must be positive")
        if self.d < 1:
            raise LawError("dimension must be >= 1")


@dataclass
class CoverageReport:
    classification: str
    criterion_used: str = ""
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)


def markov_coverage_criteria(cfg: MarkovCoverageConfig) -> CoverageReport:
    """Compare pi1 with 1/l and 1/L, l and L the liminf and limsup of j P(rho > j)."""
    lo, hi = cfg.rho_law.descriptor.nt_limits()
    if lo is None and hi is None:
        raise LawError(f"{cfg.rho_law.literal} has no tail descriptor")
    pi1 = cfg.pi1
    det = {"pi1": pi1, "l": lo, "L": hi}
    if lo is not None and lo > 1 and pi1 > 1 / lo:
        return CoverageReport(COVERS, "pi1 > 1/l", det)
    if hi is not None and hi < INF and (hi == 0 or pi1 < 1 / hi):
        return CoverageReport(NEVER, "pi1 < 1/L", det)
    return CoverageReport(INCONCLUSIVE, "markov coverage", det)


def boolean_criteria(cfg: BooleanConfig) -> CoverageReport:
    lim = cfg.tail.nt_limit()
    det = {"lim x P(rho>x)": lim, "E(rho^d) infinite": cfg.tail.moment_infinite(cfg.d),
           "full_coverage_Rd": cfg.tail.moment_infinite(cfg.d)}
    if cfg.d >= 2:
        if lim > 0:
            return CoverageReport(COVERS, "liminf x P > 0 (d >= 2)", det)
        return CoverageReport(NEVER, "lim x P = 0 (d >= 2)", det)
    if lim == INF:
        return CoverageReport(COVERS, "lim x P = infinity", det)
    if lim == 0.0:
        return CoverageReport(INCONCLUSIVE, "lim x P = 0", det,
                              flags=["printed criterion for lim x P = 0 asserts coverage; "
                                     "it contradicts the phase transition and is treated as unreliable"])
    det["lambda0_bracket"] = (0.0, 1 / lim)
    det["lambda1_bracket"] = (1 / lim, INF)
    if cfg.lam > 1 / lim:
        return CoverageReport(COVERS, "lambda > 1/l >= lambda0", det)
    if cfg.lam < 1 / lim:
        return CoverageReport(NEVER, "lambda < 1/L <= lambda1", det)
    return CoverageReport(INCONCLUSIVE, "lambda = 1/l", det)


# --------------------------------------------------------------------------
# simulation


@dataclass
class CoverageTrial:
    last_uncovered: float
    longest_gap: float
    covered_fraction: float
    n_gaps: int


@numba.njit(cache=True)
def _markov_chain(u, x0, p01, p10):
    n = u.size
    x = np.empty(n, dtype=np.int8)
    s = x0
    for i in range(n):
        x[i] = s
        if s == 1:
            s = 0 if u[i] < p10 else 1
        else:
            s = 1 if u[i] < p01 else 0
    return x


def markov_sweep(x: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Covered indicator of sites 1..T given states and radii of sites 1..T."""
    T = x.size
    idx = np.arange(1, T + 1)
    reach = np.maximum.accumulate(np.where(x == 1, idx + rho, -1))
    return reach >= idx


def _site_stats(covered: np.ndarray) -> CoverageTrial:
    T = covered.size
    unc = np.nonzero(~covered)[0] + 1
    last = float(unc[-1]) if unc.size else 0.0
    if unc.size:
        breaks = np.nonzero(np.diff(unc) > 1)[0]
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [unc.size - 1]])
        longest = float((ends - starts + 1).max())
        n_gaps = int(starts.size)
    else:
        longest, n_gaps = 0.0, 0
    half = covered[T // 2:]
    return CoverageTrial(last, longest, float(half.mean()) if half.size else 1.0, n_gaps)


def sim_markov_coverage(cfg: MarkovCoverageConfig, rng: np.random.Generator) -> CoverageTrial:
    """One run of the chain from stationarity over sites 1..T."""
    T = cfg.horizon
    x0 = 1 if rng.random() < cfg.pi1 else 0
    x = _markov_chain(rng.random(T), x0, cfg.p01, cfg.p10)
    rho = np.asarray(cfg.rho_law.sample(rng, T), dtype=np.int64)
    return _site_stats(markov_sweep(x, rho))


def boolean_sweep(xi: np.ndarray, rho: np.ndarray, T: float):
    """Uncovered gaps of [0, T] not covered by the union of [xi, xi + rho], xi sorted."""
    if xi.size == 0:
        return np.array([0.0]), np.array([T])
    reach = np.maximum.accumulate(xi + rho)
    prev = np.concatenate([[0.0], reach[:-1]])
    open_ = xi > prev
    g_lo = prev[open_]
    g_hi = xi[open_]
    if reach[-1] < T:
        g_lo = np.append(g_lo, reach[-1])
        g_hi = np.append(g_hi, T)
    return g_lo, g_hi


def sim_boolean_1d(cfg: BooleanConfig, rng: np.random.Generator) -> CoverageTrial:
    if cfg.d != 1:
        raise LawError("Boolean simulation is implemented for d = 1 only")
    T = float(cfg.horizon)
    n_guess = int(cfg.lam * T + 10 * math.sqrt(cfg.lam * T + 1) + 16)
    gaps = rng.exponential(1.0 / cfg.lam, n_guess)
    xi = np.cumsum(gaps)
    while xi[-1] <= T:
        more = np.cumsum(rng.exponential(1.0 / cfg.lam, n_guess)) + xi[-1]
        xi = np.concatenate([xi, more])
    xi = xi[xi <= T]
    rho = cfg.tail.sample(rng, xi.size)
    g_lo, g_hi = boolean_sweep(xi, rho, T)
    last = float(g_hi[-1]) if g_hi.size else 0.0
    lens = g_hi - g_lo
    half = np.clip(g_hi, T / 2, T) - np.clip(g_lo, T / 2, T)
    return CoverageTrial(last, float(lens.max()) if lens.size else 0.0,
                         1.0 - float(half.sum()) / (T / 2), int(g_lo.size))
