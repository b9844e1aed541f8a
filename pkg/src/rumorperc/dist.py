"""Laws on the non-negative integers: tails, pgfs, moments, sampling.

Every law carries a :class:`TailDescriptor` describing how ``P(X >= k)``
behaves as k grows.  Anything that has to decide divergence (infinite mean,
non-summable products, pgf beyond 1) reads the descriptor; truncated sums are
only ever used to produce numbers for series already known to converge.

Convention: ``tail(k) = P(X >= k)``, so ``tail(0) == 1``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .series import Decay, SeriesValue, sum_series

INF = math.inf
_QMAX = float(1 << 62)


class LawError(ValueError):
    pass


# --------------------------------------------------------------------------
# Tail descriptors


@dataclass(frozen=True)
class TailDescriptor:
    """Asymptotic shape of ``P(X >= k)``.

    * ``finite``: zero beyond ``support_max``.
    * ``geometric``: ``~ coef * ratio**k``; coef may be None when only the
      exponential rate is known.
    * ``regular``: ``~ coef * k**-power * (ln k)**log_power * (ln ln k)**loglog_power``.
    * ``bounds``: only ``nt_liminf <= liminf k P(X>=k)`` and
      ``limsup k P(X>=k) <= nt_limsup`` are known.
    * ``unknown``: nothing can be certified.
    """

    kind: str
    support_max: Optional[int] = None
    ratio: Optional[float] = None
    coef: Optional[float] = None
    power: Optional[float] = None
    log_power: float = 0.0
    loglog_power: float = 0.0
    nt_liminf: Optional[float] = None
    nt_limsup: Optional[float] = None

    @classmethod
    def finite(cls, k_max: int) -> "TailDescriptor":
        return cls("finite", support_max=int(k_max))

    @classmethod
    def geometric(cls, ratio: float, coef: Optional[float] = 1.0) -> "TailDescriptor":
        if not 0.0 <= ratio < 1.0:
            raise LawError(f"geometric tail ratio must be in [0,1), got {ratio}")
        if ratio == 0.0:
            return cls.finite(0)
        return cls("geometric", ratio=ratio, coef=coef)

    @classmethod
    def regular(cls, coef: float, power: float, log_power: float = 0.0,
                loglog_power: float = 0.0) -> "TailDescriptor":
        if coef <= 0 or power <= 0:
            raise LawError("regular tail needs coef > 0 and power > 0")
        return cls("regular", coef=coef, power=power, log_power=log_power,
                   loglog_power=loglog_power)

    @classmethod
    def bounds(cls, liminf: Optional[float] = None, limsup: Optional[float] = None) -> "TailDescriptor":
        return cls("bounds", nt_liminf=liminf, nt_limsup=limsup)

    # -- limits of n * P(X >= n)

    def _regular_nt_limit(self) -> float:
        a, b, e = self.power, self.log_power, self.loglog_power
        for x in (1.0 - a, b, e):
            if x > 0:
                return INF
            if x < 0:
                return 0.0
        return float(self.coef)

    def nt_limits(self) -> tuple[Optional[float], Optional[float]]:
        """(liminf, limsup) of n P(X >= n); None where unknown."""
        if self.kind in ("finite", "geometric"):
            return 0.0, 0.0
        if self.kind == "regular":
            v = self._regular_nt_limit()
            return v, v
        if self.kind == "bounds":
            return self.nt_liminf, self.nt_limsup
        return None, None

    def mean_finite(self) -> Optional[bool]:
        if self.kind in ("finite", "geometric"):
            return True
        if self.kind == "regular":
            a, b, e = self.power, self.log_power, self.loglog_power
            if a != 1.0:
                return a > 1.0
            if b != -1.0:
                return b < -1.0
            return e < -1.0
        if self.kind == "bounds" and self.nt_liminf is not None and self.nt_liminf > 0:
            return False
        return None

    def survival_series_converges(self) -> Optional[bool]:
        """Whether sum_n prod_{i<=n} P(X <= i) < infinity."""
        if self.kind in ("finite", "geometric"):
            return False
        if self.kind == "regular":
            a, b, e = self.power, self.log_power, self.loglog_power
            if a < 1.0:
                return True
            if a > 1.0:
                return False
            if b != 0.0:
                return b > 0.0
            if e != 0.0:
                return e > 0.0
            if self.coef != 1.0:
                return self.coef > 1.0
            return None
        if self.kind == "bounds":
            if self.nt_liminf is not None and self.nt_liminf > 1.0:
                return True
            if self.nt_limsup is not None and self.nt_limsup < 1.0:
                return False
        return None

    def root_rate(self) -> Optional[float]:
        """limsup P(X >= n)**(1/n)."""
        if self.kind == "finite":
            return 0.0
        if self.kind == "geometric":
            return self.ratio
        if self.kind == "regular":
            return 1.0
        if self.kind == "bounds" and self.nt_liminf is not None and self.nt_liminf > 0:
            return 1.0
        return None

    def tail_decay(self) -> Optional[Decay]:
        """Decay class of the terms P(X >= k) themselves."""
        if self.kind == "finite":
            return Decay("finite", last=self.support_max)
        if self.kind == "geometric":
            return Decay("geometric", rate=self.ratio)
        if self.kind == "regular" and self.mean_finite():
            return Decay("power", rate=self.power) if self.power > 1 else Decay("fast")
        return None

    def scaled(self, factor: float) -> "TailDescriptor":
        if factor <= 0:
            return TailDescriptor.finite(0)
        if self.kind == "geometric":
            return replace(self, coef=None if self.coef is None else self.coef * factor)
        if self.kind == "regular":
            return replace(self, coef=self.coef * factor)
        if self.kind == "bounds":
            return replace(
                self,
                nt_liminf=None if self.nt_liminf is None else self.nt_liminf * factor,
                nt_limsup=None if self.nt_limsup is None else self.nt_limsup * factor,
            )
        return self


# --------------------------------------------------------------------------
# Laws


def _as_int_array(k) -> np.ndarray:
    return np.asarray(k, dtype=np.int64)


class Law:
    """A probability law on {0, 1, 2, ...}."""

    descriptor: TailDescriptor

    # subclasses implement _tail for k >= 1 (array in, array out)
    def _tail(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def literal(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.literal}>"

    # -- point evaluations

    def tail(self, k):
        """P(X >= k)."""
        arr = _as_int_array(k)
        out = np.ones(arr.shape, dtype=float)
        pos = arr >= 1
        if np.any(pos):
            out[pos] = np.clip(self._tail(arr[pos]), 0.0, 1.0)
        return out if arr.ndim else float(out)

    def cdf(self, k):
        """P(X <= k)."""
        arr = _as_int_array(k)
        out = 1.0 - np.asarray(self.tail(arr + 1), dtype=float)
        out = np.where(arr < 0, 0.0, out)
        return out if arr.ndim else float(out)

    def pmf(self, k):
        arr = _as_int_array(k)
        out = np.asarray(self.tail(arr), dtype=float) - np.asarray(self.tail(arr + 1), dtype=float)
        out = np.where(arr < 0, 0.0, np.maximum(out, 0.0))
        return out if arr.ndim else float(out)

    def law_eval(self, k: int, which: str) -> float:
        if k < 0:
            raise LawError("k must be >= 0")
        if which == "pmf":
            return self.pmf(k)
        if which == "cdf":
            return self.cdf(k)
        if which == "tail":
            return self.tail(k)
        raise LawError(f"unknown evaluation {which!r}")

    @property
    def p0(self) -> float:
        return self.pmf(0)

    @property
    def support_max(self) -> Optional[int]:
        d = self.descriptor
        return d.support_max if d.kind == "finite" else None

    # -- generating functions

    def pgf(self, t: float) -> float:
        """E(t**X) for t >= 0; +inf when the series diverges."""
        if t < 0:
            raise LawError("pgf argument must be >= 0")
        if t == 1.0:
            return 1.0
        return self._pgf_series(t).value

    def _pgf_series(self, t: float) -> SeriesValue:
        d = self.descriptor
        if d.kind == "finite":
            k = np.arange(0, d.support_max + 1)
            return SeriesValue(math.fsum((self.pmf(k) * float(t) ** k).tolist()), 0.0, k.size)
        if t < 1.0:
            # remainder after K is at most tail(K) t^K
            lt = math.log(t) if t > 0 else -INF
            if t == 0:
                return SeriesValue(self.p0, 0.0, 1)
            return sum_series(lambda k: self.pmf(k) * np.exp(k * lt), Decay("geometric", rate=t))
        if d.kind == "geometric":
            if d.ratio * t > 1.0 or (d.ratio * t == 1.0):
                return SeriesValue(INF, 0.0, 0)
            lt = math.log(t)
            return sum_series(lambda k: self.pmf(k) * np.exp(k * lt),
                              Decay("geometric", rate=d.ratio * t))
        if d.kind in ("regular",) or (d.kind == "bounds" and d.nt_liminf and d.nt_liminf > 0):
            return SeriesValue(INF, 0.0, 0)
        raise LawError(f"cannot decide convergence of pgf at t={t} for {self.literal}")

    def pgf_array(self, t: np.ndarray) -> np.ndarray:
        """pgf on an array of points in [0, 1]."""
        t = np.asarray(t, dtype=float)
        return 1.0 - self.pgf_complement(1.0 - t)

    def pgf_complement(self, x):
        """1 - E((1-x)**X) for x in [0, 1], computed without cancellation."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        out = np.empty_like(flat)
        for i, xi in enumerate(flat):
            out[i] = self._pgf_complement_scalar(float(xi))
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def _pgf_complement_scalar(self, x: float) -> float:
        # 1 - phi(1-x) = x * sum_{j>=1} P(X>=j) (1-x)^{j-1}
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0 - self.p0
        d = self.descriptor
        l1x = math.log1p(-x)
        if d.kind == "finite":
            k = np.arange(1, d.support_max + 1)
            return x * math.fsum((self.tail(k) * np.exp((k - 1) * l1x)).tolist())
        sv = sum_series(lambda k: self.tail(k) * np.exp((k - 1) * l1x),
                        Decay("geometric", rate=1.0 - x), start=1, tol=1e-16)
        return min(1.0, x * sv.value)

    def pgf_derivative(self, t: float) -> float:
        """d/dt E(t**X) at t in [0, 1]."""
        if t >= 1.0:
            return self.mean()
        k = None
        lt = math.log(t) if t > 0 else -INF
        if t == 0:
            return self.pmf(1)
        return sum_series(lambda k: k * self.pmf(k) * np.exp((k - 1) * lt),
                          Decay("geometric", rate=t), start=1).value

    def power_mean(self, d: float) -> float:
        """E(d**X)."""
        if d < 2:
            raise LawError("power_mean needs d >= 2")
        return self.pgf(d)

    def mean(self) -> float:
        fin = self.descriptor.mean_finite()
        if fin is False:
            return INF
        if fin is None:
            raise LawError(f"cannot classify the mean of {self.literal}")
        return sum_series(lambda k: self.tail(k), self.descriptor.tail_decay(), start=1).value

    def log_tail(self, k):
        with np.errstate(divide="ignore"):
            return np.log(self.tail(k))

    # -- sampling

    def quantile(self, u):
        """max{k : tail(k) > u} for u in (0, 1]; vectorised."""
        u = np.asarray(u, dtype=float)
        flat = u.reshape(-1)
        lo = np.zeros(flat.shape, dtype=np.int64)
        hi = np.ones(flat.shape, dtype=np.int64)
        smax = self.support_max
        # exponential search for an upper end with tail(hi) <= u
        for _ in range(64):
            bad = self.tail(hi) > flat
            if not np.any(bad):
                break
            lo = np.where(bad, hi, lo)
            hi = np.where(bad, np.minimum(hi * 2, 1 << 62), hi)
            if smax is not None:
                hi = np.minimum(hi, smax + 1)
        while True:
            gap = hi - lo
            if np.all(gap <= 1):
                break
            mid = lo + gap // 2
            ok = self.tail(mid) > flat
            lo = np.where(ok & (gap > 1), mid, lo)
            hi = np.where(~ok & (gap > 1), mid, hi)
        return lo.reshape(u.shape) if u.ndim else int(lo[0])

    def _settle(self, k, u):
        """Nudge a closed-form quantile guess onto max{k : tail(k) > u}."""
        k = np.asarray(k, dtype=float).clip(0, _QMAX).astype(np.int64)
        up = (k < int(_QMAX)) & (self.tail(np.minimum(k + 1, int(_QMAX))) > u)
        k = np.where(up, k + 1, k)
        down = (k > 0) & (self.tail(k) <= u)
        k = np.where(down, k - 1, k)
        return k if np.ndim(u) else int(k)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        u = 1.0 - rng.random(size if size is not None else 1)
        out = self.quantile(u)
        return out if size is not None else int(out[0])


class PointMass(Law):
    def __init__(self, c: int):
        if c < 0:
            raise LawError("point mass must sit on a non-negative integer")
        self.c = int(c)
        self.descriptor = TailDescriptor.finite(self.c)

    literal = property(lambda self: f"point:{self.c}")

    def _tail(self, k):
        return (k <= self.c).astype(float)

    def pgf(self, t):
        if t < 0:
            raise LawError("pgf argument must be >= 0")
        return float(t) ** self.c

    def pgf_complement(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = -np.expm1(self.c * np.log1p(-np.minimum(x, 1.0))) if self.c else np.zeros_like(x)
        return out if x.ndim else float(out)

    def mean(self):
        return float(self.c)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        out = np.full(u.shape, self.c, dtype=np.int64)
        return out if u.ndim else self.c


class Bernoulli(Law):
    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise LawError("Bernoulli parameter must be in [0,1]")
        self.p = float(p)
        self.descriptor = TailDescriptor.finite(1 if p > 0 else 0)

    literal = property(lambda self: f"bernoulli:{self.p!r}")

    def _tail(self, k):
        return np.where(k == 1, self.p, 0.0)

    def pgf(self, t):
        return 1.0 - self.p + self.p * t

    def pgf_complement(self, x):
        x = np.asarray(x, dtype=float)
        out = self.p * x
        return out if x.ndim else float(out)

    def mean(self):
        return self.p


class Binomial(Law):
    def __init__(self, n: int, p: float):
        if n < 0 or not 0.0 <= p <= 1.0:
            raise LawError("Binomial needs n >= 0 and p in [0,1]")
        self.n, self.p = int(n), float(p)
        self.descriptor = TailDescriptor.finite(self.n if p > 0 else 0)
        ks = np.arange(self.n + 2)
        pm = np.array([math.comb(self.n, j) * self.p ** j * (1 - self.p) ** (self.n - j)
                       for j in range(self.n + 1)] + [0.0])
        self._tails = np.concatenate([np.cumsum(pm[::-1])[::-1], [0.0]])
        self._tails[0] = 1.0
        del ks

    literal = property(lambda self: f"binom:{self.n}:{self.p!r}")

    def _tail(self, k):
        return self._tails[np.minimum(k, self.n + 1)]

    def pgf(self, t):
        return (1.0 - self.p + self.p * t) ** self.n

    def pgf_complement(self, x):
        x = np.asarray(x, dtype=float)
        out = -np.expm1(self.n * np.log1p(-self.p * x))
        return out if x.ndim else float(out)

    def mean(self):
        return self.n * self.p


class Geometric(Law):
    """P(X = k) = (1-p) p**k, so P(X >= k) = p**k."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise LawError("Geometric parameter must be in [0,1)")
        self.p = float(p)
        self.descriptor = TailDescriptor.geometric(self.p)

    literal = property(lambda self: f"geom:{self.p!r}")

    def _tail(self, k):
        return np.power(self.p, k.astype(float))

    def log_tail(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(k <= 0, 0.0, k * math.log(self.p) if self.p > 0 else -INF)

    def pgf(self, t):
        if t < 0:
            raise LawError("pgf argument must be >= 0")
        if self.p * t >= 1.0:
            return INF
        return (1.0 - self.p) / (1.0 - self.p * t)

    def pgf_complement(self, x):
        x = np.asarray(x, dtype=float)
        out = self.p * x / (1.0 - self.p + self.p * x)
        return out if x.ndim else float(out)

    def mean(self):
        return self.p / (1.0 - self.p)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.p == 0:
            out = np.zeros(u.shape, dtype=np.int64)
        else:
            x = np.log(u) / math.log(self.p)
            return self._settle(np.ceil(x) - 1, u)
        return out if u.ndim else int(out)


class PowerLawExample(Law):
    """P(X = k) = 2/((k+2)(k+3)), k >= 0; tail P(X >= k) = 2/(k+2)."""

    descriptor = TailDescriptor.regular(2.0, 1.0)
    literal = "powerlaw-ex"

    def _tail(self, k):
        return 2.0 / (k + 2.0)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self._settle(np.ceil(2.0 / u - 2.0) - 1, u)


class TailPower(Law):
    """P(X >= k) = min(cap, c (k - shift)**-a) for k > shift, ``cap`` for 1 <= k <= shift."""

    def __init__(self, c: float, a: float, cap: float = 1.0, shift: int = 0):
        if c <= 0 or a <= 0 or not 0 < cap <= 1 or shift < 0:
            raise LawError("tailpow needs c > 0, a > 0, cap in (0,1], shift >= 0")
        self.c, self.a, self.cap, self.shift = float(c), float(a), float(cap), int(shift)
        self.descriptor = TailDescriptor.regular(self.c, self.a)

    @property
    def literal(self):
        s = f"tailpow:{self.c!r},{self.a!r}"
        if self.cap != 1.0 or self.shift:
            s += f",{self.cap!r}"
        if self.shift:
            s += f",{self.shift}"
        return s

    def _tail(self, k):
        kk = (k - self.shift).astype(float)
        with np.errstate(divide="ignore", over="ignore"):
            val = np.where(kk > 0, self.c * np.power(np.maximum(kk, 1e-300), -self.a), INF)
        return np.minimum(self.cap, val)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        x = self.shift + np.power(self.c / u, 1.0 / self.a)
        k = np.where(u < self.cap, np.maximum(np.ceil(x) - 1, self.shift), 0)
        return self._settle(k, u)

    def dominated_by_inverse_shift(self) -> bool:
        """True when P(X >= n) <= 1/(n-1) for every n >= 2 (exactly)."""
        return self.a == 1.0 and self.c <= 1.0 and self.shift >= 1


class TailGeometric(Law):
    """P(X >= k) = min(cap, C r**k) for k >= 1."""

    def __init__(self, C: float, r: float, cap: float = 1.0):
        if C <= 0 or not 0 < r < 1 or not 0 < cap <= 1:
            raise LawError("tailgeom needs C > 0, r in (0,1), cap in (0,1]")
        self.C, self.r, self.cap = float(C), float(r), float(cap)
        self.descriptor = TailDescriptor.geometric(self.r, self.C)

    @property
    def literal(self):
        s = f"tailgeom:{self.C!r},{self.r!r}"
        return s + (f",{self.cap!r}" if self.cap != 1.0 else "")

    def _tail(self, k):
        return np.minimum(self.cap, self.C * np.power(self.r, k.astype(float)))


class Table(Law):
    """Tabulated pmf on 0..K-1 with the remaining mass spread by a tail form.

    ``tail_form`` is None (mass must already sum to one), ``("pow", c, a)`` or
    ``("geom", C, r)``; beyond the table ``P(X >= k) = min(rest, form(k))``.
    """

    def __init__(self, pmf, tail_form=None):
        pm = np.asarray(pmf, dtype=float)
        if pm.ndim != 1 or pm.size == 0 or np.any(pm < 0):
            raise LawError("table pmf must be a non-empty list of non-negative numbers")
        self.table = pm
        self.rest = 1.0 - math.fsum(pm.tolist())
        self.tail_form = tuple(tail_form) if tail_form else None
        K = pm.size
        if self.tail_form is None:
            if abs(self.rest) > 1e-12:
                raise LawError(f"table sums to {1 - self.rest!r}; add a tail descriptor or fix the table")
            self.rest = 0.0
            nz = np.nonzero(pm)[0]
            self.descriptor = TailDescriptor.finite(int(nz[-1]) if nz.size else 0)
        else:
            if self.rest < -1e-12:
                raise LawError("table mass exceeds one")
            self.rest = max(self.rest, 0.0)
            kind, p1, p2 = self.tail_form
            if kind == "pow":
                if p1 * K ** -p2 < self.rest - 1e-15:
                    raise LawError("tail descriptor does not dominate the tabulated remainder")
                self.descriptor = TailDescriptor.regular(p1, p2)
            elif kind == "geom":
                if p1 * p2 ** K < self.rest - 1e-15:
                    raise LawError("tail descriptor does not dominate the tabulated remainder")
                self.descriptor = TailDescriptor.geometric(p2, p1)
            else:
                raise LawError(f"unknown tail form {kind!r}")
        self._head_tails = np.concatenate([self.rest + np.cumsum(pm[::-1])[::-1], [self.rest]])

    @property
    def literal(self):
        body = ",".join(repr(float(x)) for x in self.table)
        s = f"table:[{body}]"
        if self.tail_form:
            kind, p1, p2 = self.tail_form
            s += f";tail={kind}:{p1!r},{p2!r}"
        return s

    def _tail(self, k):
        K = self.table.size
        head = self._head_tails[np.minimum(k, K)]
        if self.tail_form is None:
            return np.where(k < K, head, 0.0)
        kind, p1, p2 = self.tail_form
        kf = np.maximum(k, 1).astype(float)
        form = p1 * kf ** -p2 if kind == "pow" else p1 * np.power(p2, kf)
        return np.where(k < K, head, np.minimum(self.rest, form))


class CustomTail(Law):
    """Law given by an explicit vectorised tail function ``k -> P(X >= k)`` (k >= 1)."""

    def __init__(self, tail_fn: Callable[[np.ndarray], np.ndarray], descriptor: TailDescriptor,
                 name: str = "custom"):
        self.tail_fn = tail_fn
        self.descriptor = descriptor
        self.name = name

    literal = property(lambda self: self.name)

    def _tail(self, k):
        return np.asarray(self.tail_fn(k), dtype=float)


def station_transform(desc: TailDescriptor, N: Law) -> TailDescriptor:
    """Descriptor of ``1 - phi_N(1 - x_k)`` when ``x_k`` has descriptor ``desc``."""
    if N.tail(1) == 0.0:
        return TailDescriptor.finite(0)
    if desc.kind == "finite":
        return desc
    nd = N.descriptor
    mfin = nd.mean_finite()
    if mfin:
        return desc.scaled(N.mean())
    if nd.kind != "regular" or nd.log_power or nd.loglog_power or nd.power > 1:
        return TailDescriptor("unknown")
    cN, aN = nd.coef, nd.power
    if aN == 1.0:
        # 1 - phi(1-x) ~ cN x ln(1/x)
        if desc.kind == "geometric":
            return TailDescriptor("geometric", ratio=desc.ratio, coef=None)
        if desc.kind == "regular":
            return TailDescriptor.regular(cN * desc.coef * desc.power, desc.power,
                                          desc.log_power + 1.0, desc.loglog_power)
        return TailDescriptor("unknown")
    # 1 - phi(1-x) ~ cN Gamma(1-aN) x^aN
    g = cN * math.gamma(1.0 - aN)
    if desc.kind == "geometric":
        coef = None if desc.coef is None else g * desc.coef ** aN
        return TailDescriptor("geometric", ratio=desc.ratio ** aN, coef=coef)
    if desc.kind == "regular":
        return TailDescriptor.regular(g * desc.coef ** aN, desc.power * aN,
                                      desc.log_power * aN, desc.loglog_power * aN)
    return TailDescriptor("unknown")


class AnnealedRadius(Law):
    """Law of 1{N>=1} max(R_1..R_N): cdf(k) = phi_N(cdf_R(k))."""

    def __init__(self, N: Law, R: Law):
        self.N, self.R = N, R
        self.descriptor = station_transform(R.descriptor, N)

    literal = property(lambda self: f"annealed({self.N.literal};{self.R.literal})")

    def _tail(self, k):
        return np.asarray(self.N.pgf_complement(self.R.tail(k)), dtype=float)


def annealed_radius(N: Law, R: Law) -> Law:
    if isinstance(N, PointMass) and N.c == 1:
        return R
    if N.tail(1) == 0.0:
        return PointMass(0)
    return AnnealedRadius(N, R)


# --------------------------------------------------------------------------
# Literals

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _nums(s: str, n_min: int, n_max: int, lit: str) -> list[float]:
    parts = [p for p in re.split(r"[,:]", s) if p != ""]
    if not n_min <= len(parts) <= n_max:
        raise LawError(f"law literal {lit!r}: expected {n_min}..{n_max} parameters, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise LawError(f"law literal {lit!r}: bad number") from exc


def parse_law(text: str) -> Law:
    """Parse a law literal such as ``geom:0.5`` or ``table:[0.5,0.25];tail=pow:1,1``."""
    lit = text.strip()
    head, _, rest = lit.partition(":")
    if head == "powerlaw-ex" and not rest:
        return PowerLawExample()
    if not rest:
        raise LawError(f"law literal {lit!r} is missing its parameters")
    if head == "point":
        (c,) = _nums(rest, 1, 1, lit)
        return PointMass(int(c))
    if head == "bernoulli":
        (p,) = _nums(rest, 1, 1, lit)
        return Bernoulli(p)
    if head == "binom":
        n, p = _nums(rest, 2, 2, lit)
        return Binomial(int(n), p)
    if head == "geom":
        (p,) = _nums(rest, 1, 1, lit)
        return Geometric(p)
    if head == "tailpow":
        v = _nums(rest, 2, 4, lit)
        return TailPower(v[0], v[1], *(v[2:3] or [1.0]), *([int(v[3])] if len(v) > 3 else []))
    if head == "tailgeom":
        v = _nums(rest, 2, 3, lit)
        return TailGeometric(*v)
    if head == "table":
        m = re.fullmatch(r"\[([^\]]*)\](?:;tail=(pow|geom):(.+))?", rest)
        if not m:
            raise LawError(f"law literal {lit!r}: expected table:[p0,p1,...][;tail=pow:c,a]")
        pm = _nums(m.group(1), 1, 10 ** 6, lit)
        form = None
        if m.group(2):
            p1, p2 = _nums(m.group(3), 2, 2, lit)
            form = (m.group(2), p1, p2)
        return Table(pm, form)
    raise LawError(f"unknown law family in literal {lit!r}")


# --------------------------------------------------------------------------
# Index-dependent laws


@dataclass(frozen=True)
class Weights:
    """A non-increasing sequence b_n in [0, 1] with an asymptotic descriptor."""

    fn: Callable[[np.ndarray], np.ndarray]
    descriptor: TailDescriptor
    name: str = "b"

    def __call__(self, n):
        arr = np.asarray(n, dtype=np.int64)
        out = np.clip(np.asarray(self.fn(arr), dtype=float), 0.0, 1.0)
        return out if arr.ndim else float(out)

    def summable(self) -> Optional[bool]:
        return self.descriptor.mean_finite()

    def n_times_to_zero(self) -> Optional[bool]:
        _, sup = self.descriptor.nt_limits()
        return None if sup is None else sup == 0.0


def power_descriptor(desc: TailDescriptor, t: float) -> TailDescriptor:
    """Descriptor of x_k**t given the descriptor of x_k."""
    if desc.kind == "finite" or t == 1.0:
        return desc
    if desc.kind == "geometric":
        return TailDescriptor("geometric", ratio=desc.ratio ** t,
                              coef=None if desc.coef is None else desc.coef ** t)
    if desc.kind == "regular":
        return TailDescriptor.regular(desc.coef ** t, desc.power * t, desc.log_power * t,
                                      desc.loglog_power * t)
    return TailDescriptor("unknown")


@dataclass
class SequenceLaw:
    """Law of R_n (or N_n) for each index n, with optional actionable positions.

    ``kind`` records which structured family the sequence belongs to so that
    divergence questions can be settled from ``weights.descriptor``:

    * ``constant``: R_n ~ ``base`` for all n.
    * ``drop``: P(R_n = 0) = b_n, P(R_n = 1) = 1 - b_n.
    * ``jump``: P(R_n = n) = b_n, P(R_n = 0) = 1 - b_n.
    * ``shifted``: P(R_n = 0) = 1 - b_n, P(R_n >= k) = b_{n+k-1} for k >= 1.
    * ``custom``: anything else; only finite prefixes can be inspected.
    """

    law_at: Callable[[int], Law]
    kind: str = "custom"
    weights: Optional[Weights] = None
    base: Optional[Law] = None
    positions: Optional[Callable[[int], int]] = None
    max_gap: Optional[int] = None
    period: Optional[int] = None
    name: str = "seq"

    def __post_init__(self):
        self._cache: dict[int, Law] = {}

    def __getitem__(self, n: int) -> Law:
        law = self._cache.get(n)
        if law is None:
            law = self.law_at(n)
            if len(self._cache) < 1 << 16:
                self._cache[n] = law
        return law

    def position(self, n: int) -> int:
        return n if self.positions is None else int(self.positions(n))

    def check_gaps(self, probe: int) -> None:
        if self.positions is None or self.max_gap is None:
            return
        prev = self.position(0)
        for n in range(1, probe + 1):
            cur = self.position(n)
            if not 0 < cur - prev <= self.max_gap:
                raise LawError(f"position gap {cur - prev} at n={n} violates max gap {self.max_gap}")
            prev = cur

    @classmethod
    def constant(cls, law: Law) -> "SequenceLaw":
        return cls(lambda n: law, kind="constant", base=law, name=f"const({law.literal})")

    @classmethod
    def drop(cls, b: Weights) -> "SequenceLaw":
        return cls(lambda n: Bernoulli(1.0 - b(n)), kind="drop", weights=b, name=f"drop({b.name})")

    @classmethod
    def jump(cls, b: Weights) -> "SequenceLaw":
        def law(n):
            bn = b(n)
            if n == 0 or bn == 0.0:
                return PointMass(0)
            return CustomTail(lambda k, n=n, bn=bn: np.where(k <= n, bn, 0.0),
                              TailDescriptor.finite(n), name=f"jump[{n}]")
        return cls(law, kind="jump", weights=b, name=f"jump({b.name})")

    @classmethod
    def shifted(cls, b: Weights) -> "SequenceLaw":
        def law(n):
            return CustomTail(lambda k, n=n: b(n + k - 1), b.descriptor, name=f"shifted[{n}]")
        return cls(law, kind="shifted", weights=b, name=f"shifted({b.name})")


def annealed_sequence(seqN: SequenceLaw, seqR: SequenceLaw) -> SequenceLaw:
    """Index-wise annealed counterpart, keeping structure where it survives."""
    if seqN.kind == "constant":
        N = seqN.base
        if seqR.kind == "constant":
            return SequenceLaw.constant(annealed_radius(N, seqR.base))
        if seqR.kind in ("jump", "shifted"):
            b = seqR.weights
            nb = Weights(lambda n: N.pgf_complement(b(n)), station_transform(b.descriptor, N),
                         name=f"1-phi(1-{b.name})")
            out = SequenceLaw.jump(nb) if seqR.kind == "jump" else SequenceLaw.shifted(nb)
            out.positions, out.max_gap = seqR.positions, seqR.max_gap
            return out
    return SequenceLaw(lambda n: annealed_radius(seqN[n], seqR[n]), kind="custom",
                       positions=seqR.positions, max_gap=seqR.max_gap,
                       name=f"annealed({seqN.name};{seqR.name})")
