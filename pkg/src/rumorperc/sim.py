"""Monte Carlo engine.

Every uniform is a pure function of (master seed, trial index, vertex key,
salt) through the splitmix64 finaliser, so a trial's randomness does not
depend on scheduling and two laws driven by the same seed are coupled
monotonically through their inverse cdfs.
"""
from __future__ import annotations

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .dist import (INF, Geometric, Law, LawError, PointMass, PowerLawExample, SequenceLaw, Table,
                   TailGeometric, TailPower, annealed_radius)
from .line import _products_decay, _running_products
from .series import SeriesError, sum_series
from .tree import TreeSpec

DIED, SURVIVED, DEAD_BY_RESIDUAL, TRUNCATED = 0, 1, 2, 3
STATUS_NAMES = ("died", "survived_to_horizon", "dead_by_residual", "truncated")

MODELS = ("fireworks_line", "reverse_line", "env_line", "cone", "disk", "reverse_cone", "env_cone", "coin")

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
SALT_R, SALT_N, SALT_D, SALT_TREE = 0x52, 0x4E, 0x44, 0x54
_QMAX = float(1 << 62)
_BLOCK = 2048


class SimError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# counter-based uniforms


@numba.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _child(key, j):
    return _mix(key + np.uint64(j + 1) * np.uint64(_GAMMA))


@numba.njit(cache=True, inline="always")
def _unif(key, idx):
    """Uniform on (0, 1): output ``idx`` of the splitmix64 stream seeded by ``key``."""
    x = _mix(key + np.uint64(idx + 1) * np.uint64(_GAMMA))
    return (float(x >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _trial_key(master, i):
    return _mix(_mix(master) + np.uint64(i + 1) * np.uint64(_GAMMA))


def trial_key(master_seed: int, i: int) -> int:
    return int(_trial_key(np.uint64(master_seed & _M64), i))


def _mix_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def uniforms(key: int, idx: np.ndarray) -> np.ndarray:
    """Numpy twin of the in-kernel uniform stream."""
    idx = np.asarray(idx, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (idx + np.uint64(1)) * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53


# --------------------------------------------------------------------------
# inverse-cdf samplers usable inside kernels

_FIN, _GEO, _POW = 0, 1, 2


@dataclass(frozen=True)
class Sampler:
    """Tail table P(X >= k), k = 0..K, plus a closed-form extension beyond K.

    par = [kind, e1, e2, e3, aux]; geometric: e1 e2^k; power: e1 (k - e3)^-e2;
    aux caches 1/ln(e2) or 1/e2.
    ``exact`` is False when the extension is only asymptotic.
    """

    tab: np.ndarray
    par: np.ndarray
    exact: bool = True


def _sampler(tab, kind=_FIN, e1=0.0, e2=0.0, e3=0.0, exact=True) -> Sampler:
    tab = np.ascontiguousarray(tab, dtype=np.float64)
    tab[0] = 1.0
    aux = 0.0
    if kind == _GEO:
        aux = 1.0 / math.log(e2)
    elif kind == _POW:
        aux = 1.0 / e2
    return Sampler(tab, np.array([kind, e1, e2, e3, aux], dtype=np.float64), exact)


def make_sampler(law: Law) -> Sampler:
    if isinstance(law, Geometric):
        if law.p == 0:
            return _sampler([1.0, 0.0])
        return _sampler([1.0], _GEO, 1.0, law.p)
    if isinstance(law, PowerLawExample):
        return _sampler([1.0], _POW, 2.0, 1.0, -2.0)
    if isinstance(law, TailPower):
        K = law.shift + int(math.ceil((law.c / law.cap) ** (1.0 / law.a))) + 1
        return _sampler(law.tail(np.arange(K + 1)), _POW, law.c, law.a, float(law.shift))
    if isinstance(law, TailGeometric):
        K = max(1, int(math.ceil(math.log(law.cap / law.C) / math.log(law.r))) + 1)
        return _sampler(law.tail(np.arange(K + 1)), _GEO, law.C, law.r)
    if isinstance(law, Table) and law.tail_form and law.rest > 0:
        kind, p1, p2 = law.tail_form
        K = law.table.size
        if kind == "pow":
            K = max(K, int(math.ceil((p1 / law.rest) ** (1.0 / p2))) + 1)
            return _sampler(law.tail(np.arange(K + 1)), _POW, p1, p2, 0.0)
        K = max(K, int(math.ceil(math.log(law.rest / p1) / math.log(p2))) + 1)
        return _sampler(law.tail(np.arange(K + 1)), _GEO, p1, p2)
    smax = law.support_max
    if smax is not None:
        return _sampler(law.tail(np.arange(smax + 2)))
    # generic: tabulate until the tail is negligible
    K = 1024
    while True:
        tab = np.asarray(law.tail(np.arange(K + 1)), dtype=float)
        if tab[-1] < 1e-17:
            cut = int(np.argmax(tab < 1e-17))
            return _sampler(np.append(tab[:cut], 0.0), exact=True)
        if K >= 1 << 16:
            break
        K *= 4
    d = law.descriptor
    if d.kind == "regular" and not d.log_power and not d.loglog_power:
        return _sampler(tab, _POW, d.coef, d.power, 0.0, exact=False)
    if d.kind == "geometric" and d.coef is not None:
        return _sampler(tab, _GEO, d.coef, d.ratio, exact=False)
    raise SimError(f"no sampler for {law.literal}: tail too heavy to tabulate and no usable descriptor")


@numba.njit(cache=True)
def _table_search(u, tab):
    lo, hi = 0, tab.size - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if tab[mid] > u:
            lo = mid
        else:
            hi = mid
    return np.int64(lo)


@numba.njit(cache=True, inline="always")
def _quantile(u, tab, par):
    """max{k : P(X >= k) > u} for u in (0, 1)."""
    n = tab.size
    if u >= tab[n - 1]:
        return _table_search(u, tab)
    kind = int(par[0])
    if kind == 0:
        return np.int64(n - 1)
    if kind == 1:
        y = math.log(u / par[1]) * par[4]
    elif par[4] == 1.0:
        y = par[3] + par[1] / u
    else:
        y = par[3] + (par[1] / u) ** par[4]
    k = np.ceil(y) - 1.0
    if k < n - 1:
        k = n - 1
    if k > 4.6e18:
        return np.int64(4.6e18)
    # the ceil can land one off where y is within an ulp of an integer
    if _ext_tail(k + 1.0, par) > u:
        k += 1.0
    elif k > n - 1 and _ext_tail(k, par) <= u:
        k -= 1.0
    return np.int64(k)


@numba.njit(cache=True, inline="always")
def _ext_tail(k, par):
    if int(par[0]) == 1:
        return par[1] * par[2] ** k
    return par[1] * (k - par[3]) ** -par[2]


def sample_with(s: Sampler, u: np.ndarray) -> np.ndarray:
    return _quantile_vec(np.asarray(u, dtype=float), s.tab, s.par)


@numba.njit(cache=True)
def _quantile_vec(u, tab, par):
    out = np.empty(u.size, dtype=np.int64)
    for i in range(u.size):
        out[i] = _quantile(u[i], tab, par)
    return out


@numba.njit(cache=True, inline="always")
def _radius(key, env, tabR, parR, tabN, parN, fixedN):
    """Effective radius at a site: max over its stations (single station unless env)."""
    kR = key ^ np.uint64(0x52)
    if not env:
        return _quantile(_unif(kR, 0), tabR, parR)
    n = fixedN
    if n < 0:
        n = _quantile(_unif(key ^ np.uint64(0x4E), 0), tabN, parN)
    best = np.int64(0)
    for i in range(n):
        r = _quantile(_unif(kR, i), tabR, parR)
        if r > best:
            best = r
    return best


# --------------------------------------------------------------------------
# line kernels


@numba.njit(cache=True)
def _fireworks_line_batch(master, i0, i1, H, env, tabR, parR, tabN, parN,
                          status, spreaders, informed, reach):
    for t in range(i0, i1):
        key = _trial_key(master, t)
        m = _radius(_child(key, 0), env, tabR, parR, tabN, parN, -1)
        fired = 1
        st = DIED
        if m >= H - 1:
            st = SURVIVED
        u = 1
        while st == DIED and u <= m:
            r = _radius(_child(key, u), env, tabR, parR, tabN, parN, -1)
            if u + r > m:
                m = u + r
            fired += 1
            if m >= H - 1:
                st = SURVIVED
            u += 1
        j = t - i0
        status[j] = st
        spreaders[j] = fired
        if st == SURVIVED:
            reach[j] = H - 1
            informed[j] = H
        else:
            reach[j] = m
            informed[j] = m + 1


@numba.njit(cache=True)
def _reverse_line_batch(master, i0, i1, H, eps, tabR, parR, res, status, spreaders, informed,
                        reach, residual):
    G = res.size - 1
    for t in range(i0, i1):
        key = _trial_key(master, t)
        r = 0
        z = 0
        st = SURVIVED
        rm = 1.0
        for u in range(1, H + 1):
            R = _quantile(_unif(_child(key, u) ^ np.uint64(0x52), 0), tabR, parR)
            if u - r <= R:
                r = u
                z += 1
            else:
                g = u - r + 1
                rm = res[g] if g < G else res[G]
                if rm == 0.0:
                    st = DIED
                    break
                if rm < eps:
                    st = DEAD_BY_RESIDUAL
                    break
        if st == SURVIVED:
            g = H + 1 - r
            rm = res[g] if g < G else res[G]
        j = t - i0
        status[j] = st
        spreaders[j] = z
        informed[j] = z + 1
        reach[j] = r
        residual[j] = rm


def residual_table(R: Law, eps: float = 1e-6, g_max: int = 1 << 20) -> np.ndarray:
    """res[g] = 1 - prod_{j>=g} P(R < j), g = 0..G; entries past G are bounded by res[G]."""
    desc = R.descriptor
    smax = R.support_max
    if smax is not None:
        g = np.arange(smax + 3)
        with np.errstate(divide="ignore"):
            logs = np.log1p(-np.asarray(R.tail(g), dtype=float))
        suffix = np.cumsum(logs[::-1])[::-1]
        out = -np.expm1(suffix)
        out[smax + 1:] = 0.0
        return out
    fin = desc.mean_finite()
    if fin is False:
        return np.ones(2)
    if fin is None:
        raise SimError(f"residual product for {R.literal} is unclassifiable without a tail descriptor")
    decay = desc.tail_decay()
    G = 64
    while True:
        with np.errstate(divide="ignore"):
            head = -np.log1p(-np.asarray(R.tail(np.arange(G)), dtype=float))
        rest = sum_series(lambda k: -np.log1p(-np.asarray(R.tail(k), dtype=float)), decay, start=G,
                          tol=1e-15).value
        suffix = rest + np.cumsum(head[::-1])[::-1]
        out = -np.expm1(-np.append(suffix, rest))
        if out[-1] < eps * 1e-3 or G >= g_max:
            return out
        G *= 4


# --------------------------------------------------------------------------
# tree kernels


@numba.njit(cache=True, inline="always")
def _n_children(key, depth, gw, kids, tabD, parD):
    if gw:
        return _quantile(_unif(key ^ np.uint64(0x44), 0), tabD, parD)
    return kids[depth] if depth < kids.size else kids[kids.size - 1]


@numba.njit(cache=True)
def _cone_batch(master, i0, i1, H, max_v, gw, kids, tabD, parD, env, root_n, tabR, parR, tabN, parN,
                status, spreaders, informed, reach):
    skey = np.empty(max_v + 64, dtype=np.uint64)
    sdep = np.empty(max_v + 64, dtype=np.int64)
    spot = np.empty(max_v + 64, dtype=np.int64)
    for t in range(i0, i1):
        root = _mix(_trial_key(master, t) ^ np.uint64(0x54))
        sp = 0
        skey[0] = root
        sdep[0] = 0
        spot[0] = _radius(root, env, tabR, parR, tabN, parN, root_n)
        sp = 1
        n_inf = 1
        fired = 0
        far = 0
        st = DIED
        while sp > 0:
            sp -= 1
            key, dep, pot = skey[sp], sdep[sp], spot[sp]
            fired += 1
            if dep >= H or (not gw and dep + pot >= H):
                st = SURVIVED
                break
            if pot < 1:
                continue
            nc = _n_children(key, dep, gw, kids, tabD, parD)
            if n_inf + nc > max_v or sp + nc > skey.size:
                st = TRUNCATED
                break
            for c in range(nc):
                ck = _child(key, c)
                r = _radius(ck, env, tabR, parR, tabN, parN, -1)
                skey[sp] = ck
                sdep[sp] = dep + 1
                spot[sp] = pot - 1 if pot - 1 > r else r
                sp += 1
            n_inf += nc
            if nc > 0 and dep + 1 > far:
                far = dep + 1
        j = t - i0
        status[j] = st
        spreaders[j] = fired
        informed[j] = n_inf
        reach[j] = H if st == SURVIVED else far


@numba.njit(cache=True)
def _disk_batch(master, i0, i1, H, max_v, gw, kids, tabD, parD, tabR, parR,
                status, spreaders, informed, reach):
    vkey = np.empty(max_v, dtype=np.uint64)
    vdep = np.empty(max_v, dtype=np.int64)
    vpar = np.empty(max_v, dtype=np.int64)
    vfirst = np.empty(max_v, dtype=np.int64)
    vnc = np.empty(max_v, dtype=np.int64)
    vpot = np.empty(max_v, dtype=np.int64)
    stack = np.empty(4 * max_v, dtype=np.int64)
    for t in range(i0, i1):
        root = _mix(_trial_key(master, t) ^ np.uint64(0x54))
        vkey[0] = root
        vdep[0] = 0
        vpar[0] = -1
        vfirst[0] = -1
        vnc[0] = 0
        vpot[0] = _quantile(_unif(root ^ np.uint64(0x52), 0), tabR, parR)
        nv = 1
        n_inf = 1
        stack[0] = 0
        sp = 1
        far = 0
        st = DIED
        while sp > 0:
            sp -= 1
            w = stack[sp]
            P = vpot[w]
            dep = vdep[w]
            if dep >= H or (not gw and dep + P >= H):
                st = SURVIVED
                break
            if P < 1:
                continue
            if vfirst[w] < 0:
                nc = _n_children(vkey[w], dep, gw, kids, tabD, parD)
                if nv + nc > max_v:
                    st = TRUNCATED
                    break
                vfirst[w] = nv
                vnc[w] = nc
                for c in range(nc):
                    x = nv + c
                    vkey[x] = _child(vkey[w], c)
                    vdep[x] = dep + 1
                    vpar[x] = w
                    vfirst[x] = -1
                    vnc[x] = 0
                    vpot[x] = -1
                nv += nc
            if sp + vnc[w] + 1 > stack.size:
                st = TRUNCATED
                break
            cand = P - 1
            for c in range(-1, vnc[w]):
                x = vpar[w] if c < 0 else vfirst[w] + c
                if x < 0:
                    continue
                if vpot[x] < 0:
                    r = _quantile(_unif(vkey[x] ^ np.uint64(0x52), 0), tabR, parR)
                    vpot[x] = cand if cand > r else r
                    n_inf += 1
                    if vdep[x] > far:
                        far = vdep[x]
                    stack[sp] = x
                    sp += 1
                elif cand > vpot[x]:
                    vpot[x] = cand
                    stack[sp] = x
                    sp += 1
        j = t - i0
        status[j] = st
        spreaders[j] = n_inf
        informed[j] = n_inf
        reach[j] = H if st == SURVIVED else far


@numba.njit(cache=True)
def _reverse_cone_batch(master, i0, i1, H, max_v, gw, kids, tabD, parD, tabR, parR, bound, cut,
                        status, spreaders, informed, reach, residual):
    # pending vertices live in a pool, threaded into one stack per gap; the
    # smallest gap is expanded first so informed chains are followed early
    NB = 64
    pkey = np.empty(max_v + 64, dtype=np.uint64)
    pdep = np.empty(max_v + 64, dtype=np.int64)
    pgap = np.empty(max_v + 64, dtype=np.int64)
    pnext = np.empty(max_v + 64, dtype=np.int64)
    head = np.empty(NB + 1, dtype=np.int64)
    G = bound.size - 1
    for t in range(i0, i1):
        root = _mix(_trial_key(master, t) ^ np.uint64(0x54))
        head[:] = -1
        used = 0
        z = 0
        far = 0
        res = 0.0
        st = DIED
        nc = _n_children(root, 0, gw, kids, tabD, parD)
        for c in range(nc):
            pkey[used] = _child(root, c)
            pdep[used] = 1
            pgap[used] = 1
            pnext[used] = head[1]
            head[1] = used
            used += 1
        lowest = 1
        while True:
            while lowest <= NB and head[lowest] < 0:
                lowest += 1
            if lowest > NB:
                break
            i = head[lowest]
            head[lowest] = pnext[i]
            key, dep, gap = pkey[i], pdep[i], pgap[i]
            R = _quantile(_unif(key ^ np.uint64(0x52), 0), tabR, parR)
            if gap <= R:
                z += 1
                if dep > far:
                    far = dep
                if dep >= H:
                    st = SURVIVED
                    break
                g = 1
            else:
                g = gap + 1
            nc = _n_children(key, dep, gw, kids, tabD, parD)
            if nc == 0:
                continue
            b = bound[g] if g < G else bound[G]
            if b < cut:
                res += nc * b
                continue
            if used + nc > max_v:
                st = TRUNCATED
                break
            slot = g if g < NB else NB
            for c in range(nc):
                pkey[used] = _child(key, c)
                pdep[used] = dep + 1
                pgap[used] = g
                pnext[used] = head[slot]
                head[slot] = used
                used += 1
            if slot < lowest:
                lowest = slot
        if st == DIED and res > 0.0:
            st = DEAD_BY_RESIDUAL
        j = t - i0
        status[j] = st
        spreaders[j] = z
        informed[j] = z + 1
        reach[j] = H if st == SURVIVED else far
        residual[j] = res if res < 1.0 else 1.0


@numba.njit(cache=True)
def _coin_batch(master, i0, i1, status):
    for t in range(i0, i1):
        status[t - i0] = SURVIVED if _unif(_trial_key(master, t), 0) < 0.5 else DIED


def subtree_bound(R: Law, c: float, g_max: int = 4096) -> np.ndarray:
    """B[g] = sum_{n>=0} c^n P(R >= g + n): expected joiners below a vertex at gap g."""
    desc = R.descriptor
    rate = desc.root_rate()
    if rate is None or rate * c >= 1.0:
        return np.full(2, INF)
    g = np.arange(g_max + 1)
    if desc.kind == "finite":
        K = desc.support_max
        n = np.arange(K + 2)
        tails = np.asarray(R.tail(np.arange(g_max + K + 3)), dtype=float)
        w = c ** n.astype(float)
        return np.array([float(np.dot(w, tails[gg:gg + K + 2])) for gg in g])
    # geometric-type tail: truncate where c^n tail stops mattering
    L = int(math.ceil(math.log(1e-18) / math.log(rate * c))) + 2
    tails = np.asarray(R.tail(np.arange(g_max + L + 1)), dtype=float)
    w = c ** np.arange(L, dtype=float)
    out = np.array([float(np.dot(w, tails[gg:gg + L])) for gg in g])
    return out * (1.0 + 1e-9) + (rate * c) ** L


# --------------------------------------------------------------------------
# models and trial outcomes


@dataclass(frozen=True)
class TrialOutcome:
    status: str
    spreaders: int
    informed: int
    reach: int
    residual_mass: Optional[float] = None

    def __post_init__(self):
        if self.spreaders > self.informed:
            raise ValueError("spreaders exceed informed")
        if self.residual_mass is not None and not 0.0 <= self.residual_mass <= 1.0:
            raise ValueError("residual mass outside [0, 1]")


@dataclass
class SimModel:
    """Everything a batch kernel needs; built once and shared with workers."""

    model: str
    R: Law
    horizon: int
    N: Optional[Law] = None
    tree: Optional[TreeSpec] = None
    eps_residual: float = 1e-6
    max_vertices: int = 1 << 20
    root_rule: str = "sampled"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise SimError(f"unknown model {self.model!r}")
        if self.horizon < 1:
            raise SimError("horizon must be >= 1")
        if self.model in ("cone", "disk", "reverse_cone", "env_cone") and self.tree is None:
            raise SimError(f"model {self.model} needs a tree substrate")
        if self.model in ("env_line", "env_cone") and self.N is None:
            raise SimError(f"model {self.model} needs a station law")
        if self.model == "coin":
            return
        self._cache["R"] = make_sampler(self.R)
        self._cache["N"] = make_sampler(self.N) if self.N is not None else _sampler([1.0, 0.0])
        if self.tree is not None:
            tr = self.tree
            if tr.is_gw:
                self._cache["D"] = make_sampler(tr.offspring)
                self._cache["kids"] = np.zeros(1, dtype=np.int64)
            else:
                self._cache["D"] = _sampler([1.0, 0.0])
                self._cache["kids"] = np.array([tr.children(k) for k in range(self.horizon + 2)],
                                               dtype=np.int64)
        if self.model == "reverse_line":
            self._cache["res"] = residual_table(self.R, self.eps_residual)
        if self.model == "reverse_cone":
            tr = self.tree
            c = tr.offspring.mean() if tr.is_gw else float(max(self._cache["kids"][1:]))
            self._cache["bound"] = subtree_bound(self.R, c)

    @property
    def root_n(self) -> int:
        if self.root_rule == "sampled":
            return -1
        from .env import min_positive_support
        return min_positive_support(self.N)

    def run_block(self, master: int, i0: int, i1: int) -> dict:
        n = i1 - i0
        out = {"status": np.zeros(n, dtype=np.int8), "spreaders": np.zeros(n, dtype=np.int64),
               "informed": np.zeros(n, dtype=np.int64), "reach": np.zeros(n, dtype=np.int64)}
        m = np.uint64(master & _M64)
        c = self._cache
        H = self.horizon
        if self.model == "coin":
            _coin_batch(m, i0, i1, out["status"])
            out["informed"][:] = 1
            return out
        sR, sN = c["R"], c["N"]
        if self.model in ("fireworks_line", "env_line"):
            _fireworks_line_batch(m, i0, i1, H, self.model == "env_line", sR.tab, sR.par, sN.tab, sN.par,
                                  out["status"], out["spreaders"], out["informed"], out["reach"])
        elif self.model == "reverse_line":
            out["residual"] = np.zeros(n)
            _reverse_line_batch(m, i0, i1, H, self.eps_residual, sR.tab, sR.par, c["res"],
                                out["status"], out["spreaders"], out["informed"], out["reach"],
                                out["residual"])
        elif self.model in ("cone", "env_cone"):
            sD = c["D"]
            root_n = self.root_n if self.model == "env_cone" else -1
            _cone_batch(m, i0, i1, H, self.max_vertices, self.tree.is_gw, c["kids"], sD.tab, sD.par,
                        self.model == "env_cone", root_n, sR.tab, sR.par, sN.tab, sN.par,
                        out["status"], out["spreaders"], out["informed"], out["reach"])
        elif self.model == "disk":
            sD = c["D"]
            _disk_batch(m, i0, i1, H, self.max_vertices, self.tree.is_gw, c["kids"], sD.tab, sD.par,
                        sR.tab, sR.par, out["status"], out["spreaders"], out["informed"], out["reach"])
        elif self.model == "reverse_cone":
            sD = c["D"]
            out["residual"] = np.zeros(n)
            _reverse_cone_batch(m, i0, i1, H, self.max_vertices, self.tree.is_gw, c["kids"], sD.tab,
                                sD.par, sR.tab, sR.par, c["bound"], self.eps_residual,
                                out["status"], out["spreaders"], out["informed"], out["reach"],
                                out["residual"])
        return out

    def bias_bound(self) -> Optional[float]:
        """Analytic bound on P(survive to horizon) - P(survive), where one is available."""
        if "bias" in self._cache:
            return self._cache["bias"]
        b = None
        if self.model in ("fireworks_line", "env_line"):
            law = self.R if self.model == "fireworks_line" else annealed_radius(self.N, self.R)
            b = fireworks_horizon_bias(law, self.horizon)
        self._cache["bias"] = b
        return b


def fireworks_horizon_bias(R: Law, H: int) -> Optional[float]:
    """Bound on P(site H-1 informed) - P(V).

    sum_{j>=H} prod_{i<j} P(R <= i) when the survival series converges, else the
    reach probability itself (P(V) >= 0).
    """
    desc = R.descriptor
    z = np.nonzero(np.asarray(R.cdf(np.arange(min(H, 64)))) == 0.0)[0]
    if z.size and z[0] == 0:
        return 0.0
    conv = desc.survival_series_converges() if desc.kind != "finite" else False
    decay = _products_decay(desc) if conv else None
    if decay is not None:
        try:
            sv = sum_series(_running_products(R), decay, start=H, tol=1e-12)
            return sv.value + sv.remainder
        except SeriesError:
            pass
    return reach_probability(R, H - 1)


def reach_probability(R: Law, n: int, s_max: int = 1 << 14) -> float:
    """P(site n informed) for the direct process; exact when n <= s_max, an upper bound beyond.

    With s = max_{i<=j}(i + R_i) - j after vertex j, the process is alive while s >= 1
    and s' = max(s - 1, R_{j+1}). Radii above S are lumped into an alive-forever state.
    """
    if n <= 0:
        return 1.0
    S = min(n, s_max)
    cdf = np.asarray(R.cdf(np.arange(S + 1)), dtype=float)
    pmf = np.diff(cdf, prepend=0.0)
    beyond = 1.0 - cdf[S]
    p = pmf.copy()
    p[0] = 0.0
    far = beyond
    for _ in range(n - 1):
        q = np.empty_like(p)
        q[:S] = p[1:] * cdf[:S]
        q[S] = 0.0
        q += pmf * np.cumsum(p)
        q[0] = 0.0
        far += beyond * p.sum()
        p = q
    return float(min(1.0, p.sum() + far))


def _outcome(block: dict, j: int) -> TrialOutcome:
    res = block.get("residual")
    return TrialOutcome(STATUS_NAMES[int(block["status"][j])], int(block["spreaders"][j]),
                        int(block["informed"][j]), int(block["reach"][j]),
                        None if res is None else float(res[j]))


def _key_of(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 1 << 63))
    return int(rng)


def run_fireworks_line(R, horizon: int, rng, positions=None) -> TrialOutcome:
    """One direct-process trial on N (or on actionable positions for sequences)."""
    seed = _key_of(rng)
    if isinstance(R, SequenceLaw):
        return _fireworks_seq(R, horizon, seed)
    return _outcome(SimModel("fireworks_line", R, horizon).run_block(seed, 0, 1), 0)


def _fireworks_seq(seq: SequenceLaw, H: int, seed: int) -> TrialOutcome:
    key = trial_key(seed, 0)
    pos = np.array([seq.position(n) for n in range(H)], dtype=np.int64)
    keys = [int(_child(np.uint64(key), n)) ^ SALT_R for n in range(H)]
    m = pos[0] + seq[0].quantile(float(uniforms(keys[0], np.zeros(1))[0]))
    fired, n = 1, 1
    while n < H and pos[n] <= m and m < pos[H - 1]:
        r = seq[n].quantile(float(uniforms(keys[n], np.zeros(1))[0]))
        m = max(m, pos[n] + r)
        fired += 1
        n += 1
    if m >= pos[H - 1]:
        return TrialOutcome("survived_to_horizon", fired, H, int(pos[H - 1]))
    informed = int(np.searchsorted(pos, m, side="right"))
    return TrialOutcome("died", min(fired, informed), informed, int(m))


def run_reverse_line(R: Law, horizon: int, rng, eps_residual: float = 1e-6) -> TrialOutcome:
    if isinstance(R, SequenceLaw):
        if R.kind != "constant":
            raise SimError("reverse-line simulation of non-constant sequences is not supported")
        R = R.base
    seed = _key_of(rng)
    return _outcome(SimModel("reverse_line", R, horizon, eps_residual=eps_residual).run_block(seed, 0, 1), 0)


def run_tree_trial(model: str, spec: TreeSpec, R: Law, horizon: int, rng, N: Optional[Law] = None,
                   max_vertices: int = 1 << 20, eps_residual: float = 1e-6) -> TrialOutcome:
    if model not in ("cone", "disk", "reverse_cone", "env_cone"):
        raise SimError(f"unknown tree model {model!r}")
    seed = _key_of(rng)
    sm = SimModel(model, R, horizon, N=N, tree=spec, max_vertices=max_vertices, eps_residual=eps_residual)
    return _outcome(sm.run_block(seed, 0, 1), 0)


# --------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class Estimate:
    mean: float
    ci_low: float
    ci_high: float
    trials: int
    master_seed: int
    horizon: int
    survived: int = 0
    truncated: int = 0
    bias_bound: Optional[float] = None
    mean_spreaders: float = 0.0
    mean_informed: float = 0.0
    mean_residual: Optional[float] = None
    status_counts: tuple = ()

    def __post_init__(self):
        if not self.ci_low <= self.mean <= self.ci_high:
            raise ValueError("confidence interval does not contain the mean")


def wilson(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


_WORKER_MODEL: Optional[SimModel] = None


def _worker_block(args):
    master, i0, i1 = args
    return _WORKER_MODEL.run_block(master, i0, i1)


def run_trials(model: SimModel, trials: int, master_seed: int, workers: int = 1) -> dict:
    """Per-trial outcome arrays in trial order; identical for any worker count."""
    global _WORKER_MODEL
    if trials < 1:
        raise SimError("trials must be >= 1")
    spans = [(master_seed, i, min(i + _BLOCK, trials)) for i in range(0, trials, _BLOCK)]
    if workers <= 1 or len(spans) == 1:
        blocks = [model.run_block(*s) for s in spans]
    else:
        _WORKER_MODEL = model
        try:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
                blocks = list(ex.map(_worker_block, spans))
        finally:
            _WORKER_MODEL = None
    keys = blocks[0].keys()
    return {k: np.concatenate([b[k] for b in blocks]) for k in keys}


def estimate(model: SimModel, trials: int, master_seed: int, workers: int = 1) -> Estimate:
    out = run_trials(model, trials, master_seed, workers)
    st = out["status"]
    counts = np.bincount(st, minlength=4)
    n_eff = int(trials - counts[TRUNCATED])
    k = int(counts[SURVIVED])
    lo, hi = wilson(k, n_eff)
    keep = st != TRUNCATED
    mean = k / n_eff if n_eff else 0.0
    ms = math.fsum(out["spreaders"][keep].tolist()) / n_eff if n_eff else 0.0
    mi = math.fsum(out["informed"][keep].tolist()) / n_eff if n_eff else 0.0
    mres = None
    if "residual" in out:
        dead = st == DEAD_BY_RESIDUAL
        mres = math.fsum(out["residual"][dead].tolist()) / n_eff if n_eff else 0.0
    bias = model.bias_bound()
    if mres is not None:
        bias = mres if bias is None else bias + mres
    return Estimate(mean, min(lo, mean), max(hi, mean), trials, master_seed, model.horizon, k,
                    int(counts[TRUNCATED]), bias, ms, mi, mres, tuple(int(c) for c in counts))
