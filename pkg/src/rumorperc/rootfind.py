"""Smallest fixed point of a non-decreasing map of [0, 1] into itself."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10 ** 6


class FixedPointError(ArithmeticError):
    pass


@dataclass
class FixedPointProblem:
    g: Callable[[float], float]
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    # pgf-type maps are convex; this permits secant acceleration from below
    convex: bool = True


@dataclass(frozen=True)
class FixedPointResult:
    value: float
    iterations: int
    residual: float
    accelerated: bool


def _check_range(y: float, tol: float) -> float:
    if not (-tol <= y <= 1.0 + tol):
        raise FixedPointError(f"map left [0,1]: g(t) = {y!r}")
    return min(max(y, 0.0), 1.0)


def smallest_fixed_point(p: FixedPointProblem) -> FixedPointResult:
    """Monotone iteration t <- g(t) from t = 0.

    For convex maps, slow (near-tangent) progress switches to secant steps
    built from the last two iterates; on a convex map the secant slope
    under-estimates g' so the step never passes the smallest root.
    """
    g, tol = p.g, p.tol
    t_prev, t = 0.0, _check_range(g(0.0), tol)
    g_prev, g_t = t, None
    accelerated = False
    for it in range(1, p.max_iter + 1):
        g_t = _check_range(g(t), tol)
        step = g_t - t
        if step < -10 * tol:
            raise FixedPointError("iterates decreased; map is not non-decreasing")
        t_next = g_t
        if p.convex and t > t_prev:
            slope = (g_t - g_prev) / (t - t_prev)
            if 0.5 < slope < 1.0:
                cand = t + step / (1.0 - slope)
                if cand <= 1.0:
                    g_c = _check_range(g(cand), tol)
                    if g_c - cand >= -10 * tol:
                        t_next = max(cand, g_t)
                        accelerated = True
        if t_next - t < tol:
            t_fin = max(t_next, t)
            return FixedPointResult(t_fin, it, abs(g(t_fin) - t_fin), accelerated)
        t_prev, g_prev = t, g_t
        t = t_next
    raise FixedPointError(
        f"no convergence within {p.max_iter} iterations (near-tangent map?), last t={t!r}")


def bisect_sign_change(h: Callable[[float], float], lo: float, hi: float, grid: int = 4096):
    """Leftmost sub-interval of a uniform grid on [lo, hi] where h changes sign (test oracle)."""
    prev_x, prev_h = lo, h(lo)
    for i in range(1, grid + 1):
        x = lo + (hi - lo) * i / grid
        hx = h(x)
        if prev_h > 0 > hx or prev_h < 0 < hx or hx == 0.0:
            a, b = prev_x, x
            ha = prev_h
            for _ in range(200):
                m = 0.5 * (a + b)
                hm = h(m)
                if hm == 0.0:
                    return m
                if (hm > 0) == (ha > 0):
                    a, ha = m, hm
                else:
                    b = m
            return 0.5 * (a + b)
        prev_x, prev_h = x, hx
    return None
