"""Truncated evaluation of slowly or quickly convergent positive series."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

TERM_FLOOR = 1e-14
DEFAULT_TOL = 1e-12
MAX_TERMS = 1 << 25


class SeriesError(ArithmeticError):
    """Raised when a series cannot be summed to the requested accuracy."""


@dataclass(frozen=True)
class Decay:
    """Asymptotic decay class of a series' terms.

    kind is one of ``finite`` (terms vanish past ``last``), ``geometric``
    (term ratio eventually at most ``rate``), ``power`` (terms ~ C k^-rate,
    rate > 1) or ``fast`` (faster than any power, e.g. stretched exponential).
    """

    kind: str
    rate: float = 0.0
    last: int = 0


@dataclass(frozen=True)
class SeriesValue:
    value: float
    remainder: float
    terms: int


def sum_series(
    terms: Callable[[np.ndarray], np.ndarray],
    decay: Decay,
    start: int = 0,
    tol: float = DEFAULT_TOL,
    max_terms: int = MAX_TERMS,
) -> SeriesValue:
    """Sum ``terms(k)`` for k >= start.

    ``terms`` takes an integer array and returns the (non-negative) terms.
    For power decay the remainder is replaced by its leading asymptotic
    estimate and the reported remainder is the size of the correction's
    own uncertainty.
    """
    if decay.kind == "power" and decay.rate <= 1.0:
        raise SeriesError(f"power decay with exponent {decay.rate} <= 1 diverges")
    if decay.kind == "finite":
        k = np.arange(start, max(start, decay.last + 1), dtype=np.int64)
        vals = terms(k) if k.size else np.zeros(0)
        return SeriesValue(math.fsum(vals.tolist()), 0.0, int(k.size))

    parts: list[float] = []
    lo = start
    size = 1024
    prev_tail_est = None
    while True:
        k = np.arange(lo, lo + size, dtype=np.int64)
        vals = np.asarray(terms(k), dtype=float)
        parts.append(math.fsum(vals.tolist()))
        lo += size
        last = float(vals[-1])
        n_done = lo - start
        if decay.kind == "geometric":
            rate = decay.rate
            if vals.size > 1 and vals[-2] > 0:
                rate = max(rate, float(vals[-1] / vals[-2]))
            if rate >= 1.0:
                rem = math.inf
            else:
                rem = last * rate / (1.0 - rate)
            if last < TERM_FLOOR and rem < tol:
                return SeriesValue(math.fsum(parts), rem, n_done)
        elif decay.kind == "power":
            s = decay.rate
            j = lo - 1
            tail_est = last * (j / (s - 1.0) - 0.5)
            err = abs(tail_est) / max(j, 1) * 4.0
            if prev_tail_est is not None and err < tol:
                return SeriesValue(math.fsum(parts) + tail_est, err, n_done)
            prev_tail_est = tail_est
            if n_done >= max_terms:
                if err < math.sqrt(tol):
                    return SeriesValue(math.fsum(parts) + tail_est, err, n_done)
                raise SeriesError(f"power series not resolved after {n_done} terms (err {err:.2e})")
        elif decay.kind == "fast":
            rem = last * max(lo, 1)
            if last < TERM_FLOOR * 1e-3 and rem < tol:
                return SeriesValue(math.fsum(parts), rem, n_done)
        else:
            raise SeriesError(f"unknown decay kind {decay.kind!r}")
        if n_done >= max_terms:
            raise SeriesError(f"series not resolved after {n_done} terms")
        size = min(size * 2, 1 << 22)


def log_cumprod(factors: np.ndarray, offset: float = 0.0) -> np.ndarray:
    """Running products of ``factors`` in log space, continued from ``offset``."""
    with np.errstate(divide="ignore"):
        logs = np.log(factors)
    return offset + np.cumsum(logs)
