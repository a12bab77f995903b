"""Rate functions of the small-mutation large deviations and the homozygosity
functional.

All rates take values in {0, 1, 2, ...} or +inf, except the selection rate
which adds a real-valued homozygosity term.  They are returned as floats
(``math.inf`` for +inf).

Comparisons against break points 1/k (and k**-(r-1)) are exact when the
argument is a :class:`fractions.Fraction` or an int.  For floats a relative
slack of ``BOUNDARY_TOL`` is granted toward the lower rate, which matches the
right-closed orientation [1/(k+1), 1/k) of the level sets: 0.49999999999999
is treated as 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .core import (FP_TOL, OrderedFrequencies, SimplexPointM, classify_ladder,
                   classify_ladder_array, equal_weights)

BOUNDARY_TOL = 1e-12
HOMOZYGOUS = "p=(1,0,...)"

RateValue = float


def _exact(x) -> bool:
    return isinstance(x, Rational)


def _check_unit(p):
    if _exact(p):
        if not 0 <= p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        return p
    p = float(p)
    if not (-FP_TOL <= p <= 1 + FP_TOL):
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    return min(max(p, 0.0), 1.0)


def _is_one(p) -> bool:
    return p == 1 if _exact(p) else p >= 1 - BOUNDARY_TOL


def _ceil_ratio(num: float, p: float) -> int:
    """ceil(num / p), exact when the float quotient overflows."""
    q = num / p
    if math.isfinite(q):
        return math.ceil(q)
    return math.ceil(Fraction(num) / Fraction(p))


def _as_rate(n: int) -> RateValue:
    try:
        return float(n)
    except OverflowError:  # levels past the float range
        return math.inf


def _level(p) -> int:
    """Smallest n >= 1 with p >= 1/n, for p in (0, 1]."""
    if _exact(p):
        return math.ceil(Fraction(1) / Fraction(p))
    # p >= (1 - BOUNDARY_TOL) / n  <=>  n >= (1 - BOUNDARY_TOL) / p
    return max(1, _ceil_ratio(1 - BOUNDARY_TOL, p))


def rate_I(p) -> RateValue:
    """Beta(1, theta) rate: 0 at p = 1 and 1 elsewhere."""
    p = _check_unit(p)
    return 0.0 if _is_one(p) else 1.0


def rate_S1(p) -> RateValue:
    """Largest-atom rate: k on [1/(k+1), 1/k), +inf at 0."""
    p = _check_unit(p)
    if p == 0:
        return math.inf
    return _as_rate(_level(p) - 1)


def rate_In(n: int, p) -> RateValue:
    """Rate for the largest of the first n sticks: k on [1/(k+1), 1/k) for k < n, n below 1/n."""
    if n < 1:
        raise ValueError("n must be positive")
    p = _check_unit(p)
    if p == 0:
        return float(n)
    k = _level(p) - 1
    return float(k) if k <= n - 1 else float(n)


def _coords(point) -> tuple:
    if isinstance(point, SimplexPointM):
        return point.coords
    if isinstance(point, OrderedFrequencies):
        return point.freqs
    c = tuple(point)
    SimplexPointM(tuple(float(v) for v in c))  # validates ordering and mass
    return c


def _sum(values):
    if all(_exact(v) for v in values):
        return sum(values, Fraction(0))
    return math.fsum(float(v) for v in values)


def _sum_is_one(total) -> bool:
    return total == 1 if _exact(total) else abs(total - 1) <= BOUNDARY_TOL


def rate_Sm(point) -> RateValue:
    """Rate of the top-m coordinates on the finite ordered simplex."""
    c = _coords(point)
    m = len(c)
    if m == 0:
        raise ValueError("empty point")
    if _is_one(c[0]) and all(v == 0 for v in c[1:]):
        return 0.0
    for l in range(2, m + 1):
        if c[l - 1] > 0 and _sum_is_one(_sum(c[:l])) and all(v == 0 for v in c[l:]):
            return float(l - 1)
    total = _sum(c)
    if c[-1] > 0 and not _sum_is_one(total) and total < 1:
        rest = 1 - total
        ratio = c[-1] / rest
        ratio = min(ratio, Fraction(1) if _exact(ratio) else 1.0)
        return m + rate_S1(ratio)
    return math.inf


def rate_S(p: OrderedFrequencies, tol: float) -> RateValue:
    """Rate on the whole simplex: n - 1 on the n-allele layer, +inf off it."""
    cls = classify_ladder(p, tol)
    return math.inf if cls.is_none else float(cls.n - 1)


def _atoms(p):
    if isinstance(p, OrderedFrequencies):
        return p.freqs, p.residual
    if isinstance(p, SimplexPointM):
        return p.coords, 0.0
    return tuple(p), 0.0


def _check_order(r):
    if int(r) != r or r < 2:
        raise ValueError(f"r must be an integer >= 2, got {r!r}")
    return int(r)


def h_r(p, r: int) -> float:
    """Homozygosity sum_i p_i**r over the tracked atoms (a lower bound if mass is untracked)."""
    r = _check_order(r)
    freqs, _ = _atoms(p)
    if freqs and all(_exact(v) for v in freqs):
        return sum((Fraction(v) ** r for v in freqs), Fraction(0))
    return math.fsum(float(v) ** r for v in freqs)


def h_r_bounds(p, r: int) -> tuple[float, float]:
    """Interval containing H_r: the untracked mass adds between 0 and residual**r."""
    lo = h_r(p, r)
    _, res = _atoms(p)
    return lo, lo + float(res) ** _check_order(r)


def min_hr_on_Ln(n: int, r: int):
    """Minimum of H_r over the n-allele layer and its minimizer, the equal-weights point."""
    if n < 1:
        raise ValueError("n must be positive")
    r = _check_order(r)
    return float(n) ** (1 - r), equal_weights(n)


def rate_J(r: int, p) -> RateValue:
    """Homozygosity rate: n - 1 on [n**-(r-1), (n-1)**-(r-1)), 0 at 1, +inf at 0."""
    r = _check_order(r)
    p = _check_unit(p)
    if p == 0:
        return math.inf
    if _is_one(p):
        return 0.0
    if _exact(p):
        # float root as a starting guess, then exact integer steps
        inv = float(Fraction(1) / p)
        n = max(1, math.floor(inv ** (1.0 / (r - 1)))) if math.isfinite(inv) else 1
        while not p >= Fraction(1, n ** (r - 1)):
            n += 1
        while n > 1 and p >= Fraction(1, (n - 1) ** (r - 1)):
            n -= 1
        return float(n - 1)
    # p >= (1 - tol)**(r-1) / n**(r-1), the level slack taken on the root scale
    q = (1 - BOUNDARY_TOL) ** (r - 1) / p
    if not math.isfinite(q):
        return math.inf
    return _as_rate(max(1, math.ceil(q ** (1.0 / (r - 1)))) - 1)


# ---------------------------------------------------------------------------
# selection


@dataclass(frozen=True)
class TiltedSup:
    """sup{s H_r(q) - S(q)} over the simplex, with its maximizing layers."""

    s: float
    r: int
    sup_value: float
    minimizers: object        # frozenset of layer sizes n, or HOMOZYGOUS
    n_star: float             # real minimizer ((r-1)|s|)**(1/r) of |s|/n**(r-1) + n - 1
    exact: Fraction | None = None


def _layer_cost(a: Fraction, r: int, n: int) -> Fraction:
    return a / Fraction(n) ** (r - 1) + (n - 1)


def tilted_sup(s, r: int, n_max: int | None = None) -> TiltedSup:
    """Evaluate the selection supremum.

    For s > 0 it equals s, attained at the homozygous point.  For s < 0 it is
    minus the minimum over n of |s|/n**(r-1) + n - 1, found by an exact
    rational scan of n = 1..n_max; every tied minimizer is returned.

    The scan is certified rather than trusted: the cost is strictly convex
    in n, so once cost(n_max) >= cost(n_max - 1) nothing beyond n_max can
    tie or win.  ``n_max`` defaults to ceil(n_star) + 2.
    """
    r = _check_order(r)
    if s == 0:
        raise ValueError("s must be nonzero")
    sf = float(s)
    a = abs(Fraction(s))
    n_star = float((r - 1) * a) ** (1.0 / r)
    if s > 0:
        return TiltedSup(sf, r, sf, HOMOZYGOUS, n_star, Fraction(s))
    if n_max is None:
        n_max = math.ceil(n_star) + 2
    n_max = int(n_max)
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    costs = [_layer_cost(a, r, n) for n in range(1, n_max + 1)]
    if costs[-1] < costs[-2]:
        raise ValueError(f"n_max={n_max} does not bracket the minimizer (n_star={n_star:.4g}); "
                         f"use n_max >= {math.ceil(n_star) + 2}")
    best = min(costs)
    mins = frozenset(n for n, c in enumerate(costs, start=1) if c == best)
    return TiltedSup(sf, r, float(-best), mins, n_star, -best)


def rate_Sprime(s, r: int, regime: str, p: OrderedFrequencies, tol: float) -> RateValue:
    """Rate under symmetric selection exp(s alpha H_r).

    ``regime`` is "vanishing" (selection intensity negligible on the LDP
    scale) or "critical" (intensity exactly the inverse speed).  H_r is the
    tracked-atom value.
    """
    r = _check_order(r)
    base = rate_S(p, tol)
    if regime == "vanishing":
        return base
    if regime != "critical":
        raise ValueError(f"unknown regime {regime!r}")
    if s == 0:
        raise ValueError("s must be nonzero")
    if math.isinf(base):
        return math.inf
    h = float(h_r(p, r))
    if s > 0:
        return base + float(s) * (1 - h)
    sup = tilted_sup(s, r)
    return base + abs(float(s)) * h + sup.sup_value


def rate_Sprime_batch(s, r: int, regime: str, freqs: np.ndarray, tol: float) -> np.ndarray:
    """Vectorized :func:`rate_Sprime` over zero-padded descending rows."""
    freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
    n = classify_ladder_array(freqs, tol)
    base = np.where(n > 0, n - 1.0, np.inf)
    if regime == "vanishing":
        return base
    if regime != "critical":
        raise ValueError(f"unknown regime {regime!r}")
    h = np.sum(freqs ** _check_order(r), axis=1)
    if s > 0:
        return base + s * (1 - h)
    return base + abs(s) * h + tilted_sup(s, r).sup_value
