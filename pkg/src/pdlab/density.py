"""Density and distribution function of the largest PD(theta) atom.

The density g of P_1 satisfies

    g(p) p (1 - p)**(1 - theta) = theta * F(min(p / (1 - p), 1)),

with F the distribution function.  On (1/2, 1] the right side is theta, so g
is explicit there; on (1/(k+1), 1/k] the argument p/(1-p) falls in the
interval above, so the table is filled top-down one interval at a time.

Each interval is parametrized by the distance ``t`` to its right end point
(``p = 1/k - t``).  Panels are graded geometrically toward ``t = 0`` where
the solution is singular, and carry Gauss-Legendre nodes.  Nodal values of
F are obtained by spectral cumulative integration and interpolated
barycentrically inside each panel.

Everything is arranged so that small probabilities keep relative accuracy:
F on (1/2, 1) is evaluated in a cancellation-free form, and deeper values
come from a positive integral identity rather than from ``F(1/k) - mass``.
This is what makes log P{P_1 <= x} usable down to theta ~ 1e-8.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as L

from .core import SimplexPointM, check_theta

ORDER = 16
T_MIN_REL = 1e-16
DEFAULT_K = 8
DEFAULT_POINTS = 2048
QUAD_TOL = 1e-9
TABLE_TAIL_TOL = 1e-6


class NormalizationError(RuntimeError):
    """The tabulated density does not integrate to one within tolerance."""


class OutOfTableError(ValueError):
    """A query falls below the solved region (1/(K+1), 1]."""


# ---------------------------------------------------------------------------
# reference panel machinery


@dataclass(frozen=True)
class _Reference:
    x: np.ndarray
    w: np.ndarray
    integ: np.ndarray   # integ[i, j] = int_{-1}^{x_i} l_j
    bary: np.ndarray


def _reference(order: int) -> _Reference:
    x, w = L.leggauss(order)
    V = L.legvander(x, order - 1)
    A = np.empty((order, order))
    for k in range(order):
        e = np.zeros(order)
        e[k] = 1.0
        A[:, k] = L.legval(x, L.legint(e, lbnd=-1))
    integ = A @ np.linalg.inv(V)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    bary /= np.abs(bary).max()
    return _Reference(x, w, integ, bary)


_REFS: dict[int, _Reference] = {}


def _ref(order: int) -> _Reference:
    if order not in _REFS:
        _REFS[order] = _reference(order)
    return _REFS[order]


def _panel_edges(length: float, n_panels: int, tmin: float = T_MIN_REL) -> np.ndarray:
    if n_panels == 1:
        return np.array([0.0, length])
    return np.concatenate([[0.0], length * np.geomspace(tmin, 1.0, n_panels)])


@dataclass
class _Interval:
    """One interval (1/(k+1), 1/k] in local coordinates t = 1/k - p."""

    k: int
    edges: np.ndarray
    t: np.ndarray          # (P, n) nodes
    g: np.ndarray          # (P, n) density at nodes
    F: np.ndarray          # (P, n) distribution function at nodes
    F_right: float         # F(1/k)
    F_left: float          # F(1/(k+1))
    continuity_gap: float = 0.0   # relative mismatch of F(1/k) computed from both sides

    @property
    def length(self) -> float:
        return self.edges[-1]

    @property
    def p(self) -> np.ndarray:
        return 1.0 / self.k - self.t


def _n_panels(points: int) -> int:
    return max(1, points // min(ORDER, points))


def _layout(k: int, points: int, tmin: float = T_MIN_REL):
    order = min(ORDER, points)
    n_panels = _n_panels(points)
    length = 1.0 / k - 1.0 / (k + 1)
    edges = _panel_edges(length, n_panels, tmin)
    ref = _ref(order)
    a, b = edges[:-1, None], edges[1:, None]
    t = a + (b - a) * (ref.x[None, :] + 1) / 2
    return order, edges, t


def _cumulative(values: np.ndarray, edges: np.ndarray, order: int):
    """Integral from t=0 to each node, and the full-panel integrals."""
    ref = _ref(order)
    half = (edges[1:] - edges[:-1])[:, None] / 2
    partial = (values @ ref.integ.T) * half
    full = (values @ ref.w) * half[:, 0]
    before = np.concatenate([[0.0], np.cumsum(full)[:-1]])
    return before[:, None] + partial, full


def _interp(iv: _Interval, t: np.ndarray, values: np.ndarray, order: int) -> np.ndarray:
    """Barycentric interpolation of nodal ``values`` at local coordinates ``t``."""
    ref = _ref(order)
    t = np.asarray(t, dtype=float)
    idx = np.clip(np.searchsorted(iv.edges, t, side="right") - 1, 0, len(iv.edges) - 2)
    nodes = iv.t[idx]
    vals = values[idx]
    diff = t[..., None] - nodes
    exact = diff == 0
    diff = np.where(exact, 1.0, diff)
    c = ref.bary / diff
    out = (c * vals).sum(axis=-1) / c.sum(axis=-1)
    hit = exact.any(axis=-1)
    if np.any(hit):
        out = np.where(hit, (vals * exact).sum(axis=-1), out)
    return out


# ---------------------------------------------------------------------------
# closed forms on (1/2, 1]


def _tail_top(theta: float, t: np.ndarray) -> np.ndarray:
    """P{P_1 > 1 - t} = theta * sum_j t**(theta+j)/(theta+j) for 0 <= t <= 1/2."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    total = np.zeros_like(tp)
    term_pow = tp ** theta
    for j in range(200):
        term = theta * term_pow / (theta + j)
        total += term
        if np.all(term <= 1e-18 * total):
            break
        term_pow = term_pow * tp
    out[pos] = total
    return out


def _top_density(theta: float, t: np.ndarray) -> np.ndarray:
    """g(1 - t) = theta t**(theta-1) / (1 - t)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return theta * t ** (theta - 1) / (1 - t)


def _h_cf(theta: float, s: np.ndarray) -> np.ndarray:
    """((1-s)**theta - s**theta) / (1-s), evaluated without cancellation for s <= 1/2."""
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    pos = s > 0
    sp = s[pos]
    out[pos] = sp ** theta * np.expm1(theta * np.log1p(-sp) - theta * np.log(sp)) / (1 - sp)
    return out


def _diff_cf(theta: float, t: np.ndarray) -> np.ndarray:
    """(1-t)**theta - t**theta for 0 <= t <= 1/2, cancellation-free."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = tp ** theta * np.expm1(theta * (np.log1p(-tp) - np.log(tp)))
    return out


def _solve_top(theta: float, points: int) -> _Interval:
    order, edges, t = _layout(1, points, T_MIN_REL)
    tail = _tail_top(theta, t)
    ib, full = _cumulative(_h_cf(theta, t), edges, order)
    f_cf = _diff_cf(theta, t) + theta * ib
    first_panel = np.zeros_like(t, dtype=bool)
    if len(edges) > 2:
        first_panel[0] = True
    F = np.where((tail <= 0.5) | first_panel, 1.0 - tail, f_cf)
    g = _top_density(theta, t)
    # F(1/2): the explicit difference vanishes at t = 1/2
    F_half = theta * math.fsum(full)
    return _Interval(1, edges, t, g, F, 1.0, float(F_half))


# ---------------------------------------------------------------------------
# the table


@dataclass
class DensityTable:
    """Piecewise representation of the law of P_1 on (1/(K+1), 1]."""

    theta: float
    K: int
    points: int
    intervals: list = field(repr=False)

    @property
    def breakpoints(self) -> np.ndarray:
        return 1.0 / np.arange(1, self.K + 2)

    @property
    def order(self) -> int:
        return min(ORDER, self.points)

    @property
    def floor(self) -> float:
        """Lower end 1/(K+1) of the solved region."""
        return 1.0 / (self.K + 1)

    @property
    def tail_mass(self) -> float:
        """P{P_1 <= 1/(K+1)}: mass below the solved region."""
        return self.intervals[-1].F_left

    def grid(self):
        """Rows (k, p, g, cdf) ordered by interval and increasing distance from 1/k."""
        for iv in self.intervals:
            for p, g, F in zip(iv.p.ravel(), iv.g.ravel(), iv.F.ravel()):
                yield iv.k, float(p), float(g), float(F)

    def _interval_cdf(self, k: int, t) -> np.ndarray:
        iv = self.intervals[k - 1]
        t = np.asarray(t, dtype=float)
        if k == 1:
            tail = _tail_top(self.theta, t)
            direct = (tail <= 0.5) | (t <= iv.edges[1]) if len(iv.edges) > 2 else tail <= 0.5
            out = np.where(direct, 1.0 - tail, 0.0)
            if not np.all(direct):
                out = np.where(direct, out, _interp(iv, t, iv.F, self.order))
            return out
        out = _interp(iv, t, iv.F, self.order)
        out = np.where(t <= 0, iv.F_right, out)
        return np.where(t >= iv.length, iv.F_left, out)

    def cdf(self, x) -> np.ndarray:
        """Vectorized P{P_1 <= x}."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.floor * (1 - 1e-15)):
            raise OutOfTableError(
                f"query below solved region 1/(K+1) = {self.floor!r}; increase K")
        out = np.ones_like(x)
        k = np.clip(np.ceil(1.0 / np.minimum(x, 1.0) - 1e-15).astype(int) - 1, 1, self.K)
        k = np.where(x >= 1, 0, np.maximum(k, 1))
        for kk in np.unique(k):
            if kk == 0:
                continue
            sel = k == kk
            t = np.clip(1.0 / kk - x[sel], 0.0, self.intervals[kk - 1].length)
            out[sel] = self._interval_cdf(int(kk), t)
        return out

    def pdf(self, p) -> np.ndarray:
        """g(p) from the functional equation (exact given F)."""
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        top = p > 0.5
        out[top] = _top_density(self.theta, 1.0 - p[top])
        low = ~top & (p > 0)
        if np.any(low):
            pl = p[low]
            y = pl / (1 - pl)
            out[low] = self.theta * (1 - pl) ** (self.theta - 1) / pl * self.cdf(y)
        return out

    def pdf_interpolated(self, p) -> np.ndarray:
        """g(p) interpolated from nodal values; reflects grid resolution."""
        p = np.asarray(p, dtype=float)
        out = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            x = p[idx]
            if x > 0.5:
                out[idx] = _top_density(self.theta, np.array(1.0 - x))
                continue
            kk = int(min(self.K, max(2, math.ceil(1.0 / x - 1e-15) - 1)))
            out[idx] = self._interval_pdf(kk, np.array([1.0 / kk - x]))[0]
        return out

    def _interval_pdf(self, k: int, t: np.ndarray) -> np.ndarray:
        """g on interval k at local coordinates t.

        Barycentric from the nodes, except on the innermost panel where g
        inherits the t**theta singularity of the interval above and is
        evaluated from it directly.
        """
        t = np.asarray(t, dtype=float)
        if k == 1:
            return _top_density(self.theta, t)
        iv = self.intervals[k - 1]
        out = _interp(iv, t, iv.g, self.order)
        inner = t < iv.edges[1]
        if np.any(inner):
            ti = t[inner]
            q = 1.0 - (1.0 / k - ti)
            F_up = self._interval_cdf(k - 1, k * ti / ((k - 1) * q))
            out[inner] = self.theta * q ** (self.theta - 1) / (1.0 / k - ti) * F_up
        return out

    # -- serialization ---------------------------------------------------

    def header(self) -> dict:
        return {"theta": self.theta, "K": self.K, "points": self.points,
                "order": self.order, "t_min_rel": T_MIN_REL}

    def dump(self, path_or_file, config: dict | None = None) -> None:
        """CSV with columns k, p, g, cdf; layout parameters in a comment header."""
        own = isinstance(path_or_file, str)
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            meta = {"table": self.header(), "F_right": [iv.F_right for iv in self.intervals],
                    "F_left": [iv.F_left for iv in self.intervals],
                    "continuity_gap": [iv.continuity_gap for iv in self.intervals]}
            if config is not None:
                meta["config"] = config
            fh.write("# " + json.dumps(meta, allow_nan=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "p", "g", "cdf"])
            for k, p, g, F in self.grid():
                w.writerow([k, repr(p), repr(g), repr(F)])
        finally:
            if own:
                fh.close()

    @classmethod
    def load(cls, path_or_file) -> "DensityTable":
        own = isinstance(path_or_file, str)
        fh = open(path_or_file, newline="") if own else path_or_file
        try:
            first = fh.readline()
            if not first.startswith("#"):
                raise ValueError("missing table header")
            meta = json.loads(first[1:])
            head = meta["table"]
            if (head["order"] != min(ORDER, head["points"])
                    or head["t_min_rel"] != T_MIN_REL):
                raise ValueError("table layout incompatible with this version")
            rows = list(csv.DictReader(fh))
        finally:
            if own:
                fh.close()
        theta, K, points = float(head["theta"]), int(head["K"]), int(head["points"])
        ks = np.array([int(r["k"]) for r in rows])
        gs = np.array([float(r["g"]) for r in rows])
        Fs = np.array([float(r["cdf"]) for r in rows])
        intervals = []
        for k in range(1, K + 1):
            _, edges, t = _layout(k, points)
            sel = ks == k
            if sel.sum() != t.size:
                raise ValueError(f"interval {k}: expected {t.size} rows, got {sel.sum()}")
            intervals.append(_Interval(k, edges, t, gs[sel].reshape(t.shape), Fs[sel].reshape(t.shape),
                                       float(meta["F_right"][k - 1]), float(meta["F_left"][k - 1]),
                                       float(meta["continuity_gap"][k - 1])))
        return cls(theta, K, points, intervals)


def solve_g1(theta: float, K: int = DEFAULT_K,
             grid_points_per_interval: int = DEFAULT_POINTS, *, check: bool = True) -> DensityTable:
    """Tabulate the law of P_1 on (1/(K+1), 1], top interval first.

    On each deeper interval the density comes straight from the functional
    equation, and the distribution function from the equivalent positive form

        F(x) = theta x**theta * int_x^{x/(1-x)} F(s) s**(-1-theta) ds,

    solved panel by panel as a Volterra equation.  No step subtracts nearly
    equal numbers, so F keeps its relative accuracy however small it gets.

    Raises :class:`NormalizationError` when the tabulated density fails to
    integrate to one within tolerance.
    """
    theta = check_theta(theta)
    if K < 2:
        raise ValueError("K must be at least 2")
    if grid_points_per_interval < 2:
        raise ValueError("need at least two grid points per interval")
    points = int(grid_points_per_interval)
    intervals = [_solve_top(theta, points)]
    for k in range(2, K + 1):
        intervals.append(_solve_interval(theta, k, points, intervals))
    table = DensityTable(theta, K, points, intervals)
    if check:
        _check_table(table)
    return table


def _solve_interval(theta, k, points, intervals):
    order, edges, t = _layout(k, points, T_MIN_REL)
    ref = _ref(order)
    prev = intervals[-1]
    x = 1.0 / k - t
    q = 1.0 - x
    # y = x/(1-x) in the local coordinate of interval k-1
    t_up = k * t / ((k - 1) * q)
    F_up = _partial_table(theta, intervals, points)._interval_cdf(k - 1, t_up)
    g = theta * q ** (theta - 1) / x * F_up
    # A(t) = int_{1/k}^{y(t)} F(s) s**(-1-theta) ds, written over interval k
    half = (edges[1:] - edges[:-1])[:, None] / 2
    a = g * x ** (-theta) / theta
    rev = ref.w[None, :] - ref.integ
    full_a = (a @ ref.w) * half[:, 0]
    after = np.concatenate([np.cumsum(full_a[::-1])[::-1][1:], [0.0]])
    A = after[:, None] + (a @ rev.T) * half
    A_right = float(math.fsum(full_a))
    # Volterra part V(t) = int_0^t F(s(tau)) s**(-1-theta) dtau
    D = theta * x ** theta
    e = x ** (-1 - theta)
    F = np.empty_like(t)
    V0 = 0.0
    eye = np.eye(order)
    for i in range(t.shape[0]):
        M = eye - D[i][:, None] * (half[i, 0] * ref.integ) * e[i][None, :]
        F[i] = np.linalg.solve(M, D[i] * (A[i] + V0))
        V0 += half[i, 0] * float(np.dot(ref.w, F[i] * e[i]))
    F_right = prev.F_left
    F_left = theta * (1.0 / (k + 1)) ** theta * V0
    # the same value F(1/k) reached from interval k; their gap is a diagnostic
    gap = abs(theta * (1.0 / k) ** theta * A_right - F_right) / F_right if F_right > 0 else 0.0
    return _Interval(k, edges, t, g, F, F_right, float(F_left), continuity_gap=float(gap))


def _partial_table(theta, intervals, points):
    return DensityTable(theta, len(intervals), points, intervals)


def _check_table(table: DensityTable) -> None:
    for iv in table.intervals:
        if not (iv.F_left >= 0 and np.all(iv.g >= 0)):
            raise NormalizationError(
                f"interval {iv.k}: negative density or distribution function "
                f"(F(1/{iv.k + 1}) = {iv.F_left!r}); lower K or refine the grid")
    err = abs(normalization(table) - 1.0)
    if err > QUAD_TOL + TABLE_TAIL_TOL:
        raise NormalizationError(f"density integrates to 1 {err:+.3e}; refine the grid")


def integral(table: DensityTable) -> float:
    """Quadrature of g over the solved region, from nodal density values."""
    theta = table.theta
    top = table.intervals[0]
    ref = _ref(table.order)
    half = (top.edges[1:] - top.edges[:-1]) / 2
    panels = (top.g @ ref.w) * half
    if len(top.edges) > 2:
        # the first panel holds the integrable singularity at p = 1
        panels[0] = _tail_top(theta, np.array([top.edges[1]]))[0]
    total = math.fsum(panels)
    for iv in table.intervals[1:]:
        half = (iv.edges[1:] - iv.edges[:-1]) / 2
        total += math.fsum((iv.g @ ref.w) * half)
    return total


def normalization(table: DensityTable) -> float:
    """Integral over the solved region plus the mass below it."""
    return integral(table) + table.tail_mass


def cdf_p1(table: DensityTable, x: float) -> float:
    """P{P_1 <= x} for x >= 1/(K+1)."""
    return float(table.cdf(np.array(float(x))))


def check_functional_eq(table: DensityTable, *, relative: bool = False,
                        probes: bool = True) -> float:
    """Largest violation of g(p) p (1-p)**(1-theta) = theta F(min(p/(1-p), 1)).

    Evaluated with the stored nodal density at every grid point and, when
    ``probes`` is set, with the interpolated density halfway between
    neighbouring nodes.  Nothing is clamped; a coarse grid shows up here.
    """
    theta = table.theta
    worst = 0.0
    for iv in table.intervals:
        pts = [(iv.t.ravel(), iv.g.ravel())]
        if probes and iv.k >= 2:
            mid = ((iv.t[:, 1:] + iv.t[:, :-1]) / 2).ravel()
            pts.append((mid, table._interval_pdf(iv.k, mid)))
        for tt, gg in pts:
            # local coordinates throughout; p itself does not resolve t near 1/k
            pp = 1.0 / iv.k - tt
            qq = tt if iv.k == 1 else 1.0 - pp
            keep = qq > 0
            tt, pp, qq, gg = tt[keep], pp[keep], qq[keep], gg[keep]
            lhs = gg * pp * qq ** (1 - theta)
            if iv.k == 1:
                rhs = np.full_like(lhs, theta)
            else:
                t_up = iv.k * tt / ((iv.k - 1) * qq)
                rhs = theta * table._interval_cdf(iv.k - 1, t_up)
            res = np.abs(lhs - rhs)
            if relative:
                res = res / np.maximum(np.abs(rhs), np.finfo(float).tiny)
            if res.size:
                worst = max(worst, float(res.max()))
    return worst


def joint_density(theta: float, point: SimplexPointM, table: DensityTable) -> float:
    """Joint density of the top m atoms at an interior point of the ordered simplex."""
    if abs(table.theta - theta) > 1e-15 * max(1.0, theta):
        raise ValueError("table was solved for a different theta")
    if not point.is_interior():
        return 0.0
    c = point.coords
    rest = 1.0 - math.fsum(c)
    arg = min(c[-1] / rest, 1.0)
    m = len(c)
    return (theta ** m * rest ** (theta - 1) / math.prod(c)) * cdf_p1(table, arg)


def _inner_box(table, x1, c, d, xg, wg):
    """int_c^d of the joint density in p2 at fixed p1 = x1, in u = (1 - x1 - p2)**theta."""
    theta = table.theta
    u_lo, u_hi = (1 - x1 - d) ** theta, (1 - x1 - c) ** theta
    u = u_lo + (u_hi - u_lo) * (xg + 1) / 2
    rest = u ** (1.0 / theta)
    x2 = 1 - x1 - rest
    arg = np.where(rest > 0, np.minimum(x2 / np.where(rest > 0, rest, 1.0), 1.0), 1.0)
    f = theta / (x1 * x2) * table.cdf(np.maximum(arg, table.floor))
    return (u_hi - u_lo) / 2 * np.dot(wg, f)


def box2_probability(table: DensityTable, p1_range, p2_range, n_outer: int = 64,
                     n_inner: int = 64) -> float:
    """P{P_1 in p1_range, P_2 in p2_range} by 2-d quadrature of the joint density.

    The inner integral over p2 uses the variable u = (1 - p1 - p2)**theta,
    which absorbs the boundary singularity at p1 + p2 = 1.
    """
    theta = table.theta
    a1, b1 = map(float, p1_range)
    a2, b2 = map(float, p2_range)
    xg, wg = L.leggauss(n_inner)
    xo, wo = L.leggauss(n_outer)
    # outer breakpoints where the inner upper limit min(b2, p1, 1 - p1) switches form
    cuts = sorted({a1, b1, *[c for c in (0.5, b2, 1 - b2, a2, 1 - a2) if a1 < c < b1]})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        p1 = lo + (hi - lo) * (xo + 1) / 2
        inner = np.zeros_like(p1)
        for i, x1 in enumerate(p1):
            top = min(b2, x1, 1 - x1)
            if top <= a2:
                continue
            # F(x2 / rest) has kinks where x2 / rest = 1/k; split there
            kinks = (1 - x1) / np.arange(2, table.K + 2)
            ends = np.unique(np.concatenate([[a2, top], kinks[(kinks > a2) & (kinks < top)]]))
            for c, d in zip(ends[:-1], ends[1:]):
                inner[i] += _inner_box(table, x1, c, d, xg, wg)
        total += (hi - lo) / 2 * np.dot(wo, inner)
    return float(total)
