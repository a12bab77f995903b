"""Points of the infinite ordered simplex and their finite projections.

Every frequency vector in the package is an :class:`OrderedFrequencies`:
a finite descending list of positive atoms plus the untracked mass that
was not resolved into atoms.  Zeros are never stored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FP_TOL = 1e-9


def check_theta(theta: float, *, ldp: bool = False) -> float:
    """Validate a mutation rate; ``ldp=True`` also demands theta < 1."""
    theta = float(theta)
    if not (theta > 0 and math.isfinite(theta)):
        raise ValueError(f"theta must be a positive finite number, got {theta!r}")
    if ldp and not theta < 1:
        raise ValueError(f"the LDP speed needs theta < 1, got {theta!r}")
    return theta


def speed(theta: float) -> float:
    """LDP speed ``1 / (-log theta)``."""
    theta = check_theta(theta, ldp=True)
    return -1.0 / math.log(theta)


@dataclass(frozen=True)
class MutationRate:
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", check_theta(self.theta))

    @property
    def speed(self) -> float:
        return speed(self.theta)


@dataclass(frozen=True)
class OrderedFrequencies:
    """Descending atoms ``freqs`` and the mass ``residual`` held by untracked atoms."""

    freqs: tuple[float, ...]
    residual: float = 0.0

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.freqs)
        residual = float(self.residual)
        if any(not math.isfinite(f) for f in freqs) or not math.isfinite(residual):
            raise ValueError("frequencies must be finite")
        if any(f <= 0 for f in freqs):
            raise ValueError("stored atoms must be strictly positive (zeros are implied)")
        if any(a < b for a, b in zip(freqs, freqs[1:])):
            raise ValueError("atoms must be in descending order")
        if freqs and freqs[0] > 1 + FP_TOL:
            raise ValueError("atoms cannot exceed 1")
        if not 0 <= residual < 1 + FP_TOL:
            raise ValueError(f"residual must lie in [0, 1), got {residual!r}")
        if math.fsum(freqs) + residual > 1 + FP_TOL:
            raise ValueError("total mass exceeds 1")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "residual", residual)

    def __len__(self):
        return len(self.freqs)

    def __getitem__(self, k: int) -> float:
        """Zero-based coordinate access with the implied trailing zeros."""
        if k < 0:
            raise IndexError("negative coordinates are not defined")
        return self.freqs[k] if k < len(self.freqs) else 0.0

    @property
    def mass(self) -> float:
        return math.fsum(self.freqs)

    def top(self, m: int) -> np.ndarray:
        """First ``m`` coordinates, zero padded."""
        out = np.zeros(m)
        k = min(m, len(self.freqs))
        out[:k] = self.freqs[:k]
        return out

    def to_text(self) -> str:
        return ",".join(repr(f) for f in self.freqs) + f";residual={self.residual!r}"

    @classmethod
    def from_text(cls, text: str) -> "OrderedFrequencies":
        body, _, res = text.strip().partition(";residual=")
        freqs = tuple(float(v) for v in body.split(",") if v.strip())
        return cls(freqs, float(res) if res else 0.0)

    def __str__(self):
        return self.to_text()


@dataclass(frozen=True)
class SimplexPointM:
    """A point of the finite ordered simplex: m descending coordinates with sum <= 1."""

    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(self.coords)
        if not coords:
            raise ValueError("m must be positive")
        if any(c < 0 for c in coords):
            raise ValueError("coordinates must be nonnegative")
        if any(a < b for a, b in zip(coords, coords[1:])):
            raise ValueError("coordinates must be in descending order")
        if sum(coords) > 1 + FP_TOL:
            raise ValueError("coordinates sum to more than 1")
        object.__setattr__(self, "coords", coords)

    @property
    def m(self) -> int:
        return len(self.coords)

    def is_interior(self) -> bool:
        """Strict ordering, strictly positive, sum strictly below 1."""
        c = self.coords
        return (c[-1] > 0 and all(a > b for a, b in zip(c, c[1:]))
                and c[0] < 1 and sum(c) < 1)


def project_m(p: OrderedFrequencies, m: int) -> SimplexPointM:
    return SimplexPointM(tuple(p[k] for k in range(m)))


@dataclass(frozen=True)
class LadderClass:
    n: int | None
    tolerance: float

    @property
    def is_none(self) -> bool:
        return self.n is None

    def __str__(self):
        return "none" if self.n is None else str(self.n)


def sort_truncate(values: Iterable[float], eps: float,
                  residual: float | None = None) -> OrderedFrequencies:
    """Sort atoms in descending order and move those below ``eps`` into the residual.

    If ``residual`` is None the input is treated as a full-mass draw and the
    residual becomes ``1 - sum(kept)``; otherwise the dropped atoms are added
    to the given residual.  ``eps=0`` keeps every positive atom.
    """
    vals = np.asarray(list(values), dtype=float)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if vals.size and (not np.all(np.isfinite(vals)) or vals.min() < 0):
        raise ValueError("values must be finite and nonnegative")
    if vals.size and vals.max() > 1 + FP_TOL:
        raise ValueError("values must lie in [0, 1]")
    if residual is not None and residual < 0:
        raise ValueError("residual must be nonnegative")
    total = math.fsum(vals) + (residual or 0.0)
    if total > 1 + FP_TOL:
        raise ValueError(f"total mass {total!r} exceeds 1")
    keep = vals[(vals >= eps) & (vals > 0)]
    keep = np.sort(keep)[::-1]
    kept = tuple(float(v) for v in keep)
    if residual is None:
        res = max(0.0, 1.0 - math.fsum(kept))
    else:
        res = float(residual) + math.fsum(vals[(vals < eps) | (vals <= 0)])
    return OrderedFrequencies(kept, res)


def metric_d(p: OrderedFrequencies, q: OrderedFrequencies) -> float:
    """Weighted l1 distance sum_k |p_k - q_k| / 2**k generating the product topology."""
    n = max(len(p), len(q))
    return math.fsum(abs(p[k] - q[k]) * 0.5 ** (k + 1) for k in range(n))


def classify_ladder(p: OrderedFrequencies, tol: float) -> LadderClass:
    """Index n of the finite-allele layer L_n that ``p`` sits on, within ``tol``.

    n = k when the first k atoms carry all but ``tol`` of the mass, the k-th
    atom exceeds ``tol`` and every later one is below it.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    freqs = p.freqs
    n = sum(1 for f in freqs if f > tol)
    if n == 0:
        return LadderClass(None, tol)
    if n < len(freqs) and not freqs[n] < tol:
        return LadderClass(None, tol)
    if math.fsum(freqs[:n]) < 1 - tol:
        return LadderClass(None, tol)
    return LadderClass(n, tol)


def classify_ladder_array(freqs: np.ndarray, tol: float) -> np.ndarray:
    """Vectorized :func:`classify_ladder` over rows of a zero-padded descending matrix.

    Returns an int array with 0 standing for "none".
    """
    freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
    above = freqs > tol
    n = above.sum(axis=1)
    width = freqs.shape[1]
    rows = np.arange(freqs.shape[0])
    nxt = np.where(n < width, freqs[rows, np.minimum(n, width - 1)], 0.0)
    nxt_ok = (n >= width) | (nxt < tol)
    mass = np.where(above, freqs, 0.0).sum(axis=1)
    ok = (n > 0) & nxt_ok & (mass >= 1 - tol)
    return np.where(ok, n, 0)


def equal_weights(n: int) -> SimplexPointM:
    return SimplexPointM(tuple([1.0 / n] * n))


def as_frequencies(values: Sequence[float], residual: float = 0.0) -> OrderedFrequencies:
    """Build a query point from coordinates in any order, dropping zeros."""
    return sort_truncate(values, 0.0, residual)
