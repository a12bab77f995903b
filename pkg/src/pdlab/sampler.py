"""Samplers for PD(theta): stick breaking, the Gamma-subordinator picture and
the labeled Dirichlet process.

All randomness flows through :class:`RngStream`, a Philox counter-based
generator keyed by ``(seed, stream_id)``, so Monte-Carlo work split into
chunks is reproducible no matter how the chunks are scheduled.

Scalar functions (``sample_gem``, ``sample_pd`` ...) return one draw and
accept anything with a ``random()`` method, which lets tests inject uniforms.
The ``*_batch`` functions are the vectorized workhorses used by the
experiments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import special

from .core import FP_TOL, OrderedFrequencies, check_theta, sort_truncate

MAX_STICKS = 10**7
_MAX_ROUNDS = 100_000


class UniformSource(Protocol):
    def random(self, size=None): ...


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by a 64-bit seed and stream id."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = int(getattr(self, name))
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must fit in 64 unsigned bits")
            object.__setattr__(self, name, v)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _generator(rng) -> UniformSource:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    return rng


def _beta_parts(v, theta):
    """Return (U, 1 - U) for U = 1 - (1 - v)**(1/theta), both without cancellation."""
    with np.errstate(divide="ignore"):  # v = 1 gives U = 1 exactly
        lw = np.log1p(-np.asarray(v, dtype=float)) / theta
    return -np.expm1(lw), np.exp(lw)


def beta1theta_from_uniform(v: float, theta: float) -> float:
    """Inverse CDF of Beta(1, theta) at ``v``."""
    u, _ = _beta_parts(v, check_theta(theta))
    return float(u)


def sample_beta1theta(theta: float, rng) -> float:
    theta = check_theta(theta)
    return beta1theta_from_uniform(float(_generator(rng).random()), theta)


@dataclass(frozen=True)
class StickSequence:
    """GEM draw: sticks X_m = U_m prod_{j<m}(1 - U_j) and the remaining stick."""

    sticks: tuple[float, ...]
    betas: tuple[float, ...]
    residual: float

    def __post_init__(self):
        if len(self.sticks) != len(self.betas):
            raise ValueError("one beta fraction per stick")
        if abs(math.fsum(self.sticks) + self.residual - 1) > FP_TOL:
            raise ValueError("sticks and residual must sum to 1")


def _break_sticks(theta, gen, stop, max_sticks=MAX_STICKS):
    sticks, betas = [], []
    rest = 1.0
    while not stop(sticks, rest):
        if len(sticks) >= max_sticks:
            raise RuntimeError(
                f"stick cap {max_sticks} exceeded (theta={theta}); parameters look pathological")
        u, w = _beta_parts(gen.random(), theta)
        sticks.append(float(rest * u))
        betas.append(float(u))
        rest *= float(w)
    return sticks, betas, rest


def sample_gem(theta: float, trunc_eps: float, rng, *, max_sticks: int = MAX_STICKS) -> StickSequence:
    """Break Beta(1, theta) sticks until the remaining stick is below ``trunc_eps``."""
    theta = check_theta(theta)
    if not 0 < trunc_eps < 1:
        raise ValueError("trunc_eps must lie in (0, 1)")
    gen = _generator(rng)
    sticks, betas, rest = _break_sticks(
        theta, gen, lambda s, r: r < trunc_eps, max_sticks)
    return StickSequence(tuple(sticks), tuple(betas), rest)


def pd_from_sticks(sticks, residual: float) -> OrderedFrequencies | None:
    """Sort a stick draw, or None when the residual could still hide a larger atom."""
    sticks = list(sticks)
    positive = [x for x in sticks if x > 0]
    if not positive or residual >= min(positive):
        return None
    return sort_truncate(sticks, 0.0, residual)


def sample_pd(theta: float, trunc_eps: float, rng, *, max_sticks: int = MAX_STICKS) -> OrderedFrequencies:
    """One PD(theta) draw: the sorted GEM sticks.

    A draw whose residual is not below its smallest stick is redrawn on the same
    stream with ``trunc_eps / 10``.  Replaying a stream reproduces the stick
    prefix, so the redraw is the continuation of the same stick sequence and
    no conditioning bias is introduced.
    """
    theta = check_theta(theta)
    if not 0 < trunc_eps < 1:
        raise ValueError("trunc_eps must lie in (0, 1)")
    gen = _generator(rng)
    eps = [trunc_eps]

    def stop(sticks, rest):
        if rest == 0:
            return True
        if rest >= eps[0]:
            return False
        positive = [x for x in sticks if x > 0]
        if positive and rest < min(positive):
            return True
        eps[0] /= 10
        return False

    sticks, _, rest = _break_sticks(theta, gen, stop, max_sticks)
    return sort_truncate(sticks, 0.0, rest)


def sample_p1n(theta: float, n: int, rng) -> float:
    """Largest of the first ``n`` GEM sticks."""
    theta = check_theta(theta)
    if n < 1:
        raise ValueError("n must be at least 1")
    gen = _generator(rng)
    sticks, _, _ = _break_sticks(theta, gen, lambda s, r: len(s) >= n)
    return max(sticks)


@dataclass(frozen=True)
class GammaAtoms:
    """Jumps of a Gamma(theta) subordinator on [0, 1] above a cutoff."""

    atoms: tuple[float, ...]
    total_tail_bound: float
    total: float

    def __post_init__(self):
        if any(a <= 0 for a in self.atoms) or any(a < b for a, b in zip(self.atoms, self.atoms[1:])):
            raise ValueError("atoms must be positive and descending")
        if self.total < math.fsum(self.atoms) - FP_TOL:
            raise ValueError("total cannot be below the atom sum")


def small_jump_mean(theta: float, cutoff: float) -> float:
    return theta * -math.expm1(-cutoff)


def _check_cutoff(theta, cutoff):
    if not cutoff > 0:
        raise ValueError("atom_cutoff must be positive")
    if small_jump_mean(theta, cutoff) >= 0.01:
        raise ValueError(
            f"atom_cutoff={cutoff} leaves expected untracked mass "
            f"{small_jump_mean(theta, cutoff):.3g} >= 0.01")


def _levy_jumps(lo, hi, counts, gen):
    """i.i.d. jumps with density proportional to exp(-v)/v on (lo, hi); ``hi`` may be inf."""
    total = int(counts.sum())
    out = np.empty(total)
    mid = min(max(lo, 1.0), hi)
    w_low = max(special.exp1(lo) - special.exp1(mid), 0.0)
    w_high = max(special.exp1(mid) - (special.exp1(hi) if math.isfinite(hi) else 0.0), 0.0)
    p_low = w_low / (w_low + w_high) if w_low + w_high > 0 else 1.0
    todo = np.arange(total)
    # the branch is chosen once per jump; redrawing it after a rejection
    # would reweight the branches by their acceptance rates
    branch = gen.random(total) < p_low
    log_lo, log_mid = math.log(lo), math.log(mid)
    span = -math.expm1(-(hi - mid)) if math.isfinite(hi) else 1.0
    while todo.size:
        low = branch[todo]
        v = np.empty(todo.size)
        acc = np.empty(todo.size, dtype=bool)
        # (lo, mid): log-uniform proposal, accept w.p. exp(lo - v)
        k = int(low.sum())
        if k:
            prop = np.exp(log_lo + (log_mid - log_lo) * gen.random(k))
            v[low] = prop
            acc[low] = gen.random(k) < np.exp(lo - prop)
        # (mid, hi): exponential shifted to mid, accept w.p. mid / v
        k = todo.size - k
        if k:
            prop = mid - np.log1p(-span * gen.random(k))
            v[~low] = prop
            acc[~low] = gen.random(k) < mid / prop
        out[todo[acc]] = v[acc]
        todo = todo[~acc]
    return out


REFINE_FACTOR = 100.0
REFINE_REL_TOL = 1e-4


def _gamma_jumps(theta, cutoff, n, gen, min_atoms=0):
    """Jumps of n Gamma(theta) subordinators above per-draw cutoffs.

    A fixed cutoff misrepresents draws whose total is itself small: they may
    hold no jump above it at all.  Such draws get the Poisson atoms of
    (cutoff/100, cutoff) added, repeatedly, until the expected untracked mass
    is below ``REFINE_REL_TOL`` of the tracked sum.  The decision looks only
    at atoms already kept, and the Poisson process on disjoint intervals is
    independent, so the refinement adds no bias.  Refinement also continues
    until each draw holds ``min_atoms`` jumps, which makes its top
    ``min_atoms`` coordinates exact (every untracked jump is below them).

    Returns (owner, jumps, small, cutoffs).
    """
    cuts = np.full(n, float(cutoff))
    counts = gen.poisson(theta * special.exp1(cutoff), size=n)
    jumps = [_levy_jumps(cutoff, math.inf, counts, gen)]
    owners = [np.repeat(np.arange(n), counts)]
    big = np.bincount(owners[0], weights=jumps[0], minlength=n).astype(float)
    have = counts.copy()
    active = np.nonzero((theta * -np.expm1(-cuts) > REFINE_REL_TOL * big) | (have < min_atoms))[0]
    while active.size:
        hi = cuts[active[0]]
        lo = hi / REFINE_FACTOR
        # all active draws share the same cutoff level
        counts = gen.poisson(theta * (special.exp1(lo) - special.exp1(hi)), size=active.size)
        j = _levy_jumps(lo, hi, counts, gen)
        o = np.repeat(active, counts)
        jumps.append(j)
        owners.append(o)
        big += np.bincount(o, weights=j, minlength=n)
        have[active] += counts
        cuts[active] = lo
        still = ((theta * -np.expm1(-cuts[active]) > REFINE_REL_TOL * big[active])
                 | (have[active] < min_atoms))
        active = active[still]
        if lo < 1e-300:
            raise RuntimeError("cutoff refinement underflowed")
    small = _small_jump_sums(theta, cuts, gen)
    return np.concatenate(owners), np.concatenate(jumps), small, cuts


def _small_jump_sums(theta, cuts, gen):
    """Moment-matched remainders for per-draw cutoffs."""
    mean = theta * -np.expm1(-cuts)
    var = theta * -(np.expm1(-cuts) + cuts * np.exp(-cuts))
    out = mean.copy()
    pos = var > 0
    out[pos] = gen.gamma(mean[pos] ** 2 / var[pos], var[pos] / mean[pos])
    return out


def sample_gamma_atoms(theta: float, atom_cutoff: float, rng) -> GammaAtoms:
    theta = check_theta(theta)
    _check_cutoff(theta, atom_cutoff)
    gen = _generator(rng)
    _, jumps, small, _ = _gamma_jumps(theta, atom_cutoff, 1, gen)
    atoms = np.sort(jumps)[::-1]
    small = float(small[0])
    return GammaAtoms(tuple(float(a) for a in atoms), small, float(atoms.sum()) + small)


def sample_pd_gamma(theta: float, atom_cutoff: float, rng) -> OrderedFrequencies:
    """PD(theta) by normalizing the large jumps of a Gamma subordinator."""
    ga = sample_gamma_atoms(theta, atom_cutoff, rng)
    if ga.total <= 0:
        return OrderedFrequencies((), 0.0)
    return sort_truncate(np.asarray(ga.atoms) / ga.total, 0.0, ga.total_tail_bound / ga.total)


@dataclass(frozen=True)
class LabeledDraw:
    weights: OrderedFrequencies
    labels: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.weights):
            raise ValueError("one label per kept atom")

    def mass_below(self, x: float) -> float:
        """Mass the random measure puts on [0, x] (kept atoms only)."""
        return math.fsum(w for w, l in zip(self.weights.freqs, self.labels) if l <= x)


def sample_dirichlet_process(theta: float, trunc_eps: float, rng: RngStream) -> LabeledDraw:
    """Dirichlet process with uniform base measure on [0, 1].

    Weights come from ``sample_pd`` on ``rng`` itself; labels use the sibling
    stream ``stream_id + 2**63`` so they are independent of the weights.
    """
    weights = sample_pd(theta, trunc_eps, rng)
    if isinstance(rng, RngStream):
        label_gen = rng.spawn((rng.stream_id + 2**63) % 2**64).generator()
    else:
        label_gen = _generator(rng)
    labels = label_gen.random(len(weights))
    return LabeledDraw(weights, tuple(float(x) for x in labels))


# ---------------------------------------------------------------------------
# vectorized paths


@dataclass
class FrequencyBatch:
    """Many draws at once: zero-padded descending rows plus residual masses."""

    freqs: np.ndarray
    residual: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.freqs.shape[0]

    def __getitem__(self, i) -> OrderedFrequencies:
        row = self.freqs[i]
        return OrderedFrequencies(tuple(float(v) for v in row[row > 0]), float(self.residual[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def top(self, m: int) -> np.ndarray:
        out = np.zeros((len(self), m))
        k = min(m, self.freqs.shape[1])
        out[:, :k] = self.freqs[:, :k]
        return out

    def homozygosity(self, r: int) -> np.ndarray:
        """Lower bound of H_r per row (kept atoms only)."""
        return np.sum(self.freqs ** r, axis=1)

    @classmethod
    def concat(cls, parts) -> "FrequencyBatch":
        parts = list(parts)
        width = max(p.freqs.shape[1] for p in parts)
        rows = [np.pad(p.freqs, ((0, 0), (0, width - p.freqs.shape[1]))) for p in parts]
        return cls(np.vstack(rows), np.concatenate([p.residual for p in parts]))


def sample_pd_batch(theta: float, n: int, trunc_eps: float, rng) -> FrequencyBatch:
    """``n`` independent draws following the ``sample_pd`` rule, vectorized over draws."""
    theta = check_theta(theta)
    if not 0 < trunc_eps < 1:
        raise ValueError("trunc_eps must lie in (0, 1)")
    gen = _generator(rng)
    rest = np.ones(n)
    eps = np.full(n, float(trunc_eps))
    smallest = np.full(n, np.inf)
    counts = np.zeros(n, dtype=np.int64)
    cols_idx, cols_val = [], []
    active = np.arange(n)
    rounds = 0
    while active.size:
        rounds += 1
        if rounds > _MAX_ROUNDS:
            raise RuntimeError("stick cap exceeded in batch sampler")
        u, w = _beta_parts(gen.random(active.size), theta)
        x = rest[active] * u
        rest[active] *= w
        smallest[active] = np.where(x > 0, np.minimum(smallest[active], x), smallest[active])
        counts[active] += 1
        cols_idx.append(active)
        cols_val.append(x)
        r = rest[active]
        below = r < eps[active]
        done = below & ((r < smallest[active]) | (r == 0))
        retry = below & ~done
        eps[active[retry]] /= 10
        active = active[~done]
    width = int(counts.max()) if n else 0
    mat = np.zeros((n, width))
    pos = np.zeros(n, dtype=np.int64)
    for idx, val in zip(cols_idx, cols_val):
        mat[idx, pos[idx]] = val
        pos[idx] += 1
    mat = -np.sort(-mat, axis=1)
    return FrequencyBatch(mat, rest)


def sample_top_batch(theta: float, m: int, n: int, rng) -> np.ndarray:
    """Exact top-``m`` coordinates of ``n`` PD(theta) draws, shape (n, m).

    Sticks are broken until the remaining stick is smaller than the current
    m-th largest atom, after which no later atom can enter the top m.  No
    truncation parameter is involved.
    """
    theta = check_theta(theta)
    if m < 1:
        raise ValueError("m must be at least 1")
    gen = _generator(rng)
    top = np.zeros((n, m))
    rest = np.ones(n)
    active = np.arange(n)
    rounds = 0
    while active.size:
        rounds += 1
        if rounds > _MAX_ROUNDS:
            raise RuntimeError("stick cap exceeded in top-m sampler")
        u, w = _beta_parts(gen.random(active.size), theta)
        r = rest[active]
        x = r * u
        r = r * w
        rest[active] = r
        t = top[active]
        if m == 1:
            t = np.maximum(t, x[:, None])
        else:
            t = np.concatenate([t, x[:, None]], axis=1)
            t = -np.sort(-t, axis=1)[:, :m]
        top[active] = t
        done = (r < t[:, m - 1]) | (r == 0)
        active = active[~done]
    return top


def sample_gamma_batch(theta: float, atom_cutoff: float, n: int, rng, *, min_atoms: int = 0):
    """Vectorized Gamma-subordinator draws.

    ``min_atoms`` forces every draw to resolve at least that many jumps, so
    its leading coordinates are exact rather than zero.

    Returns ``(batch, totals)``: normalized PD(theta) draws (untracked mass in
    the residual) and the subordinator totals V.
    """
    theta = check_theta(theta)
    _check_cutoff(theta, atom_cutoff)
    gen = _generator(rng)
    owner, jumps, small, _ = _gamma_jumps(theta, atom_cutoff, n, gen, min_atoms)
    counts = np.bincount(owner, minlength=n)
    big = np.bincount(owner, weights=jumps, minlength=n)
    totals = big + small
    width = int(counts.max()) if n else 0
    mat = np.zeros((n, width))
    if jumps.size:
        order = np.lexsort((-jumps, owner))
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        pos = np.arange(jumps.size) - np.repeat(starts, counts)
        mat[owner[order], pos] = jumps[order]
    safe = np.where(totals > 0, totals, 1.0)
    batch = FrequencyBatch(mat / safe[:, None], small / safe)
    return batch, totals


def exp_approx_products(theta: float, n: int, size: int, rng) -> np.ndarray:
    """Samples of the remaining stick prod_{i<=n}(1 - U_i)."""
    theta = check_theta(theta)
    gen = _generator(rng)
    if n == 0:
        return np.ones(size)
    logs = np.zeros(size)
    for _ in range(n):
        logs += np.log1p(-gen.random(size)) / theta
    return np.exp(logs)
