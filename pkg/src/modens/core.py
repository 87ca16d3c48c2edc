"""Partial identification of mixture quantiles over ensemble weights.

The extremal weight assignment lives at a vertex of the feasible polytope
{w : w_i in [lower, upper], mean(w) = 1}: all but at most one component sit
at a bound and the remaining one restores the mean.  ``maximize_quantile``
reaches that vertex greedily (bulk reassignment plus pairwise transfers),
``brute_force_extreme_quantile`` enumerates every vertex as a test oracle,
and ``check_optimality`` certifies a solution via the no-improving-pair
condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .dist import default_quantile_tol, pack_components
from .sensitivity import WeightBounds

WEIGHT_MEAN_TOL = 1e-9
_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Per-member modulation weights: each inside the governing bounds,
    mean exactly 1 (within 1e-9)."""

    weights: tuple[float, ...]

    def __init__(self, weights, bounds: WeightBounds | None = None):
        weights = tuple(float(w) for w in weights)
        if len(weights) == 0:
            raise ValueError("empty weight vector")
        if bounds is not None:
            for w in weights:
                if w < bounds.lower - _BOUND_SLACK or w > bounds.upper + _BOUND_SLACK:
                    raise ValueError(
                        f"weight {w} outside bounds ({bounds.lower}, {bounds.upper})")
        mean_w = math.fsum(weights) / len(weights)
        if abs(mean_w - 1.0) > WEIGHT_MEAN_TOL:
            raise ValueError(f"mean(weights) must be 1, got {mean_w!r}")
        object.__setattr__(self, "weights", weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


@dataclass(frozen=True)
class OutcomeInterval:
    """Partially identified prediction interval with its miscoverage level
    and the sensitivity budget it was computed under."""

    lo: float
    hi: float
    alpha: float
    gamma: float = float("nan")

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.lo > self.hi:
            raise ValueError(f"lo={self.lo} exceeds hi={self.hi}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, y: float) -> bool:
        return self.lo <= y <= self.hi


@dataclass(frozen=True)
class CoverageBound:
    """Inputs of the finite-ensemble coverage diagnostic: ensemble size m,
    margin epsilon, miscoverage alpha, and a user-supplied bound on the
    expected weight-estimation error."""

    m: int
    epsilon: float
    alpha: float
    weight_error: float = 0.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.weight_error < 0.0:
            raise ValueError("weight_error must be >= 0")

    @property
    def failure_probability(self) -> float:
        return self.alpha + self.epsilon + 2.0 * self.weight_error


def empirical_coverage_bound(cb: CoverageBound) -> tuple[float, float]:
    """Coverage diagnostic pair: inner probability 1 - 2*exp(-m*eps^2/2)
    (floored at 0) that holds with outer failure probability
    alpha + eps + 2*weight_error.  Reported as-is; no estimation of the
    weight error is attempted."""
    inner = 1.0 - 2.0 * math.exp(-cb.m * cb.epsilon * cb.epsilon / 2.0)
    return max(inner, 0.0), cb.failure_probability


def _resolve_tol(components, tol):
    if tol is None:
        return default_quantile_tol(components)
    tol = float(tol)
    if tol <= 0.0:
        raise ValueError(f"tol must be > 0, got {tol}")
    return tol


def maximize_quantile(components, bounds: WeightBounds, beta: float,
                      tol: float | None = None, use_bulk: bool = True
                      ) -> tuple[float, WeightVector]:
    """Supremum of the weighted-mixture beta-quantile over admissible weight
    vectors, with the attaining weights."""
    if not isinstance(bounds, WeightBounds):
        raise ValueError("bounds must be a WeightBounds instance")
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    tol = _resolve_tol(components, tol)
    fam, loc, scale = pack_components(components)
    q, w = K.greedy_max_quantile_k(fam, loc, scale, bounds.lower, bounds.upper,
                                   beta, tol, use_bulk)
    return q, WeightVector(w, bounds)


def minimize_quantile(components, bounds: WeightBounds, beta: float,
                      tol: float | None = None, use_bulk: bool = True
                      ) -> tuple[float, WeightVector]:
    """Infimum of the beta-quantile, by reflection: negate locations,
    maximize at rank 1-beta, negate the result.  Weights stay aligned with
    the original component order."""
    reflected = [replace(c, location=-c.location) for c in components]
    q, w = maximize_quantile(reflected, bounds, 1.0 - float(beta), tol, use_bulk)
    return -q, w


def outcome_interval(components, bounds: WeightBounds, alpha: float,
                     tol: float | None = None, gamma: float = float("nan"),
                     use_bulk: bool = True) -> OutcomeInterval:
    """[min quantile(alpha/2), max quantile(1-alpha/2)] under the bounds."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    lo, _ = minimize_quantile(components, bounds, alpha / 2.0, tol, use_bulk)
    hi, _ = maximize_quantile(components, bounds, 1.0 - alpha / 2.0, tol, use_bulk)
    if lo > hi:  # identical degenerate setups can cross by bisection noise
        lo = hi = 0.5 * (lo + hi)
    return OutcomeInterval(lo=lo, hi=hi, alpha=alpha, gamma=gamma)


BRUTE_FORCE_MAX_M = 10


def brute_force_extreme_quantile(components, bounds: WeightBounds, beta: float,
                                 maximize: bool = True,
                                 tol: float | None = None) -> float:
    """Exhaustive vertex enumeration oracle.

    Every extremal assignment puts a subset S at the upper bound, one
    component at the fractional value restoring mean 1, and the rest at the
    lower bound; all-vertex assignments that already hit the mean are
    included.  Cost grows as m * 2^m quantile solves, so m is capped.
    """
    m = len(components)
    if m > BRUTE_FORCE_MAX_M:
        raise ValueError(
            f"brute force refused: m={m} exceeds {BRUTE_FORCE_MAX_M} "
            f"(cost grows as m * 2^m)")
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    tol = _resolve_tol(components, tol)
    fam, loc, scale = pack_components(components)
    lower, upper = bounds.lower, bounds.upper
    w_floor = lower

    best = None
    w = np.empty(m, dtype=np.float64)
    for mask in range(1 << m):
        n_upper = bin(mask).count("1")
        base = n_upper * upper + (m - n_upper) * lower
        for i in range(m):
            w[i] = upper if (mask >> i) & 1 else lower
        candidates = []
        if abs(base - m) <= 1e-12 * m:
            candidates.append((-1, 0.0))  # all-vertex assignment
        for f in range(m):
            if (mask >> f) & 1:
                continue
            frac = m - (base - lower)
            if lower - 1e-12 <= frac <= upper + 1e-12:
                candidates.append((f, min(max(frac, lower), upper)))
        for f, frac in candidates:
            if f >= 0:
                saved = w[f]
                w[f] = frac
            q = K.mixture_quantile_k(fam, loc, scale, w, w_floor, beta, tol)
            if f >= 0:
                w[f] = saved
            if best is None or (q > best if maximize else q < best):
                best = q
    assert best is not None
    return best


def check_optimality(components, weights: WeightVector, bounds: WeightBounds,
                     beta: float, tol_mass: float = 1e-9,
                     tol: float | None = None) -> bool:
    """True iff no pair (j, k) with w_j > lower and w_k < upper has
    F_j(q) > F_k(q) + tol_mass at the current beta-quantile q, i.e. no
    single weight transfer can push the quantile further up."""
    tol = _resolve_tol(components, tol)
    fam, loc, scale = pack_components(components)
    w = weights.as_array() if isinstance(weights, WeightVector) else \
        np.asarray(weights, dtype=np.float64)
    q = K.mixture_quantile_k(fam, loc, scale, w, bounds.lower, float(beta), tol)
    sender_mass = -np.inf
    receiver_mass = np.inf
    for i in range(len(w)):
        mass = K.component_cdf_s(fam[i], loc[i], scale[i], q)
        if w[i] > bounds.lower and mass > sender_mass:
            sender_mass = mass
        if w[i] < bounds.upper and mass < receiver_mass:
            receiver_mass = mass
    return not sender_mass > receiver_mass + tol_mass


def modulated_intervals_batch(fam: np.ndarray, locs: np.ndarray,
                              scales: np.ndarray, lowers: np.ndarray,
                              uppers: np.ndarray, alpha: float,
                              tol_rel: float = 1e-9, use_bulk: bool = True,
                              threads: int = 1
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized driver: one outcome interval per row of (locs, scales)
    under per-row weight bounds.  Rows are independent, so they may be
    chunked across worker threads (the jitted kernel releases the GIL)."""
    locs = np.ascontiguousarray(locs, dtype=np.float64)
    scales = np.ascontiguousarray(scales, dtype=np.float64)
    lowers = np.ascontiguousarray(lowers, dtype=np.float64)
    uppers = np.ascontiguousarray(uppers, dtype=np.float64)
    fam = np.ascontiguousarray(fam, dtype=np.int64)
    n = locs.shape[0]
    if n == 0:
        return np.empty(0), np.empty(0)
    threads = max(1, int(threads))
    if threads == 1 or not K.NUMBA_ENABLED or n < 2 * threads:
        return K.intervals_batch_k(fam, locs, scales, lowers, uppers,
                                   float(alpha), tol_rel, use_bulk)
    from concurrent.futures import ThreadPoolExecutor

    lo_out = np.empty(n)
    hi_out = np.empty(n)
    edges = np.linspace(0, n, threads + 1, dtype=int)

    def work(a: int, b: int):
        lo, hi = K.intervals_batch_k(fam, locs[a:b], scales[a:b], lowers[a:b],
                                     uppers[a:b], float(alpha), tol_rel, use_bulk)
        lo_out[a:b] = lo
        hi_out[a:b] = hi

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(work, a, b)
                   for a, b in zip(edges[:-1], edges[1:]) if b > a]
        for fut in futures:
            fut.result()
    return lo_out, hi_out
