"""Independent oracles for the test suite.

Everything here goes through scipy (or plain quadrature/bisection), not
through the package's own kernels, so agreement between the two is a real
check rather than a tautology.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, optimize, stats

from modens import ComponentDistribution, Family, SensitivityConfig, WeightBounds, msm_bounds


def scipy_dist(c: ComponentDistribution):
    if c.family is Family.GAUSSIAN:
        return stats.norm(loc=c.location, scale=c.scale)
    return stats.cauchy(loc=c.location, scale=c.scale)


def mixture_cdf_ref(components, weights, y: float) -> float:
    m = len(components)
    return sum(w * scipy_dist(c).cdf(y) for c, w in zip(components, weights)) / m


def mixture_pdf_ref(components, weights, y: float) -> float:
    m = len(components)
    return sum(w * scipy_dist(c).pdf(y) for c, w in zip(components, weights)) / m


def mixture_quantile_ref(components, weights, beta: float, xtol: float = 1e-12) -> float:
    lo = min(scipy_dist(c).ppf(1e-13) for c in components)
    hi = max(scipy_dist(c).ppf(1.0 - 1e-13) for c in components)
    return optimize.brentq(
        lambda y: mixture_cdf_ref(components, weights, y) - beta, lo, hi, xtol=xtol)


def norm_quantile_by_bisection(p: float) -> float:
    """Invert the erf-based normal CDF by plain bisection."""
    import math

    def cdf(x):
        return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))

    return optimize.bisect(lambda x: cdf(x) - p, -50.0, 50.0, xtol=1e-14)


def quadrature_mass(pdf, lo: float, hi: float) -> float:
    val, _ = integrate.quad(pdf, lo, hi, limit=400)
    return val


def random_components(rng: np.random.Generator, m: int, mixed: bool = True,
                      loc_spread: float = 3.0):
    comps = []
    for _ in range(m):
        family = Family.CAUCHY if (mixed and rng.random() < 0.5) else Family.GAUSSIAN
        comps.append(ComponentDistribution(
            family=family,
            location=float(rng.normal(0.0, loc_spread)),
            scale=float(0.2 + abs(rng.normal(0.0, 1.5)))))
    return comps


def random_bounds(rng: np.random.Generator, gamma: float) -> WeightBounds:
    e = float(rng.uniform(0.05, 0.95))
    return msm_bounds(e, SensitivityConfig(gamma))


def random_feasible_weights(rng: np.random.Generator, m: int,
                            bounds: WeightBounds, tries: int = 200) -> np.ndarray:
    """A random interior point of {w in [lower, upper]^m : mean(w) = 1},
    by drawing in the box and iteratively re-projecting onto the mean-1
    plane with clipping."""
    lo, hi = bounds.lower, bounds.upper
    w = rng.uniform(lo, hi, size=m)
    for _ in range(tries):
        w = np.clip(w + (1.0 - w.mean()), lo, hi)
        if abs(w.mean() - 1.0) < 1e-12:
            break
    # final exact correction on the slackest coordinate
    resid = m * 1.0 - w.sum()
    i = int(np.argmax((hi - w) if resid > 0 else (w - lo)))
    w[i] += resid
    return w
