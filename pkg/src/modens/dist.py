"""Location-scale predictive distributions and weighted finite mixtures.

A ``WeightedMixture`` is the ensemble predictive law at one query point:
``F(y) = m^-1 * sum_i w_i * F_i(y)`` with nonnegative weights of mean 1,
so it stays a proper probability distribution.  Quantiles are solved by
bracketed bisection on the exact CDF.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K

WEIGHT_MEAN_TOL = 1e-9


class Family(enum.Enum):
    GAUSSIAN = "gaussian"
    CAUCHY = "cauchy"

    @property
    def code(self) -> int:
        return K.GAUSSIAN if self is Family.GAUSSIAN else K.CAUCHY


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ComponentDistribution:
    """One ensemble member's predictive law: a Gaussian or Cauchy with
    location/scale in outcome units.  Scale must be strictly positive;
    NaN/Inf parameters are rejected here so the per-call kernels stay
    check-free."""

    family: Family
    location: float
    scale: float

    def __post_init__(self):
        if not isinstance(self.family, Family):
            raise ValueError(f"unknown family: {self.family!r}")
        object.__setattr__(self, "location", _require_finite("location", self.location))
        object.__setattr__(self, "scale", _require_finite("scale", self.scale))
        if self.scale <= 0.0:
            raise ValueError(f"scale must be > 0, got {self.scale}")

    def cdf(self, y: float) -> float:
        return component_cdf(self, y)

    def quantile(self, p: float) -> float:
        return component_quantile(self, p)

    def pdf(self, y: float) -> float:
        return math.exp(component_logpdf(self, y))

    def logpdf(self, y: float) -> float:
        return component_logpdf(self, y)


def pack_components(components) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten a sequence of ComponentDistribution into the parallel
    (family-code, location, scale) arrays the kernels consume."""
    m = len(components)
    if m == 0:
        raise ValueError("need at least one component")
    fam = np.empty(m, dtype=np.int64)
    loc = np.empty(m, dtype=np.float64)
    scale = np.empty(m, dtype=np.float64)
    for i, c in enumerate(components):
        fam[i] = c.family.code
        loc[i] = c.location
        scale[i] = c.scale
    return fam, loc, scale


@dataclass(frozen=True)
class WeightedMixture:
    """Finite mixture ``m^-1 sum_i w_i F_i`` with nonnegative weights whose
    mean is 1 (within 1e-9), so the mixture integrates to one."""

    components: tuple[ComponentDistribution, ...]
    weights: tuple[float, ...]

    def __init__(self, components, weights=None):
        components = tuple(components)
        if len(components) == 0:
            raise ValueError("mixture needs at least one component")
        if weights is None:
            weights = (1.0,) * len(components)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(components):
            raise ValueError(
                f"{len(components)} components but {len(weights)} weights")
        for w in weights:
            if not math.isfinite(w) or w < 0.0:
                raise ValueError(f"weights must be finite and >= 0, got {w}")
        mean_w = math.fsum(weights) / len(weights)
        if abs(mean_w - 1.0) > WEIGHT_MEAN_TOL:
            raise ValueError(f"mean(weights) must be 1, got {mean_w!r}")
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return len(self.components)

    def _packed(self):
        fam, loc, scale = pack_components(self.components)
        return fam, loc, scale, np.asarray(self.weights, dtype=np.float64)

    def cdf(self, y: float) -> float:
        return mixture_cdf(self, y)

    def pdf(self, y: float) -> float:
        return mixture_pdf(self, y)

    def quantile(self, beta: float, tol: float | None = None) -> float:
        return mixture_quantile(self, beta, tol)


def default_quantile_tol(components) -> float:
    """Scale-relative bisection tolerance: 1e-9 * (1 + max component scale)."""
    return 1e-9 * (1.0 + max(c.scale for c in components))


def component_cdf(d: ComponentDistribution, y: float) -> float:
    y = _require_finite("y", y)
    return K.component_cdf_s(d.family.code, d.location, d.scale, y)


def component_quantile(d: ComponentDistribution, p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    return K.component_ppf_s(d.family.code, d.location, d.scale, p)


def component_logpdf(d: ComponentDistribution, y: float) -> float:
    y = _require_finite("y", y)
    return K.component_logpdf_s(d.family.code, d.location, d.scale, y)


def component_pdf(d: ComponentDistribution, y: float) -> float:
    return math.exp(component_logpdf(d, y))


def mixture_cdf(mix: WeightedMixture, y: float) -> float:
    y = _require_finite("y", y)
    fam, loc, scale, w = mix._packed()
    return K.mixture_cdf_k(fam, loc, scale, w, y)


def mixture_pdf(mix: WeightedMixture, y: float) -> float:
    y = _require_finite("y", y)
    fam, loc, scale, w = mix._packed()
    return K.mixture_pdf_k(fam, loc, scale, w, y)


def mixture_quantile(mix: WeightedMixture, beta: float, tol: float | None = None) -> float:
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if tol is None:
        tol = default_quantile_tol(mix.components)
    elif tol <= 0.0:
        raise ValueError(f"tol must be > 0, got {tol}")
    fam, loc, scale, w = mix._packed()
    w_floor = float(np.min(w))
    return K.mixture_quantile_k(fam, loc, scale, w, w_floor, beta, float(tol))
