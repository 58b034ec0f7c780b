"""Volumes of l^p balls and exact uniform sampling from them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .sequence import INF, Exponent, as_exponent, reciprocal


@dataclass(frozen=True)
class BallSpec:
    p: Exponent
    dim: int
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p", as_exponent(self.p))
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError("dim must be a positive integer")
        object.__setattr__(self, "dim", int(self.dim))
        if not self.radius > 0:
            raise DomainError("radius must be positive")


def log_ball_volume(spec: BallSpec) -> float:
    """Natural log of the volume of the radius-r l^p ball in R^m."""
    m, r = spec.dim, spec.radius
    if spec.p is INF:
        return m * math.log(2.0 * r)
    p = spec.p
    return (m * math.log(r) + m * math.log(2.0) + m * math.lgamma(1.0 + 1.0 / p)
            - math.lgamma(1.0 + m / p))


def ball_volume(spec: BallSpec) -> float:
    return math.exp(log_ball_volume(spec))


def log_volume_ratio_2_over_p(p, m: int) -> float:
    p = as_exponent(p)
    # vol_2 / vol_p = (Gamma(3/2)/Gamma(1+1/p))^m * Gamma(1+m/p)/Gamma(1+m/2)
    ip = reciprocal(p)
    return (m * (math.lgamma(1.5) - math.lgamma(1.0 + ip))
            + math.lgamma(1.0 + m * ip) - math.lgamma(1.0 + m / 2.0))


def volume_ratio_2_over_p(p, m: int) -> float:
    return math.exp(log_volume_ratio_2_over_p(p, m))


def _normalized_ratio(p, m: int) -> float:
    """(ratio(p, m) * m^{m(1/2 - 1/p)})^{1/m}."""
    e = 0.5 - reciprocal(as_exponent(p))
    return math.exp(log_volume_ratio_2_over_p(p, m) / m + e * math.log(m))


def volume_constants(p, m_max: int = 64) -> tuple:
    """(c_p, C_p): min and max of the normalized volume ratio over m <= m_max."""
    vals = [_normalized_ratio(p, m) for m in range(1, m_max + 1)]
    return min(vals), max(vals)


def volume_ratio_limit(p) -> float:
    """Limit of the normalized volume ratio as m grows (Stirling)."""
    p = as_exponent(p)
    ip = reciprocal(p)
    log_lim = (math.lgamma(1.5) - math.lgamma(1.0 + ip) + 0.5 * math.log(2 * math.e))
    if p is not INF:
        log_lim -= ip * math.log(p * math.e)
    return math.exp(log_lim)


@lru_cache(maxsize=None)
def volume_upper_constant(p, m_scan: int = 256) -> float:
    """A constant C with ratio(p, m) <= C^m m^{-m(1/2-1/p)} for every m.

    The normalized ratio is monotone in m, so the supremum is either its
    value at small m or the large-m limit; both are included.
    """
    best = max(_normalized_ratio(p, m) for m in range(1, m_scan + 1))
    return max(best, volume_ratio_limit(p))


def sample_uniform_ball(spec: BallSpec, rng: np.random.Generator,
                        size: int | None = None) -> np.ndarray:
    """Uniform sample(s) from the closed l^p ball; shape (dim,) or (size, dim)."""
    n = 1 if size is None else int(size)
    m, r = spec.dim, spec.radius
    if spec.p is INF:
        out = rng.uniform(-r, r, size=(n, m))
    else:
        p = spec.p
        G = rng.gamma(1.0 / p, 1.0, size=(n, m))
        signs = 2.0 * rng.integers(0, 2, size=(n, m)) - 1.0
        u = rng.random(n)
        scale = r * u ** (1.0 / m) / np.sum(G, axis=1) ** (1.0 / p)
        out = signs * G ** (1.0 / p) * scale[:, None]
        # guard the closed-ball constraint against a last-ulp overshoot
        nrm = np.sum(np.abs(out) ** p, axis=1) ** (1.0 / p)
        over = nrm > r
        if np.any(over):
            out[over] *= (r / nrm[over] * (1 - 4 * np.finfo(float).eps))[:, None]
    return out[0] if size is None else out
