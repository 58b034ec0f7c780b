"""Closed-form ceilings on the probability of successful compression.

Everything is evaluated as a base-2 exponent first and exponentiated at the
end, so surfaces reaching 2^-1000 stay exact.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .critical import GrowthConstants
from .errors import DomainError, OutOfCertificateError


@dataclass(frozen=True)
class PhaseSurfaceParams:
    s: float
    c: float
    clamp: bool = True

    def __post_init__(self):
        if not (self.s > 0 and self.c > 0):
            raise DomainError("s > 0 and c > 0 violated")


def e_surface_log2(params: PhaseSurfaceParams, R, inv_eps):
    """log2 of the surface as a function of R and 1/eps (arrays broadcast)."""
    R = np.asarray(R, dtype=float)
    inv_eps = np.asarray(inv_eps, dtype=float)
    if np.any(inv_eps < 0):
        raise DomainError("1/eps must be nonnegative")
    expo = R - params.c * inv_eps ** (1.0 / params.s)
    return np.minimum(expo, 0.0) if params.clamp else expo


def e_surface(params: PhaseSurfaceParams, R, eps):
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise DomainError("eps > 0 violated")
    return np.exp2(e_surface_log2(params, R, 1.0 / eps))


def success_probability_log2_bound(growth: GrowthConstants, R, eps: float) -> float:
    if not 0 < eps < growth.eps0:
        raise OutOfCertificateError(
            f"eps < eps0 violated (eps={eps}, eps0={growth.eps0}); no bound is certified")
    return min(0.0, R - growth.c * eps ** (-1.0 / growth.s))


def success_probability_bound(growth: GrowthConstants, R, eps: float) -> float:
    return float(2.0 ** success_probability_log2_bound(growth, R, eps))


def _r2(s: float, sigma: float, c: float, K: float) -> int:
    """Smallest integer R >= 1 with 2R - c K^{-1/sigma} R^{s/sigma} <= 0."""
    A = c * K ** (-1.0 / sigma)
    g = s / sigma

    def ok(R: int) -> bool:
        # compare in log domain: log(2R) <= log(A) + g log R
        return math.log(2 * R) <= math.log(A) + g * math.log(R)

    # log(2R) - g log R is decreasing for g > 1, so the predicate is monotone
    # in R and integer bisection finds the exact threshold
    if ok(1):
        return 1
    lo, hi = 1, 2
    while not ok(hi):
        lo, hi = hi, 2 * hi
        if hi > 2**400:
            raise DomainError("no finite minimal code length found")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_code_length(s: float, s0: float, K: float, growth: GrowthConstants) -> int:
    """Length R0 beyond which a codec with distortion K R^-s succeeds with
    probability at most 2^-R; ``growth`` must be computed at (s + s0)/2."""
    if not s > s0:
        raise DomainError("s > s0 violated")
    if not K > 0:
        raise DomainError("K > 0 violated")
    sigma = growth.s
    if not s0 < sigma < s:
        raise DomainError("growth constants must use an exponent between s0 and s")
    R1 = max(1, math.ceil((2 * K / growth.eps0) ** (1.0 / s)))
    return max(R1, _r2(s, sigma, growth.c, K))


def nn_exponent(C: float, W: int) -> float:
    return C * W * math.ceil(math.log2(1 + W)) ** 2


def nn_success_bound_log2(C: float, c: float, s: float, W: int, eps: float) -> float:
    if not eps > 0:
        raise DomainError("eps > 0 violated")
    return min(0.0, nn_exponent(C, W) - c * eps ** (-1.0 / s))


def nn_success_bound(C: float, c: float, s: float, W: int, eps: float) -> float:
    return float(2.0 ** nn_success_bound_log2(C, c, s, W, eps))


SURFACE_SCHEMA = "# schema=ratephase.phase-surface/1"
SURFACE_HEADER = "R,inv_eps,value,log2_value"


def surface_grid(params: PhaseSurfaceParams, R_values, inv_eps_values) -> np.ndarray:
    """Rows (R, inv_eps, value, log2_value) in row-major order over (R, inv_eps)."""
    Rg, Eg = np.meshgrid(np.asarray(R_values, float), np.asarray(inv_eps_values, float),
                         indexing="ij")
    lg = e_surface_log2(params, Rg, Eg)
    return np.column_stack([Rg.ravel(), Eg.ravel(), np.exp2(lg).ravel(), lg.ravel()])


def surface_csv(rows: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(SURFACE_SCHEMA + "\n" + SURFACE_HEADER + "\n")
    for row in rows:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def critical_curve(s: float, c: float, inv_eps_values) -> np.ndarray:
    """R on the curve where the exponent vanishes: R = c (1/eps)^{1/s}."""
    return c * np.asarray(inv_eps_values, dtype=float) ** (1.0 / s)
