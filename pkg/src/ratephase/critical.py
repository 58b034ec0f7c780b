"""Critical product measures on mixed-norm balls and their small-ball bounds.

For q = inf the measure draws every block independently and uniformly from
the l^p ball of radius 1/w_m.  For q < inf it draws from the q = inf measure
with theta shifted by 2/q and divides by the embedding constant kappa, which
lands in the unit ball of the original space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .lp_geometry import BallSpec, log_volume_ratio_2_over_p, sample_uniform_ball, volume_upper_constant
from .sequence import INF, Signal, SpaceSpec, embedding_constant, reciprocal

LOG2E = math.log2(math.e)


def _kappa_for(space: SpaceSpec) -> float:
    if space.q is INF:
        return 1.0
    return embedding_constant(INF, space.q, 2.0 / space.q)


@dataclass(frozen=True)
class MeasureSpec:
    space: SpaceSpec
    kappa: float

    def __post_init__(self):
        expected = _kappa_for(self.space)
        if not math.isclose(self.kappa, expected, rel_tol=1e-12):
            raise DomainError(f"kappa must equal {expected!r} for this space")

    @classmethod
    def for_space(cls, space: SpaceSpec) -> "MeasureSpec":
        space.require_valid()
        return cls(space, _kappa_for(space))

    @property
    def sample_theta(self) -> float:
        """theta of the product measure that is actually sampled."""
        q = self.space.q
        return self.space.theta if q is INF else self.space.theta + 2.0 / q

    def block_radii(self, M: int) -> np.ndarray:
        return self.space.radii(M, self.sample_theta)


@dataclass(frozen=True)
class GrowthConstants:
    s: float
    c: float
    eps0: float
    # intermediate constants of the derivation, kept for reports
    K1: float = float("nan")
    K2: float = float("nan")
    K3: float = float("nan")
    C_p: float = float("nan")
    kappa: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not (self.c > 0 and self.eps0 > 0):
            raise DomainError("growth constants must be positive")

    def m_tilde(self, eps: float) -> float:
        """Real-valued index of the block that carries the small-ball bound."""
        return (-math.log2(self.K2 * self.kappa * eps) / (self.d * self.s)
                - LOG2E / self.d)

    def eps_floor(self, M: int) -> float:
        """Smallest eps whose bound still uses a block m <= M."""
        expo = (M + 1 + LOG2E / self.d) * self.d * self.s
        return 2.0 ** (-expo) / (self.K2 * self.kappa)

    def log2_bound(self, eps):
        return -self.c * np.asarray(eps, dtype=float) ** (-1.0 / self.s)


def sample_critical_batch(spec: MeasureSpec, M: int, n: int,
                          rng: np.random.Generator) -> np.ndarray:
    """``n`` samples as rows of an (n, total(M)) array."""
    spec.space.require_valid()
    sizes = spec.space.partition.block_sizes[:M]
    radii = spec.block_radii(M)
    out = np.empty((n, sum(sizes)))
    off = 0
    for n_m, r in zip(sizes, radii):
        out[:, off:off + n_m] = sample_uniform_ball(BallSpec(spec.space.p, n_m, r), rng, size=n)
        off += n_m
    if spec.kappa != 1.0:
        out /= spec.kappa
    return out


def sample_critical(spec: MeasureSpec, M: int, rng: np.random.Generator) -> Signal:
    return Signal(spec.space, sample_critical_batch(spec, M, 1, rng)[0], M)


def block_ball_log2_bound(spec: MeasureSpec, eps: float, m: int) -> float:
    """log2 of the single-block bound on P(||x_m - c_m||_2 <= eps), clamped to 0."""
    if not eps > 0:
        raise DomainError("eps > 0 violated")
    n_m = spec.space.partition.block_sizes[m - 1]
    w = 1.0 / spec.block_radii(m)[m - 1]
    val = (n_m * math.log2(spec.kappa * eps * w)
           + log_volume_ratio_2_over_p(spec.space.p, n_m) * LOG2E)
    return min(0.0, val)


def block_ball_bound(spec: MeasureSpec, eps: float, m: int, center_block=None) -> float:
    """The bound does not depend on the center; the argument is accepted for symmetry."""
    return 2.0 ** block_ball_log2_bound(spec, eps, m)


def growth_constants(spec: MeasureSpec, s: float, M_max: int | None = None) -> GrowthConstants:
    space = spec.space
    space.require_valid()
    s_star = space.s_star
    if not s > s_star:
        raise DomainError(f"s > s* violated (s={s}, s*={s_star})")
    d, part = space.d, space.partition
    e = 0.5 - reciprocal(space.p)
    theta = spec.sample_theta
    stored = part.max_blocks if M_max is None else min(M_max, part.max_blocks)
    eta = part.eta()[:stored]
    # beyond the stored blocks only a <= eta <= A is known
    eta_worst = max(part.a ** -e, part.A ** -e)
    gap = d * (s - s_star) * math.log(2.0)
    m_peak = theta / gap if theta > 0 else 1.0
    m_hi = max(stored, int(math.ceil(2 * m_peak)) + 2)
    logs = []
    for m in range(1, m_hi + 1):
        eta_term = eta[m - 1] ** -e if m <= stored else eta_worst
        logs.append(theta * math.log(m) - m * gap + math.log(eta_term))
    K1 = math.exp(max(logs))
    C_p = volume_upper_constant(space.p)
    K2 = C_p * K1
    eps0 = 0.5 * 2.0 ** (-d * s) * math.exp(-s) / K2
    K3 = part.a / (2.0**d * math.e * K2 ** (1.0 / s))
    c = K3 * s * LOG2E
    if spec.kappa != 1.0:
        eps0 /= spec.kappa
        c *= spec.kappa ** (-1.0 / s)
    return GrowthConstants(s=s, c=c, eps0=eps0, K1=K1, K2=K2, K3=K3, C_p=C_p,
                           kappa=spec.kappa, d=d)


def tail_radius(spec: MeasureSpec, M: int, tol: float = 1e-16) -> float:
    """Bound on the l2 mass of blocks m > M that truncation drops."""
    space = spec.space
    e = max(0.0, 0.5 - reciprocal(space.p))
    theta = spec.sample_theta
    A, d = space.partition.A, space.d
    total, m = 0.0, M + 1
    while True:
        log_term = (e * (math.log(A) + d * m * math.log(2.0)) - theta * math.log(m)
                    - space.alpha * m * math.log(2.0))
        term = math.exp(log_term) / spec.kappa
        total += term
        if term < tol * max(total, 1e-300) or m > M + 100000:
            break
        m += 1
    return total


def mc_ball_probability(spec: MeasureSpec, center: Signal, eps: float, N: int,
                        rng: np.random.Generator, chunk: int = 2000) -> tuple:
    """Monte-Carlo estimate of P(||x - center||_2 <= eps) with its binomial stderr."""
    if N < 100:
        raise DomainError("N >= 100 violated")
    hits, done = 0, 0
    c = center.data
    while done < N:
        k = min(chunk, N - done)
        X = sample_critical_batch(spec, center.M, k, rng)
        hits += int(np.count_nonzero(np.linalg.norm(X - c, axis=1) <= eps))
        done += k
    est = hits / N
    return est, math.sqrt(max(est * (1 - est), 0.0) / N)
