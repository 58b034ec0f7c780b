"""Daubechies wavelets on the unit cube and Besov-ball sampling.

Filters come from the spectral factorization of the Daubechies polynomial;
scaling function and wavelet values on dyadic points come from the cascade
algorithm (exact two-scale refinement of the values at the integers).
Tensor wavelets at scale j >= 1 use the types {F, M}^d minus all-F and the
dilation 2^(j-1); scale 0 holds only the father function.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from pathlib import Path

import numpy as np

from .critical import MeasureSpec, sample_critical_batch
from .errors import DomainError, WaveletIndexError
from .sequence import PartitionSpec, SpaceSpec, as_exponent, lq_norm, reciprocal


def daubechies_filter(N: int) -> np.ndarray:
    """Minimum-phase lowpass filter with N vanishing moments, sum = sqrt(2)."""
    if N < 1:
        raise DomainError("N >= 1 required")
    if N == 1:
        return np.array([1.0, 1.0]) / math.sqrt(2.0)
    # P(y) = sum_k binom(N-1+k, k) y^k with y = (2 - z - 1/z)/4
    P = np.array([comb(N - 1 + k, k) for k in range(N)], dtype=float)
    y_roots = np.roots(P[::-1])
    z_roots = []
    for y in y_roots:
        # z^2 - (2 - 4y) z + 1 = 0; keep the root inside the unit circle
        r = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z_roots.append(r[np.argmin(np.abs(r))])
    poly = np.array([1.0])
    for _ in range(N):
        poly = np.convolve(poly, [1.0, 1.0])
    for z in z_roots:
        poly = np.convolve(poly, [1.0, -z])
    h = np.real(poly)
    h = h * (math.sqrt(2.0) / h.sum())
    # order taps so that the energy sits at the front (minimum phase)
    if np.sum(h[: N] ** 2) < np.sum(h[N:] ** 2):
        h = h[::-1]
    return h


class WaveletSystem:
    """Father/mother pair with N vanishing moments and tabulated values.

    ``table(level)`` returns values of phi and psi at x = k / 2^level for
    k = 0 .. L 2^level, where [0, L] is the common support.
    """

    def __init__(self, N: int):
        self.N = int(N)
        self.h = daubechies_filter(self.N)
        self.L = len(self.h) - 1
        self.g = np.array([(-1) ** k * self.h[self.L - k] for k in range(self.L + 1)])
        self._tables: dict = {}

    @property
    def vanishing_moments(self) -> int:
        return self.N

    @property
    def support(self) -> tuple:
        return (0, self.L)

    @property
    def support_radius(self) -> int:
        return self.L

    @classmethod
    def for_besov(cls, tau: float, p, d: int) -> "WaveletSystem":
        return cls(required_moments(tau, p, d))

    def _integer_values(self) -> np.ndarray:
        L = self.L
        if self.N == 1:
            return np.array([1.0, 0.0])
        T = np.zeros((L + 1, L + 1))
        for k in range(L + 1):
            for i in range(L + 1):
                j = 2 * k - i
                if 0 <= j <= L:
                    T[k, i] = math.sqrt(2.0) * self.h[j]
        w, V = np.linalg.eig(T)
        v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
        return v / v.sum()

    def table(self, level: int) -> tuple:
        if level in self._tables:
            return self._tables[level]
        phi = self._integer_values()
        L = self.L
        s2 = math.sqrt(2.0)
        for r in range(1, level + 1):
            new = np.zeros(L * 2**r + 1)
            half = 2 ** (r - 1)
            k = np.arange(new.size)
            for j, hj in enumerate(self.h):
                src = k - j * half
                ok = (src >= 0) & (src < phi.size)
                new[ok] += s2 * hj * phi[src[ok]]
            phi = new
        # psi(x) = sqrt2 sum_j g_j phi(2x - j), read off the same level
        psi = np.zeros_like(phi)
        k = np.arange(phi.size)
        for j, gj in enumerate(self.g):
            src = 2 * k - j * 2**level
            ok = (src >= 0) & (src < phi.size)
            psi[ok] += s2 * gj * phi[src[ok]]
        if self.N == 1:  # Haar: right-continuous convention on [0, 1)
            phi[-1] = 0.0
        self._tables[level] = (phi, psi)
        return phi, psi

    def basis_matrix(self, kind: str, j: int, translations: np.ndarray, G: int) -> np.ndarray:
        """Values of the 1-D functions at the 2^G midpoints of (0, 1).

        Rows are grid points, columns are translations.  ``kind`` is "F" or "M".
        """
        level = G + 1
        phi, psi = self.table(level)
        vals = phi if kind == "F" else psi
        i = np.arange(2**G)[:, None]
        m = np.asarray(translations, dtype=np.int64)[None, :]
        dil = 1 if j == 0 else 2 ** (j - 1)
        idx = (2 * i + 1) * dil - m * 2**level
        ok = (idx >= 0) & (idx < vals.size)
        out = np.where(ok, vals[np.clip(idx, 0, vals.size - 1)], 0.0)
        return out * (1.0 if j == 0 else math.sqrt(dil))


def required_moments(tau: float, p, d: int) -> int:
    """Number of vanishing moments k + 1, where k is the smallest integer
    exceeding max(tau, 2d/p + d/2 - tau); moments of order 0..k vanish."""
    p = as_exponent(p)
    bound = max(tau, 2 * d * reciprocal(p) + d / 2.0 - tau)
    k = max(0, int(math.floor(bound)) + 1)
    return k + 1


# ---------------------------------------------------------------------------
# index sets

@dataclass(frozen=True)
class WaveletIndex:
    j: int
    t: tuple
    m: tuple

    def __post_init__(self):
        t = tuple(self.t)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if self.j < 0 or any(c not in "FM" for c in t):
            raise WaveletIndexError("bad scale or type")
        if (self.j == 0) != all(c == "F" for c in t):
            raise WaveletIndexError("type must be all-F exactly at scale 0")
        if len(self.m) != len(t):
            raise WaveletIndexError("translation and type dimensions differ")


def scale_types(j: int, d: int) -> list:
    allf = ("F",) * d
    if j == 0:
        return [allf]
    return [t for t in itertools.product("FM", repeat=d) if t != allf]


class WaveletLayout:
    """Interior or exterior index set up to scale j_max, in block-major order.

    Translations at each scale form a product range [lo, hi]^d.  Interior
    means the closed support lies inside the open cube; exterior means it
    meets the cube.
    """

    def __init__(self, system: WaveletSystem, d: int, j_max: int, mode: str = "int"):
        if j_max < 1:
            raise DomainError("j_max >= 1 required")
        if mode not in ("int", "ext"):
            raise DomainError("mode must be 'int' or 'ext'")
        self.system, self.d, self.j_max, self.mode = system, int(d), int(j_max), mode
        L = system.L
        self.ranges = {}
        for j in range(j_max + 1):
            size = 1 if j == 0 else 2 ** (j - 1)
            if mode == "int":
                lo, hi = 1, size - L - 1
            else:
                lo, hi = 1 - L, size - 1
            self.ranges[j] = (lo, hi)

    def count_1d(self, j: int) -> int:
        lo, hi = self.ranges[j]
        return max(0, hi - lo + 1)

    def count(self, j: int) -> int:
        return len(scale_types(j, self.d)) * self.count_1d(j) ** self.d

    def shape(self, j: int) -> tuple:
        return (len(scale_types(j, self.d)),) + (self.count_1d(j),) * self.d

    @cached_property
    def j0(self) -> int:
        """First scale from which every axis keeps at least half its translations."""
        L = self.system.L
        j = 1
        while 2 ** (j - 2) < L + 1:
            j += 1
        return j

    def regularity_constants(self, j_from: int | None = None) -> tuple:
        """(a, A) with a 2^{dj} <= |J_j| <= A 2^{dj} over j_from..j_max."""
        j_from = self.j0 if j_from is None else j_from
        r = [self.count(j) / 2.0 ** (self.d * j) for j in range(j_from, self.j_max + 1)]
        return min(r), max(r)

    def indices(self, j: int):
        lo, hi = self.ranges[j]
        for t in scale_types(j, self.d):
            for m in itertools.product(range(lo, hi + 1), repeat=self.d):
                yield WaveletIndex(j, t, m)

    def locate(self, idx: WaveletIndex) -> tuple:
        """(j, array position) of an index, or WaveletIndexError."""
        if idx.j > self.j_max or len(idx.t) != self.d:
            raise WaveletIndexError(f"{idx} lies outside the declared index set")
        lo, hi = self.ranges[idx.j]
        if any(not lo <= v <= hi for v in idx.m):
            raise WaveletIndexError(f"{idx} lies outside the declared index set")
        ti = scale_types(idx.j, self.d).index(idx.t)
        return idx.j, (ti,) + tuple(v - lo for v in idx.m)

    # -- block structure for the mixed-norm correspondence
    @cached_property
    def block_scales(self) -> list:
        """Scales grouped into blocks: 0..j0 first, then one scale per block."""
        if self.j_max < self.j0:
            raise DomainError(f"j_max must be at least j0={self.j0}")
        return [list(range(0, self.j0 + 1))] + [[j] for j in range(self.j0 + 1, self.j_max + 1)]

    def block_sizes(self) -> list:
        return [sum(self.count(j) for j in js) for js in self.block_scales]

    def partition(self) -> PartitionSpec:
        return PartitionSpec.from_sizes(self.d, self.block_sizes())

    def norm_equivalence(self, p, q, alpha: float) -> tuple:
        """(C1, C2) with C1 ||c||_mixed <= ||c||_besov <= C2 ||c||_mixed."""
        p, q = as_exponent(p), as_exponent(q)
        up = max(0.0, reciprocal(q) - reciprocal(p))
        down = max(0.0, reciprocal(p) - reciprocal(q))
        lows, highs = [], []
        for m, js in enumerate(self.block_scales, start=1):
            groups = [j for j in js for _ in scale_types(j, self.d) if self.count_1d(j) > 0]
            if not groups:
                continue
            G = len(groups)
            highs.append(max(2.0 ** (alpha * (j - m)) for j in groups) * G**up)
            lows.append(min(2.0 ** (alpha * (j - m)) for j in groups) * G**-down)
        return min(lows), max(highs)


def build_index_sets(system: WaveletSystem, d: int, j_max: int) -> tuple:
    return WaveletLayout(system, d, j_max, "int"), WaveletLayout(system, d, j_max, "ext")


# ---------------------------------------------------------------------------
# coefficients

@dataclass
class BesovCoefficients:
    layout: WaveletLayout
    tau: float
    p: object
    q: object
    values: dict = field(default_factory=dict)
    gamma: float = 1.0

    def __post_init__(self):
        self.p, self.q = as_exponent(self.p), as_exponent(self.q)
        for j in range(self.layout.j_max + 1):
            arr = np.asarray(self.values.get(j, np.zeros(self.layout.shape(j))), dtype=float)
            if arr.shape != self.layout.shape(j):
                raise WaveletIndexError(f"scale {j} has shape {arr.shape}, "
                                        f"expected {self.layout.shape(j)}")
            if not np.all(np.isfinite(arr)):
                raise DomainError("coefficients must be finite")
            self.values[j] = arr
        extra = set(self.values) - set(range(self.layout.j_max + 1))
        if extra:
            raise WaveletIndexError(f"scales {sorted(extra)} lie outside the index set")

    @property
    def d(self) -> int:
        return self.layout.d

    @property
    def alpha(self) -> float:
        return self.tau + self.d * (0.5 - reciprocal(self.p))

    @classmethod
    def zeros(cls, layout, tau, p, q) -> "BesovCoefficients":
        return cls(layout, tau, p, q)

    @classmethod
    def from_entries(cls, layout, tau, p, q, entries: dict) -> "BesovCoefficients":
        c = cls.zeros(layout, tau, p, q)
        for idx, v in entries.items():
            j, pos = layout.locate(idx)
            c.values[j][pos] = v
        return c

    def flat(self) -> np.ndarray:
        """Coefficients in block-major order (scale, type, translation)."""
        return np.concatenate([self.values[j].ravel() for j in range(self.layout.j_max + 1)])

    @classmethod
    def from_flat(cls, layout, tau, p, q, vec, gamma: float = 1.0) -> "BesovCoefficients":
        vals, off = {}, 0
        for j in range(layout.j_max + 1):
            n = int(np.prod(layout.shape(j)))
            vals[j] = np.asarray(vec[off:off + n], dtype=float).reshape(layout.shape(j))
            off += n
        if off != len(vec):
            raise WaveletIndexError("vector length does not match the index set")
        return cls(layout, tau, p, q, vals, gamma)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


def besov_seq_norm(c: BesovCoefficients) -> float:
    d = c.d
    expo = c.tau + d * (0.5 - reciprocal(c.p))
    terms = []
    for j in range(c.layout.j_max + 1):
        arr = c.values[j]
        if arr.size == 0:
            continue
        for ti in range(arr.shape[0]):
            terms.append(2.0 ** (j * expo) * float(lq_norm(arr[ti].ravel(), c.p)))
    if not terms:
        return 0.0
    return float(lq_norm(np.asarray(terms), c.q))


# ---------------------------------------------------------------------------
# synthesis

@dataclass
class SampledFunction:
    values: np.ndarray
    G: int
    d: int
    gamma: float | None = None

    @property
    def grid(self) -> np.ndarray:
        return (np.arange(2**self.G) + 0.5) / 2**self.G

    def l2_norm(self) -> float:
        """Midpoint-rule L2 norm over the unit cube."""
        return float(math.sqrt(np.sum(self.values**2) / self.values.size))


def synthesize(c: BesovCoefficients, G: int) -> SampledFunction:
    layout, sysm, d = c.layout, c.layout.system, c.d
    active = [j for j in range(layout.j_max + 1) if np.any(c.values[j])]
    if active and G < max(active) + 4:
        raise DomainError(f"grid 2^{G} is too coarse for scale {max(active)}; need 2^(j+4)")
    n = 2**G
    out = np.zeros((n,) * d)
    for j in range(layout.j_max + 1):
        arr = c.values[j]
        if arr.size == 0 or not np.any(arr):
            continue
        lo, hi = layout.ranges[j]
        trans = np.arange(lo, hi + 1)
        mats = {k: sysm.basis_matrix(k, j, trans, G) for k in "FM"}
        for ti, t in enumerate(scale_types(j, d)):
            block = arr[ti]
            # contract each translation axis with its 1-D basis matrix
            for axis, kind in enumerate(t):
                block = np.tensordot(mats[kind], block, axes=([1], [axis]))
                block = np.moveaxis(block, 0, axis)
            out += block
    return SampledFunction(out, G, d, c.gamma if layout.mode == "int" else None)


def quadrature_l2(c: BesovCoefficients, G: int) -> tuple:
    """Midpoint L2 norm at 2^G and an error estimate from the 2^(G+1) grid."""
    value = synthesize(c, G).l2_norm()
    finer = synthesize(c, G + 1).l2_norm()
    return value, abs(finer - value)


# ---------------------------------------------------------------------------
# sampling the Besov ball

@dataclass
class BesovSample:
    coefficients: BesovCoefficients
    function: SampledFunction | None
    certificate: float  # besov_seq_norm of the returned coefficients


class BesovSampler:
    """Pushes the critical measure of the matched sequence space onto J^int."""

    def __init__(self, tau: float, p, q, d: int, j_max: int, N: int | None = None):
        p, q = as_exponent(p), as_exponent(q)
        if not tau > d * max(0.0, reciprocal(p) - 0.5):
            raise DomainError("τ > d(1/p − 1/2)₊ violated")
        self.tau, self.p, self.q, self.d = float(tau), p, q, int(d)
        self.system = WaveletSystem(required_moments(tau, p, d) if N is None else N)
        self.layout = WaveletLayout(self.system, d, j_max, "int")
        self.alpha = tau + d * (0.5 - reciprocal(p))
        self.space = SpaceSpec(self.layout.partition(), p, q, self.alpha, 0.0)
        self.measure = MeasureSpec.for_space(self.space)
        self.C1, self.C2 = self.layout.norm_equivalence(p, q, self.alpha)
        self.gamma = 1.0 / self.C2

    @property
    def s_star(self) -> float:
        return self.space.s_star

    def sample(self, rng, n: int = 1, grid: int | None = None) -> list:
        M = self.space.partition.max_blocks
        X = sample_critical_batch(self.measure, M, n, rng)
        out = []
        for row in X:
            c = BesovCoefficients.from_flat(self.layout, self.tau, self.p, self.q,
                                            self.gamma * row, self.gamma)
            f = synthesize(c, grid) if grid is not None else None
            out.append(BesovSample(c, f, besov_seq_norm(c)))
        return out


def sample_besov_ball(tau, p, q, d, j_max, rng, grid: int | None = None,
                      N: int | None = None) -> BesovSample:
    return BesovSampler(tau, p, q, d, j_max, N).sample(rng, 1, grid)[0]


def export_sampled(f: SampledFunction, path) -> list:
    """CSV (x, value) for d = 1; raw little-endian float64 plus JSON sidecar otherwise."""
    path = Path(path)
    if f.d == 1:
        lines = ["# schema=ratephase.sampled-function/1", "x,value"]
        lines += [f"{x:.17g},{v:.17g}" for x, v in zip(f.grid, f.values)]
        path.write_text("\n".join(lines) + "\n")
        return [path]
    path.write_bytes(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps({"schema": "ratephase.sampled-function/1", "d": f.d,
                                "points_per_axis": 2**f.G, "dtype": "float64-le",
                                "order": "row-major", "gamma": f.gamma}, indent=2))
    return [path, side]


# ---------------------------------------------------------------------------
# numerical diagnostics

def partition_of_unity_error(system: WaveletSystem, level: int = 10) -> float:
    """max over x in [0, 1) of |sum_k phi(x - k) - 1| on the dyadic grid."""
    phi, _ = system.table(level)
    n = 2**level
    total = np.zeros(n)
    for k in range(system.L):
        total += phi[k * n:(k + 1) * n]
    return float(np.max(np.abs(total - 1.0)))


def moment_errors(system: WaveletSystem) -> np.ndarray:
    """|sum_n n^l g_n| for l = 0 .. N-1 (discrete vanishing moments)."""
    n = np.arange(system.L + 1, dtype=float)
    return np.array([abs(np.sum(n**ell * system.g)) for ell in range(system.N)])


def gram_deviation(system: WaveletSystem, pairs, G: int) -> float:
    """max |<psi_a, psi_b> - delta_ab| over 1-D (j, m) pairs, midpoint rule on 2^G."""
    cols = []
    for j, m in pairs:
        kind = "F" if j == 0 else "M"
        cols.append(system.basis_matrix(kind, j, np.array([m]), G)[:, 0])
    B = np.column_stack(cols)
    gram = B.T @ B / 2**G
    return float(np.max(np.abs(gram - np.eye(len(cols)))))


def random_interior_coefficients(layout: WaveletLayout, n_nonzero: int, rng,
                                 j_limit: int | None = None, tau: float = 1.5,
                                 p=2, q=2) -> BesovCoefficients:
    """Gaussian values on ``n_nonzero`` random positions at scales <= j_limit."""
    j_limit = layout.j_max if j_limit is None else j_limit
    n_allowed = sum(int(np.prod(layout.shape(j))) for j in range(j_limit + 1))
    total = sum(int(np.prod(layout.shape(j))) for j in range(layout.j_max + 1))
    if n_nonzero > n_allowed:
        raise DomainError(f"only {n_allowed} interior wavelets at scales <= {j_limit}")
    vec = np.zeros(total)
    pos = rng.choice(n_allowed, size=n_nonzero, replace=False)
    vec[pos] = rng.standard_normal(n_nonzero)
    return BesovCoefficients.from_flat(layout, tau, p, q, vec)
