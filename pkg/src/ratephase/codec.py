"""Encoder/decoder pairs at a fixed code length R.

``BlockQuantizer`` is the workhorse: blocks 1..t get a per-coefficient bit
budget that falls linearly with depth, each block is scalar-quantized on a
symmetric range with an odd number of cells, and deeper blocks decode to
zero.  A 6-bit range exponent per block lets the quantizer track blocks that
are much smaller than the worst case allowed by the ball.
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DecodeError, DomainError
from .sequence import Signal, SpaceSpec


class Bitstring:
    """Immutable bit sequence of length R >= 1, stored one bit per byte."""

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8).ravel()
        if arr.size < 1:
            raise DomainError("bitstrings have length R >= 1")
        if np.any(arr > 1):
            raise DomainError("bits must be 0 or 1")
        arr.setflags(write=False)
        self._bits = arr

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def R(self) -> int:
        return int(self._bits.size)

    def __len__(self) -> int:
        return self.R

    def __eq__(self, other) -> bool:
        return isinstance(other, Bitstring) and np.array_equal(self._bits, other._bits)

    def __lt__(self, other: "Bitstring") -> bool:
        return self._bits.tobytes() < other._bits.tobytes()

    def __hash__(self) -> int:
        return hash(self._bits.tobytes())

    def __repr__(self) -> str:
        s = "".join(map(str, self._bits[:64]))
        return f"Bitstring(R={self.R}, {s}{'...' if self.R > 64 else ''})"

    def packed(self) -> bytes:
        return np.packbits(self._bits).tobytes()

    @classmethod
    def unpack(cls, data: bytes, R: int) -> "Bitstring":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if bits.size < R:
            raise DecodeError("bitstream shorter than declared length")
        return cls(bits[:R])

    @classmethod
    def from_int(cls, value: int, R: int) -> "Bitstring":
        if not 0 <= value < 2**R:
            raise DomainError("value does not fit in R bits")
        return cls([(value >> (R - 1 - i)) & 1 for i in range(R)])

    def to_int(self) -> int:
        return int("".join(map(str, self._bits)), 2)


def int_fields_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    """Big-endian bits of nonnegative integers, ``width`` bits each."""
    values = np.asarray(values, dtype=np.int64).ravel()
    if width == 0:
        return np.zeros(0, dtype=np.uint8)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def bits_to_int_fields(bits: np.ndarray, width: int, count: int) -> np.ndarray:
    if width == 0:
        return np.zeros(count, dtype=np.int64)
    chunk = np.asarray(bits[: width * count], dtype=np.int64).reshape(count, width)
    weights = np.left_shift(1, np.arange(width - 1, -1, -1, dtype=np.int64))
    return chunk @ weights


# ---------------------------------------------------------------------------
# payload container

PAYLOAD_MAGIC = b"RPCB"
_PAYLOAD_HEAD = struct.Struct(">4sBI")


def payload_to_bytes(bits: Bitstring, scheme_id: int) -> bytes:
    return _PAYLOAD_HEAD.pack(PAYLOAD_MAGIC, scheme_id, bits.R) + bits.packed()


def payload_from_bytes(data: bytes) -> tuple:
    """Returns (scheme_id, Bitstring)."""
    if len(data) < _PAYLOAD_HEAD.size:
        raise DecodeError("payload truncated")
    magic, scheme, R = _PAYLOAD_HEAD.unpack_from(data, 0)
    if magic != PAYLOAD_MAGIC:
        raise DecodeError("bad payload magic")
    body = data[_PAYLOAD_HEAD.size:]
    if len(body) != (R + 7) // 8:
        raise DecodeError("payload length does not match R")
    return scheme, Bitstring.unpack(body, R)


# ---------------------------------------------------------------------------
# codecs

class CodecPair:
    """Base class: an encoder/decoder pair at code length ``R``."""

    scheme_id = 0

    def __init__(self, R: int, metadata: dict | None = None):
        if R < 1:
            raise ConfigError("R >= 1 required")
        self.R = int(R)
        self.metadata = dict(metadata or {})

    def encode(self, x) -> Bitstring:
        raise NotImplementedError

    def decode(self, bits: Bitstring):
        raise NotImplementedError

    def roundtrip(self, x):
        return self.decode(self.encode(x))

    def error(self, x) -> float:
        return _distance(x, self.roundtrip(x))


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, Signal) else np.asarray(x, dtype=float)


def _distance(x, y) -> float:
    a, b = _as_array(x).ravel(), _as_array(y).ravel()
    if a.size != b.size:
        n = max(a.size, b.size)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class _BlockPlan:
    t: float
    budgets: tuple  # bits per coefficient, blocks 1..len(budgets)
    used_bits: int


class BlockQuantizer(CodecPair):
    scheme_id = 1
    SCALE_BITS = 6
    SCALE_STEP = 0.25  # range shrinks by 2^-0.25 per exponent step
    T_RESOLUTION = 16

    def __init__(self, space: SpaceSpec, R: int, M: int | None = None,
                 beta: float | None = None, b_base: int = 2):
        space.require_valid()
        self.space = space
        self.M = space.partition.max_blocks if M is None else int(M)
        if not 1 <= self.M <= space.partition.max_blocks:
            raise ConfigError("M must lie between 1 and the partition length")
        self.beta = space.d * (space.s_star + 0.5) if beta is None else float(beta)
        self.b_base = int(b_base)
        if self.beta <= 0 or self.b_base < 1:
            raise ConfigError("beta > 0 and b_base >= 1 required")
        self.sizes = np.asarray(space.partition.block_sizes[: self.M])
        self.radii = space.radii(self.M)
        self.R_min = self._plan_bits(self.T_RESOLUTION)[1]
        if R < self.R_min:
            raise ConfigError(f"R={R} is below R_min={self.R_min} for this space")
        super().__init__(R)
        self.plan = self._choose_plan()
        self.metadata.update(scheme="block-quantizer", beta=self.beta, b_base=self.b_base,
                             scale_bits=self.SCALE_BITS, scale_step=self.SCALE_STEP,
                             t=self.plan.t, budgets=list(self.plan.budgets),
                             used_bits=self.plan.used_bits, R_min=self.R_min)

    # -- bit allocation
    def _budgets(self, k: int) -> list:
        t = k / self.T_RESOLUTION
        out = []
        for mu in range(1, self.M + 1):
            if mu > t:
                break
            out.append(int(math.ceil(self.beta * (t - mu) + self.b_base - 1e-9)))
        return out

    def _plan_bits(self, k: int) -> tuple:
        b = self._budgets(k)
        used = sum(self.SCALE_BITS + int(n) * bb for n, bb in zip(self.sizes, b))
        return b, used

    def _choose_plan(self) -> _BlockPlan:
        lo = self.T_RESOLUTION  # t = 1 always fits once R >= R_min
        hi = self.T_RESOLUTION * (self.M + 64)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._plan_bits(mid)[1] <= self.R:
                lo = mid
            else:
                hi = mid - 1
        b, used = self._plan_bits(lo)
        return _BlockPlan(lo / self.T_RESOLUTION, tuple(b), used)

    @property
    def cutoff(self) -> int:
        """Number of quantized blocks (the m0 of the allocation)."""
        return len(self.plan.budgets)

    # -- scalar quantization
    def _ranges(self, mu: int) -> np.ndarray:
        k = np.arange(2**self.SCALE_BITS)
        return self.radii[mu] * 2.0 ** (-self.SCALE_STEP * k)

    @staticmethod
    def _quantize(x: np.ndarray, a, L: int) -> np.ndarray:
        u = np.floor((x * (L / a) + L) / 2.0)
        return np.clip(u, 0, L - 1).astype(np.int64)

    @staticmethod
    def _reconstruct(idx: np.ndarray, a, L: int) -> np.ndarray:
        return (2 * idx + 1 - L) * (a / L)

    def _encode_block(self, xb: np.ndarray, mu: int, b: int) -> tuple:
        """Best range exponent and indices for a batch of blocks (rows of xb)."""
        L = 2**b - 1
        ranges = self._ranges(mu)
        best_err = np.full(xb.shape[0], np.inf)
        best_k = np.zeros(xb.shape[0], dtype=np.int64)
        best_idx = np.zeros(xb.shape, dtype=np.int64)
        for k, a in enumerate(ranges):
            idx = self._quantize(xb, a, L)
            err = np.sum((xb - self._reconstruct(idx, a, L)) ** 2, axis=1)
            better = err < best_err  # strict: ties keep the smaller exponent
            if np.any(better):
                best_err[better] = err[better]
                best_k[better] = k
                best_idx[better] = idx[better]
        return best_k, best_idx

    def encode_indices(self, X: np.ndarray) -> list:
        """Per active block, (range exponents, index matrix) for a batch."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        offs = self.space.partition.offsets(self.M)
        out = []
        for mu, b in enumerate(self.plan.budgets):
            out.append(self._encode_block(X[:, offs[mu]:offs[mu + 1]], mu, b))
        return out

    def decode_indices(self, parts: list, n: int) -> np.ndarray:
        offs = self.space.partition.offsets(self.M)
        Y = np.zeros((n, offs[-1]))
        for mu, ((ks, idx), b) in enumerate(zip(parts, self.plan.budgets)):
            a = self._ranges(mu)[ks][:, None]
            Y[:, offs[mu]:offs[mu + 1]] = self._reconstruct(idx, a, 2**b - 1)
        return Y

    def roundtrip_batch(self, X: np.ndarray) -> np.ndarray:
        X = self._fit(X)
        return self.decode_indices(self.encode_indices(X), X.shape[0])

    def _fit(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = self.space.partition.total(self.M)
        if X.shape[1] < total:
            X = np.pad(X, ((0, 0), (0, total - X.shape[1])))
        return X[:, :total]

    def encode(self, x) -> Bitstring:
        X = self._fit(_as_array(x)[None, :])
        fields = []
        for (ks, idx), b in zip(self.encode_indices(X), self.plan.budgets):
            fields.append(int_fields_to_bits(ks, self.SCALE_BITS))
            fields.append(int_fields_to_bits(idx[0], b))
        bits = np.concatenate(fields)
        return Bitstring(np.pad(bits, (0, self.R - bits.size)))

    def decode(self, bits: Bitstring) -> Signal:
        if bits.R != self.R:
            raise DecodeError(f"expected {self.R} bits, got {bits.R}")
        raw, pos, parts = bits.bits, 0, []
        for mu, b in enumerate(self.plan.budgets):
            k = bits_to_int_fields(raw[pos:], self.SCALE_BITS, 1)
            pos += self.SCALE_BITS
            n = int(self.sizes[mu])
            idx = bits_to_int_fields(raw[pos:], b, n)
            pos += n * b
            if np.any(idx > 2**b - 2):
                idx = np.minimum(idx, 2**b - 2)  # unused top index maps to the last cell
            parts.append((k, idx[None, :]))
        return Signal(self.space, self.decode_indices(parts, 1)[0], self.M)

    def error(self, x) -> float:
        X = self._fit(_as_array(x)[None, :])
        return float(np.linalg.norm(self.roundtrip_batch(X) - X))


def block_quantizer(space: SpaceSpec, R: int, **kw) -> BlockQuantizer:
    return BlockQuantizer(space, R, **kw)


class CodebookCodec(CodecPair):
    """Nearest-codeword codec over an explicit list of at most 2^R points.

    Bitstrings whose index exceeds the codebook decode to codeword 0.
    """

    scheme_id = 2

    def __init__(self, codewords: Sequence, R: int, template: Signal | None = None):
        super().__init__(R)
        if len(codewords) == 0 or len(codewords) > 2**R:
            raise ConfigError("codebook needs between 1 and 2^R entries")
        if template is None and isinstance(codewords[0], Signal):
            template = codewords[0]
        self.template = template
        self.book = np.stack([_as_array(c).ravel() for c in codewords])
        self._sq = np.sum(self.book**2, axis=1)
        self.metadata.update(scheme="codebook", size=len(codewords))

    def nearest(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        d2 = self._sq[None, :] - 2.0 * X @ self.book.T
        # argmin returns the first minimizer, i.e. the smallest index
        return np.argmin(d2, axis=1)

    def encode(self, x) -> Bitstring:
        return Bitstring.from_int(int(self.nearest(_as_array(x).ravel()[None, :])[0]), self.R)

    def decode(self, bits: Bitstring):
        i = bits.to_int()
        row = self.book[i if i < len(self.book) else 0]
        if self.template is not None:
            return Signal(self.template.spec, row, self.template.M)
        return row.copy()

    def roundtrip_batch(self, X: np.ndarray) -> np.ndarray:
        return self.book[self.nearest(np.asarray(X, dtype=float))]


class TransferCodec(CodecPair):
    """Codec for the image of a class under a Lipschitz map.

    Decoding pushes the source decoder's output through ``project`` (at
    tolerance R^-s) and then ``forward``.  Encoding returns the nearest
    codeword by exhaustive search when R is small, otherwise it encodes
    ``preimage(y)`` with the source encoder.
    """

    scheme_id = 3
    EXHAUSTIVE_MAX_R = 16

    def __init__(self, codec: CodecPair, forward: Callable, project: Callable,
                 s: float, lipschitz: float | None, preimage: Callable | None = None,
                 distance: Callable | None = None):
        if lipschitz is None:
            raise ConfigError("transfer_codec needs the Lipschitz constant of forward")
        super().__init__(codec.R)
        self.source, self.forward, self.project = codec, forward, project
        self.s, self.lipschitz, self.preimage = float(s), float(lipschitz), preimage
        self.distance = distance or _distance
        if preimage is None and self.R > self.EXHAUSTIVE_MAX_R:
            raise ConfigError("need a preimage map when R exceeds the exhaustive-search limit")
        self.metadata.update(scheme="transfer", s=self.s, lipschitz=self.lipschitz)

    def decode(self, bits: Bitstring):
        return self.forward(self.project(self.source.decode(bits), self.R ** -self.s))

    def encode(self, y) -> Bitstring:
        if self.R <= self.EXHAUSTIVE_MAX_R:
            best, best_d = None, math.inf
            for v in range(2**self.R):  # increasing order = lexicographic order
                bits = Bitstring.from_int(v, self.R)
                dist = self.distance(y, self.decode(bits))
                if dist < best_d:
                    best, best_d = bits, dist
            return best
        return self.source.encode(self.preimage(y))

    def error_bound(self, source_constant: float) -> float:
        """L (1 + 2C) R^-s for a source codec with distortion C R^-s."""
        return self.lipschitz * (1 + 2 * source_constant) * self.R ** -self.s


def transfer_codec(codec: CodecPair, forward: Callable, project: Callable, s: float,
                   lipschitz: float | None = None, **kw) -> TransferCodec:
    return TransferCodec(codec, forward, project, s, lipschitz, **kw)


def distortion(codec: CodecPair, samples) -> float:
    """Largest l2 error over the samples (a lower estimate of the sup-distortion)."""
    if isinstance(samples, np.ndarray):
        if samples.size == 0:
            raise DomainError("distortion needs at least one sample")
        if hasattr(codec, "roundtrip_batch"):
            X = np.atleast_2d(samples)
            Xf = codec._fit(X) if hasattr(codec, "_fit") else X
            return float(np.max(np.linalg.norm(codec.roundtrip_batch(Xf) - Xf, axis=1)))
        samples = list(samples)
    samples = list(samples)
    if not samples:
        raise DomainError("distortion needs at least one sample")
    return max(codec.error(x) for x in samples)


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    R: int
    empirical: bool = True


def entropy_number_upper(space: SpaceSpec, R: int, samples,
                         codec: CodecPair | None = None) -> EntropyEstimate:
    """Empirical stand-in for the entropy number e_{R+1} of the class.

    It is the distortion of a length-R codec on ``samples``, so it only
    bounds e_{R+1} up to the gap between the samples and the whole class.
    """
    codec = block_quantizer(space, R) if codec is None else codec
    return EntropyEstimate(distortion(codec, samples), R)


def fit_loglog_slope(R_values, distortions) -> float:
    """Least-squares slope of log2(distortion) against log2(R)."""
    x = np.log2(np.asarray(R_values, dtype=float))
    y = np.log2(np.asarray(distortions, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# the countable class {x_n = log2(n+1)^-s e_n} with an index codebook

class LogDecayCodec(CodecPair):
    """Index codec for x_m = (log2(m+1))^-s e_m, m >= 0 (x_0 = 0).

    Elements are referred to by their index m.  Indices below 2^R are sent
    verbatim; all others are sent as 0.
    """

    scheme_id = 4

    def __init__(self, s: float, R: int):
        if not s > 0:
            raise DomainError("s > 0 violated")
        super().__init__(R)
        self.s = float(s)
        self.metadata.update(scheme="log-decay-index", s=self.s)

    def amplitude(self, m: int) -> float:
        return 0.0 if m == 0 else math.log2(m + 1) ** -self.s

    def element_distance(self, m: int, k: int) -> float:
        if m == k:
            return 0.0
        return math.hypot(self.amplitude(m), self.amplitude(k))

    def encode(self, m: int) -> Bitstring:
        if m < 0:
            raise DomainError("class index must be nonnegative")
        return Bitstring.from_int(m if m <= 2**self.R - 1 else 0, self.R)

    def decode(self, bits: Bitstring) -> int:
        return bits.to_int()

    def error(self, m: int) -> float:
        return self.element_distance(m, self.decode(self.encode(m)))

    def class_distortion(self) -> float:
        """Exact supremum of the error over the whole class.

        Indices below 2^R are reproduced; beyond that the error
        log2(m+1)^-s decreases in m, so the worst case is m = 2^R.
        """
        return self.error(2**self.R)


def log_decay_codec(s: float, R: int) -> LogDecayCodec:
    return LogDecayCodec(s, R)


def enumerate_codebook(codec: CodecPair, limit_R: int = 20) -> list:
    """All decoder outputs over the 2^R bitstrings (small R only)."""
    if codec.R > limit_R:
        raise ConfigError("codebook enumeration is limited to small R")
    return [codec.decode(Bitstring(bits)) for bits in itertools.product((0, 1), repeat=codec.R)]
