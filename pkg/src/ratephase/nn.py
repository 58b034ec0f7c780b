"""Quantized feed-forward networks and their bit serialization.

Weights and biases live on the grid step * Z with step = 2^-(sigma c^2) and
magnitude at most W^(sigma c), c = ceil(log2 W).  Entries are stored as the
integer multiples of ``step`` (Python ints, since they can exceed 64 bits).

Serialization: c' = ceil(log2(1+W)) bits holding the nonzero count, then one
record per nonzero entry in slot order: the slot index (ceil(log2 P) bits,
P = number of parameter slots) followed by k + K in ceil(log2(2K+1)) bits.
Layer dims travel separately in a JSON context.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .codec import Bitstring
from .errors import DecodeError, DomainError, QuantizationError, ShapeError

C0 = 5  # length <= C0 * sigma * W * ceil(log2(1+W))^2 for this layout


def _clog2(n: int) -> int:
    """ceil(log2 n) for integers n >= 1, exact."""
    return (int(n) - 1).bit_length()


@dataclass(frozen=True)
class GridSpec:
    sigma: int
    W: int

    def __post_init__(self):
        if self.sigma < 1 or self.W < 1:
            raise DomainError("sigma >= 1 and W >= 1 required")

    @property
    def exponent(self) -> int:
        """Grid step is 2^-exponent."""
        return self.sigma * _clog2(self.W) ** 2

    @property
    def max_index(self) -> int:
        """K with entries k * step, |k| <= K."""
        c = _clog2(self.W)
        return self.W ** (self.sigma * c) * 2**self.exponent

    @property
    def value_bits(self) -> int:
        return _clog2(2 * self.max_index + 1)

    @property
    def count_bits(self) -> int:
        return _clog2(self.W + 1)


@dataclass(frozen=True)
class NetworkContext:
    dims: tuple
    sigma: int
    W_cap: int

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        if len(self.dims) < 2 or any(n < 1 for n in self.dims):
            raise ShapeError("dims need at least input and output sizes, all positive")
        grid = GridSpec(self.sigma, self.W_cap)
        if _clog2(self.n_slots) > self.sigma * grid.count_bits**2:
            raise DomainError("parameter slot count exceeds 2^(sigma ceil(log2(1+W))^2)")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.sigma, self.W_cap)

    @property
    def n_slots(self) -> int:
        return sum(a * b + a for b, a in zip(self.dims[:-1], self.dims[1:]))

    @property
    def position_bits(self) -> int:
        return _clog2(self.n_slots)

    def to_json(self) -> str:
        return json.dumps({"schema": "ratephase.network/1", "dims": list(self.dims),
                           "sigma": self.sigma, "W_cap": self.W_cap})

    @classmethod
    def from_json(cls, text: str) -> "NetworkContext":
        doc = json.loads(text)
        return cls(tuple(doc["dims"]), doc["sigma"], doc["W_cap"])


class QuantizedNetwork:
    """Immutable network with integer grid indices for all parameters."""

    def __init__(self, context: NetworkContext, layers: Sequence):
        self.context = context
        dims = context.dims
        if len(layers) != len(dims) - 1:
            raise ShapeError("number of layers does not match dims")
        K = context.grid.max_index
        store = []
        for ell, (A, b) in enumerate(layers):
            A = np.array(A, dtype=object).reshape(dims[ell + 1], dims[ell])
            b = np.array(b, dtype=object).reshape(dims[ell + 1])
            for v in list(A.ravel()) + list(b.ravel()):
                if not isinstance(v, (int, np.integer)) or abs(int(v)) > K:
                    raise QuantizationError("grid index outside [-K, K] or not an integer")
            A = np.vectorize(int, otypes=[object])(A) if A.size else A
            b = np.vectorize(int, otypes=[object])(b) if b.size else b
            A.setflags(write=False)
            b.setflags(write=False)
            store.append((A, b))
        self.layers = tuple(store)
        nnz = self.n_nonzero
        if nnz > context.W_cap:
            raise QuantizationError(f"W(Φ)={nnz} exceeds W_cap={context.W_cap}")

    @property
    def sigma(self) -> int:
        return self.context.sigma

    @property
    def W_cap(self) -> int:
        return self.context.W_cap

    @property
    def dims(self) -> tuple:
        return self.context.dims

    @property
    def n_nonzero(self) -> int:
        return sum(int(np.count_nonzero(A != 0)) + int(np.count_nonzero(b != 0))
                   for A, b in self.layers)

    def slots(self) -> list:
        """All grid indices in slot order (layer by layer, A row-major then b)."""
        out = []
        for A, b in self.layers:
            out.extend(A.ravel().tolist())
            out.extend(b.ravel().tolist())
        return out

    def float_layers(self) -> list:
        e = self.context.grid.exponent
        conv = np.vectorize(lambda k: math.ldexp(float(k), -e), otypes=[float])
        return [(conv(A) if A.size else np.zeros(A.shape), conv(b) if b.size else np.zeros(b.shape))
                for A, b in self.layers]

    def __eq__(self, other) -> bool:
        return (isinstance(other, QuantizedNetwork) and self.context == other.context
                and self.slots() == other.slots())

    def __hash__(self) -> int:
        return hash((self.context, tuple(self.slots())))

    @classmethod
    def from_values(cls, context: NetworkContext, layers: Sequence) -> "QuantizedNetwork":
        """Build from real-valued layers that must already lie on the grid."""
        e = context.grid.exponent
        out = []
        for A, b in layers:
            out.append((_to_index(A, e), _to_index(b, e)))
        return cls(context, out)

    @classmethod
    def from_slots(cls, context: NetworkContext, values: Sequence[int]) -> "QuantizedNetwork":
        values = list(values)
        if len(values) != context.n_slots:
            raise ShapeError("slot vector has the wrong length")
        layers, pos = [], 0
        for n_in, n_out in zip(context.dims[:-1], context.dims[1:]):
            A = values[pos:pos + n_in * n_out]
            pos += n_in * n_out
            b = values[pos:pos + n_out]
            pos += n_out
            layers.append((np.array(A, dtype=object).reshape(n_out, n_in),
                           np.array(b, dtype=object).reshape(n_out)))
        return cls(context, layers)


def _to_index(arr, e: int) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    out = np.empty(a.shape, dtype=object)
    for pos, v in np.ndenumerate(a):
        s = math.ldexp(v, e)
        if not math.isfinite(s) or not s.is_integer():
            raise QuantizationError(f"entry {v!r} is not on the grid 2^-{e} Z")
        out[pos] = int(s)
    return out


def quantize_network(context: NetworkContext, layers: Sequence) -> QuantizedNetwork:
    """Round real layers to the grid, clip to range and keep the W_cap largest entries."""
    grid = context.grid
    e, K = grid.exponent, grid.max_index
    flat = []
    for A, b in layers:
        for v in list(np.ravel(A)) + list(np.ravel(b)):
            k = int(round(math.ldexp(float(v), e)))
            flat.append(max(-K, min(K, k)))
    nz = [i for i, k in enumerate(flat) if k != 0]
    if len(nz) > context.W_cap:
        keep = sorted(nz, key=lambda i: (-abs(flat[i]), i))[: context.W_cap]
        flat = [k if i in set(keep) else 0 for i, k in enumerate(flat)]
    return QuantizedNetwork.from_slots(context, flat)


def _check_activation(activation: Callable) -> None:
    if float(np.asarray(activation(np.zeros(1)))[0]) != 0.0:
        raise DomainError("activation must satisfy ϱ(0) = 0")


def relu(x):
    return np.maximum(x, 0.0)


def forward(net: QuantizedNetwork, activation: Callable, x) -> np.ndarray:
    """Evaluate the network on one input vector or on a batch (rows)."""
    _check_activation(activation)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != net.dims[0]:
        raise ShapeError(f"input has length {X.shape[1]}, expected {net.dims[0]}")
    layers = net.float_layers()
    for ell, (A, b) in enumerate(layers):
        X = X @ A.T + b
        if ell < len(layers) - 1:
            X = activation(X)
    return X[0] if single else X


def encode_network(net: QuantizedNetwork) -> Bitstring:
    ctx, grid = net.context, net.context.grid
    K, vb, pb = grid.max_index, grid.value_bits, ctx.position_bits
    slots = net.slots()
    nz = [(i, k) for i, k in enumerate(slots) if k != 0]
    bits = _int_bits(len(nz), grid.count_bits)
    for i, k in nz:
        bits += _int_bits(i, pb) + _int_bits(k + K, vb)
    return Bitstring(bits)


def _int_bits(v: int, width: int) -> list:
    return [(v >> (width - 1 - t)) & 1 for t in range(width)]


def decode_network(bits: Bitstring, context: NetworkContext) -> QuantizedNetwork:
    grid = context.grid
    K, vb, pb, cb = grid.max_index, grid.value_bits, context.position_bits, grid.count_bits
    raw = bits.bits.tolist()
    if len(raw) < cb:
        raise DecodeError("bitstream shorter than its header")
    count = _bits_int(raw[:cb])
    need = cb + count * (pb + vb)
    if len(raw) != need:
        raise DecodeError(f"bitstream has {len(raw)} bits, header implies {need}")
    if count > context.W_cap:
        raise DecodeError("nonzero count exceeds W_cap")
    slots = [0] * context.n_slots
    pos, last = cb, -1
    for _ in range(count):
        i = _bits_int(raw[pos:pos + pb])
        pos += pb
        k = _bits_int(raw[pos:pos + vb]) - K
        pos += vb
        if i <= last or i >= context.n_slots or k == 0 or abs(k) > K:
            raise DecodeError("non-canonical or out-of-range record")
        slots[i], last = k, i
    return QuantizedNetwork.from_slots(context, slots)


def _bits_int(bits) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def length_bound(W: int, sigma: int) -> float:
    return C0 * sigma * W * _clog2(W + 1) ** 2


def capacity_log2(W: int, sigma: int, dims: Sequence[int] | None = None) -> float:
    """log2 of the number of bitstrings the serialization can produce.

    Without ``dims`` this is the closed-form bound C0 sigma W ceil(log2(1+W))^2;
    with ``dims`` it is the exact count for that layout, which never exceeds
    the closed form.
    """
    if W < 1 or sigma < 1:
        raise DomainError("W >= 1 and sigma >= 1 required")
    if dims is None:
        return float(length_bound(W, sigma))
    ctx = NetworkContext(tuple(dims), sigma, W)
    grid = ctx.grid
    rec = ctx.position_bits + grid.value_bits
    top = min(W, ctx.n_slots)
    # sum_{w=0}^{top} 2^(count_bits + w rec), in log2
    total = sum(2 ** (grid.count_bits + w * rec) for w in range(top + 1))
    return math.log2(total)


def random_network(context: NetworkContext, n_nonzero: int,
                   rng: np.random.Generator) -> QuantizedNetwork:
    """Network with exactly ``n_nonzero`` uniformly placed nonzero grid indices."""
    K = context.grid.max_index
    n_nonzero = min(n_nonzero, context.n_slots, context.W_cap)
    pos = rng.choice(context.n_slots, size=n_nonzero, replace=False)
    slots = [0] * context.n_slots
    nbits = (2 * K).bit_length()
    for i in pos:
        k = 0
        while k == 0:
            # rejection sample a uniform integer in [-K, K]
            while True:
                v = _random_bits(rng, nbits)
                if v <= 2 * K:
                    break
            k = v - K
        slots[int(i)] = k
    return QuantizedNetwork.from_slots(context, slots)


def _random_bits(rng: np.random.Generator, n: int) -> int:
    v, got = 0, 0
    while got < n:
        take = min(32, n - got)
        v = (v << take) | int(rng.integers(0, 2**take))
        got += take
    return v


def save_network(net: QuantizedNetwork, path) -> list:
    path = Path(path)
    bits = encode_network(net)
    path.write_bytes(b"RPNN" + bits.R.to_bytes(4, "big") + bits.packed())
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(net.context.to_json())
    return [path, side]


def load_network(path) -> QuantizedNetwork:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != b"RPNN":
        raise DecodeError("not a network file")
    R = int.from_bytes(data[4:8], "big")
    ctx = NetworkContext.from_json(path.with_suffix(path.suffix + ".json").read_text())
    return decode_network(Bitstring.unpack(data[8:], R), ctx)


# ---------------------------------------------------------------------------
# heuristic search for a small network approximating a sampled target

@dataclass
class SearchResult:
    W: int | None
    network: QuantizedNetwork | None
    error: float
    errors_by_W: list
    heuristic: bool = True


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(a**2)))


def _candidates(x, y, W, sigma, activation, rng, trials):
    """Yield quantized candidate networks with at most W nonzeros."""
    # affine, one layer
    ctx1 = NetworkContext((1, 1), sigma, W)
    a, b = np.polyfit(x, y, 1)
    options = [(a, b)] if W >= 2 else [(a, 0.0), (0.0, float(np.mean(y)))]
    for aa, bb in options:
        yield quantize_network(ctx1, [(np.array([[aa]]), np.array([bb]))])
    # one hidden layer: each unit costs input weight, bias and output weight
    H = (W - 1) // 3
    if H < 1:
        return
    try:
        ctx2 = NetworkContext((1, H, 1), sigma, W)
    except DomainError:
        return
    for t in range(trials + 1):
        if t == 0:
            knots = x.min() + (x.max() - x.min()) * np.arange(H) / H
        else:
            knots = np.sort(rng.uniform(x.min(), x.max(), size=H))
        feats = activation(x[:, None] - knots[None, :])
        design = np.column_stack([feats, np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        layers = [(np.ones((H, 1)), -knots), (coef[:H][None, :], np.array([coef[H]]))]
        yield quantize_network(ctx2, layers)


def _coordinate_descent(net, x, y, activation, sweeps=3):
    best = net
    best_err = _rms(forward(best, activation, x[:, None])[:, 0] - y)
    K = net.context.grid.max_index
    for _ in range(sweeps):
        improved = False
        slots = best.slots()
        for i, k in enumerate(slots):
            if k == 0:
                continue
            for step in (1 << s for s in range(0, 24, 4)):
                for delta in (step, -step):
                    cand = list(slots)
                    cand[i] = max(-K, min(K, k + delta))
                    if cand[i] == 0:
                        continue
                    net2 = QuantizedNetwork.from_slots(best.context, cand)
                    err = _rms(forward(net2, activation, x[:, None])[:, 0] - y)
                    if err < best_err:
                        best, best_err, slots, k, improved = net2, err, cand, cand[i], True
        if not improved:
            break
    return best, best_err


def w_eps_search(target, activation: Callable, sigma: int, eps: float,
                 W_budget_max: int, rng: np.random.Generator, trials: int = 4) -> SearchResult:
    """Smallest W (found heuristically) whose best candidate has L2 error <= eps.

    ``target`` is a pair (x, y) of grid points in (0, 1) and values, or any
    object with ``grid`` and ``values``.  The per-W searches use seeds drawn
    up front, so the error profile does not depend on ``eps``.
    """
    if not eps > 0:
        raise DomainError("eps > 0 violated")
    _check_activation(activation)
    if hasattr(target, "values"):
        x, y = np.asarray(target.grid, float), np.asarray(target.values, float).ravel()
    else:
        x, y = (np.asarray(v, float) for v in target)
    seeds = rng.integers(0, 2**63 - 1, size=W_budget_max + 1)
    running, best_net, profile = _rms(y), None, []
    hit = None
    if running <= eps:
        hit = 0
    profile.append(running)
    for W in range(1, W_budget_max + 1):
        sub = np.random.default_rng(int(seeds[W]))
        for cand in _candidates(x, y, W, sigma, activation, sub, trials):
            cand, err = _coordinate_descent(cand, x, y, activation)
            if err < running:
                running, best_net = err, cand
        profile.append(running)
        if hit is None and running <= eps:
            hit = W
            break
    if hit is None:
        return SearchResult(None, None, running, profile)
    return SearchResult(hit, best_net, profile[hit], profile)


def random_context(rng: np.random.Generator, sigma_max: int = 3, W_max: int = 64,
                   max_depth: int = 3, max_width: int = 6) -> NetworkContext:
    """Random (dims, sigma, W) admissible for the slot-count invariant."""
    sigma = int(rng.integers(1, sigma_max + 1))
    W = int(rng.integers(1, W_max + 1))
    while True:
        depth = int(rng.integers(1, max_depth + 1))
        dims = tuple(int(v) for v in rng.integers(1, max_width + 1, size=depth + 1))
        try:
            return NetworkContext(dims, sigma, W)
        except DomainError:
            if W == 1 and sigma == 1:
                return NetworkContext((1, 1), sigma, W)
