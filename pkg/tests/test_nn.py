import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ratephase.codec import Bitstring
from ratephase.errors import DecodeError, DomainError, QuantizationError, ShapeError
from ratephase.nn import (C0, GridSpec, NetworkContext, QuantizedNetwork, capacity_log2,
                          decode_network, encode_network, forward, length_bound, load_network,
                          quantize_network, random_context, random_network, relu, save_network,
                          w_eps_search)


def test_grid_spec():
    g = GridSpec(2, 5)  # c = 3
    assert g.exponent == 18
    assert g.max_index == 5**6 * 2**18
    assert g.count_bits == 3
    assert GridSpec(1, 1).max_index == 1  # grid {-1, 0, 1}
    with pytest.raises(DomainError):
        GridSpec(0, 3)


def test_slot_count_invariant():
    NetworkContext((1, 1), 1, 1)
    with pytest.raises(DomainError):
        NetworkContext((2, 2), 1, 1)
    with pytest.raises(ShapeError):
        NetworkContext((3,), 1, 4)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_and_length_bound(seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng)
    net = random_network(ctx, int(rng.integers(0, ctx.W_cap + 1)), rng)
    bits = encode_network(net)
    assert decode_network(bits, ctx) == net
    assert bits.R <= length_bound(ctx.W_cap, ctx.sigma)
    assert capacity_log2(ctx.W_cap, ctx.sigma, ctx.dims) <= capacity_log2(ctx.W_cap, ctx.sigma)


@pytest.mark.parametrize("sigma", [1, 2, 3])
def test_exact_capacity_never_exceeds_closed_form(sigma):
    for W in range(1, 200):
        for dims in [(1, 1), (2, 3, 1), (4, 8, 8, 2)]:
            try:
                cap = capacity_log2(W, sigma, dims)
            except DomainError:
                continue
            assert cap <= C0 * sigma * W * math.ceil(math.log2(1 + W)) ** 2


def test_encoding_is_injective_on_small_class():
    ctx = NetworkContext((1, 1), 1, 2)
    seen = set()
    for a, b in itertools.product(range(-4, 5), repeat=2):
        seen.add(encode_network(QuantizedNetwork.from_slots(ctx, [a, b])))
    assert len(seen) == 81


def test_hat_function_network():
    ctx = NetworkContext((1, 3, 1), 1, 8)
    net = QuantizedNetwork.from_values(ctx, [
        (np.ones((3, 1)), np.array([0.0, -0.5, -1.0])),
        (np.array([[1.0, -2.0, 1.0]]), np.array([0.0])),
    ])
    x = np.linspace(-0.5, 1.5, 100)
    y = forward(net, relu, x[:, None])[:, 0]
    assert np.max(np.abs(y - np.maximum(0.0, 0.5 - np.abs(x - 0.5)))) <= 1e-12
    assert forward(net, relu, np.array([0.5])).shape == (1,)


def test_activation_must_vanish_at_zero():
    ctx = NetworkContext((1, 1), 1, 2)
    net = QuantizedNetwork.from_slots(ctx, [1, 0])
    with pytest.raises(DomainError):
        forward(net, lambda v: v + 1.0, np.array([[0.0]]))
    with pytest.raises(ShapeError):
        forward(net, relu, np.zeros((2, 3)))


def test_off_grid_and_out_of_range_entries():
    ctx = NetworkContext((1, 1), 1, 2)  # step 1/2, |value| <= 2
    with pytest.raises(QuantizationError):
        QuantizedNetwork.from_values(ctx, [(np.array([[0.25]]), np.array([0.0]))])
    with pytest.raises(QuantizationError):
        QuantizedNetwork.from_slots(ctx, [5, 0])
    with pytest.raises(QuantizationError):
        QuantizedNetwork.from_slots(NetworkContext((1, 2, 1), 1, 2), [1, 1, 1, 0, 0, 0, 0])


@given(st.lists(st.floats(-3, 3), min_size=7, max_size=7))
def test_quantize_then_encode_always_succeeds(vals):
    ctx = NetworkContext((1, 2, 1), 2, 3)
    layers = [(np.array(vals[:2]).reshape(2, 1), np.array(vals[2:4])),
              (np.array(vals[4:6]).reshape(1, 2), np.array(vals[6:7]))]
    net = quantize_network(ctx, layers)
    assert net.n_nonzero <= 3
    assert decode_network(encode_network(net), ctx) == net


def test_decode_rejects_malformed_streams():
    ctx = NetworkContext((1, 2, 1), 1, 4)
    net = QuantizedNetwork.from_slots(ctx, [1, 0, 0, -2, 0, 0, 0])
    bits = encode_network(net).bits.tolist()
    with pytest.raises(DecodeError):
        decode_network(Bitstring(bits[:-1]), ctx)
    with pytest.raises(DecodeError):
        decode_network(Bitstring(bits + [0]), ctx)
    # swap the two records: positions must increase
    cb, rec = ctx.grid.count_bits, ctx.position_bits + ctx.grid.value_bits
    swapped = bits[:cb] + bits[cb + rec:cb + 2 * rec] + bits[cb:cb + rec]
    with pytest.raises(DecodeError):
        decode_network(Bitstring(swapped), ctx)


def test_network_file_round_trip(tmp_path, rng):
    ctx = NetworkContext((2, 4, 1), 2, 10)
    net = random_network(ctx, 7, rng)
    path, side = save_network(net, tmp_path / "net.bin")
    assert side.exists()
    assert load_network(path) == net
    assert NetworkContext.from_json(side.read_text()) == ctx


def test_search_finds_exact_affine_target(rng):
    x = (np.arange(64) + 0.5) / 64
    res = w_eps_search((x, 0.5 * x + 0.5), relu, 1, 1e-12, 6, rng)
    assert res.W == 2 and res.error == 0.0 and res.heuristic


def test_search_profile_is_monotone_and_eps_independent():
    x = (np.arange(64) + 0.5) / 64
    y = np.maximum(0.0, 0.5 - np.abs(x - 0.5))
    loose = w_eps_search((x, y), relu, 1, 0.2, 10, np.random.default_rng(4))
    tight = w_eps_search((x, y), relu, 1, 1e-12, 10, np.random.default_rng(4))
    assert tight.errors_by_W[: len(loose.errors_by_W)] == loose.errors_by_W
    assert all(b <= a for a, b in zip(tight.errors_by_W, tight.errors_by_W[1:]))
    assert tight.W is not None and tight.W <= 10 and tight.error == 0.0
    with pytest.raises(DomainError):
        w_eps_search((x, y), relu, 1, 0.0, 3, np.random.default_rng(0))


def test_search_reports_failure(rng):
    x = (np.arange(64) + 0.5) / 64
    res = w_eps_search((x, np.sin(40 * x)), relu, 1, 1e-6, 3, rng)
    assert res.W is None and res.network is None
