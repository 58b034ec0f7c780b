import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ratephase.codec import (Bitstring, CodebookCodec, LogDecayCodec, bits_to_int_fields,
                             block_quantizer, distortion, entropy_number_upper, enumerate_codebook,
                             log_decay_codec, fit_loglog_slope, int_fields_to_bits,
                             payload_from_bytes, payload_to_bytes, transfer_codec)
from ratephase.critical import MeasureSpec, sample_critical_batch
from ratephase.errors import ConfigError, DecodeError, DomainError
from ratephase.sequence import INF, Signal, SpaceSpec, make_dyadic_partition, signal_from_bytes

FIXTURES = Path(__file__).parent / "fixtures"


def space(p=2, q=2, alpha=1.5, M=8):
    return SpaceSpec(make_dyadic_partition(1, M), p, q, alpha)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_bitstring_pack_round_trip(bits):
    b = Bitstring(bits)
    assert Bitstring.unpack(b.packed(), b.R) == b
    assert b.R == len(bits)


@given(st.integers(1, 80).flatmap(lambda R: st.tuples(st.just(R), st.integers(0, 2**R - 1))))
def test_bitstring_int_round_trip(args):
    R, v = args
    assert Bitstring.from_int(v, R).to_int() == v


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_bitstring_order_is_numeric_order_at_fixed_length(R, seed):
    r = np.random.default_rng(seed)
    a, b = (int(v) for v in r.integers(0, 2**R, size=2))
    assert (Bitstring.from_int(a, R) < Bitstring.from_int(b, R)) == (a < b)


def test_bitstring_guards():
    with pytest.raises(DomainError):
        Bitstring([])
    with pytest.raises(DomainError):
        Bitstring([0, 2])
    with pytest.raises(DomainError):
        Bitstring.from_int(8, 3)


@given(st.integers(1, 20), st.lists(st.integers(0, 2**20 - 1), min_size=1, max_size=30))
def test_int_fields_round_trip(width, vals):
    vals = [v % (2**width) for v in vals]
    bits = int_fields_to_bits(np.array(vals), width)
    assert list(bits_to_int_fields(bits, width, len(vals))) == vals


def test_payload_container():
    b = Bitstring([1, 0, 1, 1, 0, 0, 1, 0, 1])
    data = payload_to_bytes(b, 3)
    assert payload_from_bytes(data) == (3, b)
    with pytest.raises(DecodeError):
        payload_from_bytes(data[:-1])
    with pytest.raises(DecodeError):
        payload_from_bytes(b"XXXX" + data[4:])


def test_golden_payloads():
    sig = signal_from_bytes((FIXTURES / "signal_golden.bin").read_bytes())
    golden = json.loads((FIXTURES / "quantizer_golden.json").read_text())
    for R, want in golden.items():
        q = block_quantizer(sig.spec, int(R))
        assert payload_to_bytes(q.encode(sig), q.scheme_id).hex() == want["payload_hex"]
        assert list(q.plan.budgets) == want["budgets"]
        assert q.error(sig) == pytest.approx(want["error"], rel=1e-12)
        _, bits = payload_from_bytes(bytes.fromhex(want["payload_hex"]))
        assert np.allclose(q.decode(bits).data, q.roundtrip_batch(sig.data[None, :])[0])


def test_quantizer_rejects_short_codes():
    sp = space()
    q = block_quantizer(sp, 200)
    with pytest.raises(ConfigError, match=f"R_min={q.R_min}"):
        block_quantizer(sp, q.R_min - 1)
    block_quantizer(sp, q.R_min)


def test_quantizer_rejects_invalid_space():
    with pytest.raises(DomainError):
        block_quantizer(space(p=INF, alpha=0.2), 100)


@pytest.mark.parametrize("R", [10, 37, 64, 300, 1000])
def test_code_length_is_exactly_R(R, rng):
    sp = space()
    q = block_quantizer(sp, R)
    x = sample_critical_batch(MeasureSpec.for_space(sp), 8, 1, rng)[0]
    bits = q.encode(Signal(sp, x, 8))
    assert bits.R == R
    assert q.plan.used_bits <= R


@settings(max_examples=25)
@given(st.sampled_from([(2, 2, 1.5), (INF, INF, 1.0), (1, INF, 1.0), (3, 1, 2.0)]),
       st.integers(12, 600), st.integers(0, 2**32 - 1))
def test_decode_encode_matches_batch_roundtrip(params, R, seed):
    sp = space(*params)
    try:
        q = block_quantizer(sp, R)
    except ConfigError:
        return
    x = sample_critical_batch(MeasureSpec.for_space(sp), 8, 1, np.random.default_rng(seed))[0]
    y = q.decode(q.encode(x)).data
    assert np.array_equal(y, q.roundtrip_batch(x[None, :])[0])
    # decoding is a fixed point of the codec
    assert q.encode(y) == q.encode(q.decode(q.encode(y)).data)
    assert np.array_equal(q.decode(q.encode(y)).data, y)


def test_zero_is_reproduced_exactly():
    sp = space()
    q = block_quantizer(sp, 128)
    assert q.error(Signal.zeros(sp, 8)) == 0.0


def test_error_shrinks_with_R(rng):
    sp = space()
    X = sample_critical_batch(MeasureSpec.for_space(sp), 8, 30, rng)
    errs = [distortion(block_quantizer(sp, R), X) for R in (16, 64, 256, 1024)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_decode_rejects_wrong_length():
    q = block_quantizer(space(), 64)
    with pytest.raises(DecodeError):
        q.decode(Bitstring([0] * 63))


def test_codebook_codec_nearest_and_ties():
    book = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([1.0, 0.0])]
    c = CodebookCodec(book, 2)
    assert c.encode(np.array([0.9, 0.1])).to_int() == 1  # first of the tied pair
    assert np.array_equal(c.decode(Bitstring.from_int(3, 2)), book[0])
    with pytest.raises(ConfigError):
        CodebookCodec(book, 1)


def test_codebook_enumeration():
    c = CodebookCodec([np.array([float(i)]) for i in range(4)], 2)
    outs = enumerate_codebook(c)
    assert [float(v[0]) for v in outs] == [0.0, 1.0, 2.0, 3.0]
    with pytest.raises(ConfigError):
        enumerate_codebook(block_quantizer(space(), 64))


def test_distortion_needs_samples():
    with pytest.raises(DomainError):
        distortion(block_quantizer(space(), 64), np.zeros((0, 510)))
    with pytest.raises(DomainError):
        distortion(CodebookCodec([np.zeros(1)], 1), [])


def test_transfer_codec_bounds_the_image_error(rng):
    sp = space(M=4)
    X = sample_critical_batch(MeasureSpec.for_space(sp), 4, 50, rng)
    book = CodebookCodec(list(X[:8]), 3)
    A = np.diag(np.linspace(0.5, 2.0, X.shape[1]))
    L = 2.0
    tc = transfer_codec(book, lambda v: A @ v, lambda v, tol: v, s=1.0, lipschitz=L)
    src_err = distortion(book, X)
    for x in X[8:20]:
        y = A @ x
        err = np.linalg.norm(tc.decode(tc.encode(y)) - y)
        # exhaustive search finds a codeword at least as good as the mapped source one
        assert err <= L * np.linalg.norm(book.decode(book.encode(x)) - x) + 1e-12
        assert err <= L * src_err + 1e-12
    assert tc.error_bound(1.0) == pytest.approx(L * 3 / 3)
    with pytest.raises(ConfigError):
        transfer_codec(book, lambda v: v, lambda v, t: v, s=1.0)


def test_transfer_codec_needs_preimage_for_long_codes():
    q = block_quantizer(space(), 64)
    with pytest.raises(ConfigError):
        transfer_codec(q, lambda v: v, lambda v, t: v, s=1.0, lipschitz=1.0)


def test_loglog_slope_recovers_power_law():
    R = np.array([2.0**k for k in range(6, 15)])
    assert fit_loglog_slope(R, 3.0 * R**-1.25) == pytest.approx(-1.25, abs=1e-12)


def test_entropy_estimate_is_flagged_empirical(rng):
    sp = space()
    X = sample_critical_batch(MeasureSpec.for_space(sp), 8, 10, rng)
    est = entropy_number_upper(sp, 128, X)
    assert est.empirical and est.R == 128 and est.value > 0


@pytest.mark.parametrize("s", [0.5, 1.0, 3.0])
def test_log_decay_class_distortion_is_exact_supremum(s):
    for R in range(1, 9):
        c = LogDecayCodec(s, R)
        errs = [c.error(m) for m in range(0, 2 ** (R + 2))]
        assert c.class_distortion() == max(errs)
        assert c.class_distortion() <= R**-s


def test_log_decay_elements_and_guards():
    c = log_decay_codec(1.0, 3)
    assert c.error(7) == 0.0 and c.error(0) == 0.0
    assert c.error(8) == pytest.approx(1 / math.log2(9))
    assert c.element_distance(3, 5) == pytest.approx(math.hypot(0.5, 1 / math.log2(6)))
    with pytest.raises(DomainError):
        c.encode(-1)
    with pytest.raises(DomainError):
        LogDecayCodec(0.0, 3)
