
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ratephase.bounds import (PhaseSurfaceParams, SURFACE_HEADER, SURFACE_SCHEMA, critical_curve,
                              e_surface, e_surface_log2, min_code_length, nn_exponent,
                              nn_success_bound, nn_success_bound_log2, success_probability_bound,
                              success_probability_log2_bound,
                              surface_csv, surface_grid, _r2)
from ratephase.critical import GrowthConstants, MeasureSpec, growth_constants
from ratephase.errors import DomainError, OutOfCertificateError
from ratephase.sequence import SpaceSpec, make_dyadic_partition


def growth(s=1.75):
    sp = SpaceSpec(make_dyadic_partition(1, 12), 2, 2, 1.5)
    return growth_constants(MeasureSpec.for_space(sp), s)


def test_surface_closed_form():
    prm = PhaseSurfaceParams(2.0, 1.0)
    assert float(e_surface(prm, 3.0, 0.25)) == 1.0  # exponent 3 - 2 is clamped to 0
    assert float(e_surface(prm, 1.0, 1 / 16)) == 2.0 ** (1 - 4)
    assert float(e_surface_log2(PhaseSurfaceParams(2.0, 1.0, clamp=False), 3.0, 4.0)) == 1.0


def test_surface_reaches_minus_1000_without_underflow():
    prm = PhaseSurfaceParams(2.002, 1.0)
    inv = 1100.0 ** 2.002
    lg = float(e_surface_log2(prm, 100.0, inv))
    assert lg == pytest.approx(100 - 1100, rel=1e-12)
    assert float(e_surface(prm, 100.0, 1 / inv)) == pytest.approx(2.0**lg, rel=1e-12)


@given(st.floats(0.1, 5), st.floats(0.01, 10), st.floats(0, 200), st.floats(1, 1e6))
def test_surface_is_monotone(s, c, R, inv):
    prm = PhaseSurfaceParams(s, c)
    a = float(e_surface_log2(prm, R, inv))
    assert a <= 0
    assert float(e_surface_log2(prm, R + 1, inv)) >= a
    assert float(e_surface_log2(prm, R, inv * 2)) <= a


def test_surface_parameter_guards():
    with pytest.raises(DomainError):
        PhaseSurfaceParams(0.0, 1.0)
    with pytest.raises(DomainError):
        e_surface(PhaseSurfaceParams(1.0, 1.0), 1.0, 0.0)
    with pytest.raises(DomainError):
        e_surface_log2(PhaseSurfaceParams(1.0, 1.0), 1.0, -1.0)


def test_success_bound_certificate_range():
    g = growth()
    assert success_probability_bound(g, 10, g.eps0 / 2) == pytest.approx(
        2.0 ** min(0, 10 - g.c * (g.eps0 / 2) ** (-1 / g.s)))
    with pytest.raises(OutOfCertificateError, match="eps < eps0 violated"):
        success_probability_bound(g, 10, g.eps0)


@pytest.mark.parametrize("s,K", [(2.0, 1.0), (2.5, 0.1), (4.0, 10.0), (1.8, 3.0)])
def test_min_code_length_delivers_its_guarantee(s, K):
    s0 = 1.5
    g = growth((s + s0) / 2)
    R0 = min_code_length(s, s0, K, g)
    for R in sorted({R0, R0 + 1, 2 * R0, 10 * R0, 1000 * R0}):
        eps = K * R ** -s
        assert eps < g.eps0
        assert success_probability_log2_bound(g, R, eps) <= -R + 1e-9 * R


def test_r2_is_the_smallest_threshold():
    for s, sigma, c, K in [(2.0, 1.75, 0.2, 1.0), (3.0, 2.0, 0.55, 4.0), (1.6, 1.55, 0.1, 0.5)]:
        R2 = _r2(s, sigma, c, K)
        A = c * K ** (-1 / sigma)
        assert 2 * R2 <= A * R2 ** (s / sigma) * (1 + 1e-12)
        if R2 > 1:
            assert 2 * (R2 - 1) > A * (R2 - 1) ** (s / sigma)


def test_min_code_length_guards():
    g = growth(1.75)
    with pytest.raises(DomainError):
        min_code_length(1.5, 1.5, 1.0, g)
    with pytest.raises(DomainError):
        min_code_length(2.0, 1.5, 0.0, g)
    with pytest.raises(DomainError):
        min_code_length(1.7, 1.5, 1.0, g)  # growth exponent not below s


def test_nn_bound():
    assert nn_exponent(5.0, 3) == 5 * 3 * 4
    assert nn_success_bound_log2(1.0, 1.0, 1.0, 1, 0.01) == 1 * 1 * 1 - 100
    assert nn_success_bound(1.0, 1.0, 1.0, 100, 0.5) == 1.0
    with pytest.raises(DomainError):
        nn_success_bound(1.0, 1.0, 1.0, 1, 0.0)


def test_surface_grid_and_csv():
    prm = PhaseSurfaceParams(2.002, 1.0)
    rows = surface_grid(prm, [0, 10, 20], [1, 100])
    assert rows.shape == (6, 4)
    assert rows[3, 0] == 10 and rows[3, 1] == 100
    text = surface_csv(rows)
    lines = text.splitlines()
    assert lines[0] == SURFACE_SCHEMA and lines[1] == SURFACE_HEADER
    parsed = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    assert np.array_equal(parsed, rows)


def test_critical_curve_zeroes_the_exponent():
    inv = np.geomspace(1, 1e6, 20)
    R = critical_curve(2.002, 1.3, inv)
    lg = e_surface_log2(PhaseSurfaceParams(2.002, 1.3, clamp=False), R, inv)
    assert np.allclose(lg, 0.0, atol=1e-9)


def test_growth_constants_type_guard():
    with pytest.raises(DomainError):
        GrowthConstants(s=1.0, c=0.0, eps0=1.0)
