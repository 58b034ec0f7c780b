import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ratephase.critical import (MeasureSpec, block_ball_bound, block_ball_log2_bound,
                                growth_constants, mc_ball_probability, sample_critical,
                                sample_critical_batch, tail_radius)
from ratephase.errors import DomainError
from ratephase.lp_geometry import BallSpec, sample_uniform_ball
from ratephase.sequence import (INF, Signal, SpaceSpec, embedding_constant, make_dyadic_partition,
                                mixed_norm_batch)

SPACES = [(2, 2, 1.5, 0.0), (INF, INF, 1.0, 0.0), (1, INF, 1.0, 0.5), (0.5, 1, 3.0, -1.0),
          (3, INF, 0.5, 2.0), (2, 1.5, 2.0, 0.0)]


def measure(p, q, alpha, theta=0.0, d=1, M=10):
    sp = SpaceSpec(make_dyadic_partition(d, M), p, q, alpha * d, theta)
    return MeasureSpec.for_space(sp)


def test_kappa_is_checked():
    sp = SpaceSpec(make_dyadic_partition(1, 5), 2, 2, 1.5)
    assert MeasureSpec.for_space(sp).kappa == pytest.approx(math.pi / math.sqrt(6), rel=1e-12)
    with pytest.raises(DomainError):
        MeasureSpec(sp, 1.0)
    sp_inf = sp.with_(q=INF)
    assert MeasureSpec.for_space(sp_inf).kappa == 1.0


def test_invalid_space_is_rejected():
    sp = SpaceSpec(make_dyadic_partition(1, 5), INF, INF, 0.3)
    with pytest.raises(DomainError, match="violated"):
        MeasureSpec.for_space(sp)


def test_sampled_theta_shift():
    ms = measure(2, 4, 1.5, theta=0.5)
    assert ms.sample_theta == pytest.approx(1.0)
    assert ms.kappa == pytest.approx(embedding_constant(INF, 4, 0.5))


@pytest.mark.parametrize("p,q,alpha,theta", SPACES)
def test_samples_lie_in_unit_ball(p, q, alpha, theta, rng):
    ms = measure(p, q, alpha, theta)
    X = sample_critical_batch(ms, 10, 300, rng)
    assert np.all(mixed_norm_batch(ms.space, X, 10) <= 1 + 1e-12)


def test_q_infinite_blocks_saturate_each_radius(rng):
    ms = measure(INF, INF, 1.0)
    X = sample_critical_batch(ms, 4, 2000, rng)
    blocks = np.split(X, np.cumsum([2, 4, 8])[:3], axis=1)
    for m, b in enumerate(blocks, start=1):
        r = 2.0 ** -m
        assert np.max(np.abs(b)) <= r and np.max(np.abs(b)) > 0.99 * r


def test_sample_critical_returns_signal(rng):
    x = sample_critical(measure(2, 2, 1.5), 6, rng)
    assert isinstance(x, Signal) and x.M == 6


def test_sampling_is_reproducible():
    ms = measure(1, 2, 2.0)
    a = sample_critical_batch(ms, 5, 10, np.random.default_rng(3))
    b = sample_critical_batch(ms, 5, 10, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_block_bound_equals_exact_probability_for_p2():
    # P(||x_m|| <= eps) for a uniform 2-ball of radius r/kappa in R^n is (kappa eps / r)^n
    ms = measure(2, 2, 1.5)
    for m in (1, 2, 3):
        n, r = 2**m, ms.block_radii(m)[m - 1]
        for eps in (1e-3, 1e-2, 0.05):
            want = min(1.0, (ms.kappa * eps / r) ** n)
            assert block_ball_bound(ms, eps, m) == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("p,q,alpha,theta", SPACES[:4])
def test_block_bound_dominates_boundary_centred_balls(p, q, alpha, theta, rng):
    ms = measure(p, q, alpha, theta)
    for m in (1, 2):
        n, r = 2**m, ms.block_radii(m)[m - 1] / ms.kappa
        Y = sample_uniform_ball(BallSpec(ms.space.p, n, r), rng, size=40_000)
        c = np.zeros(n)
        c[0] = r
        d = np.linalg.norm(Y - c, axis=1)
        for eps in np.geomspace(0.05 * r, r, 6):
            est = np.mean(d <= eps)
            assert est <= block_ball_bound(ms, eps, m, c)


def test_block_bound_at_centre_matches_monte_carlo(rng):
    ms = measure(INF, INF, 1.0)
    m, n, r = 2, 4, 0.25
    Y = sample_uniform_ball(BallSpec(INF, n, r), rng, size=100_000)
    d = np.linalg.norm(Y, axis=1)
    for eps in (0.1, 0.2, 0.25):  # ball of radius eps stays in the cube
        est = np.mean(d <= eps)
        se = math.sqrt(est * (1 - est) / d.size)
        assert abs(est - block_ball_bound(ms, eps, m)) <= 4 * se


def test_block_bound_rejects_nonpositive_eps():
    with pytest.raises(DomainError):
        block_ball_log2_bound(measure(2, 2, 1.5), 0.0, 1)


@pytest.mark.parametrize("p,q,alpha,theta", SPACES)
@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("gap", [0.05, 0.25, 1.0])
def test_growth_constants_certify_a_block_bound(p, q, alpha, theta, d, gap):
    M = 12 if d == 1 else 7
    ms = measure(p, q, alpha, theta, d=d, M=M)
    s = ms.space.s_star + gap
    g = growth_constants(ms, s)
    assert g.c > 0 and g.eps0 > 0
    for eps in np.geomspace(g.eps_floor(M) * 1.01, g.eps0 * 0.999, 25):
        best = min(block_ball_log2_bound(ms, eps, m) for m in range(1, M + 1))
        assert best <= float(g.log2_bound(eps)) + 1e-9


def test_m_tilde_points_inside_the_stored_range():
    ms = measure(2, 2, 1.5, M=12)
    g = growth_constants(ms, 1.75)
    assert 1 <= g.m_tilde(g.eps0) <= 2
    assert g.m_tilde(g.eps_floor(12)) == pytest.approx(13.0)


def test_growth_constants_need_s_above_critical():
    ms = measure(2, 2, 1.5)
    with pytest.raises(DomainError, match="s > s\\* violated"):
        growth_constants(ms, 1.5)


def test_growth_constants_shrink_as_s_approaches_critical():
    ms = measure(INF, INF, 1.0)
    cs = [growth_constants(ms, 0.5 + g).c for g in (1.0, 0.5, 0.1, 0.01)]
    assert cs[-1] < cs[0]


def test_tail_radius_bounds_the_dropped_mass(rng):
    ms = measure(2, 2, 1.5, M=14)
    X = sample_critical_batch(ms, 14, 200, rng)
    tail = np.linalg.norm(X[:, 2 + 4 + 8 + 16:], axis=1)  # blocks 5..14
    assert np.all(tail <= tail_radius(ms, 4))
    assert tail_radius(ms, 8) < tail_radius(ms, 4)


def test_mc_ball_probability(rng):
    ms = measure(INF, INF, 1.0, M=6)
    centre = Signal.zeros(ms.space, 6)
    est, se = mc_ball_probability(ms, centre, 10.0, 500, rng)
    assert est == 1.0 and se == 0.0
    est, _ = mc_ball_probability(ms, centre, 1e-4, 500, rng)
    assert est == 0.0
    with pytest.raises(DomainError):
        mc_ball_probability(ms, centre, 0.1, 50, rng)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_mc_probability_is_deterministic_per_seed(seed):
    ms = measure(2, 2, 1.5, M=5)
    centre = Signal.zeros(ms.space, 5)
    a = mc_ball_probability(ms, centre, 0.2, 200, np.random.default_rng(seed))
    b = mc_ball_probability(ms, centre, 0.2, 200, np.random.default_rng(seed))
    assert a == b
