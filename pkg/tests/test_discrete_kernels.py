import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blpp_lab.discrete_kernels import (
    CircleContour,
    K_geometric,
    Q_pow,
    Q_pow_exact,
    R_pm,
    R_pm_exact,
    S_bar,
    S_bar_exact,
    S_epi,
    S_epi_enumerate,
    S_star,
    S_star_exact,
    binom,
    f_kernel,
    f_kernel_exact,
    h_discrete,
    h_discrete_exact,
    johansson_transition,
    log_gbinom,
    schutz_transition,
    w_m,
)
from blpp_lab.discrete_model import DiscreteIC, GeomParams

P = GeomParams()


def random_pair(rng, N, span=4):
    x = np.sort(rng.integers(0, span, N))
    y = np.maximum.accumulate(x + rng.integers(0, span, N))
    return DiscreteIC(tuple(x)), DiscreteIC(tuple(y))


def test_contour_validation():
    with pytest.raises(ValueError):
        CircleContour(0.5, 100)
    with pytest.raises(ValueError):
        CircleContour(0.5, 32)
    with pytest.raises(ValueError):
        h_discrete(0, 1, 1, 0.5, CircleContour(0.9))
    with pytest.raises(ValueError):
        Q_pow(1, 1, 0, 0.5, CircleContour(1.2))
    with pytest.raises(ValueError):
        R_pm(1, 1, 0, 0, P, CircleContour(0.4))
    with pytest.raises(ValueError):
        S_bar(1, 1, 0, 0, P, CircleContour(0.6))


def test_binomials():
    assert binom(5, 2) == 10
    assert binom(100, 50) == pytest.approx(math.comb(100, 50), rel=1e-12)
    s, lc = log_gbinom(-3, 2)  # C(-3, 2) = 6
    assert s * math.exp(lc) == pytest.approx(6.0)


def test_w_m_examples():
    assert w_m(0, 1, 0.5) == 0.5
    assert w_m(1, 2, 0.5) == pytest.approx(0.25)
    assert w_m(-1, 3, 0.3) == 0.0
    assert np.sum(w_m(np.arange(0, 400), 3, 0.4)) == pytest.approx(1.0, abs=1e-12)
    assert w_m(200, 4, 0.5) == pytest.approx(math.comb(203, 3) * 0.5**204, rel=1e-10)


def test_h_examples():
    x = np.arange(-5, 15)
    assert np.allclose(h_discrete_exact(x, 0, 2, 0.5), w_m(x, 2, 0.5))
    assert h_discrete_exact(0, 1, 1, 0.5) == pytest.approx(-0.25)
    assert h_discrete(0, 1, 1, 0.5) == pytest.approx(-0.25, abs=1e-12)
    assert h_discrete_exact(3, -1, 2, 0.5) == pytest.approx(np.sum(w_m(np.arange(3), 2, 0.5)))


@pytest.mark.parametrize("q", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("n", [-3, -1, 0, 1, 2, 4])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_h_contour_matches_exact(q, n, m):
    x = np.arange(-200, 201)
    a, b = h_discrete(x, n, m, q), h_discrete_exact(x, n, m, q)
    assert np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))) < 1e-10


def test_h_fixed_circle_small_x():
    x = np.arange(-10, 11)
    a = h_discrete(x, 2, 2, 0.5, CircleContour(1.5))
    assert np.max(np.abs(a - h_discrete_exact(x, 2, 2, 0.5))) < 1e-10


def test_h_contour_independence():
    # fixed circles with r > 1 cancel badly for large |x|; stay where they are accurate
    x = np.arange(-10, 11)
    a = h_discrete(x, 2, 2, 0.5, CircleContour(1.3))
    b = h_discrete(x, 2, 2, 0.5, CircleContour(1.7, 512))
    assert np.max(np.abs(a - b)) < 1e-10


def test_f_identity_grid():
    x = np.arange(-10, 11)
    for n in range(-3, 4):
        for m in (1, 2):
            f = f_kernel(x, n, m, 0.5)
            assert np.max(np.abs(f - h_discrete_exact(n - x, -n, m, 0.5))) < 1e-10


def test_f_zero_is_reflected_w():
    x = np.arange(-200, 5)
    assert np.allclose(f_kernel_exact(x, 0, 1, 0.5), w_m(-x, 1, 0.5))
    assert np.sum(f_kernel_exact(x, 0, 1, 0.5)) == pytest.approx(1.0, abs=1e-12)


def test_johansson_single_entry():
    assert johansson_transition(DiscreteIC((0,)), DiscreteIC((2,)), 1, 0.5) == pytest.approx(1 / 8)
    assert johansson_transition(DiscreteIC((3, 3)), DiscreteIC((2, 5)), 1, 0.5) == 0.0


def enumerate_transition(x, y, q, cutoff=1e-12):
    """P(G(1, .) = y | G(0, .) = x) for N <= 2 by summing over weight vectors."""
    N = len(x)
    kmax = int(math.log(cutoff) / math.log(q)) + 1
    total = 0.0
    for w in itertools.product(range(kmax + 1), repeat=N):
        g, prev = [], -math.inf
        for n in range(N):
            prev = max(x[n], prev) + w[n]
            g.append(prev)
        if tuple(g) == tuple(y):
            total += np.prod([(1 - q) * q**k for k in w])
    return total


def test_johansson_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(30):
        N = int(rng.integers(1, 3))
        x, y = random_pair(rng, N)
        assert johansson_transition(x, y, 1, 0.5) == pytest.approx(enumerate_transition(x.x, y.x, 0.5), abs=1e-8)


def test_johansson_row_stochastic():
    x = DiscreteIC((0, 1))
    total = 0.0
    for y1 in range(0, 60):
        for y2 in range(max(y1, 1), 60):
            total += johansson_transition(x, DiscreteIC((y1, y2)), 2, 0.5)
    assert total == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_schutz_equals_johansson(N, m, seed):
    x, y = random_pair(np.random.default_rng(seed), N)
    assert abs(schutz_transition(x, y, m, 0.5) - johansson_transition(x, y, m, 0.5)) < 1e-10


def test_schutz_single_row():
    x, y = DiscreteIC((1,)), DiscreteIC((4,))
    assert schutz_transition(x, y, 2, 0.5) == pytest.approx(w_m(3, 2, 0.5), abs=1e-12)


def test_q_examples():
    assert Q_pow_exact(1, 1, 0, 0.5) == 0.5
    assert Q_pow_exact(0, 3, 3, 0.5) == 1.0 and Q_pow_exact(0, 3, 2, 0.5) == 0.0
    assert Q_pow_exact(2, 2, 0, 0.5) == pytest.approx(0.25)
    assert Q_pow(2, 2, 0, 0.5) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("n", [-3, -1, 0, 1, 3])
def test_q_contour_matches_exact(n):
    z1, z2 = np.arange(-10, 10)[:, None], np.arange(-10, 10)[None, :]
    assert np.max(np.abs(Q_pow(n, z1, z2, 0.4) - Q_pow_exact(n, z1, z2, 0.4))) < 1e-10


def test_q_power_is_convolution():
    z = np.arange(-40, 1)
    Q1 = Q_pow_exact(1, z[:, None], z[None, :], 0.5)
    Q3 = Q_pow_exact(3, z[:, None], z[None, :], 0.5)
    assert np.allclose(np.linalg.matrix_power(Q1, 3), Q3, atol=1e-14)


@pytest.mark.parametrize("params", [GeomParams(0.5, 0.5), GeomParams(0.3, 0.6), GeomParams(0.6, 0.4)])
def test_r_exact_and_identity(params):
    z1, z2 = np.arange(-12, 4)[:, None], np.arange(-12, 4)[None, :]
    assert np.array_equal(R_pm_exact(1, 0, z1, z2, params), (z1 == z2).astype(float))
    for sign in (1, -1):
        for m in (0, 1, 3):
            a = R_pm(sign, m, z1, z2, params)
            b = R_pm_exact(sign, m, z1, z2, params)
            assert np.max(np.abs(a - b) / np.maximum(1, np.abs(b))) < 1e-10


@pytest.mark.parametrize("params", [GeomParams(0.5, 0.5), GeomParams(0.3, 0.6)])
@pytest.mark.parametrize("m,n", [(0, 0), (0, 2), (1, 1), (2, 3), (3, 5)])
def test_s_star_relation(params, m, n):
    # S*_{m,-n} = alpha Q^{-n} R_m, an exact finite composition
    z1 = np.arange(-15, 3)
    z2 = np.arange(-12, 6)
    v = np.arange(-15, 10)
    comp = params.alpha * Q_pow_exact(-n, z1[:, None], v[None, :], params.theta) @ R_pm_exact(
        1, m, v[:, None], z2[None, :], params
    )
    exact = S_star_exact(m, n, z1[:, None], z2[None, :], params)
    contour = S_star(m, n, z1[:, None], z2[None, :], params)
    scale = np.maximum(1, np.abs(exact))
    assert np.max(np.abs(comp - exact) / scale) < 1e-8
    assert np.max(np.abs(contour - exact) / scale) < 1e-8


def test_s_star_identity_and_decay():
    z = np.arange(-8, 8)
    assert np.allclose(S_star_exact(0, 0, z[:, None], z[None, :], P), np.eye(z.size) * P.alpha)
    # supported on z1 <= z2, so the envelope theta^(z1 - z2) holds trivially for z1 > z2
    assert not np.any(S_star(2, 3, 10, np.arange(-5, 9), P) > 1e-12)


@pytest.mark.parametrize("m,n", [(0, 1), (1, 2), (2, 3), (3, 4)])
def test_s_bar_relation(m, n):
    z1 = np.arange(-15, 5)
    z2 = np.arange(-12, 6)
    v = np.arange(-20, 10)
    comp = S_bar_exact(0, n, z1[:, None], v[None, :], P) @ R_pm_exact(-1, m, v[:, None], z2[None, :], P)
    exact = S_bar_exact(m, n, z1[:, None], z2[None, :], P)
    contour = S_bar(m, n, z1[:, None], z2[None, :], P)
    scale = np.maximum(1, np.abs(exact))
    assert np.max(np.abs(comp - exact) / scale) < 1e-8
    assert np.max(np.abs(contour - exact) / scale) < 1e-8


def test_s_bar_depends_on_difference():
    a = S_bar_exact(2, 3, np.arange(0, 10), np.arange(-4, 6), P)
    assert np.allclose(a, a[0])
    # m = 0, n = 1: residue of (theta / (1 - w))^d / w at 0 is theta^d
    d = np.arange(-3, 4)
    assert np.allclose(S_bar_exact(0, 1, d, 0, P), 0.5**d)


def test_s_epi_immediate_hit_and_far_barrier():
    xt = DiscreteIC((0, 1, 2, 3)).tilde()  # (-1, -3, -5, -7)
    z2 = np.arange(-20, 0)
    assert np.allclose(S_epi(2, 3, [5], z2, xt, P)[0], S_bar_exact(2, 3, 5, z2, P))
    far = DiscreteIC((0, 100, 200, 300)).tilde()
    # a walk starting below every x~_j only moves further down
    assert not S_epi(2, 3, [-400], z2, far, P).any()


@pytest.mark.parametrize("m,n", [(1, 2), (2, 2), (1, 3)])
def test_s_epi_matches_enumeration(m, n):
    xt = DiscreteIC((0, 2, 2, 5)).tilde()
    for z1 in (-4, -2, -1, 0, 3):
        for z2 in (-9, -6, -3):
            dp = S_epi(m, n, [z1], [z2], xt, P)[0, 0]
            assert dp == pytest.approx(S_epi_enumerate(m, n, z1, z2, xt, P), abs=1e-10)


def test_k_geometric_same_row_has_no_q_term():
    xt = DiscreteIC.step(5).tilde()
    z = np.arange(-12, -2)
    K, cert = K_geometric(3, z, 3, z, 2, xt, P)
    Sx = S_star_exact(2, 3, z[:, None], np.arange(cert.u_lo, cert.u_hi + 1)[None, :], P)
    E = S_epi(2, 3, np.arange(cert.u_lo, cert.u_hi + 1), z, xt, P)
    assert np.allclose(K, Sx @ E, atol=1e-12)
    assert cert.tail < 1e-10
    K2, _ = K_geometric(2, z, 4, z, 2, xt, P)
    assert np.all(np.isfinite(K2))
