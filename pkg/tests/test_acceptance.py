"""Acceptance criteria 1-10, one PASS/FAIL line each (shown in the terminal summary)."""

import hashlib
import itertools
import math
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy.stats import norm

from blpp_lab.continuum_kernels import (
    S_mt,
    S_mt_closed,
    S_mt_hermite,
    compose,
    compose_window,
    heat_kernel,
)
from blpp_lab.discrete_kernels import (
    Q_pow_exact,
    R_pm_exact,
    S_bar,
    S_bar_exact,
    S_star,
    S_star_exact,
    johansson_transition,
    schutz_transition,
)
from blpp_lab.discrete_model import DiscreteIC, EventSpec, GeomParams
from blpp_lab.fredholm import MultiPointQuery, solve_continuum, solve_discrete
from blpp_lab.initial import Flat, NarrowWedge, PiecewiseLinear
from blpp_lab.scaling import lemma_check, product_check, summarize
from blpp_lab.simulate import blpp_mc_direct, glpp_event_probability, gue_lambda_max, joint_probability

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance


def report(k, ok, detail, t0):
    line = f"{'PASS' if ok else 'FAIL'} {k}: {detail} [{time.perf_counter() - t0:.1f}s]"
    print(line)
    ACCEPTANCE_LINES.append(f"criterion {k}: {line}")
    assert ok, line


def _enumerate(x, y, q, cutoff=1e-12):
    kmax = int(math.log(cutoff) / math.log(q)) + 1
    total = 0.0
    for w in itertools.product(range(kmax + 1), repeat=len(x)):
        g, prev = [], -math.inf
        for xn, wn in zip(x, w):
            prev = max(xn, prev) + wn
            g.append(prev)
        if tuple(g) == tuple(y):
            total += np.prod([(1 - q) * q**k for k in w])
    return total


def _random_pair(rng, N, span=4):
    x = np.sort(rng.integers(0, span, N))
    y = np.maximum.accumulate(x + rng.integers(0, span, N))
    return DiscreteIC(tuple(x)), DiscreteIC(tuple(y))


def test_criterion_1_transition_vs_enumeration():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(40):
        x, y = _random_pair(rng, int(rng.integers(1, 3)))
        worst = max(worst, abs(johansson_transition(x, y, 1, 0.5) - _enumerate(x.x, y.x, 0.5)))
    report(1, worst < 1e-8, f"max |johansson - enumeration| = {worst:.2e} (tol 1e-8)", t0)


def test_criterion_2_schutz_equals_johansson():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        N, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        x, y = _random_pair(rng, N)
        worst = max(worst, abs(schutz_transition(x, y, m, 0.5) - johansson_transition(x, y, m, 0.5)))
    report(2, worst < 1e-10, f"100 instances, max |schutz - johansson| = {worst:.2e} (tol 1e-10)", t0)


def test_criterion_3_operator_relations():
    t0 = time.perf_counter()
    worst = 0.0
    z1, z2 = np.arange(-15, 3), np.arange(-12, 6)
    for p in (GeomParams(0.5, 0.5), GeomParams(0.3, 0.6)):
        v = np.arange(-15, 10)
        for m, n in ((0, 2), (1, 1), (2, 3), (3, 5)):
            comp = p.alpha * Q_pow_exact(-n, z1[:, None], v[None, :], p.theta) @ R_pm_exact(1, m, v[:, None], z2[None, :], p)
            exact = S_star_exact(m, n, z1[:, None], z2[None, :], p)
            scale = np.maximum(1, np.abs(exact))
            worst = max(worst, np.max(np.abs(comp - exact) / scale),
                        np.max(np.abs(S_star(m, n, z1[:, None], z2[None, :], p) - exact) / scale))
        v = np.arange(-20, 10)
        for m, n in ((0, 1), (1, 2), (2, 3), (3, 4)):
            comp = S_bar_exact(0, n, z1[:, None], v[None, :], p) @ R_pm_exact(-1, m, v[:, None], z2[None, :], p)
            exact = S_bar_exact(m, n, z1[:, None], z2[None, :], p)
            scale = np.maximum(1, np.abs(exact))
            worst = max(worst, np.max(np.abs(comp - exact) / scale),
                        np.max(np.abs(S_bar(m, n, z1[:, None], z2[None, :], p) - exact) / scale))
    report(3, worst < 1e-8, f"max relative deviation over S*, S-bar relations = {worst:.2e} (tol 1e-8)", t0)


def test_criterion_4_continuum_identities():
    t0 = time.perf_counter()
    x = np.linspace(-2, 2, 9)
    heat = max(np.max(np.abs(S_mt(0, t, x, 0.3) - heat_kernel(t, x, 0.3))) for t in (0.3, 1.0, 2.0))
    herm = max(np.max(np.abs(S_mt(m, t, x, -0.2) - S_mt_hermite(m, t, x, -0.2)))
               for m in range(5) for t in (0.3, 1.0, 2.5))
    semi = 0.0
    xs, ys = np.array([-0.7, 0.0, 0.4]), np.array([-0.3, 0.5])
    for m1, t1, m2, t2 in ((1, 0.5, 1, 0.7), (0, 0.4, 2, 0.6), (-1, 0.5, 2, 0.5), (-2, 0.6, 1, 0.3)):
        L = compose_window(xs, ys, t1 + t2) + 4
        got = compose(lambda a, b: S_mt_closed(m1, t1, a, b), lambda a, b: S_mt_closed(m2, t2, a, b),
                      xs, ys, L, nodes=400, breakpoints=list(xs))
        semi = max(semi, np.max(np.abs(got - S_mt_closed(m1 + m2, t1 + t2, xs[:, None], ys[None, :]))))
    ok = heat < 1e-10 and herm < 1e-9 and semi < 1e-6
    report(4, ok, f"heat {heat:.1e} (1e-10), hermite {herm:.1e} (1e-9), semigroup {semi:.1e} (1e-6)", t0)


def test_criterion_5_analytic_oracles():
    t0 = time.perf_counter()
    nw = solve_continuum(MultiPointQuery((1.0,), (0.0,), 1), NarrowWedge()).value
    f0 = solve_continuum(MultiPointQuery((1.0,), (0.0,), 1), Flat(0.0)).value
    f1 = solve_continuum(MultiPointQuery((1.0,), (1.0,), 1), Flat(0.0)).value
    ok = abs(nw - 0.5) < 0.002 and abs(f0) < 0.01 and abs(f1 - (2 * norm.cdf(1) - 1)) < 0.01
    report(5, ok, f"narrow wedge {nw:.6f} (0.5), flat a=0 {f0:.6f} (0), flat a=1 {f1:.6f} (0.682689)", t0)


def test_criterion_6_gue():
    t0 = time.perf_counter()
    grid = (-0.5, 0.5, 1.5, 2.5, 3.5)
    worst, parts = 0.0, []
    for m in (2, 3):
        lam = gue_lambda_max(m, 1_000_000, seed=60 + m)[:, None]
        for a in grid:
            det = solve_continuum(MultiPointQuery((1.0,), (a,), m), NarrowWedge()).value
            est = joint_probability(lam, [a])
            z = (det - est.value) / max(est.stderr, 1 / est.samples)
            worst = max(worst, abs(z))
            parts.append(f"m={m},a={a}:{z:+.2f}")
    report(6, worst < 3, f"max |z| = {worst:.2f} over 10 points, 1e6 samples ({' '.join(parts)})", t0)


HEADLINE = ((0.3, 0.6), (0.0, 0.5), (0.8, 1.2))


def test_criterion_7_headline_functional_ic():
    t0 = time.perf_counter()
    X = PiecewiseLinear.linear(0.0, -1.0)
    S = blpp_mc_direct(X, 2, (0.5, 1.0), 100_000, mesh=1e-3, seed=7)
    zs, parts = [], []
    for a in HEADLINE:
        r = solve_continuum(MultiPointQuery((0.5, 1.0), a, 2), X)
        est = joint_probability(S, a)
        z = (r.value - est.value) / math.hypot(est.stderr, r.certificate)
        zs.append(z)
        parts.append(f"a={a}: det {r.value:.5f} mc {est.value:.5f} z {z:+.2f}")
    report(7, max(map(abs, zs)) < 3, "; ".join(parts), t0)


def test_criterion_8_discrete_vs_dp():
    t0 = time.perf_counter()
    cases = ((1, 1, 1), (3, 8, 15), (10, 20, 50), (10, 20, 58), (10, 5, 22))  # (m, N, a), query row n = N
    worst, parts = 0.0, []
    for i, (m, N, a) in enumerate(cases):
        ic = DiscreteIC.step(N)
        det = solve_discrete(EventSpec((N,), (a,)), m, ic).value
        est = glpp_event_probability(ic, m, (N,), (a,), 1_000_000, seed=80 + i)
        z = (det - est.value) / max(est.stderr, 1 / est.samples)
        worst = max(worst, abs(z))
        parts.append(f"m={m},N={N},a={a}: {det:.5f} vs {est.value:.5f} z {z:+.2f}")
    report(8, worst < 3, "; ".join(parts), t0)


def test_criterion_9_lemma_convergence():
    t0 = time.perf_counter()
    ok, parts = True, []
    for lemma in (1, 2, 3, 4):
        s = summarize(lemma_check(lemma))
        good = s["decreasing"] and 0.3 <= s["rate"] <= 0.7
        ok &= good
        parts.append(f"L{lemma} rate {s['rate']:.2f}{'' if s['decreasing'] else ' not decreasing'}")
    for m in (1, 2, 3):
        s = summarize(product_check(m=m))
        ok &= s["decreasing"]
        parts.append(f"product m={m} {'decreasing' if s['decreasing'] else 'NOT decreasing'}")
    report(9, ok, ", ".join(parts), t0)


@lru_cache(maxsize=None)
def _nw_grid():
    return [solve_continuum(MultiPointQuery((0.5, 1.0), (a, a + 0.5), 3), NarrowWedge()) for a in np.linspace(-1, 3, 9)]


def test_criterion_10_bounds_monotonicity_determinism():
    t0 = time.perf_counter()
    cont = _nw_grid()
    disc = [solve_discrete(EventSpec((3, 6), (a, a + 3)), 4, DiscreteIC.step(6)) for a in range(0, 16, 2)]
    bounded = all(-r.certificate <= r.value <= 1 + r.certificate for r in cont + disc)
    monotone = all(b.value >= a.value - a.certificate - b.certificate for seq in (cont, disc) for a, b in zip(seq, seq[1:]))

    def digest():
        S = blpp_mc_direct(Flat(0.0), 2, (0.5, 1.0), 10_000, mesh=1e-2, seed=10)
        G = gue_lambda_max(3, 10_000, seed=10)
        return hashlib.sha256(S.tobytes() + G.tobytes()).hexdigest()

    reproducible = digest() == digest()
    ok = bounded and monotone and reproducible
    report(10, ok, f"bounds {bounded}, monotone {monotone}, byte-reproducible {reproducible}", t0)
