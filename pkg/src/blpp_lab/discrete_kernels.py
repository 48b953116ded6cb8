"""Kernels and transition determinants of geometric last passage percolation.

Every kernel has two evaluators:

* a contour evaluator using the periodic trapezoid rule on a circle, which is
  exponentially accurate for analytic integrands, and
* an exact evaluator built from residues / binomial expansions.

Most kernels have the shape ``theta**(z1 - z2) * [w**(z1 - z2)] f(w)`` where
``[w**d] f`` is a Laurent coefficient in an annulus around 0.  Composition of
two such kernels multiplies the symbols, which is what the operator relations
between Q, R, S* and S-bar express.

The discrete function written H_n in the literature is called ``h_discrete``
here to keep it apart from the Hermite polynomials in ``continuum_kernels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter
from scipy.special import gammaln

from .discrete_model import DiscreteIC, GeomParams

_PASCAL_MAX = 60
_PASCAL = np.array(
    [[float(math.comb(n, k)) for k in range(_PASCAL_MAX + 1)] for n in range(_PASCAL_MAX + 1)]
)


@dataclass(frozen=True)
class CircleContour:
    radius: float
    nodes: int = 256

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.nodes < 64 or self.nodes & (self.nodes - 1):
            raise ValueError("node count must be a power of two >= 64")

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes w_k and their angles."""
        ang = 2.0 * np.pi * np.arange(self.nodes) / self.nodes
        return self.radius * np.exp(1j * ang), ang

    def integrate(self, integrand) -> np.ndarray:
        """(1 / 2 pi i) times the contour integral, by the trapezoid rule.

        ``integrand`` maps the node array (shape (nodes,)) to an array whose
        last axis runs over nodes.
        """
        w, _ = self.points()
        vals = np.asarray(integrand(w))
        return np.mean(vals * w, axis=-1)


def _require_real(val, tol: float = 1e-9):
    val = np.asarray(val)
    scale = np.maximum(1.0, np.abs(val.real))
    if np.any(np.abs(val.imag) > tol * scale):
        raise ArithmeticError(f"contour quadrature left an imaginary residue {np.max(np.abs(val.imag)):.3e}")
    return val.real


# ---------------------------------------------------------------------------
# binomial helpers


def log_gbinom(e, k):
    """Generalized binomial C(e, k) for integer e and k as (sign, log|C|)."""
    e = np.asarray(e, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    e, k = np.broadcast_arrays(e, k)
    sign = np.zeros(e.shape)
    logc = np.full(e.shape, -np.inf)
    pos = (k >= 0) & (e >= 0) & (k <= e)
    neg = (k >= 0) & (e < 0)
    if np.any(pos):
        ep, kp = e[pos], k[pos]
        logc[pos] = gammaln(ep + 1) - gammaln(kp + 1) - gammaln(ep - kp + 1)
        sign[pos] = 1.0
    if np.any(neg):
        en, kn = e[neg], k[neg]
        # C(e, k) = (-1)^k C(k - e - 1, k) for e < 0
        logc[neg] = gammaln(kn - en) - gammaln(kn + 1) - gammaln(-en)
        sign[neg] = np.where(kn % 2 == 0, 1.0, -1.0)
    return sign, logc


def binom(n, k):
    """C(n, k) for integers 0 <= k <= n (zero otherwise); exact table for n <= 60."""
    n = np.asarray(n, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    n, k = np.broadcast_arrays(n, k)
    out = np.zeros(n.shape)
    ok = (k >= 0) & (k <= n)
    small = ok & (n <= _PASCAL_MAX)
    out[small] = _PASCAL[n[small], k[small]]
    big = ok & ~small
    if np.any(big):
        nb, kb = n[big].astype(float), k[big].astype(float)
        out[big] = np.exp(gammaln(nb + 1) - gammaln(kb + 1) - gammaln(nb - kb + 1))
    return out


def _falling(a: float, i: int) -> float:
    out = 1.0
    for j in range(i):
        out *= a - j
    return out


# ---------------------------------------------------------------------------
# transition densities


def w_m(x, m: int, q: float):
    """P(X_1 + ... + X_m = x) for i.i.d. Geom(1 - q) steps (m = 0 gives a point mass at 0)."""
    x = np.asarray(x, dtype=np.int64)
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return (x == 0).astype(float)
    out = np.zeros(x.shape)
    ok = x >= 0
    xs = x[ok]
    small = xs + m - 1 <= _PASCAL_MAX
    vals = np.empty(xs.shape)
    vals[small] = binom(xs[small] + m - 1, m - 1) * q ** xs[small] * (1 - q) ** m
    xb = xs[~small].astype(float)
    vals[~small] = np.exp(
        gammaln(xb + m) - gammaln(m) - gammaln(xb + 1) + xb * math.log(q) + m * math.log(1 - q)
    )
    out[ok] = vals
    return out if out.ndim else float(out)


def h_discrete_exact(x, n: int, m: int, q: float):
    """nabla^n w_m(x), nabla f(x) = f(x + 1) - f(x), nabla^{-1} f(x) = sum_{y < x} f(y)."""
    x = np.asarray(x, dtype=np.int64)
    if n >= 0:
        out = np.zeros(x.shape)
        for k in range(n + 1):
            out = out + math.comb(n, k) * (-1) ** (n - k) * w_m(x + k, m, q)
        return out if out.ndim else float(out)
    p = -n
    flat = x.reshape(-1)
    res = np.zeros(flat.shape)
    for idx, xv in enumerate(flat):
        if xv <= 0:
            continue
        y = np.arange(0, xv)
        res[idx] = np.sum(binom(xv - y - 1, p - 1) * w_m(y, m, q))
    res = res.reshape(x.shape)
    return res if res.ndim else float(res)


def _h_integrand(x, n: int, m: int, q: float):
    sign = (-1) ** ((n - 1) % 2)

    def integrand(z):
        e = (m + x[..., None] - 1).astype(float)
        return sign * z**n * np.exp(e * np.log(1 - z + 0j)) / (1 - z / (1 - q)) ** m

    return integrand


def _shifted_circle_integral(integrand, center: float, radius: float, nodes: int) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(nodes) / nodes
    u = radius * np.exp(1j * ang)
    # (1 / 2 pi i) int f dz with dz = i u dang
    return np.mean(integrand(center + u) * u, axis=-1)


def h_discrete(x, n: int, m: int, q: float, contour: CircleContour | None = None):
    """nabla^n w_m(x) from its contour integral.

    With an explicit ``contour`` the circle |z| = r > 1 encloses the poles at
    0, 1 - q and 1.  By default the contour depends on x: when m + x - 1 >= 0
    there is no pole at 1 and a small circle hugging 0 and 1 - q keeps
    |1 - z|^(m + x - 1) close to 1 (a circle with r > 1 loses every digit
    to cancellation once |x| passes ~20); otherwise a circle of radius 3.
    """
    x = np.asarray(x, dtype=np.int64)
    if contour is not None:
        if contour.radius <= 1.0:
            raise ValueError("contour radius must exceed 1 to enclose the poles at 0, 1 - q and 1")
        out = _require_real(contour.integrate(_h_integrand(x, n, m, q)))
        return out if out.ndim else float(out)
    flat = x.reshape(-1)
    out = np.zeros(flat.shape)
    entire = flat + m - 1 >= 0
    rest = ~entire
    c = 0.5 * (1 - q)
    # margin between the circle and the poles: as wide as possible (fast
    # trapezoid convergence) while |1 - z|^(m + x - 1) <= e^10 on the circle
    e = (flat + m - 1).astype(float)
    margins = np.array([0.4, 0.3, 0.22, 0.16, 0.12, 0.1, 0.085, 0.07, 0.06, 0.05])
    margins = margins[np.abs(margins - q) > 1e-3]  # z = 1 must not sit on the circle
    pick = np.full(flat.shape, margins[-1])
    for mg in margins[::-1]:
        pick = np.where(e * math.log1p(mg) <= 10.0, mg, pick)
    for mg in np.unique(pick[entire]):
        sel = entire & (pick == mg)
        vals = _shifted_circle_integral(_h_integrand(flat[sel], n, m, q), c, c + mg, 256)
        out[sel] = _require_real(vals)
    if np.any(rest):
        vals = _shifted_circle_integral(_h_integrand(flat[rest], n, m, q), 0.0, 3.0, 256)
        out[rest] = _require_real(vals)
    out = out.reshape(x.shape)
    return out if out.ndim else float(out)


def f_kernel_exact(x, n: int, m: int, q: float):
    """F_n(x) = H_{-n}(n - x)."""
    return h_discrete_exact(n - np.asarray(x, dtype=np.int64), -n, m, q)


def f_kernel(x, n: int, m: int, q: float, contour: CircleContour | None = None):
    """F_n(x) from its own contour integral over |w| = r > 1."""
    contour = contour or CircleContour(1.5, 256)
    if contour.radius <= 1.0:
        raise ValueError("contour radius must exceed 1")
    x = np.asarray(x, dtype=np.int64)
    sign = (-1) ** (n % 2)

    def integrand(w):
        e = (n - x[..., None]).astype(float)
        return sign * np.exp(e * np.log(w)) / w / (1 - w) ** n * ((1 - q) * w / (w - q)) ** m

    out = _require_real(contour.integrate(integrand))
    return out if out.ndim else float(out)


def johansson_transition(x: DiscreteIC, y: DiscreteIC, m: int, q: float) -> float:
    """det[nabla^{j-i} w_m(y_j - x_i)]_{i,j = 1..N}."""
    xa, ya = x.as_array(), y.as_array()
    N = len(xa)
    if len(ya) != N:
        raise ValueError("x and y must have the same length")
    mat = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            mat[i, j] = h_discrete_exact(ya[j] - xa[i], j - i, m, q)
    return float(np.linalg.det(mat))


def schutz_transition(x: DiscreteIC, y: DiscreteIC, m: int, q: float, method: str = "contour") -> float:
    """det[F_{i-j}(y~_{N+1-i} - x~_{N+1-j})] on the mirrored configurations."""
    xt, yt = x.tilde(), y.tilde()
    N = len(xt)
    if len(yt) != N:
        raise ValueError("x and y must have the same length")
    f = f_kernel if method == "contour" else f_kernel_exact
    mat = np.empty((N, N))
    for i in range(1, N + 1):
        for j in range(1, N + 1):
            mat[i - 1, j - 1] = f(yt[N - i] - xt[N - j], i - j, m, q)
    return float(np.linalg.det(mat))


# ---------------------------------------------------------------------------
# kernels of the extended-kernel formula


def _theta_coeff(symbol, d, theta: float, contour: CircleContour):
    """theta^d [w^d] symbol(w) on the circle, for an array of offsets d."""
    d = np.asarray(d, dtype=np.float64)
    w, ang = contour.points()
    vals = symbol(w)
    # theta^d w^{-d} evaluated as (theta / r)^d e^{-i d ang} to avoid overflow
    phase = np.exp(d[..., None] * (math.log(theta / contour.radius)) - 1j * d[..., None] * ang)
    out = _require_real(np.mean(phase * vals, axis=-1))
    return out if out.ndim else float(out)


def _check_annulus(contour: CircleContour, params: GeomParams):
    if not params.q < contour.radius < 1.0:
        raise ValueError(f"contour radius must lie in (q, 1) = ({params.q}, 1), got {contour.radius}")


def default_radius(params: GeomParams) -> float:
    return 0.5 * (params.q + 1.0)


def Q_pow(n: int, z1, z2, theta: float, contour: CircleContour | None = None):
    """Q^n(z1, z2) for Q(z1, z2) = (1 - theta) theta^(z1 - z2 - 1) 1{z1 > z2}, by contour."""
    contour = contour or CircleContour(0.5, 256)
    if not 0.0 < contour.radius < 1.0:
        raise ValueError("contour radius must lie in (0, 1); w = 1 is a pole")
    alpha = (1 - theta) / theta
    d = np.asarray(z1) - np.asarray(z2)
    return _theta_coeff(lambda w: w**n * (alpha / (1 - w)) ** n, d, theta, contour)


def Q_pow_exact(n: int, z1, z2, theta: float):
    d = np.asarray(z1, dtype=np.int64) - np.asarray(z2, dtype=np.int64)
    alpha = (1 - theta) / theta
    if n == 0:
        out = (d == 0).astype(float)
    elif n > 0:
        # sum of n steps, each 1 + Geom(1 - theta)
        out = np.zeros(d.shape)
        ok = d >= n
        s, lc = log_gbinom(d[ok] - 1, n - 1)
        out[ok] = s * np.exp(lc + n * math.log(1 - theta) + (d[ok] - n) * math.log(theta))
    else:
        p = -n
        out = np.zeros(d.shape)
        ok = (d <= 0) & (d >= -p)
        dd = d[ok]
        out[ok] = binom(p, dd + p) * np.where((dd + p) % 2 == 0, 1.0, -1.0) * theta ** dd.astype(float) * alpha ** (-p)
    return out if out.ndim else float(out)


def R_pm(sign: int, m: int, z1, z2, params: GeomParams, contour: CircleContour | None = None):
    """R_{+m} (sign = +1) or R_{-m} (sign = -1) by contour over |w| = r in (q, 1)."""
    contour = contour or CircleContour(default_radius(params), 256)
    _check_annulus(contour, params)
    d = np.asarray(z1) - np.asarray(z2)
    e = m if sign > 0 else -m
    return _theta_coeff(lambda w: params.phi(w) ** e, d, params.theta, contour)


def R_pm_exact(sign: int, m: int, z1, z2, params: GeomParams):
    q, theta = params.q, params.theta
    d = np.asarray(z1, dtype=np.int64) - np.asarray(z2, dtype=np.int64)
    out = np.zeros(d.shape)
    if sign > 0:
        ok = d <= 0
        j = -d[ok]
        if m == 0:
            out[ok] = (j == 0).astype(float)
        else:
            s, lc = log_gbinom(m + j - 1, j)
            out[ok] = s * np.exp(lc + m * math.log(1 - q) + j * (math.log(q) - math.log(theta)))
    else:
        ok = (d <= 0) & (d >= -m)
        j = -d[ok]
        out[ok] = binom(m, j) * (-q / theta) ** j.astype(float) * (1 - q) ** (-m)
    return out if out.ndim else float(out)


def S_star(m: int, n: int, z1, z2, params: GeomParams, contour: CircleContour | None = None):
    """S*_{m,-n}(z1, z2) by contour over |w| = r in (q, 1)."""
    contour = contour or CircleContour(default_radius(params), 256)
    _check_annulus(contour, params)
    alpha = params.alpha
    d = np.asarray(z1) - np.asarray(z2)
    return _theta_coeff(
        lambda w: alpha * w ** (-n) * ((1 - w) / alpha) ** n * params.phi(w) ** m, d, params.theta, contour
    )


@lru_cache(maxsize=64)
def _series_exact(n: int, m: int, q: float, kmax: int) -> tuple:
    """Exact [w^k] (1 - w / q)^n (1 - w)^(-m), k = 0..kmax, as Fractions.

    The alternating binomials cancel to many digits when n is large, so the
    sum is done in rational arithmetic (q is taken as its exact binary value).
    """
    inv_q = 1 / Fraction(q)
    c = [(-inv_q) ** k * math.comb(n, k) if k <= n else Fraction(0) for k in range(kmax + 1)]
    for _ in range(m):
        for k in range(1, kmax + 1):
            c[k] += c[k - 1]
    return tuple(c)


def _log_series_coeffs(n: int, m: int, q: float, kmax: int):
    """(sign, log|c_k|) of the coefficients in :func:`_series_exact`."""
    # round kmax up so that nearby calls share the cache
    c = _series_exact(n, m, q, 256 * (kmax // 256 + 1))[: kmax + 1]
    sign = np.array([(v > 0) - (v < 0) for v in c], dtype=float)
    with np.errstate(divide="ignore"):
        logc = np.array([math.log(abs(v.numerator)) - math.log(v.denominator) if v else -np.inf for v in c])
    return sign, logc


def S_star_exact(m: int, n: int, z1, z2, params: GeomParams):
    """S*_{m,-n}(z1, z2) for n >= 0 from the composition alpha Q^{-n} R_m.

    Both factors live on z1 - z2 <= 0, and with D = z2 - z1 >= 0
    S* = (-1)^n alpha^(1-n) (1-q)^m theta^(-D) q^D [w^D] (1 - w/q)^n (1 - w)^(-m).
    """
    if n < 0:
        raise ValueError("exact S* is implemented for n >= 0")
    q, theta, alpha = params.q, params.theta, params.alpha
    D = np.asarray(z2, dtype=np.int64) - np.asarray(z1, dtype=np.int64)
    out = np.zeros(D.shape)
    ok = D >= 0
    if np.any(ok):
        Dk = D[ok]
        sign, logc = _log_series_coeffs(n, m, q, int(Dk.max()))
        logpref = (1 - n) * math.log(alpha) + m * math.log(1 - q) + Dk * (math.log(q) - math.log(theta))
        out[ok] = (-1) ** n * sign[Dk] * np.exp(logc[Dk] + logpref)
    return out if out.ndim else float(out)


def S_bar(m: int, n: int, z1, z2, params: GeomParams, contour: CircleContour | None = None):
    """S-bar_{m,n}(z1, z2) by contour over |w| = delta, 0 < delta < 1 - q."""
    contour = contour or CircleContour(0.5 * (1 - params.q), 256)
    if not 0.0 < contour.radius < 1.0 - params.q:
        raise ValueError(f"delta must lie in (0, 1 - q) = (0, {1 - params.q})")
    q, theta, alpha = params.q, params.theta, params.alpha
    d = np.asarray(z1, dtype=np.float64) - np.asarray(z2, dtype=np.float64)
    w, _ = contour.points()
    lw1 = np.log(1 - w)
    phi_inv = ((1 - w - q) / ((1 - q) * (1 - w))) ** m
    body = alpha ** (n - 1) * np.exp((n - 1) * lw1) * w ** (-n) * phi_inv
    vals = np.exp(d[..., None] * (math.log(theta) - lw1)) * body * w
    out = _require_real(np.mean(vals, axis=-1))
    return out if out.ndim else float(out)


def S_bar_exact(m: int, n: int, z1, z2, params: GeomParams):
    """S-bar_{m,n}(z1, z2) as the residue at w = 0 (zero for n <= 0)."""
    q, theta, alpha = params.q, params.theta, params.alpha
    d = np.asarray(z1, dtype=np.int64) - np.asarray(z2, dtype=np.int64)
    if n <= 0:
        out = np.zeros(d.shape)
        return out if out.ndim else float(out)
    e = n - 1 - d - m
    out = np.zeros(d.shape)
    base = (n - 1) * math.log(alpha) + d * math.log(theta)
    for i in range(min(m, n - 1) + 1):
        k = n - 1 - i
        s, lc = log_gbinom(e, k)
        sgn = (-1) ** i * (-1) ** k
        out = out + sgn * math.comb(m, i) * (1 - q) ** (-i) * s * np.exp(lc + base)
    return out if out.ndim else float(out)


def S_epi(m: int, n: int, z1, z2, xt, params: GeomParams) -> np.ndarray:
    """E[S-bar_{m,n-tau}(B_tau, z2) 1{tau < n} | B_0 = z1] for the Q-walk B.

    ``xt`` is the strictly decreasing X-side initial data x_1 > x_2 > ...;
    tau = min{j >= 0 : B_j > x_{j+1}}.  Computed exactly by a backward
    recursion over the killed walk on the finite window of relevant sites.
    Returns an array of shape (len(z1), len(z2)).
    """
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.int64))
    z2 = np.atleast_1d(np.asarray(z2, dtype=np.int64))
    xt = np.asarray(xt, dtype=np.int64)
    if np.any(np.diff(xt) >= 0):
        raise ValueError("X-side initial data must be strictly decreasing")
    if n > len(xt):
        raise ValueError(f"n = {n} exceeds the number of particles {len(xt)}")
    out = np.zeros((z1.size, z2.size))
    if n <= 0 or z1.size == 0 or z2.size == 0:
        return out
    # Sites at or below x_n are never killed before time n.
    lo = int(xt[n - 1]) + 1
    hi = max(int(z1.max()), int(xt[0]))
    if hi < lo:
        return out
    sites = np.arange(lo, hi + 1)
    theta = params.theta
    V = np.zeros((sites.size, z2.size))
    for j in range(n - 1, -1, -1):
        # survive: V_j(b) = sum_{b' < b} Q(b, b') V_{j+1}(b')
        cont = lfilter([0.0, 1.0 - theta], [1.0, -theta], V, axis=0)
        killed = sites > xt[j]
        if j > 0:
            # only sites reachable from an unkilled position at time j - 1 matter
            killed &= sites < xt[j - 1]
            cont[sites >= xt[j - 1]] = 0.0
        V = np.where(killed[:, None], 0.0, cont)
        if np.any(killed):
            kb = sites[killed]
            V[killed] = S_bar_exact(m, n - j, kb[:, None], z2[None, :], params)
    inside = (z1 >= lo) & (z1 <= hi)
    out[inside] = V[z1[inside] - lo]
    return out


def S_epi_enumerate(m: int, n: int, z1: int, z2: int, xt, params: GeomParams, cutoff: float = 1e-16) -> float:
    """Brute-force path enumeration of the hitting expectation (test oracle)."""
    theta = params.theta
    xt = np.asarray(xt, dtype=np.int64)
    total = 0.0
    stack = [(0, int(z1), 1.0)]
    while stack:
        j, b, p = stack.pop()
        if j >= n or p < cutoff:
            continue
        if b > xt[j]:
            total += p * float(S_bar_exact(m, n - j, b, z2, params))
            continue
        step = 1
        while True:
            ps = p * (1 - theta) * theta ** (step - 1)
            if ps < cutoff:
                break
            stack.append((j + 1, b - step, ps))
            step += 1
    return total


@dataclass
class KernelCertificate:
    u_lo: int
    u_hi: int
    tail: float


def K_geometric(n1: int, z1, n2: int, z2, m: int, xt, params: GeomParams, tol: float = 1e-13):
    """Extended kernel -Q^{n2-n1} 1{n1 < n2} + S*_{m,-n1} S^epi_{m,n2} as a matrix.

    The sum over the intermediate site is truncated once a block of further
    terms contributes less than ``tol`` relative to the kernel entries.
    Returns (matrix, certificate).
    """
    z1 = np.atleast_1d(np.asarray(z1, dtype=np.int64))
    z2 = np.atleast_1d(np.asarray(z2, dtype=np.int64))
    xt = np.asarray(xt, dtype=np.int64)
    K = np.zeros((z1.size, z2.size))
    if n1 < n2:
        K -= Q_pow_exact(n2 - n1, z1[:, None], z2[None, :], params.theta)
    u_lo = int(xt[n2 - 1]) + 1
    u_hi = max(int(xt[0]), int(z1.max()), int(z2.max()))
    u_hi = max(u_hi, u_lo - 1)
    u = np.arange(u_lo, u_hi + 1)
    prod = np.zeros_like(K)
    if u.size:
        E = S_epi(m, n2, u, z2, xt, params)
        # S* can be astronomically large on sites from which the killed walk
        # never reaches the barrier; those rows of S^epi vanish identically
        live = np.any(E != 0.0, axis=1)
        if np.any(live):
            with np.errstate(over="ignore"):
                S = S_star_exact(m, n1, z1[:, None], u[None, live], params)
            prod += S @ E[live]
    block = 32
    tail = np.inf
    for _ in range(4000):
        u = np.arange(u_hi + 1, u_hi + block + 1)
        # beyond x_1 the walk is killed at once, so S^epi reduces to S-bar
        extra = S_star_exact(m, n1, z1[:, None], u[None, :], params) @ S_bar_exact(
            m, n2, u[:, None], z2[None, :], params
        )
        prod += extra
        u_hi += block
        tail = float(np.max(np.abs(extra)))
        if tail < tol * max(1.0, float(np.max(np.abs(prod)))):
            break
    else:
        raise RuntimeError(f"intermediate sum did not converge; last block contributed {tail:.3e}")
    if not np.all(np.isfinite(prod)):
        raise ArithmeticError("kernel product overflowed; the lattice is too large for double precision here")
    return K + prod, KernelCertificate(u_lo, u_hi, tail)
