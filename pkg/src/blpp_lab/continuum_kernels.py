"""Continuum kernels for Brownian last passage percolation.

S_{m,t}(x, y) = (1 / 2 pi i) int_Gamma exp(t z^2 / 2 + (x - y) z) z^m dz,
with Gamma the upward vertical line Re z = d > 0 for t > 0 and the boundary
of a left-opening sector through d for t < 0.  For t > 0 and m >= 0 this is
the m-th x-derivative of the heat kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad_vec
from scipy.special import ndtr

from .initial import ContinuumIC, Flat, NarrowWedge, PiecewiseLinear

SQRT2PI = math.sqrt(2.0 * math.pi)


def heat_kernel(t: float, x, y):
    if t <= 0:
        raise ValueError("heat kernel needs t > 0")
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return np.exp(-((x - y) ** 2) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def hermite(m: int, u):
    """Probabilists' Hermite polynomial He_m(u) by the three-term recurrence."""
    if m < 0:
        raise ValueError("Hermite index must be non-negative")
    u = np.asarray(u, dtype=float)
    h_prev, h = np.ones_like(u), u.copy()
    if m == 0:
        return h_prev
    for k in range(1, m):
        h_prev, h = h, u * h - k * h_prev
    return h


def _hh(n: int, x):
    """Hh_n(x) = int_x^inf (u - x)^n / n! exp(-u^2 / 2) du, n >= 0."""
    x = np.asarray(x, dtype=float)
    h_prev = np.exp(-x * x / 2.0)  # Hh_{-1}
    h = SQRT2PI * ndtr(-x)  # Hh_0
    for k in range(1, n + 1):
        h_prev, h = h, (h_prev - x * h) / k
    return h


def S_mt_hermite(m: int, t: float, x, y):
    """(2 pi t)^{-1/2} (-1)^m t^{-m/2} He_m((x - y) / sqrt t) exp(-(x - y)^2 / 2t)."""
    if m < 0 or t <= 0:
        raise ValueError("closed form needs m >= 0 and t > 0")
    u = (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) / math.sqrt(t)
    return (-1) ** m * t ** (-m / 2.0) * hermite(m, u) * np.exp(-u * u / 2.0) / math.sqrt(2.0 * math.pi * t)


def S_mt_closed(m: int, t: float, x, y):
    """Closed forms of S_{m,t} for every (m, t) where the kernel is a function.

    t > 0, m < 0: iterated integrals of the heat kernel.
    t < 0, m >= 0: zero (the sector contour encloses no singularity).
    t < 0, m < 0: residue at 0, a polynomial in x - y.
    t = 0, m >= 1: zero; m < 0: (x - y)^(k-1) / (k-1)! 1{x > y} with k = -m.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    a = x - y
    if t > 0:
        if m >= 0:
            return S_mt_hermite(m, t, x, y)
        k = -m
        return t ** ((k - 1) / 2.0) * _hh(k - 1, -a / math.sqrt(t)) / SQRT2PI
    if t < 0:
        if m >= 0:
            return np.zeros(np.broadcast(x, y).shape)
        k = -m
        s = -t
        return s ** ((k - 1) / 2.0) * hermite(k - 1, a / math.sqrt(s)) / math.factorial(k - 1)
    if m == 0:
        raise ValueError("S_{0,0} is the identity operator and has no pointwise kernel")
    if m > 0:
        return np.zeros(np.broadcast(x, y).shape)
    k = -m
    return np.where(a > 0, a ** (k - 1) / math.factorial(k - 1), 0.0)


@dataclass(frozen=True)
class LineContour:
    """Re z = d, oriented upward; trapezoid rule with step ``h`` on [-T, T]."""

    d: float = 1.0
    h: float = 0.02
    tail: float = 1e-14


@dataclass(frozen=True)
class SectorContour:
    """Two rays from d at angles pi +- angle, Gauss-Legendre on each ray."""

    d: float = 1.0
    angle: float = math.pi / 6
    nodes: int = 400
    truncation: float | None = None
    tail: float = 1e-14

    def __post_init__(self):
        if not 0.0 < self.angle < math.pi / 4:
            raise ValueError("sector angle must lie strictly inside (0, pi/4)")
        if self.d <= 0:
            raise ValueError("sector vertex d must be positive")

    def ray_length(self, t: float, a_max: float, m: int) -> float:
        if self.truncation is not None:
            return self.truncation
        # |integrand| <= exp(-|t| cos(2 angle) T^2 / 2 + (|a| + |t| d) T + |m| log T + const)
        c = abs(t) * math.cos(2 * self.angle) / 2.0
        b = a_max + abs(t) * self.d + abs(m) + 1.0
        L = -math.log(self.tail) + abs(t) * self.d**2
        return (b + math.sqrt(b * b + 4 * c * L)) / (2 * c)


def S_mt(m: int, t: float, x, y, contour=None, return_imag: bool = False):
    """S_{m,t}(x, y) by quadrature along the contour (broadcasts over x, y)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    a = x - y
    if t == 0:
        return S_mt_closed(m, t, x, y)
    if t > 0:
        contour = contour or LineContour()
        if not isinstance(contour, LineContour):
            raise ValueError("t > 0 needs a vertical line contour")
        if m < 0 and contour.d <= 0:
            raise ValueError("line must pass to the right of the pole at 0")
        d = contour.d
        amax = float(np.max(np.abs(a))) if a.size else 0.0
        # Gaussian decay exp(-t v^2 / 2) must beat the prefactor
        T = math.sqrt(2.0 * (-math.log(contour.tail) + abs(m) * 3 + 10) / t) + 1.0
        v = np.arange(-T, T + contour.h / 2, contour.h)
        z = d + 1j * v
        logf = t * z * z / 2.0 + a[..., None] * z + m * np.log(z)
        val = contour.h * np.sum(np.exp(logf), axis=-1) / (2.0 * math.pi)
    else:
        contour = contour or SectorContour()
        if not isinstance(contour, SectorContour):
            raise ValueError("t < 0 needs a sector contour")
        amax = float(np.max(np.abs(a))) if a.size else 0.0
        T = contour.ray_length(t, amax, m)
        gx, gw = leggauss(contour.nodes)
        rho = 0.5 * T * (gx + 1.0)
        wts = 0.5 * T * gw
        val = 0.0
        for sgn in (+1.0, -1.0):
            u = np.exp(1j * sgn * (math.pi - contour.angle))
            z = contour.d + rho * u
            logf = t * z * z / 2.0 + a[..., None] * z + m * np.log(z)
            # upper ray traversed outward (+), lower ray inward (-)
            val = val + sgn * np.sum(np.exp(logf) * u * wts, axis=-1)
        val = val / (2j * math.pi)
    if return_imag:
        return val.real, val.imag
    return val.real


# ---------------------------------------------------------------------------
# hitting kernel


@dataclass(frozen=True)
class HittingConfig:
    mesh: float = 1e-3
    samples: int = 10_000
    bridge_correction: bool = True
    seed: int = 0
    backend: str = "auto"  # auto | quadrature | mc
    epsabs: float = 1e-11


def _first_passage_density(a, s, drift: float = 0.0):
    """Density of the first time a + W(s) - drift * s reaches 0 (a > 0)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = a / np.sqrt(2 * math.pi * s**3) * np.exp(-((a - drift * s) ** 2) / (2 * s))
    return np.where(s > 0, out, 0.0)


def _hit_integral(m: int, t: float, a: float, slope: float, b0: float, y: np.ndarray, epsabs: float):
    """int_0^t f_a(s) S_{m,t-s}(X(s), y) ds for the linear barrier X(s) = b0 + slope s."""
    # Y(s) = B(s) - X(s) = a + W(s) - slope * s hits 0
    drift = slope

    def integrand(s):
        if s <= 0 or s >= t:
            return np.zeros_like(y)
        return _first_passage_density(a, s, drift) * S_mt_hermite(m, t - s, b0 + slope * s, y)

    peak = min(a * a / 3.0, t / 2)
    pts = sorted({p for p in (peak, min(a * a, t * 0.9)) if 0 < p < t})
    val, _ = quad_vec(integrand, 0.0, t, epsabs=epsabs, epsrel=1e-10, points=pts or None, limit=2000)
    return val


def S_hypo(m: int, t: float, x, y, X: ContinuumIC, cfg: HittingConfig | None = None) -> np.ndarray:
    """E[S_{m,t-tau}(B(tau), y) 1{tau <= t} | B(0) = x], tau the hitting time of the hypograph of X.

    Returns shape (len(x), len(y)).  Narrow wedge, flat and linear X are
    evaluated deterministically; general piecewise-linear X uses Monte Carlo
    (see :func:`S_hypo_mc` for the standard error).
    """
    cfg = cfg or HittingConfig()
    if m < 0:
        raise ValueError("hitting kernel is defined here for m >= 0")
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros((x.size, y.size))
    if isinstance(X, NarrowWedge):
        below = x <= 0
        out[below] = S_mt_hermite(m, t, x[below, None], y[None, :])
        return out
    if isinstance(X, Flat):
        slope, b0 = 0.0, X.level
    elif isinstance(X, PiecewiseLinear) and X.is_linear and cfg.backend != "mc":
        slope, b0 = X.slope, X.start
    else:
        return S_hypo_mc(m, t, x, y, X, cfg)[0]
    if cfg.backend == "mc":
        return S_hypo_mc(m, t, x, y, X, cfg)[0]
    below = x <= b0
    out[below] = S_mt_hermite(m, t, x[below, None], y[None, :])
    for i in np.flatnonzero(~below):
        out[i] = _hit_integral(m, t, x[i] - b0, slope, b0, y, cfg.epsabs)
    return out


def S_hypo_flat_reflection(m: int, t: float, x, y, level: float = 0.0) -> np.ndarray:
    """Reflection-principle closed form of the flat hitting kernel (test oracle).

    For x > c: (-d/dy)^m of the killed-and-reflected heat kernel, i.e.
    (-1)^m S_{m,t}(x + y - 2c, 0) for y > c and S_{m,t}(x, y) for y < c.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None]
    y = np.atleast_1d(np.asarray(y, dtype=float))[None, :]
    c = level
    direct = S_mt_hermite(m, t, x, y)
    refl = (-1) ** m * S_mt_hermite(m, t, x + y - 2 * c, 0.0)
    above = np.where(y > c, refl, direct)
    return np.where(x <= c, direct, above)


def S_hypo_mc(m: int, t: float, x, y, X: ContinuumIC, cfg: HittingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo hitting kernel over discretized Brownian paths.

    Within each mesh step the path is killed with the Brownian-bridge
    crossing probability exp(-2 D_k D_{k+1} / h), D the distance to the
    (locally linear) barrier; the crossing time is drawn uniformly in the
    step.  Returns (mean, standard error), each of shape (len(x), len(y)).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    steps = max(1, int(round(t / cfg.mesh)))
    h = t / steps
    grid = np.linspace(0.0, t, steps + 1)
    barrier = X(grid)
    mean = np.zeros((x.size, y.size))
    err = np.zeros((x.size, y.size))
    ss = np.random.SeedSequence(cfg.seed)
    for i, (x0, child) in enumerate(zip(x, ss.spawn(x.size))):
        if x0 <= barrier[0]:
            mean[i] = S_mt_hermite(m, t, x0, y)
            continue
        rng = np.random.default_rng(child)
        n = cfg.samples
        tau = np.full(n, np.inf)
        alive = np.ones(n, dtype=bool)
        b = np.full(n, x0)
        for k in range(steps):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            b_next = b[idx] + math.sqrt(h) * rng.standard_normal(idx.size)
            d0 = b[idx] - barrier[k]
            d1 = b_next - barrier[k + 1]
            hit = d1 <= 0
            if cfg.bridge_correction:
                p = np.exp(-2.0 * np.clip(d0, 0, None) * np.clip(d1, 0, None) / h)
                hit |= rng.random(idx.size) < p
            u = rng.random(idx.size)
            tau[idx[hit]] = grid[k] + h * u[hit]
            alive[idx[hit]] = False
            b[idx] = b_next
        hit_idx = np.flatnonzero(np.isfinite(tau))
        vals = np.zeros((n, y.size))
        if hit_idx.size:
            th = tau[hit_idx]
            rem = t - th
            ok = rem > 1e-12
            vals[hit_idx[ok]] = _s_many(m, rem[ok], X(th[ok]), y)
        mean[i] = vals.mean(axis=0)
        err[i] = vals.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, err


def _s_many(m: int, rem: np.ndarray, start: np.ndarray, y: np.ndarray) -> np.ndarray:
    u = (start[:, None] - y[None, :]) / np.sqrt(rem)[:, None]
    return (
        (-1) ** m
        * rem[:, None] ** (-m / 2.0)
        * hermite(m, u)
        * np.exp(-u * u / 2.0)
        / np.sqrt(2 * math.pi * rem)[:, None]
    )


# ---------------------------------------------------------------------------
# composition and the extended kernel


def gl_nodes(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    gx, gw = leggauss(n)
    return 0.5 * (b - a) * gx + 0.5 * (a + b), 0.5 * (b - a) * gw


def composite_nodes(breaks, n_per: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            xs, ws = gl_nodes(a, b, n_per)
            nodes.append(xs)
            weights.append(ws)
    return np.concatenate(nodes), np.concatenate(weights)


def compose_window(x, y, t_max: float) -> float:
    """L = max(|x|, |y|) + 8 sqrt(t) + 10."""
    xm = float(np.max(np.abs(x))) if np.size(x) else 0.0
    ym = float(np.max(np.abs(y))) if np.size(y) else 0.0
    return max(xm, ym) + 8.0 * math.sqrt(t_max) + 10.0


def compose(A, B, x, y, L: float, nodes: int = 200, breakpoints=()) -> np.ndarray:
    """Matrix of int_{-L}^{L} A(x, w) B(w, y) dw by composite Gauss-Legendre.

    ``A`` and ``B`` map (column array, row array) to kernel matrices.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    brk = sorted({-L, L, *[b for b in breakpoints if -L < b < L]})
    w, wt = composite_nodes(brk, nodes)
    return (A(x[:, None], w[None, :]) * wt[None, :]) @ B(w[:, None], y[None, :])


@dataclass
class ExtendedKernel:
    """K(t1, x; t2, y) = -heat(t2 - t1) 1{t1 < t2} + (S_{-m,-t1} S^hypo_{m,t2})(x, y).

    The composition integral runs over a window [lo, hi] in the intermediate
    variable with Gauss-Legendre panels split at the kink of the hitting
    kernel (the starting value X(0)).  Hitting-kernel matrices are cached per
    (t2, y-grid).
    """

    m: int
    X: ContinuumIC
    cfg: HittingConfig = field(default_factory=HittingConfig)
    window: tuple | None = None
    panel_nodes: int = 48
    panel_width: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def intermediate_grid(self, t_max: float, y_ref=()) -> tuple[np.ndarray, np.ndarray]:
        start = self.X.start
        if self.window is not None:
            lo, hi = self.window
        else:
            spread = 8.0 * math.sqrt(t_max) + 4.0
            yr = np.asarray(y_ref, dtype=float)
            lo = min(start, float(yr.min()) if yr.size else start) - spread
            hi = max(start, float(yr.max()) if yr.size else start) + spread
        if isinstance(self.X, NarrowWedge):
            hi = 0.0
        brk = [lo]
        for edge in np.arange(math.floor(lo) + 1, math.ceil(hi), self.panel_width):
            brk.append(float(edge))
        brk.append(hi)
        if lo < start < hi:
            brk.append(start)
        brk = sorted(set(brk))
        return composite_nodes(brk, self.panel_nodes // 2 if len(brk) > 40 else self.panel_nodes)

    @property
    def uses_mc(self) -> bool:
        """Whether the hitting kernel is a Monte Carlo estimate (and so carries noise)."""
        if isinstance(self.X, (NarrowWedge, Flat)):
            return False
        if isinstance(self.X, PiecewiseLinear) and self.X.is_linear:
            return self.cfg.backend == "mc"
        return True

    def _hypo(self, t2: float, w: np.ndarray, y: np.ndarray) -> tuple:
        key = (t2, w.tobytes(), y.tobytes())
        if key not in self._cache:
            if self.uses_mc:
                self._cache[key] = S_hypo_mc(self.m, t2, w, y, self.X, self.cfg)
            else:
                H = S_hypo(self.m, t2, w, y, self.X, self.cfg)
                self._cache[key] = (H, np.zeros_like(H))
        return self._cache[key]

    def hypo_matrix(self, t2: float, w: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self._hypo(t2, w, y)[0]

    def error_matrix(self, t1: float, x, t2: float, y, grid) -> np.ndarray:
        """Entrywise standard-error bound of :meth:`matrix` from the hitting kernel's MC noise."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        w, wt = grid
        se = self._hypo(t2, w, y)[1]
        left = np.abs(S_mt_closed(-self.m, -t1, x[:, None], w[None, :]))
        return (left * wt[None, :]) @ se

    def matrix(self, t1: float, x, t2: float, y, grid=None) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        w, wt = grid if grid is not None else self.intermediate_grid(max(t1, t2), np.concatenate([x, y]))
        left = S_mt_closed(-self.m, -t1, x[:, None], w[None, :]) if self.m > 0 else None
        H = self.hypo_matrix(t2, w, y)
        if left is None:
            # m = 0: S_{0,-t1} S^hypo_{0,t2} is a backward heat flow; not supported
            raise ValueError("extended kernel needs m >= 1")
        K = (left * wt[None, :]) @ H
        if t1 < t2:
            K -= heat_kernel(t2 - t1, x[:, None], y[None, :])
        return K


def K_extended(t1: float, x, t2: float, y, m: int, X: ContinuumIC, cfg: HittingConfig | None = None) -> np.ndarray:
    return ExtendedKernel(m, X, cfg or HittingConfig()).matrix(t1, x, t2, y)
