"""Fredholm determinants det(I - chi K chi) at finite rank.

Continuum: Nystrom discretization on the half-lines [a_i, inf) truncated to
[a_i, a_i + L], Gauss-Legendre panels, weights folded in symmetrically.
Discrete: the kernel restricted to the integer windows [s_i - L, s_i] with
s_i = -a_i - n_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .continuum_kernels import ExtendedKernel, HittingConfig, composite_nodes
from .discrete_kernels import K_geometric
from .discrete_model import DiscreteIC, EventSpec, GeomParams, translate_event
from .initial import ContinuumIC, NarrowWedge


@dataclass(frozen=True)
class MultiPointQuery:
    """P(BLPP(X; (t_i, m)) <= a_i for all i)."""

    times: tuple
    thresholds: tuple
    m: int

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        thr = tuple(float(a) for a in self.thresholds)
        if len(times) == 0 or len(times) != len(thr):
            raise ValueError("need k >= 1 matching (t_i, a_i) pairs")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        if times[0] <= 0 or times[-1] > 1:
            raise ValueError("times must lie in (0, 1]")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "thresholds", thr)


@dataclass
class NystromGrid:
    nodes: list  # per slice
    weights: list
    L: float

    @classmethod
    def build(cls, thresholds, L: float, panels: int, per_panel: int, breaks=()) -> "NystromGrid":
        """Gauss-Legendre panels on each [a_i, a_i + L], split at the given breakpoints."""
        if L < 10:
            raise ValueError("domain truncation L must be at least 10")
        nodes, weights = [], []
        for i, a in enumerate(thresholds):
            edges = list(np.linspace(a, a + L, panels + 1))
            extra = breaks[i] if i < len(breaks) else ()
            for b in np.atleast_1d(extra):
                if a < b < a + L:
                    edges.append(float(b))
            x, w = composite_nodes(sorted(set(edges)), per_panel)
            nodes.append(x)
            weights.append(w)
        return cls(nodes, weights, L)

    @property
    def size(self) -> int:
        return sum(len(x) for x in self.nodes)


def det_I_minus_log(M: np.ndarray) -> tuple[float, float]:
    """(sign, log|det(I - M)|) by LU with partial pivoting."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return tuple(float(v) for v in np.linalg.slogdet(np.eye(M.shape[0]) - M))


def det_I_minus(M: np.ndarray) -> float:
    sign, logabs = det_I_minus_log(M)
    if logabs > 700:
        raise OverflowError(f"determinant magnitude exp({logabs:.1f}) overflows; use det_I_minus_log")
    return sign * math.exp(logabs)


def _roundoff(size: int) -> float:
    # rounding floor of an LU determinant of an O(1)-conditioned matrix
    return size * np.finfo(float).eps


@dataclass
class FredholmResult:
    value: float
    certificate: float  # last refinement change plus a rounding floor
    size: int
    L: float
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "certificate": self.certificate,
            "size": self.size,
            "L": self.L,
            "history": self.history,
        }


def continuum_matrix(query: MultiPointQuery, kernel: ExtendedKernel, grid: NystromGrid, errors: bool = False):
    """Symmetrized Nystrom matrix; with ``errors`` also its entrywise MC standard-error bound."""
    t = query.times
    y_all = np.concatenate(grid.nodes)
    tmax = max(t)
    ref = np.concatenate([y_all, [kernel.X.start]])
    wgrid = kernel.intermediate_grid(tmax, ref)
    blocks, eblocks = [], []
    for i in range(len(t)):
        row, erow = [], []
        si = np.sqrt(grid.weights[i])
        for j in range(len(t)):
            sj = np.sqrt(grid.weights[j])
            K = kernel.matrix(t[i], grid.nodes[i], t[j], grid.nodes[j], grid=wgrid)
            row.append(si[:, None] * K * sj[None, :])
            if errors:
                E = kernel.error_matrix(t[i], grid.nodes[i], t[j], grid.nodes[j], wgrid)
                erow.append(si[:, None] * E * sj[None, :])
        blocks.append(row)
        eblocks.append(erow)
    if errors:
        return np.block(blocks), np.block(eblocks)
    return np.block(blocks)


def mc_error_budget(M: np.ndarray, E: np.ndarray, value: float) -> float:
    """First-order bound |d det(I - M)| <= |det| ||(I - M)^{-1}||_2 ||dM||_F with dM ~ E."""
    if not np.any(E):
        return 0.0
    inv_norm = 1.0 / np.linalg.svd(np.eye(M.shape[0]) - M, compute_uv=False)[-1]
    return abs(value) * inv_norm * float(np.linalg.norm(E))


def _jump_points(query: MultiPointQuery, X: ContinuumIC):
    # the hitting kernel jumps in y where the hitting position X(t) meets y
    if isinstance(X, NarrowWedge):
        return [()] * len(query.times)
    return [(float(X(t)),) for t in query.times]


def default_L(query: MultiPointQuery) -> float:
    return max(10.0, 10.0 * math.sqrt(max(query.times)) + 2.0)


def solve_continuum(
    query: MultiPointQuery,
    X: ContinuumIC,
    per_panel: int = 8,
    panels: int = 8,
    L: float | None = None,
    tol: float = 1e-4,
    max_doublings: int = 3,
    cfg: HittingConfig | None = None,
    kernel: ExtendedKernel | None = None,
) -> FredholmResult:
    """det(I - chi K chi) on L^2({t_1..t_k} x R), chi(t_i, x) = 1{x >= a_i}.

    Panel nodes are doubled until successive values differ by less than
    ``tol``; the last change is reported as the certificate.
    """
    L = L or default_L(query)
    kernel = kernel or ExtendedKernel(query.m, X, cfg or HittingConfig())
    breaks = _jump_points(query, X)
    history = []
    prev = None
    n = per_panel
    for _ in range(max_doublings + 1):
        grid = NystromGrid.build(query.thresholds, L, panels, n, breaks)
        val = det_I_minus(continuum_matrix(query, kernel, grid))
        delta = abs(val - prev) if prev is not None else math.inf
        history.append({"per_panel": n, "size": grid.size, "L": L, "value": val, "delta": delta})
        if delta < tol:
            cert = delta + _roundoff(grid.size)
            if kernel.uses_mc:
                M, E = continuum_matrix(query, kernel, grid, errors=True)
                cert += mc_error_budget(M, E, val)
            return FredholmResult(val, cert, grid.size, L, history)
        prev = val
        n *= 2
    raise RuntimeError(f"Nystrom refinement did not converge: last two values {history[-2]['value']}, {val}")


def refine_report(
    query: MultiPointQuery,
    X: ContinuumIC,
    ladder=(8, 16, 32),
    panels: int = 8,
    L: float | None = None,
    cfg: HittingConfig | None = None,
) -> list[dict]:
    """Values of the continuum determinant over a ladder of panel node counts."""
    L = L or default_L(query)
    kernel = ExtendedKernel(query.m, X, cfg or HittingConfig())
    breaks = _jump_points(query, X)
    rows, prev = [], None
    for n in ladder:
        grid = NystromGrid.build(query.thresholds, L, panels, n, breaks)
        val = det_I_minus(continuum_matrix(query, kernel, grid))
        rows.append({"per_panel": n, "size": grid.size, "L": L, "value": val, "delta": None if prev is None else abs(val - prev)})
        prev = val
    return rows


def gauge_factor(params: GeomParams) -> float:
    """Conjugation c^(z1 - z2) making the discrete kernel decay on both sides.

    The kernels carry theta^(z1 - z2) times Laurent coefficients of symbols
    analytic in q < |w| < 1, so any effective ratio theta * c in (q, 1) works.
    """
    return 0.5 * (params.q + 1.0) / params.theta


def discrete_matrix(spec: EventSpec, m: int, ic: DiscreteIC, params: GeomParams, L: int) -> np.ndarray:
    xt = ic.tilde()
    s = translate_event(spec)
    c = gauge_factor(params)
    zs = [np.arange(si - L, si + 1) for si in s]
    blocks = []
    for i, n1 in enumerate(spec.n):
        row = []
        for j, n2 in enumerate(spec.n):
            K, _ = K_geometric(n1, zs[i], n2, zs[j], m, xt, params)
            row.append(K * c ** (zs[i][:, None] - zs[j][None, :]).astype(float))
        blocks.append(row)
    return np.block(blocks)


def solve_discrete(
    spec: EventSpec,
    m: int,
    ic: DiscreteIC,
    params: GeomParams | None = None,
    L: int = 40,
    tol: float = 1e-10,
    max_growth: int = 8,
) -> FredholmResult:
    """P(G(m, n_i) < a_i for all i) = det(I - chi K chi) on l^2({n_i} x Z).

    chi(i, z) = 1{z <= -a_i - n_i}; the window below each cutoff grows until
    the determinant changes by less than ``tol``.
    """
    params = params or GeomParams()
    if max(spec.n) > ic.N:
        raise ValueError("query index exceeds the number of rows in the initial data")
    if m == 0:
        # zero steps: G(0, n) = x_n deterministically
        x = ic.as_array()
        val = float(all(x[n - 1] < a for n, a in zip(spec.n, spec.a)))
        return FredholmResult(val, 0.0, 0, 0, [])
    history, prev = [], None
    for _ in range(max_growth):
        val = det_I_minus(discrete_matrix(spec, m, ic, params, L))
        delta = abs(val - prev) if prev is not None else math.inf
        history.append({"L": L, "value": val, "delta": delta})
        if delta < tol:
            size = len(spec.n) * (L + 1)
            return FredholmResult(val, delta + _roundoff(size), size, L, history)
        prev = val
        L = int(L * 1.5)
    raise RuntimeError(f"window growth did not converge: {history[-2:]}")
