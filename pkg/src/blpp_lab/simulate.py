"""Monte Carlo ground truth for last passage percolation.

Samples are produced in fixed-size blocks; block ``i`` draws from the
substream ``SeedSequence(seed, spawn_key=(i,))``.  Results therefore do not
depend on how blocks are distributed over workers (``BLPP_WORKERS``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .discrete_model import GeomParams, embed_continuum_ic, glpp_evolve, sample_environment
from .initial import ContinuumIC

BLOCK = 4096
DKW_LEVEL = 0.01


@dataclass(frozen=True)
class MCEstimate:
    value: float
    samples: int
    stderr: float
    dkw_band: float
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def block_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _blocks(samples: int) -> list[tuple[int, int]]:
    return [(i, min(BLOCK, samples - i * BLOCK)) for i in range(math.ceil(samples / BLOCK))]


def _run_blocks(fn, samples: int, *args) -> np.ndarray:
    jobs = _blocks(samples)
    workers = int(os.environ.get("BLPP_WORKERS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(fn, *zip(*[(i, n, *args) for i, n in jobs])))
    else:
        parts = [fn(i, n, *args) for i, n in jobs]
    return np.concatenate(parts, axis=0)


def _mesh_indices(times, mesh: float) -> np.ndarray:
    idx = np.rint(np.asarray(times, dtype=float) / mesh).astype(int)
    if np.any(np.abs(idx * mesh - np.asarray(times)) > 1e-9):
        raise ValueError("mesh must resolve every query time exactly")
    return idx


def _bridge_sup(d0, d1, var, u):
    """Sample the maximum of a Brownian bridge from d0 to d1 with variance ``var``."""
    with np.errstate(invalid="ignore"):
        sup = 0.5 * (d0 + d1 + np.sqrt((d1 - d0) ** 2 - 2.0 * var * np.log(u)))
    # a -inf endpoint (narrow wedge) leaves only the finite endpoint
    return np.where(np.isfinite(d0) & np.isfinite(d1), sup, np.maximum(d0, d1))


def _direct_block(index, n, X, m, times, mesh, seed, bridge):
    rng = block_rng(seed, index)
    idx = _mesh_indices(times, mesh)
    steps = int(idx.max())
    grid = np.arange(steps + 1) * mesh
    Z = np.broadcast_to(X(grid), (n, steps + 1)).copy()
    for level in range(m):
        B = np.zeros((n, steps + 1))
        np.cumsum(math.sqrt(mesh) * rng.standard_normal((n, steps)), axis=1, out=B[:, 1:])
        D = Z - B
        if bridge:
            # sup of Z_{k-1} - B_k inside each step: a bridge of variance mesh
            # (level 1, X piecewise linear) or 2 mesh (difference of two motions)
            var = mesh if level == 0 else 2.0 * mesh
            sup = _bridge_sup(D[:, :-1], D[:, 1:], var, 1.0 - rng.random((n, steps)))
            D = np.concatenate([D[:, :1], sup], axis=1)
        # Z_k(s) = B(s) + max_{u <= s} (Z_{k-1}(u) - B(u)); -inf propagates through max
        Z = B + np.maximum.accumulate(D, axis=1)
    return Z[:, idx]


def blpp_mc_direct(
    X: ContinuumIC, m: int, times, samples: int, mesh: float = 1e-3, seed: int = 0, bridge: bool = True
) -> np.ndarray:
    """Samples of BLPP(X; (t_i, m)) on a time mesh, shape (samples, len(times)).

    Without ``bridge`` the maximum runs over mesh points only, which biases
    the result downward by O(sqrt(mesh)).  With ``bridge`` each step adds a
    sampled Brownian-bridge maximum of Z_{k-1} - B_k between its endpoints;
    this is exact for the first level and ignores the within-step coupling
    between consecutive levels beyond it.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    return _run_blocks(_direct_block, samples, X, m, tuple(times), mesh, seed, bridge)


def _coupled_block(index, n, ic, m, cols, params, seed):
    w = sample_environment(params, m, ic.N, seed=block_rng(seed, index), size=n)
    G = glpp_evolve(w, ic, boundary_mode="column-only").row(m)
    return G[:, np.asarray(cols) - 1]


def blpp_mc_coupled(
    X: ContinuumIC, m: int, times, N: int, samples: int, params: GeomParams | None = None, seed: int = 0
) -> np.ndarray:
    """Rescaled geometric LPP (G(m, floor(N t)) - c1 (N t + m)) / sqrt(c2 N) from embedded data."""
    params = params or GeomParams()
    if m < 1:
        raise ValueError("m must be at least 1")
    ic = embed_continuum_ic(X, N, params)
    times = np.asarray(times, dtype=float)
    cols = np.floor(N * times + 1e-9).astype(int)
    G = _run_blocks(_coupled_block, samples, ic, m, tuple(cols), params, seed)
    return (G - params.c1 * (N * times + m)) / math.sqrt(params.c2 * N)


def _gue_block(index, n, m, seed):
    rng = block_rng(seed, index)
    A = rng.standard_normal((n, m, m)) + 1j * rng.standard_normal((n, m, m))
    # diagonal N(0, 1); off-diagonal real and imaginary parts N(0, 1/2)
    H = (A + np.conj(np.swapaxes(A, 1, 2))) / 2.0
    return np.linalg.eigvalsh(H)[:, -1]


def gue_lambda_max(m: int, samples: int, seed: int = 0) -> np.ndarray:
    """Largest eigenvalue of m x m GUE matrices normalized so that m = 1 is N(0, 1)."""
    if m < 1:
        raise ValueError("m must be positive")
    return _run_blocks(_gue_block, samples, m, seed)


def gue_spectrum_block(m: int, n: int, seed: int = 0) -> np.ndarray:
    """Full sorted spectra of one block (used for ordering checks)."""
    rng = block_rng(seed, 0)
    A = rng.standard_normal((n, m, m)) + 1j * rng.standard_normal((n, m, m))
    return np.linalg.eigvalsh((A + np.conj(np.swapaxes(A, 1, 2))) / 2.0)


def dkw_band(n: int, level: float = DKW_LEVEL) -> float:
    return math.sqrt(math.log(2.0 / level) / (2.0 * n))


def _estimate(hits: np.ndarray, seed) -> MCEstimate:
    n = hits.size
    p = float(hits.mean())
    return MCEstimate(p, n, math.sqrt(p * (1.0 - p) / n), dkw_band(n), seed)


def empirical_cdf(samples, thresholds, seed: int | None = None) -> list[MCEstimate]:
    """Fraction of (one-dimensional) samples <= each threshold."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("no samples")
    return [_estimate(s <= a, seed) for a in np.atleast_1d(thresholds)]


def joint_probability(samples, thresholds, seed: int | None = None, strict: bool = False) -> MCEstimate:
    """Fraction of sample rows with every coordinate <= (or < when strict) its threshold."""
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    thr = np.asarray(thresholds, dtype=float)
    hits = np.all(s < thr if strict else s <= thr, axis=1)
    return _estimate(hits, seed)


def glpp_event_probability(ic, m: int, n, a, samples: int, params: GeomParams | None = None, seed: int = 0) -> MCEstimate:
    """MC estimate of P(G(m, n_i) < a_i for all i) from the DP."""
    params = params or GeomParams()
    if m == 0:
        x = ic.as_array()
        val = float(all(x[ni - 1] < ai for ni, ai in zip(n, a)))
        return MCEstimate(val, samples, 0.0, 0.0, seed)
    cols = tuple(int(v) for v in n)
    G = _run_blocks(_glpp_rows_block, samples, ic, m, cols, params, seed)
    return joint_probability(G, a, seed, strict=True)


def _glpp_rows_block(index, n, ic, m, cols, params, seed):
    w = sample_environment(params, m, ic.N, seed=block_rng(seed, index), size=n)
    G = glpp_evolve(w, ic).row(m)
    return G[:, np.asarray(cols) - 1]
