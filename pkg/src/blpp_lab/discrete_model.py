"""Geometric last passage percolation: weights, the G(m, n) recursion and
the change of variables to the particle process X(m, n) = -G(m, n) - n.

Lattice arrays carry an explicit zero row and zero column so that
``G[m, n]`` is the value at lattice site (m, n) with 1-based m, n >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .initial import ContinuumIC, NarrowWedge

# Stand-in for -inf in integer arrays; far enough from int64 min that adding
# weights cannot wrap around.
NEG_INF = np.iinfo(np.int64).min // 4

BOUNDARY_MODES = ("zero-row", "column-only")


@dataclass(frozen=True)
class GeomParams:
    q: float = 0.5
    theta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")

    @property
    def alpha(self) -> float:
        return (1.0 - self.theta) / self.theta

    @property
    def c1(self) -> float:
        """Mean of a single weight."""
        return self.q / (1.0 - self.q)

    @property
    def c2(self) -> float:
        """Variance of a single weight."""
        return self.q / (1.0 - self.q) ** 2

    def phi(self, w):
        return (1.0 - self.q) * w / (w - self.q)


@dataclass(frozen=True)
class DiscreteIC:
    """Column-zero data G(0, n) = x_n, n = 1..N, weakly increasing."""

    x: tuple

    def __post_init__(self):
        arr = np.asarray(self.x)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("initial data must be a non-empty sequence")
        if not np.all(arr == np.round(arr)):
            raise ValueError("initial data must be integers")
        arr = arr.astype(np.int64)
        if np.any(np.diff(arr) < 0):
            raise ValueError("initial data must be weakly increasing")
        object.__setattr__(self, "x", tuple(int(v) for v in arr))

    @classmethod
    def step(cls, N: int, level: int = 0) -> "DiscreteIC":
        return cls((level,) * N)

    @property
    def N(self) -> int:
        return len(self.x)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.x, dtype=np.int64)

    def tilde(self) -> np.ndarray:
        """Strictly decreasing image x~_j = -x_j - j."""
        return map_to_X(self.as_array())


@dataclass
class LppField:
    G: np.ndarray  # shape (..., M + 1, N + 1)
    boundary_mode: str

    @property
    def M(self) -> int:
        return self.G.shape[-2] - 1

    @property
    def N(self) -> int:
        return self.G.shape[-1] - 1

    def row(self, m: int) -> np.ndarray:
        """G(m, 1..N)."""
        return self.G[..., m, 1:]


@dataclass(frozen=True)
class EventSpec:
    """The event {G(m, n_i) < a_i for all i}."""

    n: tuple
    a: tuple

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        a = tuple(int(v) for v in self.a)
        if len(n) == 0 or len(n) != len(a):
            raise ValueError("need k >= 1 matching (n_i, a_i) pairs")
        if any(n2 <= n1 for n1, n2 in zip(n, n[1:])):
            raise ValueError("n_i must be strictly increasing")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "a", a)


def sample_environment(params: GeomParams, M: int, N: int, seed=None, size: int | None = None) -> np.ndarray:
    """i.i.d. weights with P(w = k) = (1 - q) q^k, by inverse CDF.

    Returns shape (M, N), or (size, M, N) when ``size`` is given.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    rng = np.random.default_rng(seed)
    shape = (M, N) if size is None else (size, M, N)
    u = 1.0 - rng.random(shape)  # in (0, 1]
    return np.floor(np.log(u) / math.log(params.q)).astype(np.int64)


def glpp_evolve(weights: np.ndarray, ic: DiscreteIC, boundary_mode: str = "zero-row") -> LppField:
    """Run G(m, n) = max(G(m-1, n), G(m, n-1)) + w(m, n) from column-zero data.

    ``weights`` has shape (..., M, N); leading axes are independent samples.
    In "zero-row" mode G(m, 0) = 0, in "column-only" mode G(m, 0) = -inf.
    """
    if boundary_mode not in BOUNDARY_MODES:
        raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}")
    weights = np.asarray(weights, dtype=np.int64)
    M, N = weights.shape[-2:]
    if N != ic.N:
        raise ValueError(f"weights have width {N} but initial data has length {ic.N}")
    lead = weights.shape[:-2]
    G = np.empty(lead + (M + 1, N + 1), dtype=np.int64)
    G[..., 0, 1:] = ic.as_array()
    G[..., :, 0] = 0 if boundary_mode == "zero-row" else NEG_INF
    for m in range(1, M + 1):
        # Row recursion as a running max: with P_n the partial sums of row m,
        # G(m, n) = P_n + max(G(m, 0), max_{j <= n} G(m-1, j) - P_{j-1}).
        P = np.cumsum(weights[..., m - 1, :], axis=-1)
        P_prev = np.concatenate([np.zeros(lead + (1,), dtype=np.int64), P[..., :-1]], axis=-1)
        best = np.maximum.accumulate(G[..., m - 1, 1:] - P_prev, axis=-1)
        best = np.maximum(best, G[..., m, :1])
        G[..., m, 1:] = P + best
    return LppField(G=G, boundary_mode=boundary_mode)


def map_to_X(row) -> np.ndarray:
    """X(n) = -G(n) - n for a weakly increasing row G(1..N)."""
    row = np.asarray(row, dtype=np.int64)
    if np.any(np.diff(row, axis=-1) < 0):
        raise ValueError("input row is not weakly increasing")
    n = np.arange(1, row.shape[-1] + 1)
    return -row - n


def map_from_X(config) -> np.ndarray:
    """Inverse of :func:`map_to_X` on strictly decreasing configurations."""
    config = np.asarray(config, dtype=np.int64)
    if np.any(np.diff(config, axis=-1) >= 0):
        raise ValueError("configuration is not strictly decreasing")
    n = np.arange(1, config.shape[-1] + 1)
    return -config - n


def translate_event(spec: EventSpec) -> np.ndarray:
    """{G(m, n_i) < a_i} is {X(m, n_i) > -a_i - n_i}; returns the thresholds."""
    return -np.asarray(spec.a, dtype=np.int64) - np.asarray(spec.n, dtype=np.int64)


def embed_continuum_ic(X: ContinuumIC, N: int, params: GeomParams) -> DiscreteIC:
    """x_n = c1 n + floor(sqrt(c2 N) X(n / N)), n = 1..N.

    When c1 n is not an integer the floor is taken of the whole expression.
    """
    if isinstance(X, NarrowWedge):
        raise ValueError("narrow wedge is not a finite function and cannot be embedded")
    n = np.arange(1, N + 1)
    vals = params.c1 * n + math.sqrt(params.c2 * N) * X(n / N)
    x = np.floor(vals + 1e-12).astype(np.int64)
    if np.any(np.diff(x) < 0):
        raise ValueError("embedded initial data is not weakly increasing; X decreases too steeply for this N")
    return DiscreteIC(tuple(int(v) for v in x))


def rescaled_ic(ic: DiscreteIC, params: GeomParams) -> tuple[np.ndarray, np.ndarray]:
    """Points (n / N, (x_n - c1 n) / sqrt(c2 N)) approximating X."""
    N = ic.N
    n = np.arange(1, N + 1)
    return n / N, (ic.as_array() - params.c1 * n) / math.sqrt(params.c2 * N)
