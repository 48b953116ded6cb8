"""Continuum initial conditions X: [0, 1] -> R u {-inf}."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass(frozen=True)
class NarrowWedge:
    """X(0) = 0 and X(t) = -inf for t > 0."""

    kind = "narrow_wedge"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t == 0.0, 0.0, -np.inf)

    @property
    def start(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Flat:
    level: float = 0.0

    kind = "flat"

    def __post_init__(self):
        if not np.isfinite(self.level):
            raise ValueError("flat level must be finite")

    def __call__(self, t):
        return np.full(np.shape(t), float(self.level))

    @property
    def start(self) -> float:
        return float(self.level)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "level": self.level}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through knots (t_i, X(t_i)) with t_0 = 0 and t_last = 1."""

    times: tuple
    values: tuple

    kind = "piecewise_linear"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("need at least two knots with matching times and values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot times must be strictly increasing")
        if t[0] != 0.0 or t[-1] < 1.0:
            raise ValueError("knots must cover [0, 1]")
        if not np.all(np.isfinite(v)):
            raise ValueError("knot values must be finite")
        object.__setattr__(self, "times", tuple(float(s) for s in t))
        object.__setattr__(self, "values", tuple(float(s) for s in v))

    @classmethod
    def linear(cls, intercept: float, slope: float) -> "PiecewiseLinear":
        return cls((0.0, 1.0), (intercept, intercept + slope))

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def start(self) -> float:
        return self.values[0]

    @property
    def is_linear(self) -> bool:
        t, v = np.asarray(self.times), np.asarray(self.values)
        slopes = np.diff(v) / np.diff(t)
        return bool(np.allclose(slopes, slopes[0], rtol=0, atol=1e-14))

    @property
    def slope(self) -> float:
        return (self.values[1] - self.values[0]) / (self.times[1] - self.times[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "times": list(self.times), "values": list(self.values)}


ContinuumIC = Union[NarrowWedge, Flat, PiecewiseLinear]


def ic_from_dict(spec: dict) -> ContinuumIC:
    kind = spec.get("kind")
    if kind == "narrow_wedge":
        return NarrowWedge()
    if kind == "flat":
        return Flat(float(spec.get("level", 0.0)))
    if kind == "piecewise_linear":
        return PiecewiseLinear(tuple(spec["times"]), tuple(spec["values"]))
    if kind == "linear":
        return PiecewiseLinear.linear(float(spec.get("intercept", 0.0)), float(spec["slope"]))
    raise ValueError(f"unknown initial condition kind: {kind!r}")
