"""(s, t) <-> (y, z) coordinates, distance to the Simons cone, U and b-range."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .profile1d import Profile1D, eval_u0

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class DimensionParams:
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"half-dimension m must be an integer >= 1, got {self.m}")

    @property
    def dim(self) -> int:
        return 2 * self.m

    @classmethod
    def from_dim(cls, dim: int) -> "DimensionParams":
        if dim < 2 or dim % 2:
            raise ValueError(f"dimension must be an even integer >= 2, got {dim}")
        return cls(dim // 2)


@dataclass(frozen=True)
class STPoint:
    s: float
    t: float

    def __post_init__(self):
        if self.s < 0 or self.t < 0:
            raise ValueError("s and t must be nonnegative")


@dataclass(frozen=True)
class YZPoint:
    y: float
    z: float

    def __post_init__(self):
        if self.y < 0:
            raise ValueError("y must be nonnegative")


def st_to_yz(p: STPoint) -> YZPoint:
    return YZPoint((p.s + p.t) / SQRT2, (p.s - p.t) / SQRT2)


def yz_to_st(q: YZPoint) -> STPoint:
    if abs(q.z) > q.y:
        raise ValueError(f"|z| = {abs(q.z)} exceeds y = {q.y}")
    # clamp roundoff at |z| = y
    return STPoint(max((q.y + q.z) / SQRT2, 0.0), max((q.y - q.z) / SQRT2, 0.0))


def distance_to_cone(p: STPoint) -> float:
    return abs(p.s - p.t) / SQRT2


def eval_U(s, t, prof: Profile1D):
    """U = u0((s - t)/sqrt 2); accepts scalars or arrays."""
    return eval_u0(prof, (np.asarray(s, dtype=float) - np.asarray(t, dtype=float)) / SQRT2)


def b_range(d: DimensionParams) -> tuple[float, float] | None:
    """Interval of b > 0 with b(b - m + 2) + m - 1 <= 0, or None when empty.

    For m = 1 the real roots are [-1, 0], which holds no positive b.
    """
    m = d.m
    disc = (m - 2) ** 2 - 4 * (m - 1)
    if disc < 0:
        return None
    r = math.sqrt(disc)
    lo, hi = (m - 2 - r) / 2.0, (m - 2 + r) / 2.0
    if lo <= 0.0:
        return None
    return (lo, hi)


def b_inequality(b: float, d: DimensionParams) -> float:
    """b(b - m + 2) + m - 1; admissible b make this <= 0."""
    return b * (b - d.m + 2) + d.m - 1


def volume_weight(s, t, d: DimensionParams):
    """s^(m-1) t^(m-1); angular constants dropped."""
    k = d.m - 1
    return np.asarray(s, dtype=float) ** k * np.asarray(t, dtype=float) ** k
