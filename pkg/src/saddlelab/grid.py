"""Uniform (s, t) grids, the discrete operator of the (s, t)-form equation, stencils.

Fields live on the closed triangle {0 <= t <= s <= S}; the full square [0, S]^2
is recovered by odd reflection across the diagonal.  The Laplacian
u_ss + u_tt + (m-1)(u_s/s + u_t/t) is discretized in conservative form

    (A u)_k = [w_{k+1/2}(u_{k+1} - u_k) - w_{k-1/2}(u_k - u_{k-1})] / (h^2 mu_k)

per axis, with edge weights w = r^(m-1) at midpoints and node masses mu_k equal
to the cell integral of r^(m-1) divided by h.  It is centered, second order,
exact on even quadratics, and at r = 0 it reduces to m * u_rr with u_rr taken
from the even extension.  The weighted inner product <a, b> = h^2 sum mu_i mu_j a b
makes it symmetric.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import SQRT2, DimensionParams
from .nonlinearity import BistableNonlinearity


@dataclass(frozen=True)
class QuadrantGrid:
    S: float
    h: float
    d: DimensionParams

    def __post_init__(self):
        if self.h <= 0 or self.S <= 0:
            raise ValueError("S and h must be positive")
        ratio = self.S / self.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"S/h = {ratio} is not an integer; use make_grid to round S")
        if round(ratio) < 4:
            raise ValueError("need at least 4 cells per axis")

    @property
    def m(self) -> int:
        return self.d.m

    @property
    def n(self) -> int:
        return int(round(self.S / self.h)) + 1

    @cached_property
    def r(self) -> np.ndarray:
        return self.h * np.arange(self.n)

    @cached_property
    def tri(self) -> tuple[np.ndarray, np.ndarray]:
        """(i, j) of triangle nodes, row-major by i then j <= i."""
        return np.tril_indices(self.n)

    @property
    def size(self) -> int:
        return self.n * (self.n + 1) // 2

    @cached_property
    def edge_weight(self) -> np.ndarray:
        """r^(m-1) at the midpoints k + 1/2, k = 0..n-2."""
        return ((np.arange(self.n - 1) + 0.5) * self.h) ** (self.m - 1)

    @cached_property
    def mass(self) -> np.ndarray:
        """Operator masses: cell integral of r^(m-1) over [r_k - h/2, r_k + h/2] ∩ [0, ∞), / h."""
        m, h = self.m, self.h
        k = np.arange(self.n, dtype=float)
        hi = ((k + 0.5) * h) ** m
        lo = np.where(k > 0, ((k - 0.5) * h) ** m, 0.0)
        return (hi - lo) / (m * h)

    @cached_property
    def quad_mass(self) -> np.ndarray:
        """Quadrature masses; the last cell is clipped at r = S."""
        q = self.mass.copy()
        m, h = self.m, self.h
        q[-1] = (self.S**m - ((self.n - 1.5) * h) ** m) / (m * h)
        return q

    @cached_property
    def operator_1d(self) -> sp.csr_matrix:
        """Radial operator A on nodes 0..n-1; the row of node n-1 is zero (Dirichlet)."""
        n, h = self.n, self.h
        w, mu = self.edge_weight, self.mass
        up = np.zeros(n)
        lo = np.zeros(n)
        up[: n - 1] = w  # coefficient of u_{k+1} at row k
        lo[1 : n - 1] = w[: n - 2]  # coefficient of u_{k-1} at row k
        lo[n - 1] = 0.0
        up[n - 1] = 0.0
        diag = -(up + lo)
        scale = 1.0 / (h * h * mu)
        A = sp.diags([lo[1:] * scale[1:], diag * scale, up[:-1] * scale[:-1]], [-1, 0, 1],
                     shape=(n, n), format="csr")
        return A

    @cached_property
    def laplacian_square(self) -> sp.csr_matrix:
        """Discrete Delta_st on the n x n square, flattened C-order; Dirichlet rows are zero."""
        A = self.operator_1d
        # zero rows for i = n-1 or j = n-1 in both terms
        keep = np.ones(self.n)
        keep[-1] = 0.0
        Ik = sp.diags(keep)
        return (sp.kron(A, Ik) + sp.kron(Ik, A)).tocsr()

    @cached_property
    def node_mass_square(self) -> np.ndarray:
        return np.outer(self.mass, self.mass)

    @cached_property
    def quad_mass_square(self) -> np.ndarray:
        return np.outer(self.quad_mass, self.quad_mass)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """(S_, T_) arrays on the square, indexed [i, j] = (s_i, t_j)."""
        return np.meshgrid(self.r, self.r, indexing="ij")

    def triangle_coords(self) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.tri
        return self.r[i], self.r[j]

    @cached_property
    def interior_mask(self) -> np.ndarray:
        """Triangle-ordered mask of solver unknowns: t < s < S."""
        i, j = self.tri
        return (j < i) & (i < self.n - 1)

    def same_as(self, other: "QuadrantGrid") -> bool:
        return self.n == other.n and self.m == other.m and math.isclose(self.h, other.h)


def make_grid(S: float, h: float, dim_or_d) -> QuadrantGrid:
    """Grid with S rounded to the nearest positive multiple of h."""
    d = dim_or_d if isinstance(dim_or_d, DimensionParams) else DimensionParams.from_dim(int(dim_or_d))
    cells = max(4, int(round(S / h)))
    return QuadrantGrid(cells * h, h, d)


DEFAULT_S = 12.0 * SQRT2
DEFAULT_H = 0.1


@dataclass(frozen=True)
class ScalarField:
    grid: QuadrantGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} triangle values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: QuadrantGrid, fn) -> "ScalarField":
        s, t = grid.triangle_coords()
        return cls(grid, np.broadcast_to(np.asarray(fn(s, t), dtype=float), s.shape).copy())

    @classmethod
    def from_square(cls, grid: QuadrantGrid, F: np.ndarray) -> "ScalarField":
        return cls(grid, F[grid.tri])

    def to_json(self) -> dict:
        g = self.grid
        return {"m": g.m, "S": g.S, "h": g.h, "ordering": "triangle-row-major",
                "values": [float(v) for v in self.values]}

    @classmethod
    def from_json(cls, data: dict) -> "ScalarField":
        if data.get("ordering", "triangle-row-major") != "triangle-row-major":
            raise ValueError(f"unsupported ordering {data['ordering']!r}")
        g = QuadrantGrid(float(data["S"]), float(data["h"]), DimensionParams(int(data["m"])))
        return cls(g, np.asarray(data["values"], dtype=float))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))


def odd_reflect(field: ScalarField, tol: float = 1e-12) -> np.ndarray:
    """Square field with F[j, i] = -F[i, j]; the diagonal must already vanish."""
    g = field.grid
    diag = field.values[g.tri[0] == g.tri[1]]
    if np.max(np.abs(diag)) > tol:
        raise ValueError(f"field does not vanish on the diagonal (max {np.max(np.abs(diag)):.3e})")
    F = np.zeros((g.n, g.n))
    i, j = g.tri
    off = i != j
    F[i[off], j[off]] = field.values[off]
    F[j[off], i[off]] = -field.values[off]
    return F


def restrict(grid: QuadrantGrid, F: np.ndarray) -> ScalarField:
    return ScalarField.from_square(grid, F)


# ---------------------------------------------------------------------------
# operator application on square arrays


def laplacian_sq(F: np.ndarray, grid: QuadrantGrid) -> np.ndarray:
    """Delta_st on the square; rows/columns n-1 (outer boundary) are set to zero."""
    n, h = grid.n, grid.h
    w, mu = grid.edge_weight, grid.mass
    out = np.zeros_like(F)
    inv = 1.0 / (h * h * mu[: n - 1])
    # s-direction (axis 0)
    flux = w[:, None] * (F[1:, :] - F[:-1, :])  # at i + 1/2, i = 0..n-2
    div = flux.copy()
    div[1:] -= flux[:-1]
    out[: n - 1, :] += div * inv[:, None]
    # t-direction (axis 1)
    flux = w[None, :] * (F[:, 1:] - F[:, :-1])
    div = flux.copy()
    div[:, 1:] -= flux[:, :-1]
    out[:, : n - 1] += div * inv[None, :]
    out[n - 1, :] = 0.0
    out[:, n - 1] = 0.0
    return out


def apply_operator_st(field: ScalarField, n: BistableNonlinearity) -> ScalarField:
    """Residual Delta_st u + f(u) at interior triangle nodes, zero on the boundary."""
    if not isinstance(n, BistableNonlinearity):
        raise TypeError("nonlinearity must be a BistableNonlinearity")
    g = field.grid
    R = laplacian_sq(extend(field), g)
    vals = R[g.tri] + n.f(field.values)
    vals[~g.interior_mask] = 0.0
    return ScalarField(g, vals)


# ---------------------------------------------------------------------------
# derivative stencils on square arrays


def ds_sq(F: np.ndarray, h: float) -> np.ndarray:
    """Centered d/ds; zero at s = 0, one-sided second order at s = S."""
    D = np.zeros_like(F)
    D[1:-1] = (F[2:] - F[:-2]) / (2 * h)
    D[-1] = (3 * F[-1] - 4 * F[-2] + F[-3]) / (2 * h)
    return D


def dt_sq(F: np.ndarray, h: float) -> np.ndarray:
    return ds_sq(F.T, h).T


def dst_sq(F: np.ndarray, h: float) -> np.ndarray:
    """Mixed derivative; the 4-point centered formula inside, d_s(d_t F) on the edges."""
    D = ds_sq(dt_sq(F, h), h)
    D[1:-1, 1:-1] = (F[2:, 2:] - F[2:, :-2] - F[:-2, 2:] + F[:-2, :-2]) / (4 * h * h)
    D[0, :] = 0.0
    D[:, 0] = 0.0
    return D


def dss_sq(F: np.ndarray, h: float) -> np.ndarray:
    """Centered second difference in s using the even extension at s = 0."""
    D = np.zeros_like(F)
    D[1:-1] = (F[2:] - 2 * F[1:-1] + F[:-2]) / (h * h)
    D[0] = 2 * (F[1] - F[0]) / (h * h)
    D[-1] = (2 * F[-1] - 5 * F[-2] + 4 * F[-3] - F[-4]) / (h * h)
    return D


def dtt_sq(F: np.ndarray, h: float) -> np.ndarray:
    return dss_sq(F.T, h).T


def extend(field: ScalarField, parity: str = "odd") -> np.ndarray:
    """Square array holding the stored triangle values (diagonal included) and
    their odd or even mirror image above the diagonal."""
    if parity not in ("odd", "even"):
        raise ValueError("parity must be 'odd' or 'even'")
    g = field.grid
    i, j = g.tri
    F = np.zeros((g.n, g.n))
    F[j, i] = field.values if parity == "even" else -field.values
    F[i, j] = field.values
    return F


def d_s(field: ScalarField, parity: str = "odd") -> ScalarField:
    g = field.grid
    return restrict(g, ds_sq(extend(field, parity), g.h))


def d_t(field: ScalarField, parity: str = "odd") -> ScalarField:
    g = field.grid
    return restrict(g, dt_sq(extend(field, parity), g.h))


def d_y(field: ScalarField, parity: str = "odd") -> ScalarField:
    g = field.grid
    F = extend(field, parity)
    return restrict(g, (ds_sq(F, g.h) + dt_sq(F, g.h)) / SQRT2)


def d_st(field: ScalarField, parity: str = "odd") -> ScalarField:
    g = field.grid
    return restrict(g, dst_sq(extend(field, parity), g.h))
