"""Linearized operator L_u = Delta + f'(u), the stability form Q_u, the lowest
eigenvalue of -L_u among functions of (s, t), and the phi supersolution certificate.

Square arrays are indexed [i, j] = (s_i, t_j) on [0, S]^2; the outer edges
i = n-1 and j = n-1 are Dirichlet.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad

from .geometry import SQRT2, b_range
from .grid import QuadrantGrid, ScalarField, laplacian_sq, odd_reflect
from .profile1d import Profile1D, build_profile, eval_u0, eval_u0_prime
from .solver import SaddleSolution, SolverConfig, solve

SAFETY = 1.5
CLASS_NOTE = "within the O(m)xO(m)-invariant class (functions of s and t)"


class EigenSolveError(RuntimeError):
    pass


@dataclass
class LinearizedOperator:
    solution: SaddleSolution
    u: np.ndarray  # odd extension on the square
    potential: np.ndarray  # f'(u) on the square

    @property
    def grid(self) -> QuadrantGrid:
        return self.solution.grid

    @classmethod
    def at(cls, sol: SaddleSolution) -> "LinearizedOperator":
        u = odd_reflect(sol.field)
        return cls(sol, u, sol.nonlinearity.fp(u))


def _as_square(op: LinearizedOperator, xi) -> np.ndarray:
    if isinstance(xi, ScalarField):
        if not xi.grid.same_as(op.grid):
            raise ValueError("grid mismatch")
        return odd_reflect(xi, tol=np.inf)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (op.grid.n, op.grid.n):
        raise ValueError(f"grid mismatch: expected {(op.grid.n,) * 2}, got {xi.shape}")
    return xi


def apply_Lu(op: LinearizedOperator, xi) -> np.ndarray:
    xi = _as_square(op, xi)
    out = laplacian_sq(xi, op.grid) + op.potential * xi
    out[-1, :] = 0.0
    out[:, -1] = 0.0
    return out


def inner(op: LinearizedOperator, a: np.ndarray, b: np.ndarray) -> float:
    """Weighted inner product h^2 sum mu_i mu_j a b (angular constants dropped)."""
    g = op.grid
    return float(g.h**2 * np.sum(g.node_mass_square * a * b))


def weighted_norm(op: LinearizedOperator, a: np.ndarray) -> float:
    return float(np.sqrt(inner(op, a, a)))


def quadratic_form(op: LinearizedOperator, xi) -> float:
    """sum over edges of w (xi_a - xi_b)^2  -  h^2 sum mu f'(u) xi^2; xi must vanish on the outer edges."""
    xi = _as_square(op, xi)
    if np.any(xi[-1, :] != 0.0) or np.any(xi[:, -1] != 0.0):
        raise ValueError("test function must vanish on the outer boundary")
    g = op.grid
    w, mu = g.edge_weight, g.mass
    grad = (np.sum(w[:, None] * mu[None, :] * (xi[1:, :] - xi[:-1, :]) ** 2)
            + np.sum(mu[:, None] * w[None, :] * (xi[:, 1:] - xi[:, :-1]) ** 2))
    return float(grad - g.h**2 * np.sum(g.node_mass_square * op.potential * xi * xi))


# ---------------------------------------------------------------------------
# spectrum


@dataclass
class SpectrumEstimate:
    lambda_min: float
    eigenfield: np.ndarray  # square array, weighted norm 1
    iterations: int
    residual: float
    symmetry: str
    method: str
    next_eigenvalues: list[float] = field(default_factory=list)
    note: str = CLASS_NOTE

    def to_json(self, grid: QuadrantGrid) -> dict:
        return {"m": grid.m, "lambda_min": self.lambda_min, "residual": self.residual,
                "S": grid.S, "h": grid.h, "symmetry": self.symmetry, "method": self.method,
                "iterations": self.iterations, "next_eigenvalues": self.next_eigenvalues,
                "note": self.note}


def _symmetric_system(op: LinearizedOperator, symmetry: str):
    """Unknown index set and the symmetric matrix D^(1/2)(-L_u)D^(-1/2)."""
    g = op.grid
    N = g.n
    I, J = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    if symmetry == "st":
        mask = (I < N - 1) & (J < N - 1)
    elif symmetry == "odd":
        mask = (J < I) & (I < N - 1)
    else:
        raise ValueError("symmetry must be 'st' or 'odd'")
    idx = np.flatnonzero(mask)
    L = g.laplacian_square[idx][:, idx]
    r = np.sqrt(g.node_mass_square.ravel()[idx])
    A = -(sp.diags(r) @ L @ sp.diags(1.0 / r)) - sp.diags(op.potential.ravel()[idx])
    A = (0.5 * (A + A.T)).tocsr()
    return idx, r, A


def gershgorin_lower(A: sp.csr_matrix) -> float:
    d = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - off))


def _inverse_subspace(A, sigma, k, tol, maxiter, rng):
    """Block inverse iteration with fixed shift sigma < lambda_min and CG inner solves."""
    n = A.shape[0]
    B = (A - sigma * sp.identity(n)).tocsr()
    pre = sp.diags(1.0 / B.diagonal())
    X = np.linalg.qr(rng.standard_normal((n, k)))[0]
    for it in range(1, maxiter + 1):
        Y = np.empty_like(X)
        for c in range(k):
            y, info = spla.cg(B, X[:, c], x0=X[:, c], M=pre, rtol=1e-12, maxiter=10 * n)
            if info != 0:
                raise EigenSolveError(f"CG inner solve failed (info={info})")
            Y[:, c] = y
        X = np.linalg.qr(Y)[0]
        H = X.T @ (A @ X)
        vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
        X = X @ vecs
        res = np.linalg.norm(A @ X[:, 0] - vals[0] * X[:, 0])
        if res <= tol:
            return vals, X, it
    raise EigenSolveError(f"inverse iteration did not converge in {maxiter} sweeps")


def min_eigenvalue(op: LinearizedOperator, symmetry: str = "st", method: str = "shift-invert",
                   n_extra: int = 2, tol: float = 1e-9, maxiter: int = 2000,
                   seed: int = 0) -> SpectrumEstimate:
    """Smallest eigenvalue of -L_u with Dirichlet outer edges and weight s^(m-1) t^(m-1).

    ``symmetry="st"`` is the whole square (all functions of s and t); ``"odd"``
    restricts to functions odd across the cone.  The shift starts at the
    Gershgorin lower bound, so the shifted operator is positive definite.
    ``method="shift-invert"`` runs Lanczos on the LU-factored shifted operator;
    ``"inverse"`` runs block inverse iteration with CG inner solves.
    """
    idx, r, A = _symmetric_system(op, symmetry)
    sigma = gershgorin_lower(A) - 1e-3
    k = 1 + n_extra
    if method == "shift-invert":
        try:
            vals, vecs = spla.eigsh(A.tocsc(), k=k, sigma=sigma, which="LM", tol=1e-13)
        except (RuntimeError, spla.ArpackNoConvergence) as exc:
            raise EigenSolveError(str(exc)) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        iterations = 1
    elif method == "inverse":
        vals, vecs, iterations = _inverse_subspace(A, sigma, k, tol, maxiter,
                                                   np.random.default_rng(seed))
    else:
        raise ValueError(f"unknown method {method!r}")
    y = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    lam = float(vals[0])
    res = float(np.linalg.norm(A @ y - lam * y))
    # back to nodal values; h ||y||_2 is the weighted norm of xi
    g = op.grid
    xi = np.zeros(g.n * g.n)
    xi[idx] = y / (r * g.h)
    xi = xi.reshape(g.n, g.n)
    if xi.flat[np.argmax(np.abs(xi))] < 0:
        xi = -xi
    return SpectrumEstimate(lam, xi, iterations, res, symmetry, method,
                            [float(v) for v in vals[1:]])


# ---------------------------------------------------------------------------
# phi = t^-b u_s - s^-b u_t


def build_phi(sol: SaddleSolution, b: float) -> np.ndarray:
    """phi on the square; NaN on the axes {st = 0} where it is undefined."""
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    g = sol.grid
    u = odd_reflect(sol.field)
    return _phi_from_square(u, g, b)


def _phi_from_square(u, g: QuadrantGrid, b: float) -> np.ndarray:
    S_, T_ = g.meshgrid()
    us = _dcentered(u, g.h, 0)
    ut = _dcentered(u, g.h, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = T_ ** (-b) * us - S_ ** (-b) * ut
    phi[0, :] = np.nan
    phi[:, 0] = np.nan
    return phi


def phi_U_exact(g: QuadrantGrid, prof: Profile1D, b: float) -> np.ndarray:
    """(u0'(z)/sqrt 2)(t^-b + s^-b), the phi built from U with exact derivatives."""
    S_, T_ = g.meshgrid()
    z = (S_ - T_) / SQRT2
    with np.errstate(divide="ignore"):
        out = eval_u0_prime(prof, z) / SQRT2 * (T_ ** (-b) + S_ ** (-b))
    out[0, :] = np.nan
    out[:, 0] = np.nan
    return out


def L_phi_U_exact(g: QuadrantGrid, prof: Profile1D, b: float) -> np.ndarray:
    """Exact (Delta + f'(U)) phi_U, from phi_U = q(z) w(s, t) with q = u0'/sqrt 2,
    w = t^-b + s^-b, and u0'' = -f(u0), u0''' = -f'(u0) u0'."""
    n = prof.nonlinearity
    m = g.m
    S_, T_ = g.meshgrid()
    z = (S_ - T_) / SQRT2
    u0 = eval_u0(prof, z)
    u0p = eval_u0_prime(prof, z)
    q = u0p / SQRT2
    qp = -n.f(u0) / SQRT2  # dq/dz
    qpp = -n.fp(u0) * u0p / SQRT2
    with np.errstate(divide="ignore", invalid="ignore"):
        w = T_ ** (-b) + S_ ** (-b)
        lap_q = qpp + (m - 1) * (qp / SQRT2) * (1.0 / S_ - 1.0 / T_)
        lap_w = b * (b + 2 - m) * (S_ ** (-b - 2) + T_ ** (-b - 2))
        grad = (qp / SQRT2) * (-b * S_ ** (-b - 1) + b * T_ ** (-b - 1))
        out = w * lap_q + q * lap_w + 2.0 * grad + n.fp(u0) * q * w
    out[0, :] = np.nan
    out[:, 0] = np.nan
    return out


def _dcentered(F, h, axis):
    """Centered first difference, NaN on the outer edge; the axis row keeps
    the symmetry identity u_s = 0 at s = 0 (u_t = 0 at t = 0)."""
    F = np.moveaxis(F, axis, 0)
    D = np.full_like(F, np.nan)
    D[1:-1] = (F[2:] - F[:-2]) / (2 * h)
    D[0] = 0.0
    return np.moveaxis(D, 0, axis)


def _lap_interior(F, g: QuadrantGrid) -> np.ndarray:
    """Conservative Delta_st at nodes with both neighbours on the grid; NaN elsewhere."""
    h = g.h
    w, mu = g.edge_weight, g.mass
    out = np.zeros_like(F)
    for axis in (0, 1):
        G = np.moveaxis(F, axis, 0)
        A = np.full_like(G, np.nan)
        A[1:-1] = ((w[1:, None] * (G[2:] - G[1:-1]) - w[:-1, None] * (G[1:-1] - G[:-2]))
                   / (h * h * mu[1:-1, None]))
        out = out + np.moveaxis(A, 0, axis)
    return out


def _pipeline(u, potential, g, b):
    """phi and L_u phi from nodal u; NaN where a stencil leaves the square."""
    phi = _phi_from_square(u, g, b)
    return phi, _lap_interior(phi, g) + potential * phi


def _local_max(E):
    """Max over the 3x3 neighbourhood, NaN-aware."""
    P = np.pad(E, 1, constant_values=np.nan)
    stack = [P[1 + a:P.shape[0] - 1 + a, 1 + c:P.shape[1] - 1 + c]
             for a in (-1, 0, 1) for c in (-1, 0, 1)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmax(np.stack(stack), axis=0)


def _richardson(P_h, P_half):
    """(4/3)|P_h - P_{h/2}| at the coarse nodes, maxed over 3x3 neighbourhoods."""
    with np.errstate(invalid="ignore"):
        return _local_max(4.0 / 3.0 * np.abs(P_h - P_half[::2, ::2]))


def certificate_nodes(g: QuadrantGrid, band: int = 5) -> np.ndarray:
    """Square nodes at least ``band`` nodes from the axes and the outer edges."""
    N = g.n
    I, J = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    return (I >= band) & (J >= band) & (I <= N - 1 - band) & (J <= N - 1 - band)


def _U_pipeline(grid, prof, b):
    S_, T_ = grid.meshgrid()
    U = eval_u0(prof, (S_ - T_) / SQRT2)
    return _pipeline(U, prof.nonlinearity.fp(U), grid, b)[1]


def calibrate_slack(g: QuadrantGrid, prof: Profile1D, b: float, band: int = 5) -> float:
    """Smallest c with |P_h - exact| <= c E_h for phi_U on the grids h and h/2,
    where E_h is the Richardson scale from the next finer grid."""
    grids = [g, QuadrantGrid(g.S, g.h / 2, g.d), QuadrantGrid(g.S, g.h / 4, g.d)]
    P = [_U_pipeline(gr, prof, b) for gr in grids]
    cs = []
    for k in (0, 1):
        E = _richardson(P[k], P[k + 1])
        err = np.abs(P[k] - L_phi_U_exact(grids[k], prof, b))
        nodes = certificate_nodes(grids[k], band * 2**k) & (E > 0)
        cs.append(float(np.max(err[nodes] / E[nodes])))
    return max(cs)


@dataclass
class SupersolutionCertificate:
    m: int
    b: float
    b_admissible: bool
    min_phi: float
    max_Lphi: float  # max of L phi / phi over the certified nodes
    slack: float  # slack / phi at the worst node
    worst_excess: float  # max of (L phi - slack) / phi
    worst_node: tuple[float, float]
    c_slack: float
    excluded_band_width: float
    verdict: str
    phi: np.ndarray = field(repr=False, default=None)
    Lphi: np.ndarray = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        return {"m": self.m, "b": self.b, "b_admissible": self.b_admissible,
                "min_phi": self.min_phi, "max_Lphi": self.max_Lphi, "slack": self.slack,
                "worst_excess": self.worst_excess, "worst_node": list(self.worst_node),
                "c_slack": self.c_slack, "excluded_band_width": self.excluded_band_width,
                "verdict": self.verdict}


def refine(sol: SaddleSolution, prof: Profile1D | None = None) -> SaddleSolution:
    """The same problem solved by Newton on the grid of spacing h/2, started from U."""
    g = sol.grid
    fine = QuadrantGrid(g.S, g.h / 2, g.d)
    cfg = SolverConfig(mode="newton", tol=sol.config.tol)
    return solve(fine, sol.nonlinearity, cfg, prof or build_profile(sol.nonlinearity))


def certify_supersolution(sol: SaddleSolution, b: float, *, band: int = 5,
                          c_slack: float | None = None, safety: float = SAFETY,
                          fine: SaddleSolution | None = None,
                          prof: Profile1D | None = None) -> SupersolutionCertificate:
    """Check phi > 0 and L_u phi <= slack on {st > 0} minus a band of ``band`` nodes.

    The slack at a node is safety * c_slack * E, where E = (4/3)|P_h - P_{h/2}|
    compares the pipeline u -> phi -> L_u phi on this solution and on the
    solution at spacing h/2 (``fine``, solved here if not given).  c_slack
    comes from the same comparison applied to U, whose L phi_U is exact.
    """
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    g = sol.grid
    prof = prof or build_profile(sol.nonlinearity)
    if fine is None:
        fine = refine(sol, prof)
    elif not (fine.grid.m == g.m and abs(fine.grid.S - g.S) < 1e-12
              and abs(2 * fine.grid.h - g.h) < 1e-12):
        raise ValueError("fine solution must live on the grid of spacing h/2")
    if c_slack is None:
        c_slack = calibrate_slack(g, prof, b, band)
    op = LinearizedOperator.at(sol)
    opf = LinearizedOperator.at(fine)
    phi, Lphi = _pipeline(op.u, op.potential, g, b)
    _, Lf = _pipeline(opf.u, opf.potential, fine.grid, b)
    slack = safety * c_slack * _richardson(Lphi, Lf)
    nodes = certificate_nodes(g, band)
    with np.errstate(invalid="ignore", divide="ignore"):
        excess = np.where(nodes, (Lphi - slack) / phi, -np.inf)
        rel = np.where(nodes, Lphi / phi, -np.inf)
    k = np.unravel_index(np.argmax(excess), excess.shape)
    min_phi = float(np.min(phi[nodes]))
    worst = float(excess[k])
    rng = b_range(g.d)
    admissible = rng is not None and rng[0] - 1e-12 <= b <= rng[1] + 1e-12
    verdict = "pass" if (min_phi > 0 and worst <= 0) else "fail"
    return SupersolutionCertificate(
        m=g.m, b=float(b), b_admissible=admissible, min_phi=min_phi,
        max_Lphi=float(np.max(rel)), slack=float(slack[k] / phi[k]), worst_excess=worst,
        worst_node=(float(g.r[k[0]]), float(g.r[k[1]])), c_slack=float(c_slack),
        excluded_band_width=band * g.h, verdict=verdict, phi=phi, Lphi=Lphi)


def best_effort_b(m: int) -> float:
    """Minimizer of b(b - m + 2) + m - 1 over b > 0 (the admissible midpoint when m >= 7)."""
    return max((m - 2) / 2.0, 0.5)


# ---------------------------------------------------------------------------
# cutoff


def eta(r, eps: float):
    """0 on [0, eps/2], 1 on [eps, inf), C^1 cubic ramp in between."""
    x = np.clip((np.asarray(r, dtype=float) - eps / 2) / (eps / 2), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def eta_prime(r, eps: float):
    r = np.asarray(r, dtype=float)
    x = np.clip((r - eps / 2) / (eps / 2), 0.0, 1.0)
    return np.where((x > 0) & (x < 1), 6.0 * x * (1.0 - x) / (eps / 2), 0.0)


def cutoff_family(grid: QuadrantGrid, eps: float) -> np.ndarray:
    """eta_eps(s) eta_eps(t) on the square."""
    if not 0 < eps < grid.S / 4:
        raise ValueError("need 0 < eps < S/4")
    e = eta(grid.r, eps)
    return np.outer(e, e)


def cutoff_gradient_mass(eps: float, m: int, R0: float) -> float:
    """int over {s <= eps, t <= R0} of |d/ds eta_eps(s)|^2 s^(m-1) t^(m-1) ds dt."""
    inner_s, _ = quad(lambda s: eta_prime(s, eps) ** 2 * s ** (m - 1), eps / 2, eps)
    return float(inner_s * R0**m / m)
