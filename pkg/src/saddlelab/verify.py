"""Named, machine-checkable verdicts over a computed saddle solution."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .geometry import SQRT2
from .grid import (QuadrantGrid, ScalarField, dss_sq, ds_sq, dst_sq, dt_sq, dtt_sq,
                   laplacian_sq, odd_reflect)
from .nonlinearity import BistableNonlinearity
from .profile1d import Profile1D, build_profile, eval_u0, eval_u0_prime, eval_u0_second
from .solver import CollapsedToTrivial, SaddleSolution, SolverConfig, solve

STRICT_BAND = 5  # nodes kept away from the boundaries for strict positivity


@dataclass
class CheckReport:
    check: str
    m: int
    params: dict
    passed: bool
    worst_node: tuple[float, float] | None
    worst_value: float
    allowance: float
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"check": self.check, "m": self.m, "params": self.params, "pass": self.passed,
                "worst_node": None if self.worst_node is None else list(self.worst_node),
                "worst_value": self.worst_value, "allowance": self.allowance,
                "details": self.details}


def _grid_params(g: QuadrantGrid) -> dict:
    return {"S": g.S, "h": g.h, "m": g.m}


def _index_grids(g: QuadrantGrid):
    return np.meshgrid(np.arange(g.n), np.arange(g.n), indexing="ij")


def _U_square(g: QuadrantGrid, prof: Profile1D):
    S_, T_ = g.meshgrid()
    z = (S_ - T_) / SQRT2
    return z, eval_u0(prof, z)


# ---------------------------------------------------------------------------
# signs


def sign_allowance(g: QuadrantGrid, prof: Profile1D, solver_tol: float = 0.0) -> float:
    """Worst stencil error of u_y, u_t, u_st on the sampled U (nodes with s > t, s, t >= 2h)
    plus a floor for the algebraic error of the solve."""
    h = g.h
    z, U = _U_square(g, prof)
    I, J = _index_grids(g)
    nodes = (J >= 2) & (I > J) & (I <= g.n - 3)
    up = eval_u0_prime(prof, z)
    errs = [
        np.abs((ds_sq(U, h) + dt_sq(U, h)) / SQRT2),  # U_y = 0
        np.abs(dt_sq(U, h) + up / SQRT2),
        np.abs(dst_sq(U, h) + eval_u0_second(prof, z) / 2.0),
    ]
    return max(float(np.max(e[nodes])) for e in errs) + 10.0 * solver_tol / h


def check_signs(sol: SaddleSolution | ScalarField, prof: Profile1D | None = None,
                allowance: float | None = None) -> CheckReport:
    """u_y > -tau, -u_t > -tau, u_st > -tau, plus strict positivity away from the boundaries.

    The verdict uses the allowance; strictness is recorded in ``details``.
    Accepts a bare field (for instance the sampled U) as well as a solution.
    """
    if isinstance(sol, SaddleSolution):
        fld, n, tol = sol.field, sol.nonlinearity, sol.config.tol
    else:
        fld, n, tol = sol, None, 0.0
    g = fld.grid
    h = g.h
    if prof is None:
        if n is None:
            raise ValueError("a profile is needed to calibrate the allowance of a bare field")
        prof = build_profile(n)
    tau = sign_allowance(g, prof, tol) if allowance is None else float(allowance)
    F = odd_reflect(fld)
    I, J = _index_grids(g)
    upper = (J < I) & (I < g.n - 1)  # interior of {s > t}
    upper_t = upper & (J > 0)
    strict_nodes = (J >= STRICT_BAND) & (I - J >= STRICT_BAND * SQRT2) & (I <= g.n - 1 - STRICT_BAND)
    fields = {
        "u_y": ((ds_sq(F, h) + dt_sq(F, h)) / SQRT2, upper),
        "-u_t": (-dt_sq(F, h), upper_t),
        "u_st": (dst_sq(F, h), upper_t),
    }
    worst_val, worst_node = np.inf, None
    details = {}
    for name, (vals, where) in fields.items():
        k = np.unravel_index(np.argmin(np.where(where, vals, np.inf)), vals.shape)
        v = float(vals[k])
        strict_min = float(np.min(vals[strict_nodes])) if strict_nodes.any() else np.nan
        details[name] = {
            "min": v, "at": [float(g.r[k[0]]), float(g.r[k[1]])], "pass": v > -tau,
            "strict_min": strict_min,
            "strict_pass": bool(strict_min > 0),
            "strict_nonpositive_nodes": int(np.sum(vals[strict_nodes] <= 0)),
        }
        if v < worst_val:
            worst_val, worst_node = v, (float(g.r[k[0]]), float(g.r[k[1]]))
    details["strict_pass"] = all(details[k]["strict_pass"] for k in fields)
    details["strict_band"] = STRICT_BAND * h
    return CheckReport("signs", g.m, _grid_params(g), bool(worst_val > -tau), worst_node,
                       worst_val, tau, details)


# ---------------------------------------------------------------------------
# asymptotics


def check_asymptotics(sol: SaddleSolution, prof: Profile1D | None = None, K: int = 8) -> CheckReport:
    """Annulus sups of |u-U| + |grad(u-U)| (a_k) and |D^2(u-U)| (b_k), R_k = S/2 k/K.

    Pass iff both sequences decrease over the last three annuli and their last
    values stay within 10x of the error the Dirichlet edge s = S induces, taken
    as the larger of the normal-derivative jump there and the Hessian of u - U
    next to it.
    """
    if K < 3:
        raise ValueError("need at least three annuli")
    g = sol.grid
    h = g.h
    prof = prof or build_profile(sol.nonlinearity)
    _, U = _U_square(g, prof)
    W = odd_reflect(sol.field) - U
    S_, T_ = g.meshgrid()
    rho = np.hypot(S_, T_)
    ws, wt = ds_sq(W, h), dt_sq(W, h)
    A = np.abs(W) + np.hypot(ws, wt)
    B = np.sqrt(dss_sq(W, h) ** 2 + 2.0 * dst_sq(W, h) ** 2 + dtt_sq(W, h) ** 2)
    I, J = _index_grids(g)
    dom = (J >= 1) & (I >= J) & (I <= g.n - 2)  # st > 0, first octant, off the Dirichlet edge
    R = [g.S / 2.0 * k / K for k in range(1, K + 2)]
    a, b = [], []
    for k in range(K):
        ring = dom & (rho >= R[k]) & (rho <= R[k + 1])
        a.append(float(np.max(A[ring])))
        b.append(float(np.max(B[ring])))
    bd_grad = float(np.max(np.abs(ws[-1, 1:])))
    bd_hess = float(np.max(B[-3:-1, 1:]))
    bd = max(bd_grad, bd_hess)
    dec_a = bool(a[-3] > a[-2] > a[-1])
    dec_b = bool(b[-3] > b[-2] > b[-1])
    ok = dec_a and dec_b and a[-1] <= 10 * bd and b[-1] <= 10 * bd
    details = {"radii": R, "a": a, "b": b, "a_decreasing": dec_a, "b_decreasing": dec_b,
               "boundary_gradient_jump": bd_grad, "boundary_hessian": bd_hess,
               "innermost_a_is_largest": bool(a[0] == max(a))}
    params = _grid_params(g) | {"K": K}
    return CheckReport("asymptotics", g.m, params, ok, None, max(a[-1], b[-1]),
                       10 * bd, details)


# ---------------------------------------------------------------------------
# uniqueness


def check_uniqueness(grid: QuadrantGrid, n: BistableNonlinearity, cfg: SolverConfig | None = None,
                     starts=("from-U", "from-zero-plus-bump", "random"), seed: int = 0,
                     prof: Profile1D | None = None) -> CheckReport:
    """Solve from each start; pass iff all non-trivial limits agree within 10 tol in sup norm.

    Starts that collapse to u = 0 are excluded and listed.  Other solver
    failures propagate.
    """
    cfg = cfg or SolverConfig(mode="hybrid")
    prof = prof or build_profile(n)
    sols, collapsed = {}, []
    for st in starts:
        try:
            sols[st] = solve(grid, n, cfg, prof, start=st, seed=seed if st == "random" else None)
        except CollapsedToTrivial:
            collapsed.append(st)
    allowance = 10 * cfg.tol
    diffs = {f"{a}|{b}": float(np.max(np.abs(sols[a].field.values - sols[b].field.values)))
             for a, b in itertools.combinations(sols, 2)}
    worst = max(diffs.values(), default=np.inf)
    ok = len(sols) >= 2 and worst <= allowance
    details = {"differences": diffs, "collapsed": collapsed,
               "iterations": {k: v.iterations for k, v in sols.items()},
               "residuals": {k: v.residual for k, v in sols.items()}}
    params = _grid_params(grid) | {"starts": list(starts), "seed": seed, "mode": cfg.mode,
                                   "tol": cfg.tol}
    return CheckReport("uniqueness", grid.m, params, bool(ok), None, worst, allowance, details)


# ---------------------------------------------------------------------------
# U as a supersolution


def _U_defect(g: QuadrantGrid, prof: Profile1D) -> np.ndarray:
    """-Delta_h U - f(U) on the square."""
    _, U = _U_square(g, prof)
    return -laplacian_sq(U, g) - prof.nonlinearity.f(U)


def check_U_supersolution(grid: QuadrantGrid, prof: Profile1D, safety: float = 2.0) -> CheckReport:
    """-Delta U - f(U) > -slack at nodes of s > t > 0 at least 2h from every boundary.

    The slack is ``safety`` times the local Richardson estimate (4/3)|D_h - D_{h/2}|.
    For m = 1 the exact defect vanishes, so the check asks |D_h| <= slack instead.
    """
    g = grid
    D = _U_defect(g, prof)
    Df = _U_defect(QuadrantGrid(g.S, g.h / 2, g.d), prof)[::2, ::2]
    slack = safety * 4.0 / 3.0 * np.abs(D - Df)
    I, J = _index_grids(g)
    nodes = (J >= 2) & (I - J >= 2) & (I <= g.n - 3)
    if g.m == 1:
        score = slack - np.abs(D)
    else:
        score = D + slack
    k = np.unravel_index(np.argmin(np.where(nodes, score, np.inf)), D.shape)
    node = (float(g.r[k[0]]), float(g.r[k[1]]))
    details = {"strict_positive": bool(np.all(D[nodes] > 0)), "min_defect": float(np.min(D[nodes])),
               "max_abs_defect": float(np.max(np.abs(D[nodes])))}
    return CheckReport("supersolutionU", g.m, _grid_params(g), bool(score[k] >= 0), node,
                       float(D[k]), float(slack[k]), details)


# ---------------------------------------------------------------------------
# narrow-domain barrier


def check_narrow_barrier(eps: float, K_bound: float, m: int = 7, samples: int = 41,
                         y_max: float = 20.0) -> CheckReport:
    """The barrier phi = (z + eps)(3 eps - z) on the slab 0 < z < eps/sqrt 2.

    Checks 2 eps^2 <= phi <= 6 eps^2 and
    phi_zz - 2(m-1) z phi_z / (y^2 - z^2) + K phi <= -2 + 6 eps^2 K < 0
    on a (z, y) sample with y > z; the margin is minus the largest left side.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if K_bound < 0:
        raise ValueError("K_bound must be nonnegative")
    if 3 * eps**2 * K_bound >= 1:
        raise ValueError(f"smallness fails: 3 eps^2 K = {3 * eps**2 * K_bound:.3g} >= 1")
    z = np.linspace(0.0, eps / SQRT2, samples)
    Z, Y = np.meshgrid(z, np.linspace(0.0, y_max, 4 * samples), indexing="ij")
    Y = Z + 1e-3 * eps + Y  # strictly inside y > z
    phi = (Z + eps) * (3 * eps - Z)
    phi_z = 2 * eps - 2 * Z
    first = -2.0 * (m - 1) * Z * phi_z / (Y**2 - Z**2)
    lhs = -2.0 + first + K_bound * phi
    bound = -2.0 + 6 * eps**2 * K_bound
    bounds_ok = bool(np.all(phi >= 2 * eps**2) and np.all(phi <= 6 * eps**2))
    k = np.unravel_index(np.argmax(lhs), lhs.shape)
    worst = float(lhs[k])
    ok = bounds_ok and bool(np.all(phi_z >= 0)) and worst <= bound < 0
    details = {"margin": -worst, "bound": bound, "phi_min": float(phi.min()),
               "phi_max": float(phi.max()), "bounds_ok": bounds_ok}
    params = {"eps": eps, "K_bound": K_bound, "m": m, "samples": samples, "y_max": y_max}
    return CheckReport("narrow_barrier", m, params, ok, (float(Z[k]), float(Y[k])), worst,
                       -bound, details)
