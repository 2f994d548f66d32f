"""Saddle-shaped solutions on the truncated triangle {0 <= t <= s <= S}.

Unknowns are the nodes with t < s < S.  The diagonal carries u = 0 and the
outer edge s = S carries the far-field data U, both frozen.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import eval_U
from .grid import QuadrantGrid, ScalarField, extend, laplacian_sq
from .nonlinearity import BistableNonlinearity, by_name
from .profile1d import Profile1D, build_profile

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TRIVIAL_SUP = 1e-4


class SolverError(RuntimeError):
    def __init__(self, msg, residual=float("nan"), iterations=0):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


class Diverged(SolverError):
    pass


class Stagnated(Diverged):
    pass


class LinearSolveBreakdown(Diverged):
    pass


class CollapsedToTrivial(SolverError):
    pass


@dataclass
class SolverConfig:
    mode: str = "newton"  # monotone | newton | hybrid
    tol: float = 1e-8
    max_iters: int = 50
    damping: float = 1.0
    linear_solver: str = "direct"  # direct | minres
    linear_tol: float = 1e-12
    max_monotone_iters: int = 5000
    hybrid_switch: float = 1e-4

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.mode not in ("monotone", "newton", "hybrid"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.linear_solver not in ("direct", "minres"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class IterationReport:
    residual: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    step: list[float] = field(default_factory=list)
    max_increase: list[float] = field(default_factory=list)
    max_decrease: list[float] = field(default_factory=list)
    kind: list[str] = field(default_factory=list)

    def record(self, kind, residual, energy, delta):
        self.kind.append(kind)
        self.residual.append(float(residual))
        self.energy.append(float(energy))
        self.step.append(float(np.max(np.abs(delta))) if delta.size else 0.0)
        self.max_increase.append(float(max(np.max(delta), 0.0)) if delta.size else 0.0)
        self.max_decrease.append(float(max(-np.min(delta), 0.0)) if delta.size else 0.0)


@dataclass
class SaddleSolution:
    field: ScalarField
    nonlinearity: BistableNonlinearity
    config: SolverConfig
    iterations: int
    residual: float
    wall_time: float = 0.0
    report: IterationReport = field(default_factory=IterationReport)
    start: str = "from-U"
    seed: int | None = None

    @property
    def grid(self) -> QuadrantGrid:
        return self.field.grid

    @property
    def d(self):
        return self.grid.d

    def to_json(self) -> dict:
        g = self.grid
        return {
            "schema_version": SCHEMA_VERSION,
            "m": g.m,
            "S": g.S,
            "h": g.h,
            "nonlinearity": self.nonlinearity.name,
            "tol": self.config.tol,
            "iterations": self.iterations,
            "residual": self.residual,
            "config": asdict(self.config),
            "start": self.start,
            "seed": self.seed,
            "ordering": "triangle-row-major",
            "values": [float(v) for v in self.field.values],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True))


def load_solution(path: str | Path) -> SaddleSolution:
    data = json.loads(Path(path).read_text())
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {data.get('schema_version')!r}")
    fld = ScalarField.from_json(data)
    cfg = SolverConfig(**data.get("config", {"tol": data["tol"]}))
    return SaddleSolution(fld, by_name(data["nonlinearity"]), cfg, int(data["iterations"]),
                          float(data["residual"]), start=data.get("start", "from-U"),
                          seed=data.get("seed"))


# ---------------------------------------------------------------------------
# discrete problem


class _Problem:
    """Index bookkeeping and sparse blocks for the triangle problem."""

    def __init__(self, grid: QuadrantGrid, n: BistableNonlinearity, prof: Profile1D):
        self.grid, self.n, self.prof = grid, n, prof
        N = grid.n
        i, j = grid.tri
        flat = i * N + j
        self.unk = grid.interior_mask
        self.sq_unk = flat[self.unk]
        self.sq_bnd = flat[~self.unk]
        L = grid.laplacian_square
        rows = L[self.sq_unk]
        self.L_II = rows[:, self.sq_unk].tocsc()
        self.L_IB = rows[:, self.sq_bnd].tocsr()
        # frozen boundary values: U on s = S, 0 on the diagonal
        s, t = grid.triangle_coords()
        bvals = np.where(i == j, 0.0, eval_U(s, t, prof))
        self.u_B = bvals[~self.unk]
        self.mass = grid.node_mass_square.ravel()[self.sq_unk]
        self.b = self.L_IB @ self.u_B

    def assemble(self, u_I: np.ndarray) -> np.ndarray:
        v = np.empty(self.grid.size)
        v[self.unk] = u_I
        v[~self.unk] = self.u_B
        return v

    def residual(self, u_I: np.ndarray) -> np.ndarray:
        return self.L_II @ u_I + self.b + self.n.f(u_I)

    def jacobian(self, u_I: np.ndarray) -> sp.csc_matrix:
        return (self.L_II + sp.diags(self.n.fp(u_I))).tocsc()


def _solve_linear(prob: _Problem, J, rhs, cfg: SolverConfig):
    if cfg.linear_solver == "direct":
        try:
            x = spla.spsolve(J, rhs)
        except RuntimeError as exc:
            raise LinearSolveBreakdown(f"sparse LU failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise LinearSolveBreakdown("singular Jacobian")
        return x
    # symmetric form D^(1/2) J D^(-1/2), D = node masses
    r = np.sqrt(prob.mass)
    A = sp.diags(r) @ J @ sp.diags(1.0 / r)
    A = 0.5 * (A + A.T)
    pre = sp.diags(1.0 / np.abs(A.diagonal()))
    y, info = spla.minres(A, r * rhs, M=pre, rtol=cfg.linear_tol, maxiter=20 * A.shape[0])
    if info != 0:
        raise LinearSolveBreakdown(f"MINRES did not converge (info={info})")
    return y / r


def _field(prob, u_I) -> ScalarField:
    return ScalarField(prob.grid, prob.assemble(u_I))


def _check_trivial(prob, u_I, res, its):
    if np.max(u_I) < TRIVIAL_SUP:
        raise CollapsedToTrivial("solution collapsed to the trivial state u = 0", res, its)


# ---------------------------------------------------------------------------
# public operations


def initialize(grid: QuadrantGrid, prof: Profile1D, kind: str = "from-U", *,
               values=None, seed: int | None = None, eps: float | None = None) -> ScalarField:
    """Starting field on the triangle.

    ``from-U``: U clipped to [0, 1 - 1e-9].
    ``from-zero-plus-bump``: eps * psi with psi the positive principal Dirichlet
    eigenvector of -Delta_st on the interior (max 1), eps small enough that the
    bump is a discrete subsolution.
    ``random``: seeded uniform values in (0, 1) inside, U on the outer edge.
    ``custom``: ``values`` on the triangle (diagonal forced to zero).
    """
    s, t = grid.triangle_coords()
    i, j = grid.tri
    if kind == "from-U":
        v = np.clip(eval_U(s, t, prof), 0.0, 1.0 - 1e-9)
        v[i == j] = 0.0
        return ScalarField(grid, v)
    n = prof.nonlinearity
    prob = _Problem(grid, n, prof)
    if kind == "from-zero-plus-bump":
        lam, psi = _principal_dirichlet(prob)
        fp0 = float(n.fp(np.array(0.0)))
        if lam >= fp0:
            raise CollapsedToTrivial(
                f"domain too small: principal eigenvalue {lam:.4g} >= f'(0) = {fp0:.4g}")
        if eps is None:
            # largest eps with f(eps)/eps >= (lam + f'(0))/2; f(v)/v decreases on (0,1)
            target = 0.5 * (lam + fp0)
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if n.f(np.array(mid)) / mid >= target:
                    lo = mid
                else:
                    hi = mid
            eps = 0.5 * lo
        v = np.zeros(grid.size)
        v[prob.unk] = eps * psi
        return ScalarField(grid, v)
    if kind == "random":
        rng = np.random.default_rng(seed)
        v = prob.assemble(rng.uniform(0.0, 1.0, prob.unk.sum()))
        return ScalarField(grid, v)
    if kind == "custom":
        v = np.array(values, dtype=float)
        v[i == j] = 0.0
        return ScalarField(grid, v)
    raise ValueError(f"unknown initial kind {kind!r}")


def _principal_dirichlet(prob: _Problem):
    """Smallest eigenpair of -L_II (odd class); eigenvector positive, max 1."""
    r = np.sqrt(prob.mass)
    A = -(sp.diags(r) @ prob.L_II @ sp.diags(1.0 / r))
    A = 0.5 * (A + A.T)
    vals, vecs = spla.eigsh(A.tocsc(), k=1, sigma=0.0, which="LM")
    psi = vecs[:, 0] / r
    psi *= np.sign(psi[np.argmax(np.abs(psi))])
    psi = np.maximum(psi, 0.0)
    return float(vals[0]), psi / np.max(psi)


def energy(field: ScalarField, n: BistableNonlinearity, region="all") -> float:
    """Energy of the odd extension over the square, weight s^(m-1) t^(m-1).

    Gradient terms use edge differences weighted by r^(m-1) at edge midpoints,
    the potential term uses cell masses; this is the quadrature whose gradient
    is exactly the discrete residual.  ``region`` is ``"all"`` or
    ``("annulus", R1, R2)`` selecting nodes/edge midpoints by radius.
    """
    g = field.grid
    F = extend(field)
    h = g.h
    w = g.edge_weight
    q = g.quad_mass
    S_, T_ = g.meshgrid()
    es = 0.5 * w[:, None] * q[None, :] * (F[1:, :] - F[:-1, :]) ** 2
    et = 0.5 * q[:, None] * w[None, :] * (F[:, 1:] - F[:, :-1]) ** 2
    pot = h * h * g.quad_mass_square * n.G(F)
    if region == "all":
        return float(es.sum() + et.sum() + pot.sum())
    kind, R1, R2 = region
    if kind != "annulus":
        raise ValueError(f"unknown region {region!r}")
    r_nodes = np.hypot(S_, T_)
    rs = np.hypot(0.5 * (S_[1:, :] + S_[:-1, :]), T_[1:, :])
    rt = np.hypot(S_[:, 1:], 0.5 * (T_[:, 1:] + T_[:, :-1]))

    def sel(r):
        return (r >= R1) & (r <= R2)

    return float(es[sel(rs)].sum() + et[sel(rt)].sum() + pot[sel(r_nodes)].sum())


def energy_directional_derivative(field: ScalarField, n: BistableNonlinearity,
                                  direction: np.ndarray) -> float:
    """Exact derivative of :func:`energy` along a triangle perturbation that
    vanishes on the diagonal and the outer edge: -2 h^2 sum mu r delta."""
    g = field.grid
    F = extend(field)
    R = laplacian_sq(F, g) + n.f(F)
    M = g.node_mass_square
    i, j = g.tri
    mask = g.interior_mask
    return float(-2.0 * g.h**2 * np.sum((M[i, j] * R[i, j] * direction)[mask]))


def newton_solve(init: ScalarField, cfg: SolverConfig, grid: QuadrantGrid | None,
                 n: BistableNonlinearity, prof: Profile1D | None = None, *,
                 start: str = "custom", seed: int | None = None,
                 _report: IterationReport | None = None, _t0: float | None = None) -> SaddleSolution:
    """Damped Newton on the discrete residual with halving line search."""
    grid = grid or init.grid
    prof = prof or build_profile(n)
    prob = _Problem(grid, n, prof)
    t0 = time.perf_counter() if _t0 is None else _t0
    report = _report or IterationReport()
    u = init.values[prob.unk].copy()
    res = prob.residual(u)
    rn = float(np.max(np.abs(res)))
    history = [rn]
    k = 0
    while rn > cfg.tol:
        if k >= cfg.max_iters:
            raise Diverged(f"Newton did not converge in {k} steps", rn, k)
        delta = _solve_linear(prob, prob.jacobian(u), -res, cfg)
        alpha = cfg.damping
        while True:
            trial = u + alpha * delta
            tres = prob.residual(trial)
            tn = float(np.max(np.abs(tres)))
            if tn < rn or alpha < 1e-4:
                break
            alpha *= 0.5
        step = trial - u
        u, res, rn = trial, tres, tn
        k += 1
        history.append(rn)
        report.record("newton", rn, energy(_field(prob, u), n), step)
        log.debug("newton %d residual %.3e alpha %.3g", k, rn, alpha)
        if k >= 5 and rn > (1 - 1e-3) * history[-6]:
            raise Stagnated(f"Newton stagnated at residual {rn:.3e}", rn, k)
    _check_trivial(prob, u, rn, k)
    return SaddleSolution(_field(prob, u), n, cfg, len(report.residual), rn,
                          time.perf_counter() - t0, report, start, seed)


def monotone_iterate(init: ScalarField, cfg: SolverConfig, grid: QuadrantGrid | None,
                     n: BistableNonlinearity, prof: Profile1D | None = None, *,
                     stop_at: float | None = None, start: str = "custom",
                     seed: int | None = None) -> SaddleSolution:
    """Linearly implicit sub/supersolution sweep (Delta - K) u_new = -f(u) - K u."""
    grid = grid or init.grid
    prof = prof or build_profile(n)
    prob = _Problem(grid, n, prof)
    t0 = time.perf_counter()
    K = n.monotone_constant()
    lu = spla.splu((prob.L_II - K * sp.identity(prob.L_II.shape[0])).tocsc())
    report = IterationReport()
    u = init.values[prob.unk].copy()
    target = cfg.tol if stop_at is None else stop_at
    rn = float(np.max(np.abs(prob.residual(u))))
    k = 0
    while rn > target:
        if k >= cfg.max_monotone_iters:
            raise Diverged(f"monotone iteration did not converge in {k} steps", rn, k)
        new = lu.solve(-n.f(u) - K * u - prob.b)
        step = new - u
        u = new
        k += 1
        rn = float(np.max(np.abs(prob.residual(u))))
        report.record("monotone", rn, energy(_field(prob, u), n), step)
        if not np.isfinite(rn):
            raise Diverged("monotone iteration produced non-finite values", rn, k)
    if stop_at is None:
        _check_trivial(prob, u, rn, k)
    return SaddleSolution(_field(prob, u), n, cfg, k, rn, time.perf_counter() - t0, report,
                          start, seed)


def solve(grid: QuadrantGrid, n: BistableNonlinearity, cfg: SolverConfig | None = None,
          prof: Profile1D | None = None, start: str = "from-U", seed: int | None = None,
          init: ScalarField | None = None) -> SaddleSolution:
    """Initialize and run the configured mode."""
    cfg = cfg or SolverConfig()
    prof = prof or build_profile(n)
    if init is None:
        init = initialize(grid, prof, start, seed=seed)
    if cfg.mode == "newton":
        return newton_solve(init, cfg, grid, n, prof, start=start, seed=seed)
    if cfg.mode == "monotone":
        return monotone_iterate(init, cfg, grid, n, prof, start=start, seed=seed)
    t0 = time.perf_counter()
    pre = monotone_iterate(init, cfg, grid, n, prof, stop_at=max(cfg.hybrid_switch, cfg.tol),
                           start=start, seed=seed)
    return newton_solve(pre.field, cfg, grid, n, prof, start=start, seed=seed,
                        _report=pre.report, _t0=t0)
