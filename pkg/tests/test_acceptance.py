"""One test per acceptance criterion at the default grid (S = 12 sqrt 2 rounded to 17, h = 0.1).

Each test records a PASS/FAIL summary line before asserting, so the
terminal summary lists every criterion even when one of them fails.
"""

import json
import time

import numpy as np

from conftest import fine_solution, random_xi, solution, spectrum
from saddlelab.cli import main
from saddlelab.geometry import DimensionParams, b_inequality, b_range
from saddlelab.grid import DEFAULT_H, DEFAULT_S, ScalarField, make_grid, odd_reflect
from saddlelab.linearized import (LinearizedOperator, apply_Lu, certify_supersolution, inner,
                                  quadratic_form)
from saddlelab.nonlinearity import allen_cahn
from saddlelab.profile1d import build_profile, eval_u0, eval_u0_prime
from saddlelab.solver import SolverConfig, energy, energy_directional_derivative, initialize, solve
from saddlelab.verify import check_asymptotics, check_narrow_barrier, check_signs, check_uniqueness

DIMS = (2, 4, 6, 8, 10, 12, 14)


def test_criterion_01_profile_exactness(record):
    t0 = time.perf_counter()
    n = allen_cahn()
    prof = build_profile(n, mode="tabulated")
    tau = np.linspace(-5.0, 5.0, 2001)
    u, up = eval_u0(prof, tau), eval_u0_prime(prof, tau)
    err = float(np.max(np.abs(u - np.tanh(tau / np.sqrt(2)))))
    first = float(np.max(np.abs(0.5 * up**2 - n.G(u))))
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-8 and first <= 1e-8 and elapsed < 1.0
    record(1, ok, f"profile error {err:.1e}, first integral {first:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_solver_convergence(record):
    worst = []
    ok = True
    for dim in DIMS:
        sol = solution(dim)
        g = sol.grid
        s, t = g.triangle_coords()
        v = sol.field.values
        inside = g.interior_mask & (s > t)
        good = (sol.residual <= 1e-8 and np.all(v[s == t] == 0.0)
                and np.all((v[inside] > 0) & (v[inside] < 1)) and sol.wall_time <= 120)
        ok &= bool(good)
        worst.append(f"{dim}:{sol.residual:.0e}/{sol.wall_time:.1f}s")
    record(2, ok, "S=%g h=%g residual/time per 2m: %s" % (solution(2).grid.S, DEFAULT_H,
                                                           " ".join(worst)))
    assert ok


def test_criterion_03_uniqueness(record, prof):
    t0 = time.perf_counter()
    ac = allen_cahn()
    diffs = {}
    ok = True
    for dim in (2, 14):
        rep = check_uniqueness(make_grid(DEFAULT_S, DEFAULT_H, dim), ac, prof=prof, seed=1)
        diffs[dim] = rep.worst_value
        ok &= rep.passed and rep.worst_value <= 1e-7 and not rep.details["collapsed"]
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 600
    record(3, ok, "max pairwise sup difference " +
           ", ".join(f"2m={d}: {v:.1e}" for d, v in diffs.items()) + f", {elapsed:.0f}s")
    assert ok


def test_criterion_04_signs(record, prof):
    ok, slow, worst = True, 0.0, []
    for dim in DIMS + (16,):
        t0 = time.perf_counter()
        rep = check_signs(solution(dim), prof)
        slow = max(slow, time.perf_counter() - t0)
        ok &= rep.passed
        worst.append(f"{dim}:{rep.worst_value:+.1e}")
    ok &= slow < 10
    record(4, ok, f"worst sign value (allowance {rep.allowance:.1e}) " + " ".join(worst))
    assert ok


def test_criterion_05_asymptotics(record, prof):
    ok, parts = True, []
    for dim in (2, 14):
        t0 = time.perf_counter()
        rep = check_asymptotics(solution(dim), prof)
        ok &= rep.passed and time.perf_counter() - t0 < 10
        a, b = rep.details["a"], rep.details["b"]
        parts.append(f"2m={dim} a: {a[-3]:.1e}>{a[-2]:.1e}>{a[-1]:.1e} "
                     f"b: {b[-3]:.1e}>{b[-2]:.1e}>{b[-1]:.1e}")
    record(5, ok, "; ".join(parts))
    assert ok


def test_criterion_06_instability(record, tmp_path):
    t0 = time.perf_counter()
    path = tmp_path / "sol2.json"
    solution(2).save(path)
    xi_path = tmp_path / "xi2.json"
    assert main(["spectrum", "--sol", str(path), "--xi-out", str(xi_path)]) == 0
    archived = json.loads(xi_path.read_text())
    est = spectrum(2)
    ok = est.lambda_min < 0 and -est.lambda_min > est.residual and archived["Q"] < 0
    parts = [f"2m=2 lambda_min {est.lambda_min:.4f} (residual {est.residual:.0e}), "
             f"archived Q(xi) {archived['Q']:.3g}"]
    for dim in (4, 6):
        e = spectrum(dim)
        seen = e.lambda_min < -e.residual
        ok &= seen
        parts.append(f"2m={dim} " + (f"lambda_min {e.lambda_min:.4f}" if seen else
                                     f"not detected at this truncation ({e.lambda_min:.4f})"))
    ok &= time.perf_counter() - t0 <= 300 * 3
    record(6, ok, "; ".join(parts))
    assert ok


def test_criterion_07_stability_certificate(record):
    t0 = time.perf_counter()
    sol, fine = solution(14), fine_solution(14)
    op = LinearizedOperator.at(sol)
    ok, parts = True, []
    for b in (2.0, 2.5, 3.0):
        cert = certify_supersolution(sol, b, fine=fine)
        ok &= cert.passed and cert.min_phi > 0 and cert.b_admissible
        parts.append(f"b={b}: min phi {cert.min_phi:.1e}, excess {cert.worst_excess:+.1e}")
    rng = np.random.default_rng(14)
    worst = np.inf
    for _ in range(50):
        xi = random_xi(op.grid, rng)
        worst = min(worst, quadratic_form(op, xi) / inner(op, xi, xi))
    ok &= worst >= -1e-8
    ok &= time.perf_counter() - t0 <= 180
    record(7, ok, "; ".join(parts) + f"; min Q/|xi|^2 over 50 xi {worst:.3f}")
    assert ok


def test_criterion_08_b_range(record):
    t0 = time.perf_counter()
    lo, hi = b_range(DimensionParams(7))
    d7 = DimensionParams(7)
    ok = abs(lo - 2) <= 1e-12 and abs(hi - 3) <= 1e-12
    ok &= all(b_range(DimensionParams(m)) is None for m in range(1, 7))
    for m in range(7, 40):
        d = DimensionParams(m)
        for b in b_range(d):
            ok &= abs(b_inequality(b, d)) <= 1e-12 * max(1.0, m)
    elapsed = time.perf_counter() - t0
    record(8, ok, f"b_range(7) = [{lo}, {hi}], empty for m <= 6, roots checked to m = 39 "
                  f"(b_inequality at 2: {b_inequality(2.0, d7):.0e}), {elapsed * 1e3:.2f} ms")
    assert ok


def test_criterion_09_barrier(record):
    t0 = time.perf_counter()
    rep = check_narrow_barrier(0.1, 1.0)
    margin = rep.details["margin"]
    ok = rep.passed and margin >= 1.9 and time.perf_counter() - t0 < 1
    record(9, ok, f"margin {margin:.4f}, phi in [{rep.details['phi_min']:.4f}, "
                  f"{rep.details['phi_max']:.4f}]")
    assert ok


def test_criterion_10_numerical_hygiene(record, ac, prof):
    t0 = time.perf_counter()
    sq = [odd_reflect(solve(make_grid(8.0, h, 2), ac, SolverConfig(), prof).field)
          for h in (0.2, 0.1, 0.05)]
    ratio = (np.max(np.abs(sq[0] - sq[1][::2, ::2]))
             / np.max(np.abs(sq[1][::2, ::2] - sq[2][::4, ::4])))

    g = solution(2).grid
    u = initialize(g, prof, "from-U")
    rng = np.random.default_rng(10)
    grad_err = 0.0
    for _ in range(20):
        delta = rng.standard_normal(g.size) * g.interior_mask
        eps = 1e-6
        fd = (energy(ScalarField(g, u.values + eps * delta), ac)
              - energy(ScalarField(g, u.values - eps * delta), ac)) / (2 * eps)
        grad_err = max(grad_err, abs(energy_directional_derivative(u, ac, delta) - fd) / abs(fd))

    op = LinearizedOperator.at(solution(2))
    ibp = 0.0
    for _ in range(20):
        xi = random_xi(g, rng, away_from_axes=False)
        q = quadratic_form(op, xi)
        ibp = max(ibp, abs(q - inner(op, xi, -apply_Lu(op, xi))) / inner(op, xi, xi))
    elapsed = time.perf_counter() - t0
    ok = 3.5 <= ratio <= 4.5 and grad_err <= 1e-5 and ibp <= 1e-8 and elapsed <= 300
    record(10, ok, f"convergence ratio {ratio:.3f}, energy gradient rel err {grad_err:.1e}, "
                   f"Q identity rel err {ibp:.1e}")
    assert ok
