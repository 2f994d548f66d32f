import functools

import numpy as np
import pytest

from saddlelab.grid import DEFAULT_H, DEFAULT_S, make_grid
from saddlelab.linearized import LinearizedOperator, cutoff_family, eta, min_eigenvalue
from saddlelab.nonlinearity import allen_cahn
from saddlelab.profile1d import build_profile
from saddlelab.solver import SolverConfig, solve

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def solution(dim, S=DEFAULT_S, h=DEFAULT_H):
    """Newton solution from U, cached across the session."""
    ac = allen_cahn()
    return solve(make_grid(S, h, dim), ac, SolverConfig(), _profile())


@functools.lru_cache(maxsize=None)
def _profile():
    return build_profile(allen_cahn())


@pytest.fixture(scope="session")
def ac():
    return allen_cahn()


@pytest.fixture(scope="session")
def prof():
    return _profile()


@pytest.fixture(scope="session")
def sol2():
    return solution(2)


@pytest.fixture(scope="session")
def sol14():
    return solution(14)


@pytest.fixture
def record():
    """Collect one summary line per acceptance criterion."""
    def _record(criterion, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def fine_solution(dim, S=DEFAULT_S, h=DEFAULT_H):
    """The same problem at spacing h/2, as used by the certificate slack."""
    return solution(dim, solution(dim, S, h).grid.S, h / 2)


@functools.lru_cache(maxsize=None)
def spectrum(dim, method="shift-invert"):
    return min_eigenvalue(LinearizedOperator.at(solution(dim)), method=method)


def taper(g, width=1.0):
    """Outer-edge taper, exactly zero on s = S and t = S."""
    e = eta(g.S - g.r, width)
    return np.outer(e, e)


def random_xi(g, rng, away_from_axes=True):
    """A few random Gaussian bumps, vanishing on the outer edges (and near the axes if asked)."""
    S_, T_ = g.meshgrid()
    xi = np.zeros_like(S_)
    for _ in range(rng.integers(1, 4)):
        c = rng.uniform(0.5, g.S - 2.0, size=2)
        w = rng.uniform(0.5, 2.0)
        xi += rng.standard_normal() * np.exp(-((S_ - c[0]) ** 2 + (T_ - c[1]) ** 2) / w**2)
    if away_from_axes:
        xi *= cutoff_family(g, 0.4)
    return xi * taper(g)
