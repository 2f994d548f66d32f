import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saddlelab.nonlinearity import allen_cahn, by_name, sine
from saddlelab.profile1d import build_profile, eval_u0, eval_u0_prime, eval_u0_second


@pytest.fixture(scope="module")
def tab():
    return build_profile(allen_cahn(), mode="tabulated")


def test_closed_form_is_tanh():
    p = build_profile(allen_cahn())
    tau = np.linspace(-8, 8, 101)
    assert p.mode == "closed-form"
    assert np.array_equal(eval_u0(p, tau), np.tanh(tau / np.sqrt(2)))
    assert eval_u0_prime(p, 0.0) == pytest.approx(1 / np.sqrt(2))
    assert eval_u0(p, np.sqrt(2) * np.arctanh(0.9)) == pytest.approx(0.9)


def test_tabulated_matches_tanh(tab):
    tau = np.linspace(-5, 5, 2001)
    assert np.max(np.abs(eval_u0(tab, tau) - np.tanh(tau / np.sqrt(2)))) <= 1e-8


def test_tabulated_first_integral(tab):
    n = tab.nonlinearity
    assert np.max(np.abs(0.5 * tab.u0_prime**2 - n.G(tab.u0))) <= 1e-8
    up = eval_u0_prime(tab, 0.7)
    assert up == pytest.approx(np.sqrt(2 * n.G(eval_u0(tab, 0.7))), abs=1e-8)


def test_table_shape(tab):
    assert eval_u0(tab, 0.0) == 0.0
    assert np.all(tab.u0_prime > 0)
    assert np.all(np.abs(tab.u0) < 1)
    assert np.allclose(tab.u0, -tab.u0[::-1], atol=0)


@pytest.mark.parametrize("name", ["allen-cahn", "sine", "poly:2,-1,-1"])
def test_ode_residual_on_table(name):
    p = build_profile(by_name(name), mode="tabulated")
    step = p.tau[1] - p.tau[0]
    u = p.u0
    # five-point central second difference, O(step^4)
    acc = (-u[4:] + 16 * u[3:-1] - 30 * u[2:-2] + 16 * u[1:-3] - u[:-4]) / (12 * step**2)
    assert np.max(np.abs(-acc - p.nonlinearity.f(u[2:-2]))) <= 1e-6


def test_sine_profile_first_integral():
    p = build_profile(sine())
    assert p.mode == "tabulated"
    tau = np.linspace(-p.T_max, p.T_max, 301)
    u, up = eval_u0(p, tau), eval_u0_prime(p, tau)
    assert np.all(up > 0)
    assert np.max(np.abs(0.5 * up**2 - p.nonlinearity.G(u))) <= 1e-8


def test_second_derivative_is_minus_f():
    p = build_profile(allen_cahn())
    tau = np.linspace(-3, 3, 11)
    step = 1e-4
    fd = (eval_u0(p, tau + step) - 2 * eval_u0(p, tau) + eval_u0(p, tau - step)) / step**2
    assert np.allclose(eval_u0_second(p, tau), fd, atol=1e-6)


def test_tail_monotone_to_one(tab):
    tau = np.linspace(10, 40, 50)
    v = eval_u0(tab, tau)
    assert np.all(np.diff(v) >= 0) and np.all(v < 1) and v[-1] > 1 - 1e-15
    assert eval_u0(build_profile(allen_cahn()), 50.0) < 1
    assert np.all(eval_u0_prime(tab, tau) > 0)
    assert np.all(build_profile(sine()).u0_prime > 0)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        build_profile(allen_cahn(), T_max=4)
    with pytest.raises(ValueError):
        build_profile(allen_cahn(), step=0.05)
    with pytest.raises(ValueError):
        build_profile(sine(), mode="closed-form")


def test_csv_export(tmp_path, tab):
    path = tmp_path / "u0.csv"
    tab.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,u0,u0_prime"
    assert len(lines) == len(tab.tau) + 1


def test_build_is_fast():
    t0 = time.perf_counter()
    build_profile(allen_cahn(), mode="tabulated")
    assert time.perf_counter() - t0 < 1.0


@settings(max_examples=50, deadline=None)
@given(tau=st.floats(0.0, 30.0), dt=st.floats(1e-3, 5.0))
def test_tabulated_odd_and_increasing(tab, tau, dt):
    assert eval_u0(tab, -tau) == pytest.approx(-eval_u0(tab, tau), abs=1e-15)
    assert eval_u0(tab, tau + dt) >= eval_u0(tab, tau)
    assert -1 < eval_u0(tab, tau) < 1
