"""The increasing heteroclinic u0 of -u0'' = f(u0) with u0(0) = 0.

Tabulated mode integrates tau(u) = int_0^u dv / sqrt(2 G(v)) step by step in
tau (Newton for the endpoint of each increment) and switches to the linearized
exponential tail once |u0| passes ``1 - TAIL_GAP``.  The logarithmic part
1/(kappa (1 - v)) of the integrand is integrated exactly and only the bounded
remainder goes through Gauss-Legendre, so increments stay accurate as u0 -> 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .nonlinearity import BistableNonlinearity

TAIL_GAP = 1e-6
ONE_MINUS = np.nextafter(1.0, 0.0)  # eval_u0 stays inside (-1, 1)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class Profile1D:
    nonlinearity: BistableNonlinearity
    mode: str  # "closed-form" | "tabulated"
    T_max: float
    tau: np.ndarray | None = None
    u0: np.ndarray | None = None
    u0_prime: np.ndarray | None = None
    _spline: CubicHermiteSpline | None = None

    def to_csv(self, path: str | Path, step: float = 0.01) -> None:
        """Write ``tau,u0,u0_prime``; closed-form profiles are sampled on [-T_max, T_max]."""
        if self.tau is not None:
            tau = self.tau
        else:
            tau = np.linspace(-self.T_max, self.T_max, int(round(2 * self.T_max / step)) + 1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "u0", "u0_prime"])
            for a, b, c in zip(tau, eval_u0(self, tau), eval_u0_prime(self, tau)):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(c))])


def _increment(G, kappa, u_a, u_b):
    """int_{u_a}^{u_b} dv / sqrt(2 G(v)): exact log part plus 12-point Gauss-Legendre."""
    half = 0.5 * (u_b - u_a)
    v = u_a + half * (_GL_X + 1.0)
    rest = 1.0 / np.sqrt(2.0 * G(v)) - 1.0 / (kappa * (1.0 - v))
    return np.log1p((u_b - u_a) / (1.0 - u_b)) / kappa + half * np.sum(_GL_W * rest)


def _tabulate(n: BistableNonlinearity, T_max: float, step: float):
    G = n.G
    kappa = n.decay_rate
    nsteps = int(np.ceil(T_max / step - 1e-9))
    tau = step * np.arange(nsteps + 1)
    u = np.zeros(nsteps + 1)
    probe = np.linspace(1e-6, 1.0 - 1e-6, 2001)
    if np.any(G(probe) <= 0.0):
        raise ValueError("G vanishes inside (0,1); no heteroclinic connection")
    k = 0
    while k < nsteps and u[k] < 1.0 - TAIL_GAP:
        ua = u[k]
        # Newton on int_{ua}^{x} dv/sqrt(2G) = step, derivative sqrt(2G(x))^-1
        x = min(ua + step * np.sqrt(2.0 * G(ua)), 0.5 * (ua + 1.0))
        for _ in range(50):
            r = _increment(G, kappa, ua, x) - step
            dx = r * np.sqrt(2.0 * G(x))
            x_new = x - dx
            if x_new <= ua or x_new >= 1.0:
                x_new = 0.5 * (x + (ua if x_new <= ua else 1.0))
            if abs(x_new - x) < 1e-16:
                x = x_new
                break
            x = x_new
        u[k + 1] = x
        k += 1
    up = np.sqrt(2.0 * np.maximum(G(u), 0.0))
    if k < nsteps:
        # linearized tail 1 - u0 ~ (1 - u*) exp(-kappa (tau - tau*))
        gap = (1.0 - u[k]) * np.exp(-kappa * (tau[k + 1:] - tau[k]))
        u[k + 1:] = 1.0 - gap
        up[k + 1:] = kappa * gap
    tau_full = np.concatenate([-tau[:0:-1], tau])
    u_full = np.concatenate([-u[:0:-1], u])
    up_full = np.concatenate([up[:0:-1], up])
    return tau_full, u_full, up_full


def build_profile(n: BistableNonlinearity, T_max: float = 12.0, step: float = 0.01,
                  mode: str | None = None) -> Profile1D:
    """Closed form for Allen-Cahn unless ``mode="tabulated"`` is forced."""
    if T_max < 5.0:
        raise ValueError("T_max must be >= 5")
    if not 0.0 < step <= 0.01:
        raise ValueError("step must lie in (0, 0.01]")
    if mode is None:
        mode = "closed-form" if n.name == "allen-cahn" else "tabulated"
    if mode == "closed-form":
        if n.name != "allen-cahn":
            raise ValueError("closed form only known for allen-cahn")
        return Profile1D(n, "closed-form", float(T_max))
    if mode != "tabulated":
        raise ValueError(f"unknown mode {mode!r}")
    tau, u, up = _tabulate(n, T_max, step)
    spline = CubicHermiteSpline(tau, u, up)
    return Profile1D(n, "tabulated", float(tau[-1]), tau, u, up, spline)


def _tail(p: Profile1D, tau: np.ndarray):
    kappa = p.nonlinearity.decay_rate
    gap = 1.0 - p.u0[-1]
    return gap * np.exp(-kappa * (np.abs(tau) - p.T_max))


def eval_u0(p: Profile1D, tau):
    tau = np.asarray(tau, dtype=float)
    if p.mode == "closed-form":
        return np.clip(np.tanh(tau / np.sqrt(2.0)), -ONE_MINUS, ONE_MINUS)
    out = np.empty_like(tau)
    inside = np.abs(tau) <= p.T_max
    out[inside] = p._spline(tau[inside])
    far = ~inside
    out[far] = np.sign(tau[far]) * (1.0 - _tail(p, tau[far]))
    return np.clip(out, -ONE_MINUS, ONE_MINUS)


def eval_u0_prime(p: Profile1D, tau):
    tau = np.asarray(tau, dtype=float)
    if p.mode == "closed-form":
        return 1.0 / (np.sqrt(2.0) * np.cosh(tau / np.sqrt(2.0)) ** 2)
    out = np.empty_like(tau)
    inside = np.abs(tau) <= p.T_max
    out[inside] = p._spline(tau[inside], 1)
    far = ~inside
    out[far] = p.nonlinearity.decay_rate * _tail(p, tau[far])
    return out


def eval_u0_second(p: Profile1D, tau):
    """u0'' = -f(u0)."""
    return -p.nonlinearity.f(eval_u0(p, tau))
