"""Bistable nonlinearities f and their potentials G (G' = -f, G(1) = 0)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BistableNonlinearity:
    """Odd reaction term with f(0) = f(1) = 0 and f'' < 0 on (0, 1).

    ``coeffs`` is set for odd polynomials (coefficients of u, u^3, u^5, ...);
    closures leave it ``None`` and must pass :func:`validate` before use.
    """

    name: str
    f: ArrayFn
    fp: ArrayFn
    fpp: ArrayFn
    G: ArrayFn
    coeffs: tuple[float, ...] | None = None
    validated: bool = field(default=False, compare=False)

    def monotone_constant(self, samples: int = 2001) -> float:
        """Smallest K >= 0 making u -> f(u) + K u nondecreasing on [0, 1]."""
        u = np.linspace(0.0, 1.0, samples)
        return float(max(0.0, -np.min(self.fp(u))))

    @property
    def decay_rate(self) -> float:
        """sqrt(-f'(1)): exponential rate at which u0 approaches +-1."""
        return float(np.sqrt(-self.fp(np.array(1.0))))


def allen_cahn() -> BistableNonlinearity:
    return BistableNonlinearity(
        name="allen-cahn",
        f=lambda u: u - u**3,
        fp=lambda u: 1.0 - 3.0 * u**2,
        fpp=lambda u: -6.0 * u,
        G=lambda u: 0.25 * (1.0 - u**2) ** 2,
        coeffs=(1.0, -1.0),
        validated=True,
    )


def sine() -> BistableNonlinearity:
    """f(u) = sin(pi u); bistable on [-1, 1] with G(u) = (1 + cos(pi u)) / pi."""
    return BistableNonlinearity(
        name="sine",
        f=lambda u: np.sin(np.pi * u),
        fp=lambda u: np.pi * np.cos(np.pi * u),
        fpp=lambda u: -np.pi**2 * np.sin(np.pi * u),
        G=lambda u: (1.0 + np.cos(np.pi * u)) / np.pi,
    )


def odd_polynomial(coeffs: Sequence[float], name: str | None = None) -> BistableNonlinearity:
    """f(u) = sum_k coeffs[k] * u^(2k+1), with G integrated exactly."""
    coeffs = tuple(float(c) for c in coeffs)
    if not coeffs:
        raise ValueError("empty coefficient list")
    full = np.zeros(2 * len(coeffs))
    full[1::2] = coeffs
    d1 = P.polyder(full)
    d2 = P.polyder(full, 2)
    anti = P.polyint(full)
    # G(u) = F(1) - F(u) with F' = f
    g_poly = -anti
    g_poly[0] += P.polyval(1.0, anti)
    nl = BistableNonlinearity(
        name=name or "poly:" + ",".join(repr(c) for c in coeffs),
        f=lambda u: P.polyval(u, full),
        fp=lambda u: P.polyval(u, d1),
        fpp=lambda u: P.polyval(u, d2),
        G=lambda u: P.polyval(u, g_poly),
        coeffs=coeffs,
    )
    report = validate(nl)
    if not report.passed:
        raise ValueError(f"polynomial {coeffs} is not bistable: {report.message}")
    return nl


def from_callables(name: str, f: ArrayFn, fp: ArrayFn, fpp: ArrayFn,
                   G: ArrayFn | None = None) -> BistableNonlinearity:
    """Wrap user closures; G defaults to the quadrature of f from u to 1."""
    if G is None:
        def G(u):
            u = np.asarray(u, dtype=float)
            out = np.array([integrate.quad(f, x, 1.0, epsabs=1e-13, epsrel=1e-13)[0]
                            for x in u.ravel()])
            return out.reshape(u.shape)
    return BistableNonlinearity(name=name, f=f, fp=fp, fpp=fpp, G=G)


@dataclass
class ValidationReport:
    passed: bool
    message: str = ""
    first_violation: float | None = None


def validate(n: BistableNonlinearity, samples: int = 101) -> ValidationReport:
    """Check oddness, f(0) = f(1) = 0, concavity on (0,1) and the G normalization."""
    if samples < 3:
        raise ValueError("samples must be >= 3")
    u = np.linspace(-1.0, 1.0, samples)
    vals = {k: np.asarray(getattr(n, k)(u), dtype=float) for k in ("f", "fp", "fpp", "G")}
    for k, v in vals.items():
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite evaluation of {k}")
    f = vals["f"]
    tol = 1e-12 * max(1.0, float(np.max(np.abs(f))))

    def fail(msg, where):
        return ValidationReport(False, msg, float(where))

    for e in (0.0, 1.0, -1.0):
        val = float(n.f(np.array(e)))
        if abs(val) > tol:
            return fail(f"f({e:g}) = {val:.3e} != 0", e)
    odd = np.abs(f + f[::-1])
    if np.max(odd) > tol:
        return fail("f is not odd", u[np.argmax(odd)])
    inner = (u > 0.0) & (u < 1.0)
    bad = inner & ~(vals["fpp"] < 0.0)
    if np.any(bad):
        return fail("f'' >= 0 inside (0,1)", u[bad][0])
    if float(n.fp(np.array(0.0))) <= 0.0:
        return fail("degenerate f'(0) <= 0", 0.0)
    G = vals["G"]
    gtol = 1e-12 * max(1.0, float(np.max(np.abs(G))))
    if abs(float(n.G(np.array(1.0)))) > gtol or abs(float(n.G(np.array(-1.0)))) > gtol:
        return fail("G(+-1) != 0", 1.0)
    if np.any(G < -gtol):
        return fail("G < 0", u[np.argmin(G)])
    object.__setattr__(n, "validated", True)
    return ValidationReport(True, "ok")


_REGISTRY = {"allen-cahn": allen_cahn, "sine": sine}


def by_name(name: str, coeffs: Sequence[float] | None = None) -> BistableNonlinearity:
    """Resolve a CLI/config name; ``poly`` requires ``coeffs``."""
    if name == "poly" or name.startswith("poly:"):
        if coeffs is None:
            coeffs = [float(c) for c in name.split(":", 1)[1].split(",")]
        return odd_polynomial(coeffs)
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; known: {sorted(_REGISTRY)} or poly") from None
