"""Stable analytic functions and c-free stable pairs.

An analytic ``phi: C+ -> C- u R`` is stable when for every ``a > 0`` there
are ``b > 0`` and real ``c`` with

    phi(z) + phi(a z) / a = phi(b z) / b + c.

Up to the parameters below, the stable functions are (principal branches):

    constant     a + i b                    a real, b <= 0
    power_high   a + b z^(1 - alpha)        alpha in (1, 2], b != 0, arg b in [(alpha - 2) pi, 0]
    power_low    a + b z^(1 - alpha)        alpha in (0, 1), b != 0, arg b in [-pi, (alpha - 1) pi]
    log          a + b log z                Im a <= 0, b < 0

A c-free infinitely divisible pair ``(mu, nu)`` is stable exactly when its
``Phi`` and ``F_nu^{-1}(z) - z`` are both stable, so stable pairs are built
from two catalogue members.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .convolution import CFreePair
from .errors import NumericalError, PreconditionError
from .infdiv import solve_inverse_shift
from .measure import (DEFAULT_GRID_N, AffineMap, Measure, invert_transform, levy_distance, moment,
                      point_mass, push_affine)
from .transforms import TruncatedCone, make_context, phi_transform

FAMILIES = ("constant", "power_high", "power_low", "log")
STABILITY_TOL = 1e-10
N_PROBES = 50
# arguments may sit on an interval endpoint up to rounding
ARG_SLACK = 1e-12


@dataclass(frozen=True)
class StableFunction:
    family: str
    a: complex = 0.0
    b: complex = 0.0
    alpha: float | None = None

    def __post_init__(self):
        a, b, al = complex(self.a), complex(self.b), self.alpha
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if self.family not in FAMILIES:
            raise PreconditionError(f"unknown stable family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "constant":
            if a.imag != 0 or b.imag != 0 or b.real > 0:
                raise PreconditionError("constant family needs real a and real b <= 0")
        elif self.family == "log":
            if a.imag > 0 or b.imag != 0 or not b.real < 0:
                raise PreconditionError("log family needs Im a <= 0 and real b < 0")
        else:
            if al is None:
                raise PreconditionError("power families need alpha")
            if a.imag != 0:
                raise PreconditionError("power families need real a")
            if b == 0:
                raise PreconditionError("power families need b != 0")
            arg = cmath.phase(b)
            if self.family == "power_high":
                if not 1 < al <= 2:
                    raise PreconditionError("power_high needs alpha in (1, 2]")
                lo, hi = (al - 2) * math.pi, 0.0
            else:
                if not 0 < al < 1:
                    raise PreconditionError("power_low needs alpha in (0, 1)")
                lo, hi = -math.pi, (al - 1) * math.pi
                if abs(arg - math.pi) <= ARG_SLACK:
                    arg = -math.pi
            if not lo - ARG_SLACK <= arg <= hi + ARG_SLACK:
                raise PreconditionError(f"arg b = {arg:.6g} outside [{lo:.6g}, {hi:.6g}]")
        z = probe_points()
        if np.max(eval_stable(self, z).imag) > 1e-12:
            raise PreconditionError("parameters do not map C+ into the closed lower half-plane")

    def __call__(self, z):
        return eval_stable(self, z)

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        if self.family == "constant":
            return np.zeros_like(z)
        if self.family == "log":
            return self.b / z
        return self.b * (1 - self.alpha) * z ** (-self.alpha)

    def to_dict(self) -> dict:
        return {"family": self.family, "a": [self.a.real, self.a.imag],
                "b": [self.b.real, self.b.imag], "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "StableFunction":
        def cx(v):
            return complex(*v) if isinstance(v, (list, tuple)) else complex(v)
        return cls(d["family"], cx(d.get("a", 0.0)), cx(d.get("b", 0.0)), d.get("alpha"))


def probe_points(n: int = N_PROBES) -> np.ndarray:
    return TruncatedCone(1.0, 0.5).probes(n, depth=10.0)


def eval_stable(f: StableFunction, z):
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise PreconditionError("stable functions are evaluated for Im z > 0 only")
    if f.family == "constant":
        out = np.full(z.shape, f.a + 1j * f.b.real)
    elif f.family == "log":
        out = f.a + f.b * np.log(z)
    else:
        out = f.a + f.b * z ** (1 - f.alpha)
    return complex(out) if scalar else out


@dataclass(frozen=True)
class StabilityResult:
    b: float
    c: float
    residual: float
    tol: float = STABILITY_TOL

    @property
    def stable(self) -> bool:
        return self.residual <= self.tol


def _closed_form(f: StableFunction, a: float) -> tuple[float, float]:
    if f.family == "constant":
        if f.b.real == 0:
            return 1.0, f.a.real / a
        return a / (a + 1), 0.0
    if f.family == "log":
        b = a / (a + 1)
        c = f.b.real * (math.log(a) / a - math.log(b) / b)
        return b, c
    al = f.alpha
    b = (1 + a ** -al) ** (-1 / al)
    return b, f.a.real * (1 + 1 / a - 1 / b)


def _residual(phi, a, b, c, z):
    return float(np.max(np.abs(phi(z) + phi(a * z) / a - phi(b * z) / b - c)))


def _best_c(phi, a, b, z):
    return float(np.mean((phi(z) + phi(a * z) / a - phi(b * z) / b).real))


def _numeric_fit(phi, a, z):
    def cost(logb):
        b = math.exp(logb)
        return _residual(phi, a, b, _best_c(phi, a, b, z), z)

    grid = np.linspace(-6, 6, 121)
    costs = [cost(v) for v in grid]
    k = int(np.argmin(costs))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    b = math.exp(res.x)
    return b, _best_c(phi, a, b, z)


def check_stability(f, a_test: float, tol: float = STABILITY_TOL, strict: bool = False) -> StabilityResult:
    """Solve ``phi(z) + phi(a z)/a = phi(b z)/b + c`` for ``(b, c)``.

    Catalogue members are solved in closed form; any other callable gets a
    numeric search over ``b`` with ``c`` fitted by least squares.  The
    residual is the largest error over 50 probe points.
    """
    if not a_test > 0:
        raise PreconditionError("a_test must be positive")
    z = probe_points()
    if isinstance(f, StableFunction):
        b, c = _closed_form(f, a_test)
        phi = f
    else:
        phi = f
        b, c = _numeric_fit(phi, a_test, z)
    out = StabilityResult(b, c, _residual(phi, a_test, b, c, z), tol)
    if strict and not out.stable:
        raise NumericalError(f"no (b, c) reaches residual {tol:g} (best {out.residual:.3g})")
    return out


# ----------------------------------------------------------- stable pairs

def _law_from_F(F: Callable, guess, grid_n: int) -> Measure:
    return invert_transform(lambda z: 1.0 / F(np.asarray(z, dtype=complex)), guess, grid_n)


def _scale_of(f: StableFunction) -> float:
    return 1.0 + abs(f.a) + abs(f.b)


def make_stable_pair(phi: StableFunction, psi: StableFunction, grid_n: int = DEFAULT_GRID_N) -> CFreePair:
    """``nu`` with ``F_nu^{-1}(z) = z + psi(z)`` and ``mu`` with
    ``F_mu(z) = z - phi(F_nu(z))``."""
    if psi.family == "constant" and psi.b.real == 0:
        d = psi.a.real
        nu = point_mass(d)

        def F_nu(z):
            return z - d
    else:
        y_top = 10.0 * _scale_of(psi)

        def F_nu(z):
            return solve_inverse_shift(lambda w: (psi(w), psi.derivative(w)), z, y_top)
        r = 4.0 * _scale_of(psi)
        nu = _law_from_F(F_nu, (psi.a.real - r, psi.a.real + r), grid_n)
    if phi.family == "constant" and phi.b.real == 0:
        return CFreePair(point_mass(phi.a.real), nu)

    def F_mu(z):
        return z - phi(F_nu(z))

    lo, hi = nu.window(1e-9)
    r = 4.0 * _scale_of(phi) + (hi - lo)
    c = phi.a.real + 0.5 * (lo + hi)
    return CFreePair(_law_from_F(F_mu, (c - r, c + r), grid_n), nu)


# ------------------------------------------------------------ equivalence

def push_pair(pair: CFreePair, amap: AffineMap) -> CFreePair:
    return CFreePair(push_affine(pair.mu, amap), push_affine(pair.nu, amap))


def phi_covariance_error(pair: CFreePair, amap: AffineMap, n: int = 20) -> float:
    """Largest gap between ``Phi`` of the pushed pair and
    ``(Phi(a z) - b) / a`` on a cone where both sides are defined."""
    a, b = amap.a, amap.b
    pushed = push_pair(pair, amap)
    ctx1 = make_context(pair.nu)
    ctx2 = make_context(pushed.nu)
    beta = max(ctx2.cone.beta, ctx1.cone.beta / a)
    z = TruncatedCone(min(ctx1.cone.alpha, ctx2.cone.alpha), beta).probes(n)
    lhs = phi_transform(pushed.mu, ctx2, z)
    rhs = (phi_transform(pair.mu, ctx1, a * z) - b) / a
    return float(np.max(np.abs(lhs - rhs)))


def fit_equivalence(p1: CFreePair, p2: CFreePair) -> tuple[AffineMap, float]:
    """``AffineMap`` carrying ``p1`` closest to ``p2`` (matching the mean and
    spread of ``nu``) and the larger Lévy distance of the two components."""
    m1, m2 = moment(p1.nu, 1), moment(p2.nu, 1)
    s1 = math.sqrt(max(moment(p1.nu, 2) - m1 * m1, 0.0))
    s2 = math.sqrt(max(moment(p2.nu, 2) - m2 * m2, 0.0))
    if s1 == 0 or s2 == 0:
        a = 1.0
    else:
        a = s1 / s2
    amap = AffineMap(a, m1 - a * m2)
    q = push_pair(p1, amap)
    return amap, max(levy_distance(q.mu, p2.mu), levy_distance(q.nu, p2.nu))
