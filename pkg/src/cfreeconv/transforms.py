"""Cauchy, reciprocal Cauchy and E transforms, cones, and inverses of F.

All evaluation functions accept scalars or arrays of points in the open upper
half-plane and return arrays of the same shape (Python complex for scalar
input).  The density part of a measure is integrated in closed form cell by
cell, so there is no quadrature error beyond floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PreconditionError
from .measure import Measure

DEFAULT_ALPHA = 1.0
NEWTON_TOL = 1e-12
MAX_ITER = 60
CONE_PROBES = 64
BETA_LADDER = tuple(2.0 ** k for k in range(11))


class DomainError(PreconditionError):
    """A point lies outside the domain of the requested transform."""


def _as_points(z):
    z = np.asarray(z, dtype=complex)
    if np.any(~np.isfinite(z)):
        raise DomainError("non-finite evaluation point")
    if np.any(z.imag <= 0):
        raise DomainError("transforms are defined for Im z > 0 only")
    return z


def _out(v, scalar):
    return complex(v) if scalar else v


def cauchy_G(m: Measure, z, derivative: bool = False):
    """``G(z) = int dm(t) / (z - t)``, optionally with ``G'(z)``."""
    scalar = np.ndim(z) == 0
    z = _as_points(z)
    if derivative:
        g, dg = m.cauchy(z, derivative=True)
        return _out(g, scalar), _out(dg, scalar)
    return _out(m.cauchy(z), scalar)


def f_transform(m: Measure, z, derivative: bool = False):
    """``F = 1 / G`` and optionally ``F' = -G' / G**2``."""
    scalar = np.ndim(z) == 0
    z = _as_points(z)
    g, dg = m.cauchy(z, derivative=True)
    f = 1.0 / g
    if derivative:
        return _out(f, scalar), _out(-dg * f * f, scalar)
    return _out(f, scalar)


def e_transform(m: Measure, z, derivative: bool = False):
    """``E(z) = z - F(z)``."""
    scalar = np.ndim(z) == 0
    z = _as_points(z)
    f, df = f_transform(m, z, derivative=True)
    e = z - f
    if derivative:
        return _out(e, scalar), _out(1.0 - df, scalar)
    return _out(e, scalar)


@dataclass(frozen=True)
class TruncatedCone:
    """``{x + iy : |x| < alpha*y, y > beta}``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise PreconditionError("cone needs alpha > 0 and beta > 0")

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        return (np.abs(z.real) < self.alpha * z.imag) & (z.imag > self.beta)

    def probes(self, n: int = CONE_PROBES, depth: float = 8.0) -> np.ndarray:
        """Deterministic points spread over the part of the cone below
        ``depth * beta``: a log-spaced ladder in y times a spread in x."""
        ny = int(np.ceil(np.sqrt(n)))
        nx = int(np.ceil(n / ny))
        y = self.beta * np.geomspace(1.05, depth, ny)
        s = np.linspace(-0.95, 0.95, nx)
        pts = (s[None, :] * self.alpha * y[:, None] + 1j * y[:, None]).ravel()
        return pts[:n]

    def sample(self, rng: np.random.Generator, n: int, depth: float = 8.0) -> np.ndarray:
        y = self.beta * np.exp(rng.uniform(np.log(1.01), np.log(depth), n))
        x = rng.uniform(-0.99, 0.99, n) * self.alpha * y
        return x + 1j * y


@dataclass(frozen=True, eq=False)
class TransformContext:
    """A measure together with a cone on which ``F^{-1}`` is known to work."""

    measure: Measure
    cone: TruncatedCone
    newton_tol: float = NEWTON_TOL
    max_iter: int = MAX_ITER

    def __post_init__(self):
        if not 0 < self.newton_tol <= 1e-6:
            raise PreconditionError("newton_tol must lie in (0, 1e-6]")


def _newton_F(m: Measure, w: np.ndarray, z0: np.ndarray, tol: float, max_iter: int):
    """Solve ``F(z) = w`` from ``z0``; returns ``(z, converged)``."""
    z = z0.copy()
    ok = np.zeros(w.shape, dtype=bool)
    scale = tol * (1.0 + np.abs(w))
    active = np.ones(w.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if not idx.size:
            break
        za = z[idx]
        g, dg = m.cauchy(za, derivative=True)
        f = 1.0 / g
        r = f - w[idx]
        done = np.abs(r) <= scale[idx]
        ok[idx[done]] = True
        step = r / (-dg * f * f)
        znew = za - step
        # keep the iterate in the upper half-plane
        bad = znew.imag <= 0
        while np.any(bad & ~done):
            step = np.where(bad, step / 2, step)
            znew = za - step
            bad = znew.imag <= 0
        z[idx[~done]] = znew[~done]
        active[idx[done]] = False
    if np.any(active):
        g = m.cauchy(z[active])
        ok[active] = np.abs(1.0 / g - w[active]) <= scale[active]
    return z, ok


def _solve_F(m: Measure, w: np.ndarray, tol: float, max_iter: int):
    z, ok = _newton_F(m, w, w.copy(), tol, max_iter)
    if np.all(ok):
        return z, ok
    # continuation along w + i t, t from large to 0, for the stalled points
    idx = np.flatnonzero(~ok)
    wb = w[idx]
    lift = 8.0 * (1.0 + np.abs(wb))
    zb = wb + 1j * lift
    good = np.ones(idx.size, dtype=bool)
    for frac in list(np.geomspace(1.0, 1e-4, 13)) + [0.0]:
        target = wb + 1j * lift * frac
        zb, okb = _newton_F(m, target, zb, tol, max_iter)
        good &= okb
    z[idx] = zb
    ok[idx] = good
    return z, ok


def invert_F(ctx: TransformContext, w):
    """The point ``z`` in C+ with ``F(z) = w``, on the branch ``z ~ w``."""
    scalar = np.ndim(w) == 0
    w = _as_points(w)
    if not np.all(ctx.cone.contains(w)):
        raise DomainError(f"point outside the cone {ctx.cone}")
    wf = w.ravel()
    z, ok = _solve_F(ctx.measure, wf, ctx.newton_tol, ctx.max_iter)
    if not np.all(ok):
        raise NumericalError(f"F inversion failed at {int((~ok).sum())} of {ok.size} points")
    return _out(z.reshape(w.shape), scalar)


def validate_cone(m: Measure, alpha: float = DEFAULT_ALPHA, newton_tol: float = NEWTON_TOL,
                  max_iter: int = MAX_ITER) -> TruncatedCone:
    """Smallest ``beta`` in 1, 2, 4, ..., 1024 for which Newton inverts ``F``
    at every probe of the cone and the result maps back to the probe's branch."""
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    for beta in BETA_LADDER:
        cone = TruncatedCone(alpha, beta)
        w = cone.probes()
        z, ok = _newton_F(m, w, w.copy(), newton_tol, max_iter)
        if not np.all(ok):
            continue
        # F^{-1}(w) = w (1 + o(1)): reject solutions far from their start
        if np.all(np.abs(z - w) < 0.5 * np.abs(w)) and np.all(z.imag > 0):
            return cone
    raise NumericalError("no beta up to 1024 admits a stable inverse of F")


def make_context(m: Measure, alpha: float = DEFAULT_ALPHA, newton_tol: float = NEWTON_TOL,
                 max_iter: int = MAX_ITER) -> TransformContext:
    return TransformContext(m, validate_cone(m, alpha, newton_tol, max_iter), newton_tol, max_iter)


def phi_transform(mu: Measure, nu_ctx: TransformContext, z):
    """``E_mu(F_nu^{-1}(z))`` on the cone of ``nu_ctx``."""
    return e_transform(mu, invert_F(nu_ctx, z))


def moments_from_transform(G, order: int, radius: float, n: int = 96) -> np.ndarray:
    """``m_0 .. m_order`` read off the Laurent series ``G(z) = sum m_k z**-(k+1)``.

    ``radius`` must exceed the support radius.  Only the upper half of the
    circle is sampled; conjugate symmetry of ``G`` supplies the lower half.
    """
    theta = np.pi * (np.arange(n) + 0.5) / n
    z = radius * np.exp(1j * theta)
    g = np.asarray(G(z))
    k = np.arange(order + 1)
    # m_k = (1/2 pi i) \oint z^k G dz  on |z| = radius
    vals = (np.exp(1j * (k[:, None] + 1) * theta[None, :]) * g[None, :]).real
    return radius ** (k + 1) * vals.mean(axis=1)
