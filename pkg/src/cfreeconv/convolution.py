"""Classical, boolean, free and c-free additive convolutions.

Free and c-free convolutions go through subordination.  For summands
``nu_j`` repeated ``n_j`` times (``K = sum n_j``) the subordination
functions ``w_j`` satisfy, at every z in C+::

    F_1(w_1) = F_2(w_2) = ... = F          (common value, F of the sum)
    sum_j n_j w_j = z + (K - 1) F

With two single summands this is the pair ``w_1 + w_2 = z + F`` used in
the usual fixed-point formulation.  The system is solved by Newton's method
with continuation in ``Im z``: start high in C+, where ``w_j ~ z``, and walk
down to the requested points, predicting each step from the tangent
``dw/dz``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._continuation import continuation_solve
from .errors import NumericalError, PreconditionError
from .measure import (DEFAULT_GRID_N, Measure, add_measures, invert_transform, moment)

RESIDUAL_TOL = 1e-10
MAX_FP_ITER = 10_000


@dataclass(frozen=True, eq=False)
class CFreePair:
    """A pair ``(mu, nu)`` of probability measures."""

    mu: Measure
    nu: Measure

    def __post_init__(self):
        self.mu.require_probability("mu")
        self.nu.require_probability("nu")

    def __iter__(self):
        return iter((self.mu, self.nu))


# ------------------------------------------------------------ subordination

def _scale(comps):
    """Rough size of the sum: drift plus spread, used to place the start of
    the continuation path."""
    drift = 0.0
    var = 0.0
    for m, n in comps:
        lo, hi = m.window(1e-9)
        c = 0.5 * (lo + hi)
        drift += n * abs(c)
        var += n * (moment(m, 2) - 2 * c * moment(m, 1) + c * c)
    return drift + math.sqrt(max(var, 0.0)) + 1.0


def _subordination_system(comps, K):
    n = np.array([c for _, c in comps], dtype=float)
    J = len(comps)

    def system(W, z):
        P = W.shape[0]
        f = np.empty_like(W)
        df = np.empty_like(W)
        for j, (m, _) in enumerate(comps):
            g, dg = m.cauchy(W[:, j], derivative=True)
            f[:, j] = 1.0 / g
            df[:, j] = -dg * f[:, j] ** 2
        R = np.empty_like(W)
        R[:, 0] = W @ n - z - (K - 1) * f[:, 0]
        R[:, 1:] = f[:, 1:] - f[:, :1]
        Jac = np.zeros((P, J, J), dtype=complex)
        Jac[:, 0, :] = n
        Jac[:, 0, 0] -= (K - 1) * df[:, 0]
        for j in range(1, J):
            Jac[:, j, 0] = -df[:, 0]
            Jac[:, j, j] = df[:, j]
        return R, Jac, np.abs(f[:, 0])

    return system


def solve_subordination(comps: Sequence[tuple[Measure, int]], z) -> np.ndarray:
    """Subordination functions of ``sum_j n_j * nu_j`` at ``z``.

    ``comps`` lists ``(nu_j, n_j)``; returns an array of shape
    ``z.shape + (len(comps),)``.
    """
    comps = [(m, int(n)) for m, n in comps if n > 0]
    if not comps:
        raise PreconditionError("need at least one summand")
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    if np.any(zf.imag <= 0):
        raise PreconditionError("subordination is defined for Im z > 0 only")
    K = sum(n for _, n in comps)
    J = len(comps)
    if K == 1:
        return zf.reshape(shape + (1,))
    if not zf.size:
        return np.empty(shape + (J,), dtype=complex)
    W = continuation_solve(_subordination_system(comps, K), zf, J, 10.0 * _scale(comps))
    return W.reshape(shape + (J,))


def subordination_residual(comps, W) -> np.ndarray:
    """``max_j |F_j(w_j) - F_1(w_1)|`` at each point."""
    W = np.asarray(W)
    Wf = W.reshape(-1, W.shape[-1])
    f = np.stack([1.0 / m.cauchy(Wf[:, j]) for j, (m, _) in enumerate(comps)], axis=1)
    return np.max(np.abs(f - f[:, :1]), axis=1).reshape(W.shape[:-1])


@dataclass(frozen=True, eq=False)
class SubordinationPair:
    """The subordination functions of ``nu1 ⊞ nu2`` as callables."""

    nu1: Measure
    nu2: Measure
    residual_tol: float = RESIDUAL_TOL

    def __call__(self, z):
        W = solve_subordination([(self.nu1, 1), (self.nu2, 1)], z)
        return W[..., 0], W[..., 1]

    def omega1(self, z):
        return self(z)[0]

    def omega2(self, z):
        return self(z)[1]

    def residual(self, z):
        w1, w2 = self(z)
        return np.abs(1.0 / self.nu1.cauchy(w1) - 1.0 / self.nu2.cauchy(w2))


def free_subordination(n1: Measure, n2: Measure, z):
    """``(w1(z), w2(z))`` with ``F_{n1}(w1) = F_{n2}(w2) = F_{n1 ⊞ n2}(z)``.

    Raises :class:`NumericalError` if the residual exceeds its tolerance.
    """
    pair = SubordinationPair(n1, n2)
    w1, w2 = pair(z)
    res = np.abs(1.0 / n1.cauchy(w1) - 1.0 / n2.cauchy(w2))
    if np.any(res > pair.residual_tol * (1 + np.abs(1.0 / n1.cauchy(w1)))):
        raise NumericalError(f"subordination residual {res.max():.3g} above tolerance")
    return w1, w2


def fixed_point_subordination(n1: Measure, n2: Measure, z, tol: float = 1e-12,
                              max_iter: int = MAX_FP_ITER):
    """Plain iteration ``w <- z + h2(z + h1(w))`` with ``h = F - id``.

    Slow near the real axis; kept as an independent check of the Newton
    solver.  Averages successive iterates when they start to oscillate.
    """
    z = np.asarray(z, dtype=complex)
    w = z.copy()
    prev_step = None
    damp = np.zeros(z.shape, dtype=bool)
    for _ in range(max_iter):
        w2 = z + 1.0 / n1.cauchy(w) - w
        new = z + 1.0 / n2.cauchy(w2) - w2
        step = new - w
        if prev_step is not None:
            damp |= np.abs(step) > np.abs(prev_step)
        new = np.where(damp, 0.5 * (new + w), new)
        if np.all(np.abs(new - w) <= tol * (1 + np.abs(z))):
            w = new
            return w, z + 1.0 / n1.cauchy(w) - w
        prev_step, w = step, new
    raise NumericalError("fixed-point subordination did not converge")


# -------------------------------------------------------------- windows

def _hull(ms_counts, shift=0.0):
    lo = hi = shift
    for m, n in ms_counts:
        a, b = m.window(1e-9)
        lo += n * a
        hi += n * b
    return lo, hi


def _pad(lo, hi, frac=0.1):
    w = max(hi - lo, 1e-3)
    return lo - frac * w, hi + frac * w


def _invert(G: Callable, guess, grid_n):
    return invert_transform(G, guess, grid_n)


# ---------------------------------------------------------- convolutions

def classical_conv(m1: Measure, m2: Measure) -> Measure:
    """``m1 * m2`` computed directly on atoms and grids."""
    m1.require_probability("first measure")
    m2.require_probability("second measure")
    return _classical(m1, m2)


def _classical(m1: Measure, m2: Measure) -> Measure:
    atoms = [(a + b, p * q) for a, p in m1.atoms for b, q in m2.atoms]
    parts = []
    for src, other in ((m1, m2), (m2, m1)):
        if src.values is None:
            continue
        for a, p in other.atoms:
            parts.append(Measure.create(density=(src.grid_start + a, src.grid_step, p * src.values)))
    if m1.values is not None and m2.values is not None:
        h = min(m1.grid_step, m2.grid_step)
        f1 = _regrid(m1, h)
        f2 = _regrid(m2, h)
        vals = np.convolve(f1[1], f2[1]) * h
        parts.append(Measure.create(density=(f1[0] + f2[0], h, np.clip(vals, 0.0, None))))
    if not parts:
        return Measure.create(atoms)
    dens = add_measures(*parts)
    return Measure.create(atoms, (dens.grid_start, dens.grid_step, dens.values))


def _regrid(m: Measure, h: float):
    n = int(math.ceil((m.grid_end - m.grid_start) / h - 1e-9)) + 1
    return m.grid_start, m.density_at(m.grid_start + h * np.arange(n))


def classical_power(m: Measure, k: int) -> Measure:
    """``m`` convolved with itself ``k`` times (``k >= 1``) by squaring."""
    if k < 1:
        raise PreconditionError("power must be at least 1")
    result = None
    base = m
    while k:
        if k & 1:
            result = base if result is None else _classical(result, base)
        k >>= 1
        if k:
            base = _classical(base, base)
    return result


def shift_measure(m: Measure, c: float) -> Measure:
    dens = None
    if m.values is not None:
        dens = (m.grid_start + c, m.grid_step, m.values)
    return Measure.create(zip(m.atom_loc + c, m.atom_mass), dens)


def boolean_E(comps, shift=0.0):
    """``E(z) = shift + sum_j n_j E_j(z)`` as a callable."""

    def E(z):
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, shift, dtype=complex)
        for m, n in comps:
            out += n * (z - 1.0 / m.cauchy(z))
        return out

    return E


def boolean_fold(comps: Sequence[tuple[Measure, int]], shift: float = 0.0,
                 grid_n: int = DEFAULT_GRID_N) -> Measure:
    """Boolean convolution of ``n_j`` copies of each ``m_j`` and ``delta_shift``."""
    for m, _ in comps:
        m.require_probability()
    E = boolean_E(comps, shift)
    if _all_atomic_single(comps, shift):
        return _atom_sum(comps, shift)

    def G(z):
        return 1.0 / (z - E(z))

    lo, hi = _hull(comps, shift)
    return _invert(G, _pad(lo, hi, 0.5), grid_n)


def _all_atomic_single(comps, shift):
    return all(m.values is None and len(m.atom_loc) == 1 for m, _ in comps)


def _atom_sum(comps, shift):
    c = shift + sum(n * float(m.atom_loc[0]) for m, n in comps)
    return Measure.atomic([c], [1.0])


def boolean_conv(m1: Measure, m2: Measure, grid_n: int = DEFAULT_GRID_N) -> Measure:
    """``m1 ⊎ m2`` from ``E = E1 + E2`` and Stieltjes inversion."""
    return boolean_fold([(m1, 1), (m2, 1)], grid_n=grid_n)


def free_G(comps, shift=0.0):
    """Cauchy transform of ``delta_shift ⊞ (⊞_j nu_j^{⊞ n_j})`` as a callable."""

    def G(z):
        z = np.asarray(z, dtype=complex)
        W = solve_subordination(comps, z - shift)
        return comps[0][0].cauchy(W[..., 0])

    return G


def free_fold(comps: Sequence[tuple[Measure, int]], shift: float = 0.0,
              grid_n: int = DEFAULT_GRID_N) -> Measure:
    """Free convolution of ``n_j`` copies of each ``nu_j`` and ``delta_shift``."""
    for m, _ in comps:
        m.require_probability()
    comps = [(m, n) for m, n in comps if n > 0]
    if _all_atomic_single(comps, shift):
        return _atom_sum(comps, shift)
    comps = _absorb_points(comps)
    if not comps[1]:
        return Measure.atomic([shift + comps[0]], [1.0])
    c0, comps = comps
    shift += c0
    if sum(n for _, n in comps) == 1:
        return shift_measure(comps[0][0], shift)
    lo, hi = _hull(comps, shift)
    return _invert(free_G(comps, shift), _pad(lo, hi), grid_n)


def _absorb_points(comps):
    """Point masses only shift a free convolution; pull them out."""
    c = 0.0
    rest = []
    for m, n in comps:
        if m.values is None and len(m.atom_loc) == 1:
            c += n * float(m.atom_loc[0])
        else:
            rest.append((m, n))
    return c, rest


def free_conv(n1: Measure, n2: Measure, grid_n: int = DEFAULT_GRID_N) -> Measure:
    """``n1 ⊞ n2`` through subordination on the inversion ladder."""
    return free_fold([(n1, 1), (n2, 1)], grid_n=grid_n)


def cfree_E(pairs: Sequence[tuple[Measure, Measure, int]], shift: float = 0.0,
            shift_nu: float = 0.0):
    """``E_mu`` of the c-free convolution of ``n_j`` copies of each
    ``(mu_j, nu_j)`` and ``(delta_shift, delta_shift_nu)``, as a callable."""
    comps = [(nu, n) for _, nu, n in pairs]

    def E(z):
        z = np.asarray(z, dtype=complex)
        W = solve_subordination(comps, z - shift_nu)
        out = np.full(z.shape, shift, dtype=complex)
        for j, (mu, _, n) in enumerate(pairs):
            w = W[..., j]
            out += n * (w - 1.0 / mu.cauchy(w))
        return out

    return E


def cfree_fold(pairs: Sequence[tuple[Measure, Measure, int]], shift: float = 0.0,
               shift_nu: float = 0.0, grid_n: int = DEFAULT_GRID_N) -> CFreePair:
    """c-free convolution of ``n_j`` copies of each pair ``(mu_j, nu_j)`` and
    the pair ``(delta_shift, delta_shift_nu)``."""
    pairs = [(mu, nu, int(n)) for mu, nu, n in pairs if n > 0]
    for mu, nu, _ in pairs:
        mu.require_probability("mu")
        nu.require_probability("nu")
    nu = free_fold([(nu, n) for _, nu, n in pairs], shift_nu, grid_n)
    if all(mu.values is None and len(mu.atom_loc) == 1 for mu, _, _ in pairs):
        # E of a point mass is constant, whatever the subordination does
        return CFreePair(_atom_sum([(mu, n) for mu, _, n in pairs], shift), nu)
    E = cfree_E(pairs, shift, shift_nu)

    def G(z):
        return 1.0 / (z - E(z))

    lo, hi = _hull([(m, n) for mu, nu_, n in pairs for m in (mu, nu_)], shift + shift_nu)
    mu = _invert(G, _pad(lo, hi, 0.5), grid_n)
    return CFreePair(mu, nu)


def cfree_conv(p1: CFreePair, p2: CFreePair, grid_n: int = DEFAULT_GRID_N) -> CFreePair:
    """``p1 ⊞c p2``: second components convolve freely and
    ``F_mu(z) = z - E_{mu1}(w1(z)) - E_{mu2}(w2(z))``."""
    return cfree_fold([(p1.mu, p1.nu, 1), (p2.mu, p2.nu, 1)], grid_n=grid_n)
