"""Infinitely divisible laws from Lévy-Hinčin pairs ``(gamma, sigma)``.

One pair ``(gamma, sigma)`` with ``sigma`` a finite positive measure feeds
three constructions:

* boolean:    ``E(z) = gamma + int (1 + tz) / (z - t) dsigma(t)``
* free:       ``F^{-1}(z) = z + E(z)`` with the same function ``E``
* classical:  ``log phi(u) = i gamma u + int (e^{iut} - 1 - iut / (1 + t^2)) (1 + t^2) / t^2 dsigma(t)``

A c-free limit law pairs a boolean generator with a free one through
``F_mu(z) = z - E_first(F_nu(z))``.  This module also builds the
corresponding semigroups and tests pairs for infinite divisibility by
fitting the Nevanlinna form above to sampled transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from ._continuation import continuation_solve
from .convolution import CFreePair, classical_conv
from .errors import NumericalError, PreconditionError
from .measure import (DEFAULT_GRID_N, Measure, add_measures, extrapolate_to_zero,
                      invert_transform, levy_distance, moment, point_mass)
from .transforms import make_context, phi_transform, invert_F

FIT_NODES = 41
FIT_ACCEPT = 1e-4


@dataclass(frozen=True, eq=False)
class LevyHincinParams:
    """Drift ``gamma`` and finite positive measure ``sigma``."""

    gamma: float
    sigma: Measure

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise PreconditionError("gamma must be finite")

    @classmethod
    def zero(cls) -> "LevyHincinParams":
        return cls(0.0, Measure.zero())

    @classmethod
    def atomic(cls, gamma: float, locs=(), masses=()) -> "LevyHincinParams":
        return cls(float(gamma), Measure.atomic(locs, masses) if len(np.atleast_1d(locs)) else Measure.zero())

    def scaled(self, t: float) -> "LevyHincinParams":
        return LevyHincinParams(t * self.gamma, self.sigma.scaled(t))

    def __add__(self, other: "LevyHincinParams") -> "LevyHincinParams":
        return LevyHincinParams(self.gamma + other.gamma, add_measures(self.sigma, other.sigma))

    @property
    def is_zero_measure(self) -> bool:
        return self.sigma.total_mass == 0

    @cached_property
    def _split(self):
        # t dsigma split into its positive and negative parts
        pos = self.sigma.reweighted(lambda t: np.clip(t, 0.0, None))
        neg = self.sigma.reweighted(lambda t: np.clip(-t, 0.0, None))
        return pos, neg

    def size(self) -> float:
        """Rough spread of the associated laws (used to size windows)."""
        if self.is_zero_measure:
            return 0.0
        lo, hi = self.sigma.support()
        second = moment(self.sigma, 0) + moment(self.sigma, 2)
        return math.sqrt(second) + max(abs(lo), abs(hi))


@dataclass(frozen=True, eq=False)
class CFreeGeneratorPair:
    """``first`` drives the boolean side, ``second`` the free side."""

    first: LevyHincinParams
    second: LevyHincinParams


def nevanlinna_E(p: LevyHincinParams, z, derivative: bool = False):
    """``gamma + int (1 + tz) / (z - t) dsigma(t)``.

    Written as ``gamma + G_sigma(z) + z (G_{t+ sigma}(z) - G_{t- sigma}(z))``
    to avoid the cancellation in ``(1 + z^2) G_sigma(z) - z sigma(R)``.
    """
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise PreconditionError("E is evaluated for Im z > 0 only")
    if p.is_zero_measure:
        e = np.full(z.shape, p.gamma, dtype=complex)
        de = np.zeros(z.shape, dtype=complex)
    else:
        pos, neg = p._split
        g, dg = p.sigma.cauchy(z, derivative=True)
        gp, dgp = pos.cauchy(z, derivative=True)
        gn, dgn = neg.cauchy(z, derivative=True)
        e = p.gamma + g + z * (gp - gn)
        de = dg + (gp - gn) + z * (dgp - dgn)
    if scalar:
        e, de = complex(e), complex(de)
    return (e, de) if derivative else e


def solve_inverse_shift(E, z, y_top: float):
    """Roots ``w`` in C+ of ``w + E(w) = z``, with ``E(w) -> (E, E')``.

    Used for ``F = (z + E)^{-1}``; follows the branch ``w ~ z`` down from
    ``Im z = y_top``.
    """
    z = np.asarray(z, dtype=complex)

    def system(W, zz):
        e, de = E(W[:, 0])
        R = (W[:, 0] + e - zz)[:, None]
        Jac = (1.0 + de)[:, None, None]
        return R, Jac, np.abs(W[:, 0])

    W = continuation_solve(system, z.ravel(), 1, y_top)
    return W[:, 0].reshape(z.shape)


def free_F(p: LevyHincinParams, z):
    """``F`` of the free law of ``p``: the root ``w`` of ``w + E(w) = z``."""
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    if p.is_zero_measure:
        out = z - p.gamma
    else:
        out = solve_inverse_shift(lambda w: nevanlinna_E(p, w, derivative=True), z,
                                  10.0 * (1.0 + abs(p.gamma) + p.size()))
    return complex(out) if scalar else out


def _guess(params: Sequence[LevyHincinParams]):
    c = sum(p.gamma for p in params)
    r = 4.0 * sum(p.size() for p in params) + 1.0
    return c - r, c + r


def boolean_id_law(p: LevyHincinParams, grid_n: int = DEFAULT_GRID_N) -> Measure:
    """The law with ``E = nevanlinna_E(p)``."""
    if p.is_zero_measure:
        return point_mass(p.gamma)

    def G(z):
        return 1.0 / (z - nevanlinna_E(p, z))

    return invert_transform(G, _guess([p]), grid_n)


def free_id_law(p: LevyHincinParams, grid_n: int = DEFAULT_GRID_N) -> Measure:
    """The law with ``F^{-1}(z) = z + nevanlinna_E(p)(z)``."""
    if p.is_zero_measure:
        return point_mass(p.gamma)

    def G(z):
        return 1.0 / free_F(p, z)

    return invert_transform(G, _guess([p]), grid_n)


# ------------------------------------------------------------- classical

def _split_origin(sigma: Measure):
    at0 = np.abs(sigma.atom_loc) <= 1e-12
    s2 = float(sigma.atom_mass[at0].sum())
    dens = None
    if sigma.values is not None:
        dens = (sigma.grid_start, sigma.grid_step, sigma.values)
    rest = Measure.create(zip(sigma.atom_loc[~at0], sigma.atom_mass[~at0]), dens)
    return s2, rest


def _compound_poisson_atoms(locs, rates, drift):
    """``delta_drift * exp(nu - |nu|)`` for an atomic Lévy measure."""
    lam = float(np.sum(rates))
    jump = Measure.atomic(locs, rates / lam)
    kmax = int(stats.poisson.isf(1e-15, lam)) + 2
    term = point_mass(0.0)
    atoms = [(0.0, math.exp(-lam))]
    for k in range(1, kmax + 1):
        term = classical_conv(term, jump)
        w = stats.poisson.pmf(k, lam)
        atoms += [(a, w * m) for a, m in term.atoms if w * m > 1e-17]
    m = Measure.create([(a + drift, w) for a, w in atoms])
    return m.normalized()


def _gauss_mixture(atoms: Measure, std: float, grid_n: int) -> Measure:
    lo = atoms.atom_loc.min() - 9 * std
    hi = atoms.atom_loc.max() + 9 * std
    n = max(grid_n, int((hi - lo) / (std / 40)) + 1) if atoms.atom_loc.size > 1 else grid_n
    n = min(n, 1 << 16)
    x = np.linspace(lo, hi, n)
    vals = np.zeros(n)
    for a, w in atoms.atoms:
        vals += w * np.exp(-0.5 * ((x - a) / std) ** 2)
    vals /= std * math.sqrt(2 * math.pi)
    return Measure.create(density=(lo, x[1] - x[0], vals)).normalized()


def classical_exponent(p: LevyHincinParams, u) -> np.ndarray:
    """``log phi(u)``; the integrand at ``t = 0`` is its limit ``-u^2/2``."""
    u = np.asarray(u, dtype=float)
    out = 1j * p.gamma * u
    s = p.sigma

    def kernel(t):
        t = t[None, :]
        uu = u[..., None] if u.ndim else u
        with np.errstate(divide="ignore", invalid="ignore"):
            k = (np.exp(1j * uu * t) - 1 - 1j * uu * t / (1 + t * t)) * (1 + t * t) / (t * t)
        return np.where(t == 0, -0.5 * uu * uu + 0j, k)

    if s.atom_loc.size:
        out = out + (kernel(s.atom_loc) * s.atom_mass).sum(axis=-1)
    if s.values is not None:
        w = np.full(len(s.values), s.grid_step)
        w[0] = w[-1] = s.grid_step / 2
        out = out + (kernel(s.grid) * (s.values * w)).sum(axis=-1)
    return out


def classical_id_law(p: LevyHincinParams, grid_n: int = DEFAULT_GRID_N) -> Measure:
    """The classical law of ``p``.

    Atomic ``sigma`` gives an exact Gaussian-times-compound-Poisson law; a
    density part goes through the characteristic function and an FFT.
    """
    s2, rest = _split_origin(p.sigma)
    if rest.values is None:
        if rest.atom_loc.size:
            t = rest.atom_loc
            rates = rest.atom_mass * (1 + t * t) / (t * t)
            drift = p.gamma - float(np.sum(rest.atom_mass / t))
            law = _compound_poisson_atoms(t, rates, drift)
        else:
            law = point_mass(p.gamma)
        if s2 > 0:
            return _gauss_mixture(law, math.sqrt(s2), grid_n)
        return law
    return _classical_fft(p, grid_n)


def _classical_fft(p: LevyHincinParams, grid_n: int) -> Measure:
    mean = p.gamma + moment(p.sigma, 1)
    sd = math.sqrt(moment(p.sigma, 0) + moment(p.sigma, 2))
    half = 12 * sd + 1e-3
    n = 1 << 14
    dx = 2 * half / n
    x = mean - half + dx * np.arange(n)
    du = 2 * math.pi / (n * dx)
    u = du * (np.arange(n) - n // 2)
    # f(x_k) = (1/2pi) sum_j phi(u_j) exp(-i u_j x_k) du, with u_j dx k = 2pi jk/n - pi k
    a = np.exp(classical_exponent(p, u) - 1j * u * x[0])
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    f = (np.fft.fft(a) * sign).real * du / (2 * math.pi)
    m = Measure.create(density=(x[0], dx, np.clip(f, 0.0, None)))
    if abs(m.total_mass - 1.0) > 0.02:
        raise NumericalError(f"Fourier inversion lost mass ({m.total_mass:.4f})")
    lo, hi = m.window(1e-12)
    xs = np.linspace(lo, hi, grid_n)
    return Measure.create(density=(lo, xs[1] - xs[0], m.density_at(xs))).normalized()


# --------------------------------------------------------------- c-free

def cfree_E(g: CFreeGeneratorPair, z, t: float = 1.0):
    """``t * E_first(F_{nu_t}(z))`` with ``nu_t`` the free law of ``t * second``."""
    w = free_F(g.second.scaled(t), z)
    return t * nevanlinna_E(g.first, w)


def _cfree_mu(g: CFreeGeneratorPair, t: float, grid_n: int) -> Measure:
    if g.first.is_zero_measure:
        return point_mass(t * g.first.gamma)

    def G(z):
        z = np.asarray(z, dtype=complex)
        return 1.0 / (z - cfree_E(g, z, t))

    return invert_transform(G, _guess([g.first.scaled(t), g.second.scaled(t)]), grid_n)


def cfree_limit_law(g: CFreeGeneratorPair, grid_n: int = DEFAULT_GRID_N) -> CFreePair:
    """``(mu, nu)`` with ``nu`` the free law of ``second`` and
    ``F_mu(z) = z - E_first(F_nu(z))``."""
    nu = free_id_law(g.second, grid_n)
    return CFreePair(_cfree_mu(g, 1.0, grid_n), nu)


def semigroup_at(g: CFreeGeneratorPair, t: float, grid_n: int = DEFAULT_GRID_N) -> CFreePair:
    """``(mu_t, nu_t)`` with ``E_{mu_t}(z) = t * Phi(F_{nu_t}(z))``."""
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    if t == 0:
        return CFreePair(point_mass(0.0), point_mass(0.0))
    nu = free_id_law(g.second.scaled(t), grid_n)
    return CFreePair(_cfree_mu(g, t, grid_n), nu)


# ------------------------------------------------------------ fitting

@dataclass(frozen=True, eq=False)
class NevanlinnaFit:
    gamma: float
    sigma: Measure
    residual: float

    @property
    def params(self) -> LevyHincinParams:
        return LevyHincinParams(self.gamma, self.sigma)


@dataclass(frozen=True, eq=False)
class InfDivReport:
    """Fits of ``Phi_(mu, nu)`` (``mu_fit``) and ``F_nu^{-1} - z`` (``nu_fit``)."""

    mu_fit: NevanlinnaFit
    nu_fit: NevanlinnaFit
    tol: float

    @property
    def gamma(self) -> float:
        return self.mu_fit.gamma

    @property
    def sigma(self) -> Measure:
        return self.mu_fit.sigma

    @property
    def residual(self) -> float:
        return self.mu_fit.residual

    @property
    def nu_certified(self) -> bool:
        return self.nu_fit.residual <= self.tol

    @property
    def accepted(self) -> bool:
        return self.nu_certified and self.mu_fit.residual <= self.tol

    @property
    def generators(self) -> CFreeGeneratorPair:
        return CFreeGeneratorPair(self.mu_fit.params, self.nu_fit.params)


def _nice_step(x: float) -> float:
    e = 10.0 ** math.floor(math.log10(x))
    for k in (1, 2, 2.5, 5, 10):
        if k * e >= x:
            return k * e
    return 10 * e


def fit_nodes(reach: float, n: int = FIT_NODES) -> np.ndarray:
    """``n`` nodes symmetric about 0 with a round step covering ``[-reach, reach]``."""
    half = n // 2
    step = _nice_step(max(reach, 1e-6) / half)
    return step * np.arange(-half, half + 1)


def fit_nevanlinna(z, values, nodes) -> NevanlinnaFit:
    """Nonnegative least squares for ``gamma + sum_k s_k (1 + t_k z)/(z - t_k)``.

    The residual is the largest pointwise error relative to ``max |values|``
    (floored at 1e-9).
    """
    z = np.asarray(z, dtype=complex).ravel()
    v = np.asarray(values, dtype=complex).ravel()
    cols = [np.ones_like(z), -np.ones_like(z)]
    cols += [(1 + t * z) / (z - t) for t in nodes]
    A = np.stack(cols, axis=1)
    Ar = np.concatenate([A.real, A.imag])
    br = np.concatenate([v.real, v.imag])
    norms = np.linalg.norm(Ar, axis=0)
    coef, _ = optimize.nnls(Ar / norms, br, maxiter=50 * Ar.shape[1])
    coef = coef / norms
    fit = A @ coef
    # below this the samples are rounding noise of a zero transform
    scale = max(np.max(np.abs(v)), 1e-9)
    res = float(np.max(np.abs(fit - v)) / scale)
    gamma = float(coef[0] - coef[1])
    s = coef[2:]
    keep = s > 1e-12 * max(s.max(), 1e-300) if s.size else s
    sigma = Measure.atomic(np.asarray(nodes)[keep], s[keep]) if np.any(keep) else Measure.zero()
    return NevanlinnaFit(gamma, sigma, res)


def fit_points(cone, n: int = 48) -> np.ndarray:
    ny = 8
    nx = n // ny
    y = cone.beta * np.geomspace(1.05, 6.0, ny)
    s = np.linspace(-0.9, 0.9, nx)
    return (s[None, :] * cone.alpha * y[:, None] + 1j * y[:, None]).ravel()


def check_infdiv(pair: CFreePair, tol: float = FIT_ACCEPT, nodes=None) -> InfDivReport:
    """Fit ``Phi_(mu, nu)`` and ``F_nu^{-1}(z) - z`` on a cone of ``nu``.

    Accepted when both fits reach ``tol``.  The fit nodes default to 41
    round-stepped points covering both supports.
    """
    ctx = make_context(pair.nu)
    z = fit_points(ctx.cone)
    inv = invert_F(ctx, z)
    phi = phi_transform(pair.mu, ctx, z)
    if nodes is None:
        reach = max(max(abs(v) for v in m.support()) for m in pair)
        nodes = fit_nodes(reach)
    mu_fit = fit_nevanlinna(z, phi, nodes)
    nu_fit = fit_nevanlinna(z, inv - z, nodes)
    return InfDivReport(mu_fit, nu_fit, tol)


# ---------------------------------------------------------- extraction

DEFAULT_T_LADDER = (4e-4, 2e-4, 1e-4)


def _limit_terms(G_at_i: complex, t: float):
    # int x/(1+x^2) dm = -Re G(i),  int x^2/(1+x^2) dm = 1 + Im G(i)
    return -G_at_i.real / t, (1.0 + G_at_i.imag) / t


def _sigma_t(m: Measure, t: float) -> Measure:
    return m.reweighted(lambda x: x * x / (1 + x * x) / t)


def _extrapolated(values, ts):
    return float(extrapolate_to_zero([np.asarray(v) for v in values], ts))


def _limit_measure(sigmas, mass):
    if mass <= 1e-12:
        return Measure.zero()
    last = sigmas[-1]
    if last.total_mass <= 0:
        return Measure.zero()
    return last.normalized().scaled(mass)


def _sigma_drift(sigmas) -> float:
    a, b = sigmas[-2], sigmas[-1]
    if a.total_mass <= 0 or b.total_mass <= 0:
        return 0.0
    return levy_distance(a.normalized(), b.normalized())


def extract_generators(pair: CFreePair, t_ladder: Sequence[float] = DEFAULT_T_LADDER,
                       grid_n: int = DEFAULT_GRID_N, tol: float = 0.1):
    """Recover ``(gamma, sigma)`` and ``(gamma', sigma')`` from the semigroup.

    ``gamma = lim (1/t) int x/(1+x^2) dmu_t`` and ``sigma`` is the weak limit
    of ``(1/t) x^2/(1+x^2) dmu_t``.  The semigroup is built from the Nevanlinna
    form of ``Phi_(mu, nu)`` certified by :func:`check_infdiv`, which is what
    continues ``Phi`` to all of C+.  Scalars are extrapolated to ``t = 0``
    over the ladder; the measure is taken at the smallest ``t`` with the
    extrapolated mass.  Returns ``(CFreeGeneratorPair, residual)`` where the
    residual measures how much the ladder's last two steps still move.
    """
    report = check_infdiv(pair)
    if not report.accepted:
        raise PreconditionError("pair is not certified infinitely divisible "
                                f"(fit residuals {report.residual:.3g}, {report.nu_fit.residual:.3g})")
    g = report.generators
    ts = np.sort(np.asarray(t_ladder, dtype=float))[::-1]
    if len(ts) < 2 or ts[-1] <= 0:
        raise PreconditionError("t_ladder needs at least two positive values")
    mu_terms, nu_terms, mu_sig, nu_sig = [], [], [], []
    for t in ts:
        g_mu = 1.0 / (1j - cfree_E(g, 1j, t))
        g_nu = 1.0 / free_F(g.second.scaled(t), 1j)
        mu_terms.append(_limit_terms(g_mu, t))
        nu_terms.append(_limit_terms(g_nu, t))
        mu_t, nu_t = semigroup_at(g, t, grid_n)
        mu_sig.append(_sigma_t(mu_t, t))
        nu_sig.append(_sigma_t(nu_t, t))
    gamma = _extrapolated([a for a, _ in mu_terms], ts)
    mass = _extrapolated([b for _, b in mu_terms], ts)
    gamma2 = _extrapolated([a for a, _ in nu_terms], ts)
    mass2 = _extrapolated([b for _, b in nu_terms], ts)
    sigma = _limit_measure(mu_sig, mass)
    sigma2 = _limit_measure(nu_sig, mass2)
    residual = max(abs(gamma - mu_terms[-1][0]), abs(gamma2 - nu_terms[-1][0]),
                   _sigma_drift(mu_sig), _sigma_drift(nu_sig))
    if residual > tol:
        raise NumericalError(f"generator extrapolation did not settle (residual {residual:.3g})")
    out = CFreeGeneratorPair(LevyHincinParams(gamma, sigma), LevyHincinParams(gamma2, sigma2))
    return out, residual
