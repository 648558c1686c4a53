"""Infinitesimal triangular arrays and their limit laws.

A row is a finite list of probability measures ``mu_nk`` together with a
shift ``c_n``.  Each summand is centred at its truncated mean
``a = int_{|t|<1} t dmu(t)`` and the row is summarised by

    sigma_n = sum_k t^2/(1+t^2) dmu°_nk(t)
    gamma_n = c_n + sum_k [a_nk + int t/(1+t^2) dmu°_nk(t)]

The four convolution limits (c-free, boolean, free, classical) of a family
of rows converge exactly when ``(gamma_n, sigma_n)`` does, and the limits are
the laws generated by the limiting ``(gamma, sigma)``.
:func:`array_limit_harness` runs every route on a ladder of rows and compares
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .convolution import (CFreePair, boolean_fold, cfree_fold, classical_conv, classical_power, free_fold,
                          shift_measure)
from .errors import PreconditionError
from .infdiv import (CFreeGeneratorPair, LevyHincinParams, boolean_id_law, cfree_limit_law,
                     classical_id_law, fit_nevanlinna, fit_nodes, free_id_law, nevanlinna_E)
from .measure import (DEFAULT_GRID_N, AffineMap, Measure, add_measures, bernoulli_sym,
                      extrapolate_to_zero, integrate, levy_distance, push_affine)
from .transforms import TruncatedCone, make_context, phi_transform

ROUTE_TOL = 0.05
CLOSING_TOL = 1e-2
CLOSING_POINTS = 20


@dataclass(frozen=True, eq=False)
class ArrayRow:
    """Summands ``measures`` and shift ``shift``.

    Repeated summands should be the same object; the folds group them and
    solve one system per distinct measure.
    """

    measures: tuple
    shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "measures", tuple(self.measures))
        if not self.measures:
            raise PreconditionError("a row needs at least one summand")
        for m in self.measures:
            m.require_probability("row summand")

    @classmethod
    def identical(cls, m: Measure, k: int, shift: float = 0.0) -> "ArrayRow":
        if k < 1:
            raise PreconditionError("k must be at least 1")
        return cls((m,) * k, shift)

    def __len__(self):
        return len(self.measures)

    def groups(self) -> list[tuple[Measure, int]]:
        seen: dict[int, list] = {}
        for m in self.measures:
            seen.setdefault(id(m), [m, 0])[1] += 1
        return [(m, n) for m, n in seen.values()]


@dataclass(frozen=True, eq=False)
class RowParams:
    gamma_n: float
    sigma_n: Measure
    L_bound: float

    @property
    def params(self) -> LevyHincinParams:
        return LevyHincinParams(self.gamma_n, self.sigma_n)


def center(m: Measure) -> tuple[float, Measure]:
    """``a = int_{|t|<1} t dm`` and ``dm°(t) = dm(t + a)``.

    The truncation is strict, so atoms at exactly ``+-1`` do not count.
    """
    a = integrate(m, lambda t: np.where(np.abs(t) < 1, t, 0.0))
    if a == 0.0:
        return 0.0, m
    return a, push_affine(m, AffineMap(1.0, a))


def f_nk(m_centered: Measure, z):
    """``int t z / (z - t) dm°(t)``, computed as ``z (G_{t+ m}(z) - G_{t- m}(z))``."""
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise PreconditionError("f_nk is evaluated for Im z > 0 only")
    pos = m_centered.reweighted(lambda t: np.clip(t, 0.0, None))
    neg = m_centered.reweighted(lambda t: np.clip(-t, 0.0, None))
    out = z * (pos.cauchy(z) - neg.cauchy(z))
    return complex(out) if scalar else out


def row_params(row: ArrayRow) -> RowParams:
    gamma = row.shift
    parts = []
    for m, k in row.groups():
        a, mc = center(m)
        gamma += k * (a + integrate(mc, lambda t: t / (1 + t * t)))
        parts.append(mc.reweighted(lambda t: k * t * t / (1 + t * t)))
    sigma = add_measures(*parts)
    return RowParams(float(gamma), sigma, sigma.total_mass)


def tail_mass(m: Measure, eps: float) -> float:
    """``m({|t| >= eps})``."""
    inside = float(m.cdf(eps, side="left")) - float(m.cdf(-eps, side="right"))
    return max(m.total_mass - inside, 0.0)


def infinitesimality_check(rows: Sequence[ArrayRow], eps: float) -> dict:
    """Largest ``eps``-tail mass in each row, and whether it is nonincreasing."""
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    maxima = [max(tail_mass(m, eps) for m, _ in row.groups()) for row in rows]
    return {"eps": eps, "max_tail": maxima,
            "nonincreasing": bool(np.all(np.diff(maxima) <= 1e-15)) if len(maxima) > 1 else True}


def row_convolve(row: ArrayRow, mode: str, grid_n: int = DEFAULT_GRID_N) -> Measure:
    """``delta_{c_n}`` convolved with every summand, in the given mode."""
    groups = row.groups()
    if mode == "boolean":
        return boolean_fold(groups, row.shift, grid_n)
    if mode == "free":
        return free_fold(groups, row.shift, grid_n)
    if mode == "classical":
        out = None
        for m, k in groups:
            p = classical_power(m, k)
            out = p if out is None else classical_conv(out, p)
        return shift_measure(out, row.shift)
    raise PreconditionError(f"unknown mode {mode!r}; use classical, boolean or free")


def row_convolve_cfree(row_mu: ArrayRow, row_nu: ArrayRow, grid_n: int = DEFAULT_GRID_N) -> CFreePair:
    """c-free convolution of the pairs ``(mu_nk, nu_nk)`` with ``(delta_{c_n}, delta_{c'_n})``."""
    if len(row_mu) != len(row_nu):
        raise PreconditionError("c-free rows must have the same length")
    seen: dict[tuple[int, int], list] = {}
    for mu, nu in zip(row_mu.measures, row_nu.measures):
        seen.setdefault((id(mu), id(nu)), [mu, nu, 0])[2] += 1
    pairs = [tuple(v) for v in seen.values()]
    return cfree_fold(pairs, row_mu.shift, row_nu.shift, grid_n)


# ------------------------------------------------------------ scenarios

def bernoulli_rows(ns: Sequence[int], scale: float = 1.0, shift: float = 0.0) -> list[ArrayRow]:
    """``n`` copies of the symmetric Bernoulli law on ``+-scale/sqrt(n)``."""
    return [ArrayRow.identical(bernoulli_sym(scale / math.sqrt(n)), n, shift) for n in ns]


def poisson_rows(ns: Sequence[int], lam: float = 1.0, jump: float = 1.0) -> list[ArrayRow]:
    """``n`` copies of ``(1 - lam/n) delta_0 + (lam/n) delta_jump``."""
    rows = []
    for n in ns:
        if lam / n > 1:
            raise PreconditionError("lam / n must not exceed 1")
        m = Measure.create([(0.0, 1 - lam / n), (jump, lam / n)])
        rows.append(ArrayRow.identical(m, n))
    return rows


def degenerate_rows(ns: Sequence[int], shift: float = 0.0) -> list[ArrayRow]:
    d = Measure.atomic([0.0], [1.0])
    return [ArrayRow.identical(d, n, shift) for n in ns]


SCENARIOS = {
    "gaussian": lambda ns, p: bernoulli_rows(ns, *(p[:1] or [1.0])),
    "poisson": lambda ns, p: poisson_rows(ns, *(p[:1] or [1.0])),
    "degenerate": lambda ns, p: degenerate_rows(ns),
}


# -------------------------------------------------------------- harness

def _extrapolated_params(params: Sequence[RowParams], sizes: Sequence[int]) -> LevyHincinParams:
    """``gamma`` and the mass of ``sigma`` extrapolated in ``1/k_n``; the shape
    of ``sigma`` is taken from the last row."""
    h = [1.0 / k for k in sizes]
    gamma = float(extrapolate_to_zero([p.gamma_n for p in params], h))
    mass = float(extrapolate_to_zero([p.L_bound for p in params], h))
    last = params[-1].sigma_n
    if last.total_mass <= 0 or mass <= 1e-12:
        return LevyHincinParams(gamma, Measure.zero())
    return LevyHincinParams(gamma, last.normalized().scaled(mass))


def _support_radius(m: Measure) -> float:
    if m.total_mass <= 0:
        return 0.0
    lo, hi = m.support()
    return max(abs(lo), abs(hi))


def _decreasing(xs, slack=1e-9) -> bool:
    return bool(np.all(np.diff(xs) <= slack))


@dataclass
class HarnessReport:
    sizes: list
    gamma_n: list
    sigma_mass: list
    sigma_radius: list
    generators: CFreeGeneratorPair
    distances: dict = field(default_factory=dict)
    closing_error: float = float("nan")
    limit_pair: CFreePair | None = None
    phi_fit_residual: float = float("nan")
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes, "gamma_n": self.gamma_n, "sigma_mass": self.sigma_mass,
            "sigma_radius": self.sigma_radius,
            "gamma": self.generators.first.gamma, "sigma_mass_limit": self.generators.first.sigma.total_mass,
            "gamma2": self.generators.second.gamma, "sigma2_mass_limit": self.generators.second.sigma.total_mass,
            "distances": self.distances, "closing_error": self.closing_error,
            "phi_fit_residual": self.phi_fit_residual, "passed": self.passed, "failures": self.failures,
        }


def array_limit_harness(rows_mu: Sequence[ArrayRow], rows_nu: Sequence[ArrayRow],
                        expected: CFreeGeneratorPair | None = None, tol: float = ROUTE_TOL,
                        grid_n: int = DEFAULT_GRID_N) -> HarnessReport:
    """Run the five equivalent routes on a ladder of rows (increasing ``k_n``).

    Routes: (1) c-free row convolutions against ``cfree_limit_law``;
    (2)-(4) boolean, free and classical row convolutions of the mu-rows against
    the laws generated by ``(gamma, sigma)``; (5) the row parameters
    themselves, extrapolated to ``(gamma, sigma)``.  ``expected`` replaces
    the extrapolated generators as the comparison target when given.

    The ``Phi`` transforms of the route (1) pairs are extrapolated in
    ``1/k_n`` on a cone and fitted with a Nevanlinna form; the fit residual
    certifies that the limit pair is c-free infinitely divisible.
    """
    if len(rows_mu) != len(rows_nu) or len(rows_mu) < 2:
        raise PreconditionError("need matching mu and nu ladders of at least two rows")
    sizes = [len(r) for r in rows_mu]
    pm = [row_params(r) for r in rows_mu]
    pn = [row_params(r) for r in rows_nu]
    g_est = CFreeGeneratorPair(_extrapolated_params(pm, sizes), _extrapolated_params(pn, sizes))
    g = expected or g_est
    rep = HarnessReport(sizes, [p.gamma_n for p in pm], [p.L_bound for p in pm],
                        [_support_radius(p.sigma_n) for p in pm], g_est)

    # the nu-rows must converge freely for the statement to apply
    nu_laws = [row_convolve(r, "free", grid_n) for r in rows_nu]
    gaps = [levy_distance(a, b) for a, b in zip(nu_laws, nu_laws[1:])]
    rep.distances["nu_cauchy"] = gaps
    if gaps[-1] > tol:
        raise PreconditionError(f"free limit of the nu-rows has not settled (Lévy gap {gaps[-1]:.3g})")

    targets = {"boolean": boolean_id_law(g.first, grid_n), "free": free_id_law(g.first, grid_n),
               "classical": classical_id_law(g.first, grid_n)}
    for mode, target in targets.items():
        d = [levy_distance(row_convolve(r, mode, grid_n), target) for r in rows_mu]
        rep.distances[mode] = d
        if d[-1] > tol:
            rep.failures.append(f"{mode} route: Lévy distance {d[-1]:.3g} > {tol}")

    limit = cfree_limit_law(g, grid_n)
    pairs = [row_convolve_cfree(a, b, grid_n) for a, b in zip(rows_mu, rows_nu)]
    d_mu = [levy_distance(p.mu, limit.mu) for p in pairs]
    d_nu = [levy_distance(p.nu, limit.nu) for p in pairs]
    rep.distances["cfree_mu"] = d_mu
    rep.distances["cfree_nu"] = d_nu
    if max(d_mu[-1], d_nu[-1]) > tol:
        rep.failures.append(f"c-free route: Lévy distances {d_mu[-1]:.3g}, {d_nu[-1]:.3g} > {tol}")
    rep.limit_pair = pairs[-1]

    ctx = make_context(pairs[-1].nu)
    z = ctx.cone.probes(CLOSING_POINTS)
    phi_last = phi_transform(pairs[-1].mu, ctx, z)
    rep.closing_error = float(np.max(np.abs(phi_last - nevanlinna_E(g.first, z))))
    if rep.closing_error > CLOSING_TOL:
        rep.failures.append(f"closing identity error {rep.closing_error:.3g} > {CLOSING_TOL}")

    # Phi of the limit pair, extrapolated over the ladder on a common cone
    ctxs = [make_context(p.nu) for p in pairs]
    beta = max(c.cone.beta for c in ctxs)
    zc = TruncatedCone(ctxs[-1].cone.alpha, beta).probes(48)
    phis = [phi_transform(p.mu, c, zc) for p, c in zip(pairs, ctxs)]
    h = [1.0 / k for k in sizes]
    phi_lim = extrapolate_to_zero([v.real for v in phis], h) + 1j * extrapolate_to_zero([v.imag for v in phis], h)
    reach = max(_support_radius(limit.mu), _support_radius(limit.nu), 1.0)
    rep.phi_fit_residual = fit_nevanlinna(zc, phi_lim, fit_nodes(reach)).residual
    return rep
