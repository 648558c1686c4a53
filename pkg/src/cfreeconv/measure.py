"""Finite positive Borel measures on the real line.

A :class:`Measure` is a finite set of atoms plus an optional continuous
piecewise-linear density sampled on a uniform grid.  This mixed form keeps
point masses exact while letting absolutely continuous laws carry their
shape; Cauchy transforms of both parts are evaluated in closed form (see
:mod:`cfreeconv.transforms`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import _kernels
from .errors import NumericalError, PreconditionError

DEFAULT_GRID_N = 2048
MIN_GRID_N = 16
# y-ladder in units of the inversion grid step
LADDER_STEPS = (2.0, 1.0, 0.5)
PROB_TOL = 1e-9
ATOM_MERGE_TOL = 1e-12
MASS_DEFICIT_TOL = 0.02


class MeasureError(PreconditionError):
    """Invalid measure data."""


class InversionError(NumericalError):
    """Stieltjes inversion did not produce a trustworthy measure."""


def _clean_atoms(loc, mass):
    loc = np.asarray(loc, dtype=float).ravel()
    mass = np.asarray(mass, dtype=float).ravel()
    if loc.shape != mass.shape:
        raise MeasureError("atom locations and masses differ in length")
    if np.any(~np.isfinite(loc)) or np.any(~np.isfinite(mass)):
        raise MeasureError("non-finite atom data")
    if np.any(mass < 0):
        raise MeasureError("atom masses must be positive")
    keep = mass > 0
    loc, mass = loc[keep], mass[keep]
    order = np.argsort(loc, kind="stable")
    loc, mass = loc[order], mass[order]
    if len(loc) > 1:
        # merge atoms closer than ATOM_MERGE_TOL, keeping a mass-weighted location
        new_group = np.concatenate([[True], np.diff(loc) > ATOM_MERGE_TOL])
        ids = np.cumsum(new_group) - 1
        m = np.bincount(ids, weights=mass)
        lw = np.bincount(ids, weights=loc * mass)
        loc, mass = lw / m, m
    return loc, mass


@dataclass(frozen=True, eq=False)
class Measure:
    """Atoms plus a piecewise-linear density on ``grid_start + j*grid_step``.

    Build instances through :meth:`Measure.create`, which validates and
    normalises the parts.  Instances are immutable.
    """

    atom_loc: np.ndarray
    atom_mass: np.ndarray
    grid_start: float = 0.0
    grid_step: float = 1.0
    values: np.ndarray | None = None

    @classmethod
    def create(cls, atoms=(), density=None) -> "Measure":
        """``atoms`` is an iterable of ``(location, mass)``; ``density`` is
        ``(grid_start, grid_step, values)`` or ``None``."""
        atoms = list(atoms)
        if atoms:
            loc, mass = zip(*atoms)
        else:
            loc, mass = (), ()
        loc, mass = _clean_atoms(loc, mass)
        if density is None:
            return cls(loc, mass)
        x0, h, vals = density
        vals = np.asarray(vals, dtype=float).copy()
        if h <= 0 or not math.isfinite(h) or not math.isfinite(x0):
            raise MeasureError("grid step must be positive and finite")
        if vals.ndim != 1 or len(vals) < 2:
            raise MeasureError("density needs at least two grid values")
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise MeasureError("density values must be finite and nonnegative")
        if not np.any(vals > 0):
            return cls(loc, mass)
        # trim zero runs at both ends, keeping one zero as the boundary node
        nz = np.flatnonzero(vals)
        lo, hi = max(nz[0] - 1, 0), min(nz[-1] + 1, len(vals) - 1)
        vals = vals[lo:hi + 1]
        vals.setflags(write=False)
        loc.setflags(write=False)
        mass.setflags(write=False)
        return cls(loc, mass, float(x0 + lo * h), float(h), vals)

    @classmethod
    def atomic(cls, loc, mass) -> "Measure":
        return cls.create(zip(np.atleast_1d(loc), np.atleast_1d(mass)))

    @classmethod
    def zero(cls) -> "Measure":
        return cls.create()

    # ------------------------------------------------------------------ parts
    @property
    def has_density(self) -> bool:
        return self.values is not None

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.atom_loc.tolist(), self.atom_mass.tolist()))

    @property
    def grid(self) -> np.ndarray:
        if self.values is None:
            return np.empty(0)
        return self.grid_start + self.grid_step * np.arange(len(self.values))

    @property
    def grid_end(self) -> float:
        return self.grid_start + self.grid_step * (len(self.values) - 1)

    @cached_property
    def density_mass(self) -> float:
        if self.values is None:
            return 0.0
        v = self.values
        return float(self.grid_step * (v.sum() - 0.5 * (v[0] + v[-1])))

    @cached_property
    def total_mass(self) -> float:
        return float(self.atom_mass.sum()) + self.density_mass

    def is_probability(self, tol: float = PROB_TOL) -> bool:
        return abs(self.total_mass - 1.0) <= tol

    def require_probability(self, what: str = "measure") -> None:
        if not self.is_probability():
            raise MeasureError(f"{what} must be a probability measure "
                               f"(total mass {self.total_mass!r})")

    def support(self) -> tuple[float, float]:
        """Smallest closed interval holding every atom and the density grid."""
        pts = list(self.atom_loc)
        if self.values is not None:
            pts += [self.grid_start, self.grid_end]
        if not pts:
            return (0.0, 0.0)
        return (min(pts), max(pts))

    def window(self, tail: float = 1e-6) -> tuple[float, float]:
        """Interval leaving at most ``tail`` of the mass outside (half per side)."""
        total = self.total_mass
        if total == 0:
            return (0.0, 0.0)
        lo, hi = self.support()
        if self.values is None:
            return lo, hi
        xs = np.union1d(self.grid, self.atom_loc)
        c = self.cdf(xs) / total
        left = xs[np.searchsorted(c, tail / 2, side="right")] if c[0] <= tail / 2 else xs[0]
        i = np.searchsorted(c, 1 - tail / 2, side="left")
        right = xs[min(i, len(xs) - 1)]
        left = min([left] + list(self.atom_loc))
        right = max([right] + list(self.atom_loc))
        return float(left), float(right)

    def scaled(self, c: float) -> "Measure":
        """The measure ``c * self`` for ``c >= 0``."""
        if c < 0:
            raise MeasureError("scale factor must be nonnegative")
        dens = None
        if self.values is not None:
            dens = (self.grid_start, self.grid_step, c * self.values)
        return Measure.create(zip(self.atom_loc, c * self.atom_mass), dens)

    def normalized(self) -> "Measure":
        if self.total_mass <= 0:
            raise MeasureError("cannot normalise the zero measure")
        return self.scaled(1.0 / self.total_mass)

    def reweighted(self, weight: Callable[[np.ndarray], np.ndarray]) -> "Measure":
        """The measure ``weight(t) dself(t)`` for a nonnegative weight."""
        dens = None
        if self.values is not None:
            dens = (self.grid_start, self.grid_step, self.values * weight(self.grid))
        return Measure.create(zip(self.atom_loc, self.atom_mass * weight(self.atom_loc)), dens)

    # ------------------------------------------------------------ evaluation
    def density_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.values is None:
            return np.zeros_like(x)
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)

    def cdf(self, x, side: str = "right") -> np.ndarray:
        """``m((-inf, x])`` (``side='right'``) or ``m((-inf, x))`` (``'left'``)."""
        x = np.asarray(x, dtype=float)
        cum_atoms = np.concatenate([[0.0], np.cumsum(self.atom_mass)])
        out = cum_atoms[np.searchsorted(self.atom_loc, x, side=side)]
        if self.values is not None:
            v, h = self.values, self.grid_step
            cells = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))])
            tau = (x - self.grid_start) / h
            j = np.clip(np.floor(tau).astype(np.int64), 0, len(v) - 2)
            frac = np.clip(tau - j, 0.0, 1.0)
            part = h * (v[j] * frac + 0.5 * (v[j + 1] - v[j]) * frac**2)
            dens_cdf = np.where(tau <= 0, 0.0, np.where(tau >= len(v) - 1, cells[-1], cells[j] + part))
            out = out + dens_cdf
        return out

    @cached_property
    def _blocks(self):
        return _kernels.block_tree(self.grid_start, self.grid_step, self.values)

    def cauchy(self, z, derivative: bool = False):
        """Cauchy transform (and optionally its derivative) at points of C+."""
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        zf = np.ascontiguousarray(z.ravel())
        g = np.zeros(zf.shape, dtype=complex)
        dg = np.zeros(zf.shape, dtype=complex)
        if len(self.atom_loc):
            diff = zf[:, None] - self.atom_loc[None, :]
            g += (self.atom_mass / diff).sum(axis=1)
            if derivative:
                dg -= (self.atom_mass / diff**2).sum(axis=1)
        if self.values is not None and zf.size:
            gd, dgd = _kernels.pl_cauchy(zf, self.grid_start, self.grid_step,
                                         np.ascontiguousarray(self.values), *self._blocks, derivative)
            g += gd
            dg += dgd
        if derivative:
            return g.reshape(shape), dg.reshape(shape)
        return g.reshape(shape)

    # ------------------------------------------------------------- serialise
    def to_dict(self) -> dict:
        out = {"atoms": [[float(a), float(m)] for a, m in self.atoms], "grid": None, "values": None}
        if self.values is not None:
            out["grid"] = {"start": self.grid_start, "step": self.grid_step, "n": len(self.values)}
            out["values"] = self.values.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Measure":
        atoms = [tuple(a) for a in data.get("atoms") or []]
        grid = data.get("grid")
        dens = None
        if grid:
            dens = (grid["start"], grid["step"], data["values"])
        return cls.create(atoms, dens)

    def __repr__(self) -> str:
        dens = "none" if self.values is None else (
            f"[{self.grid_start:.4g}, {self.grid_end:.4g}] x{len(self.values)}")
        return f"Measure(atoms={len(self.atom_loc)}, density={dens}, mass={self.total_mass:.12g})"


@dataclass(frozen=True)
class AffineMap:
    """``t -> a*t + b`` with ``a > 0``."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise MeasureError("affine map needs a > 0")


# ---------------------------------------------------------------- families

def _grid_density(x0, x1, n, func):
    x = np.linspace(x0, x1, n)
    return x0, x[1] - x[0], func(x)


def _edge_corrected(x0, x1, n, func, cell_mass):
    """Samples of ``func`` on ``[x0, x1]`` padded by one zero node per side.

    The support endpoints get values that make the two cells around each of
    them carry the exact mass of the end cell (``cell_mass(a, b)``), so the
    density stays continuous even when ``func`` blows up at the edges.
    """
    x = np.linspace(x0, x1, n - 2)
    h = x[1] - x[0]
    v = func(x)
    v[0] = max((2 * cell_mass(x[0], x[1]) / h - v[1]) / 2, 0.0)
    v[-1] = max((2 * cell_mass(x[-2], x[-1]) / h - v[-2]) / 2, 0.0)
    return x0 - h, h, np.concatenate([[0.0], v, [0.0]])


def point_mass(c: float = 0.0) -> Measure:
    return Measure.atomic([c], [1.0])


def bernoulli_sym(h: float = 1.0) -> Measure:
    if not h > 0:
        raise MeasureError("bernoulli needs h > 0")
    return Measure.atomic([-h, h], [0.5, 0.5])


def semicircle(center: float = 0.0, radius: float = 2.0, grid_n: int = DEFAULT_GRID_N) -> Measure:
    if not radius > 0:
        raise MeasureError("semicircle needs radius > 0")
    r = radius

    def dens(x):
        return 2.0 / (math.pi * r * r) * np.sqrt(np.clip(r * r - (x - center) ** 2, 0.0, None))

    def cdf(x):
        s = np.clip((x - center) / r, -1.0, 1.0)
        return 0.5 + (s * np.sqrt(1 - s * s) + np.arcsin(s)) / math.pi

    d = _edge_corrected(center - r, center + r, grid_n, dens, lambda a, b: cdf(b) - cdf(a))
    return Measure.create(density=d).normalized()


def arcsine(center: float = 0.0, radius: float = 2.0, grid_n: int = DEFAULT_GRID_N) -> Measure:
    if not radius > 0:
        raise MeasureError("arcsine needs radius > 0")
    r = radius

    def dens(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = 1.0 / (math.pi * np.sqrt(r * r - (x - center) ** 2))
        return np.where(np.isfinite(v), v, 0.0)

    def cdf(x):
        return 0.5 + np.arcsin(np.clip((x - center) / r, -1.0, 1.0)) / math.pi

    d = _edge_corrected(center - r, center + r, grid_n, dens, lambda a, b: cdf(b) - cdf(a))
    return Measure.create(density=d).normalized()


def gaussian(mean: float = 0.0, std: float = 1.0, grid_n: int = DEFAULT_GRID_N) -> Measure:
    if not std > 0:
        raise MeasureError("gaussian needs std > 0")
    d = _grid_density(mean - 6 * std, mean + 6 * std, grid_n,
                      lambda x: np.exp(-0.5 * ((x - mean) / std) ** 2) / (std * math.sqrt(2 * math.pi)))
    return Measure.create(density=d).normalized()


def gaussian_cdf(x, mean: float = 0.0, std: float = 1.0):
    return 0.5 * (1 + special.erf((np.asarray(x) - mean) / (std * math.sqrt(2))))


def free_poisson(rate: float = 1.0, jump: float = 1.0, grid_n: int = DEFAULT_GRID_N) -> Measure:
    """Marchenko-Pastur law with the given rate and jump size."""
    if not rate > 0 or not jump > 0:
        raise MeasureError("free poisson needs positive rate and jump")
    lo = jump * (1 - math.sqrt(rate)) ** 2
    hi = jump * (1 + math.sqrt(rate)) ** 2

    def dens(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.sqrt(np.clip((hi - x) * (x - lo), 0.0, None)) / (2 * math.pi * jump * x)
        return np.where(np.isfinite(v), v, 0.0)

    atoms = [(0.0, 1.0 - rate)] if rate < 1 else []
    if rate == 1:
        # density ~ x**-1/2 at the origin; fix the first cell mass numerically
        from scipy.integrate import quad
        d = _edge_corrected(lo, hi, grid_n, dens, lambda a, b: quad(dens, a, b, limit=200)[0])
    else:
        d = _grid_density(lo, hi, grid_n, dens)
    dm = Measure.create(density=d)
    target = min(rate, 1.0)
    return Measure.create(atoms, (d[0], d[1], d[2] * target / dm.total_mass))


_FAMILIES = {
    "point_mass": (point_mass, 1),
    "delta": (point_mass, 1),
    "bernoulli_sym": (bernoulli_sym, 1),
    "bernoulli": (bernoulli_sym, 1),
    "semicircle": (semicircle, 2),
    "arcsine": (arcsine, 2),
    "gaussian": (gaussian, 2),
    "free_poisson": (free_poisson, 2),
    "freepoisson": (free_poisson, 2),
}

FAMILY_NAMES = tuple(sorted(_FAMILIES))


def make_family(name: str, params: Sequence[float] = (), grid_n: int = DEFAULT_GRID_N) -> Measure:
    """Standard probability laws by name, e.g. ``make_family('semicircle', [0, 2])``."""
    try:
        func, nparams = _FAMILIES[name]
    except KeyError:
        raise MeasureError(f"unknown family {name!r}") from None
    params = [float(p) for p in params]
    if grid_n < MIN_GRID_N:
        raise MeasureError(f"grid_n must be at least {MIN_GRID_N}, got {grid_n}")
    if len(params) > nparams:
        raise MeasureError(f"{name} takes at most {nparams} parameters, got {len(params)}")
    if func in (semicircle, arcsine, gaussian, free_poisson):
        return func(*params, grid_n=grid_n)
    return func(*params)


# -------------------------------------------------------------- operations

def integrate(m: Measure, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """``int f dm``: atoms exactly, the density by 8-point Gauss rule per cell."""
    total = float(np.sum(m.atom_mass * f(m.atom_loc))) if m.atom_loc.size else 0.0
    if m.values is not None:
        nodes, weights = np.polynomial.legendre.leggauss(8)
        a = m.grid[:-1]
        h = m.grid_step
        fa, fb = m.values[:-1], m.values[1:]
        s = (nodes + 1) / 2
        t = a[:, None] + h * s[None, :]
        dens = fa[:, None] + (fb - fa)[:, None] * s[None, :]
        total += float(np.sum(dens * f(t) * weights[None, :]) * h / 2)
    return total


def moment(m: Measure, k: int) -> float:
    """``int t**k dm(t)``; exact for the piecewise-linear representation."""
    if k < 0 or k > 12 or int(k) != k:
        raise MeasureError("moment order must be an integer in [0, 12]")
    return integrate(m, lambda t: t ** k)


def _sup_gap(A: Measure, B: Measure, eps: float, xs: np.ndarray, b_atoms: np.ndarray) -> float:
    """``sup_x A(x) - B(x + eps)`` from a candidate set of points."""
    gap = np.max(A.cdf(xs) - B.cdf(xs + eps))
    if len(b_atoms):
        gap = max(gap, np.max(A.cdf(b_atoms - eps) - B.cdf(b_atoms, side="left")))
    return float(gap)


def levy_distance(m1: Measure, m2: Measure, tol: float = 1e-12) -> float:
    """Lévy distance between two probability measures.

    ``inf{eps > 0 : F1(x - eps) - eps <= F2(x) <= F1(x + eps) + eps}``,
    located by bisection with the suprema taken over grid nodes, cell
    midpoints, atoms and their shifts.
    """
    m1.require_probability("first measure")
    m2.require_probability("second measure")

    def pts(m):
        g = m.grid
        mids = (g[1:] + g[:-1]) / 2 if len(g) else g
        return np.concatenate([g, mids, m.atom_loc])

    p1, p2 = pts(m1), pts(m2)

    def ok(eps):
        x12 = np.concatenate([p2, p1 - eps])
        x21 = np.concatenate([p1, p2 - eps])
        return (_sup_gap(m2, m1, eps, x12, m1.atom_loc) <= eps + 1e-15
                and _sup_gap(m1, m2, eps, x21, m2.atom_loc) <= eps + 1e-15)

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    # the infimum is over eps > 0; reaching the bisection floor means 0
    return 0.0 if lo == 0.0 else hi


def push_affine(m: Measure, amap: AffineMap) -> Measure:
    """The measure ``dm'(t) = dm(a t + b)``: atoms move to ``(x - b) / a``."""
    a, b = amap.a, amap.b
    dens = None
    if m.values is not None:
        dens = ((m.grid_start - b) / a, m.grid_step / a, m.values * a)
    return Measure.create(zip((m.atom_loc - b) / a, m.atom_mass), dens)


def resample(m: Measure, x0: float, h: float, n: int) -> np.ndarray:
    """Density values of ``m`` on a new uniform grid (linear interpolation)."""
    return m.density_at(x0 + h * np.arange(n))


def add_measures(*ms: Measure) -> Measure:
    """Sum of finite measures; densities are merged on the finest grid."""
    atoms = [a for m in ms for a in m.atoms]
    dens_ms = [m for m in ms if m.values is not None]
    if not dens_ms:
        return Measure.create(atoms)
    if len(dens_ms) == 1:
        m = dens_ms[0]
        return Measure.create(atoms, (m.grid_start, m.grid_step, m.values))
    h = min(m.grid_step for m in dens_ms)
    lo = min(m.grid_start for m in dens_ms)
    hi = max(m.grid_end for m in dens_ms)
    n = int(math.ceil((hi - lo) / h - 1e-9)) + 1
    vals = sum(resample(m, lo, h, n) for m in dens_ms)
    return Measure.create(atoms, (lo, h, vals))


# ------------------------------------------------------ Stieltjes inversion

def extrapolate_to_zero(values: np.ndarray, ys: Sequence[float]) -> np.ndarray:
    """Neville extrapolation of samples ``values[k]`` taken at ``ys[k]`` to 0."""
    ys = np.asarray(ys, dtype=float)
    p = [np.asarray(v, dtype=float).copy() for v in values]
    n = len(ys)
    for level in range(1, n):
        for i in range(n - level):
            j = i + level
            p[i] = (ys[j] * p[i] - ys[i] * p[i + 1]) / (ys[j] - ys[i])
    return p[0]


def default_ladder(window: tuple[float, float], grid_n: int) -> tuple[float, ...]:
    h = (window[1] - window[0]) / (grid_n - 1)
    return tuple(k * h for k in LADDER_STEPS)


def inversion_grid(m: Measure, pad: float = 0.1, grid_n: int = DEFAULT_GRID_N) -> tuple[tuple[float, float], int]:
    """Window and node count for reconstructing ``m`` (or a law close to it).

    With a density the nodes extend ``m``'s own grid by whole cells, so a
    round trip samples exactly where ``m`` is defined.
    """
    lo, hi = m.support()
    if m.values is None:
        width = max(hi - lo, 1.0)
        return (lo - pad * width, hi + pad * width), grid_n
    k = int(math.ceil(pad * len(m.values)))
    h = m.grid_step
    return (m.grid_start - k * h, m.grid_end + k * h), len(m.values) + 2 * k


def stieltjes_invert(G: Callable, window: tuple[float, float], grid_n: int = DEFAULT_GRID_N,
                     y_ladder: Sequence[float] | None = None,
                     atom_threshold: float = 1e-7, renormalize: bool = True,
                     strict: bool = True) -> Measure:
    """Recover a probability measure from its Cauchy transform.

    ``G`` must accept complex arrays of any shape.  The density is
    ``-Im G(x + iy) / pi`` extrapolated to ``y = 0`` over ``y_ladder``
    (default: 2, 1 and 1/2 grid steps).  Atoms
    are points where ``y * (-Im G)`` does not vanish with ``y``; they are
    located by a Newton step on the pole of ``G`` and removed before the
    density is extracted.

    With ``strict=False`` the sanity checks are skipped and nothing is
    renormalised; this is meant for rough scouting passes.
    """
    if y_ladder is None:
        y_ladder = default_ladder(window, grid_n)
    ys = np.sort(np.asarray(y_ladder, dtype=float))[::-1]
    if len(ys) < 2 or ys[-1] <= 0 or len(set(ys)) != len(ys):
        raise InversionError("y_ladder needs at least two distinct positive values")
    lo, hi = window
    if not hi > lo:
        raise InversionError("empty inversion window")
    x = np.linspace(lo, hi, grid_n)
    h = x[1] - x[0]
    Z = x[None, :] + 1j * ys[:, None]
    Gv = np.asarray(G(Z))

    # --- atoms: y * (-Im G) stays O(1) at an atom and is O(y) elsewhere
    s = -ys[:, None] * Gv.imag
    s_min, s_max = s[-1], s[0]
    # loose prefilter: an atom between two nodes still keeps s_min/s_max near 1/2
    cand = np.flatnonzero(
        (s_min > atom_threshold)
        & (s_min >= np.concatenate([[-np.inf], s_min[:-1]]))
        & (s_min > np.concatenate([s_min[1:], [-np.inf]]))
        & (s_min >= 0.35 * s_max))
    atoms = []
    for i in cand:
        reach = 2 * max(h, ys[-1])
        a = _locate_pole(G, x[i], ys[-1] / 4, reach)
        if a is None:
            a = _bracket_pole(G, x[i], ys[-1] * 1e-4, reach)
        if a is None:
            continue
        # at the pole itself the atom signature is flat in y; a nearby zero
        # of G can spoil that at grid scale, so look once more much closer
        for ya in max(ys[-1], h / 2) * np.array([[4.0, 1.0, 0.5, 0.25], [4e-4, 1e-4, 5e-5, 2.5e-5]]):
            sa = (1j * ya * np.asarray(G(a + 1j * ya))).real
            if sa[1] >= 0.7 * sa[0]:
                break
        else:
            continue
        mass = float(extrapolate_to_zero(sa[1:], ya[1:]))
        if mass > atom_threshold:
            atoms.append((a, mass))
    atoms = _merge_close(atoms, tol=max(h, 1e-9))

    # --- density from the atom-free remainder
    if atoms:
        aloc = np.array([a for a, _ in atoms])
        amass = np.array([m for _, m in atoms])
        Gv = Gv - (amass / (Z[..., None] - aloc)).sum(axis=-1)
    dens_k = -Gv.imag / math.pi
    dens = extrapolate_to_zero(dens_k, ys)
    scale = max(float(np.max(np.abs(dens_k[-1]))), 1e-300)
    if not strict:
        m = Measure.create(atoms, (lo, h, np.clip(dens, 0.0, None)))
        return m if m.density_mass >= 1e-7 else Measure.create(atoms)
    if np.min(dens) < -0.1 * scale and np.min(dens) < -1e-6:
        raise InversionError(f"negative extrapolated density {np.min(dens):.3g} "
                             f"(peak {scale:.3g}); window or transform invalid")
    drift = h * np.sum(np.abs(dens - dens_k[-1]))
    if drift > 0.5:
        raise InversionError("density extrapolation does not converge")
    dens = np.clip(dens, 0.0, None)
    m = Measure.create(atoms, (lo, h, dens))
    if m.density_mass < 1e-7:
        m = Measure.create(atoms)
    deficit = abs(1.0 - m.total_mass)
    if deficit > MASS_DEFICIT_TOL:
        raise InversionError(f"recovered mass {m.total_mass:.6f} differs from 1 by more than "
                             f"{MASS_DEFICIT_TOL:.0%}; mass lies outside the window")
    if renormalize:
        m = m.normalized()
    return m


CELL_MASS_CAP = 0.05
REFINE_FACTOR = 4


def invert_transform(G: Callable, guess: tuple[float, float], grid_n: int = DEFAULT_GRID_N,
                     max_widen: int = 6) -> Measure:
    """Stieltjes inversion when only a rough location of the mass is known.

    A coarse pass over ``guess`` (widened while mass is missing) finds where
    the measure lives; the final inversion runs on that tighter window.
    """
    lo, hi = guess
    if not hi > lo:
        c = 0.5 * (lo + hi)
        lo, hi = c - 1.0, c + 1.0
    coarse = None
    for _ in range(max_widen + 1):
        try:
            coarse = stieltjes_invert(G, (lo, hi), 512, strict=False)
        except InversionError:
            coarse = None
        if coarse is not None and coarse.total_mass > 0.999:
            break
        c, w = 0.5 * (lo + hi), hi - lo
        lo, hi = c - w, c + w
    if coarse is None or coarse.total_mass == 0:
        raise InversionError("could not locate the mass of the transform")
    h = (hi - lo) / 511
    pts = list(coarse.atom_loc)
    if coarse.values is not None:
        keep = coarse.values > 1e-7 * coarse.values.max()
        pts += list(coarse.grid[keep])
    a, b = min(pts), max(pts)
    pad = max(4 * h, 0.05 * (b - a), 1e-6 * max(1.0, abs(a), abs(b)))
    window = (a - pad, b + pad)
    last = None
    for _ in range(3):
        try:
            out = stieltjes_invert(G, window, grid_n)
            break
        except InversionError as exc:
            last = exc
            c, w = 0.5 * (window[0] + window[1]), window[1] - window[0]
            window = (c - w, c + w)
    else:
        raise last
    # a narrow spike (a near-atom) needs a finer grid than the bulk
    n = grid_n
    while (out.values is not None and n < REFINE_FACTOR * grid_n
           and out.values.max() * out.grid_step > CELL_MASS_CAP):
        n *= 2
        out = stieltjes_invert(G, window, n)
    return out


def _locate_pole(G, x0, y0, reach, max_iter=12):
    """Newton on ``F = 1/G`` from ``x0 + i*y0``; a real zero of F is an atom.

    Poles converge in a handful of steps.  Branch points (square-root edges)
    only converge linearly; the caller's flatness test rejects those, so the
    iteration is capped rather than run to convergence.
    """
    k = 16
    ring = np.exp(1j * 2 * np.pi * (np.arange(k) + 0.5) / k)
    z = complex(x0, y0)
    for _ in range(max_iter):
        r = z.imag / 2
        vals = np.asarray(G(np.concatenate([[z], z + r * ring])))
        g = complex(vals[0])
        dg = complex((vals[1:] / ring).mean() / r)
        z_new = z + g / dg
        if not np.isfinite(z_new) or abs(z_new.real - x0) > reach:
            return None
        if z_new.imag <= 0:
            z_new = complex(z_new.real, z.imag / 10)
        done = abs(z_new - z) < 1e-14 * (1 + abs(z)) or z_new.imag < 1e-13
        z = z_new
        if done:
            break
    return z.real


def _bracket_pole(G, x0, y, reach, n=65):
    """Increasing sign change of ``Re F`` just above the real axis near
    ``x0``, refined by bisection; the fallback when Newton is thrown off by
    a zero of ``G`` close to the pole."""
    xs = np.linspace(x0 - reach, x0 + reach, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (1.0 / np.asarray(G(xs + 1j * y))).real
    ok = np.isfinite(f[:-1]) & np.isfinite(f[1:]) & (f[:-1] < 0) & (f[1:] > 0)
    ks = np.flatnonzero(ok)
    if not len(ks):
        return None
    k = ks[np.argmin(np.abs(xs[ks] - x0))]
    lo, hi = xs[k], xs[k + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = (1.0 / complex(np.asarray(G(np.array([mid + 1j * y])))[0])).real
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _merge_close(atoms, tol):
    atoms = sorted(atoms)
    out = []
    for a, m in atoms:
        if out and abs(a - out[-1][0]) <= tol:
            a0, m0 = out[-1]
            out[-1] = ((a0 * m0 + a * m) / (m0 + m), max(m0, m))
        else:
            out.append((a, m))
    return out


def l1_density_error(m1: Measure, m2: Measure) -> float:
    """``int |f1 - f2|`` of the density parts on the union of both grids."""
    grids = [m.grid for m in (m1, m2) if m.values is not None]
    if not grids:
        return 0.0
    h = min(m.grid_step for m in (m1, m2) if m.values is not None) / 2
    lo = min(g[0] for g in grids)
    hi = max(g[-1] for g in grids)
    x = np.arange(lo, hi + h, h)
    return float(np.trapezoid(np.abs(m1.density_at(x) - m2.density_at(x)), x))
