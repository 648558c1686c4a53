"""Moment-level reference computations over non-crossing partitions.

Nothing here touches Cauchy transforms.  Free cumulants ``r_n`` of a law
``nu`` satisfy

    m_n(nu) = sum over pi in NC(n) of prod_{V in pi} r_|V|

and for a pair ``(mu, nu)`` the two-state (c-free) cumulants ``R_n`` enter
through the outer blocks only:

    m_n(mu) = sum over pi in NC(n) of prod_{V outer} R_|V| prod_{V inner} r_|V|

A block is inner when some other block surrounds it.  Both cumulant families
add under the c-free convolution of pairs, which gives reference moments for
the transform engine.  Partitions are enumerated by brute force on purpose.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .errors import PreconditionError

MAX_FREE_ORDER = 8
MAX_CFREE_ORDER = 6


@dataclass(frozen=True)
class NCPartition:
    """Blocks of a non-crossing partition of {1..n} with their inner flags."""

    blocks: tuple[tuple[int, ...], ...]
    inner: tuple[bool, ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)


def _set_partitions(n):
    """All set partitions of range(n) as restricted growth strings."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, mx):
        if i == n:
            yield tuple(a)
            return
        for v in range(mx + 2):
            a[i] = v
            yield from rec(i + 1, max(mx, v))

    yield from rec(1, 0)


def _crossing(blocks):
    for i, p in enumerate(blocks):
        for q in blocks[i + 1:]:
            for a in p:
                for c in p:
                    if c <= a:
                        continue
                    for b in q:
                        if a < b < c:
                            for d in q:
                                if d > c:
                                    return True
                        if b < a:
                            for d in q:
                                if a < d < c:
                                    return True
    return False


def _is_inner(block, blocks):
    lo, hi = min(block), max(block)
    for other in blocks:
        if other is block:
            continue
        if min(other) < lo and hi < max(other):
            return True
    return False


@lru_cache(maxsize=None)
def nc_partitions(n: int) -> tuple[NCPartition, ...]:
    """Every non-crossing partition of {1..n}."""
    if n < 0 or n > MAX_FREE_ORDER:
        raise PreconditionError(f"order must lie in [0, {MAX_FREE_ORDER}]")
    out = []
    for rgs in _set_partitions(n):
        k = max(rgs) + 1 if rgs else 0
        blocks = tuple(tuple(i + 1 for i in range(n) if rgs[i] == b) for b in range(k))
        if _crossing(blocks):
            continue
        inner = tuple(_is_inner(b, blocks) for b in blocks)
        out.append(NCPartition(blocks, inner))
    return tuple(out)


def catalan(n: int) -> int:
    return comb(2 * n, n) // (n + 1)


def _check_moments(moments, cap):
    m = [float(v) for v in moments]
    if not m or abs(m[0] - 1.0) > 1e-12:
        raise PreconditionError("moment list must start with m0 = 1")
    if len(m) - 1 > cap:
        raise PreconditionError(f"order above {cap} is not supported")
    return m


def free_cumulants_from_moments(moments) -> list[float]:
    """``[r_1, ..., r_N]`` from ``[m_0 = 1, m_1, ..., m_N]`` (N <= 8)."""
    m = _check_moments(moments, MAX_FREE_ORDER)
    r = [0.0]
    for n in range(1, len(m)):
        rest = 0.0
        for p in nc_partitions(n):
            if len(p.blocks) == 1:
                continue
            rest += np.prod([r[s] for s in p.sizes])
        r.append(m[n] - rest)
    return r[1:]


def moments_from_free_cumulants(r, order: int) -> list[float]:
    r = [0.0] + [float(v) for v in r]
    out = [1.0]
    for n in range(1, order + 1):
        out.append(sum(np.prod([r[s] for s in p.sizes]) for p in nc_partitions(n)))
    return out


def cfree_cumulants_from_moments(mu_moments, nu_moments) -> list[float]:
    """Two-state cumulants ``[R_1, ..., R_N]`` of the pair (N <= 6)."""
    m = _check_moments(mu_moments, MAX_CFREE_ORDER)
    r = [0.0] + free_cumulants_from_moments(nu_moments)
    if len(r) < len(m):
        raise PreconditionError("nu needs at least as many moments as mu")
    R = [0.0]
    for n in range(1, len(m)):
        rest = 0.0
        for p in nc_partitions(n):
            if len(p.blocks) == 1:
                continue
            rest += np.prod([r[s] if inner else R[s] for s, inner in zip(p.sizes, p.inner)])
        R.append(m[n] - rest)
    return R[1:]


def moments_from_cfree_cumulants(R, r, order: int) -> list[float]:
    R = [0.0] + [float(v) for v in R]
    r = [0.0] + [float(v) for v in r]
    out = [1.0]
    for n in range(1, order + 1):
        out.append(sum(np.prod([r[s] if inner else R[s] for s, inner in zip(p.sizes, p.inner)])
                       for p in nc_partitions(n)))
    return out


def free_moments(nu1, nu2, order: int | None = None) -> list[float]:
    """Moments of ``nu1 ⊞ nu2`` from their moment lists (order <= 8)."""
    n = min(len(nu1), len(nu2)) - 1 if order is None else order
    r1 = free_cumulants_from_moments(nu1[:n + 1])
    r2 = free_cumulants_from_moments(nu2[:n + 1])
    return moments_from_free_cumulants(np.add(r1, r2), n)


def cfree_moments(mu1, nu1, mu2, nu2, order: int | None = None) -> list[float]:
    """Moments of the first component of ``(mu1, nu1) ⊞c (mu2, nu2)``
    (order <= 6)."""
    n = min(len(mu1), len(mu2)) - 1 if order is None else order
    if n > MAX_CFREE_ORDER:
        raise PreconditionError(f"order above {MAX_CFREE_ORDER} is not supported")
    R1 = cfree_cumulants_from_moments(mu1[:n + 1], nu1[:n + 1])
    R2 = cfree_cumulants_from_moments(mu2[:n + 1], nu2[:n + 1])
    r1 = free_cumulants_from_moments(nu1[:n + 1])
    r2 = free_cumulants_from_moments(nu2[:n + 1])
    return moments_from_cfree_cumulants(np.add(R1, R2), np.add(r1, r2), n)


def classical_moments(m1, m2, order: int | None = None) -> list[float]:
    """Moments of ``m1 * m2`` by the binomial formula."""
    n = min(len(m1), len(m2)) - 1 if order is None else order
    return [sum(comb(k, j) * m1[j] * m2[k - j] for j in range(k + 1)) for k in range(n + 1)]


def atomic_moments(locs, masses, order: int) -> list[float]:
    locs = np.asarray(locs, dtype=float)
    masses = np.asarray(masses, dtype=float)
    return [float(np.sum(masses * locs ** k)) for k in range(order + 1)]
