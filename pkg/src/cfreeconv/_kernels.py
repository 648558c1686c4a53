"""Compiled kernels for Cauchy transforms of piecewise-linear densities.

For a continuous piecewise-linear density ``f`` on a uniform grid the integral
``int f(t) / (z - t) dt`` has a closed form on every cell.  With
``u = h / (z - b)`` on the cell ``[a, b]`` of width ``h``::

    int_a^b f(t) / (z - t) dt = f(a) log(1 + u) + (f(b) - f(a)) Q(u)
    Q(u) = (1 + u) log(1 + u) / u - 1

Both ``log(1 + u)`` and ``Q(u)`` suffer cancellation when ``|u|`` is small
(``z`` far from the cell), so they switch to their Taylor series there.

Cells are grouped into a tree of blocks (32 cells, then 8 blocks per
parent).  A block seen from far away is replaced by its moment expansion
``sum_k M_k / (z - c)**(k + 1)``; only nearby blocks are opened, which keeps
the cost per point roughly logarithmic in the grid size.
"""

import cmath

import numba
import numpy as np

_SERIES_CUTOFF = 0.05
_SERIES_TERMS = 14

BLOCK_CELLS = 8
FAR_RATIO = 4.0
FAR_ORDER = 24
FANOUT = 4


@numba.njit(cache=True)
def _cell_logs(z, a, b, h):
    w = z - b
    u = h / w
    if abs(u) < _SERIES_CUTOFF:
        lg = 0j
        q = 0j
        # Horner from the highest term down
        for k in range(_SERIES_TERMS, 0, -1):
            sign = 1.0 if k % 2 == 1 else -1.0
            lg = lg * u + sign / k
            q = q * u + sign / (k * (k + 1))
        return lg * u, q * u
    lg = cmath.log(z - a) - cmath.log(w)
    q = (1.0 + u) * lg / u - 1.0
    return lg, q


def block_moments(x0, h, f, block_cells=BLOCK_CELLS, order=FAR_ORDER):
    """Scaled moments ``int ((t - c) / H)**k f(t) dt`` per block of cells.

    Returns ``(starts, centers, half_widths, moments)`` where ``starts`` holds
    the first cell index of each block.
    """
    ncell = len(f) - 1
    starts = np.arange(0, ncell, block_cells)
    ends = np.minimum(starts + block_cells, ncell)
    centers = x0 + h * (starts + ends) / 2.0
    half = h * (ends - starts) / 2.0
    # Gauss-Legendre with enough nodes to be exact for degree order + 1
    nodes, weights = np.polynomial.legendre.leggauss(order // 2 + 2)
    s = (nodes + 1.0) / 2.0
    a = x0 + h * np.arange(ncell)
    t = a[:, None] + h * s[None, :]
    val = f[:-1, None] + (f[1:] - f[:-1])[:, None] * s[None, :]
    w = val * weights[None, :] * h / 2.0
    block = np.arange(ncell) // block_cells
    r = (t - centers[block][:, None]) / half[block][:, None]
    moments = np.zeros((len(starts), order))
    p = np.ones_like(r)
    for k in range(order):
        moments[:, k] = np.bincount(block, weights=(w * p).sum(axis=1), minlength=len(starts))
        p *= r
    return starts, centers, half, moments


def block_tree(x0, h, f, order=FAR_ORDER):
    """Moment expansions for blocks of ``BLOCK_CELLS * FANOUT**L`` cells,
    level by level, concatenated: ``(level_offsets, centers, half, moments)``."""
    offsets = [0]
    cs, hs, ms = [], [], []
    size = BLOCK_CELLS
    while True:
        _, c, hw, m = block_moments(x0, h, f, size, order)
        cs.append(c)
        hs.append(hw)
        ms.append(m)
        offsets.append(offsets[-1] + len(c))
        if len(c) == 1:
            break
        size *= FANOUT
    return (np.array(offsets, dtype=np.int64), np.concatenate(cs), np.concatenate(hs),
            np.concatenate(ms))


@numba.njit(cache=True)
def pl_cauchy(z, x0, h, f, offsets, centers, half, moments, want_deriv):
    """G (and G' if requested) of the piecewise-linear density ``f``."""
    n = f.shape[0]
    ncell = n - 1
    order = moments.shape[1]
    nlev = offsets.shape[0] - 1
    out = np.empty(z.shape[0], dtype=np.complex128)
    dout = np.zeros(z.shape[0], dtype=np.complex128)
    stack_lev = np.empty(64 * FANOUT, dtype=np.int64)
    stack_blk = np.empty(64 * FANOUT, dtype=np.int64)
    for i in range(z.shape[0]):
        zi = z[i]
        acc = 0j
        dacc = 0j
        top = nlev - 1
        sp = 0
        for b in range(offsets[top + 1] - offsets[top]):
            stack_lev[sp] = top
            stack_blk[sp] = b
            sp += 1
        while sp > 0:
            sp -= 1
            lev = stack_lev[sp]
            b = stack_blk[sp]
            k = offsets[lev] + b
            d = zi - centers[k]
            if abs(d) > FAR_RATIO * half[k]:
                r = half[k] / d
                s0 = 0j
                for q in range(order - 1, -1, -1):
                    s0 = s0 * r + moments[k, q]
                acc += s0 / d
                if want_deriv:
                    s1 = 0j
                    for q in range(order - 1, -1, -1):
                        s1 = s1 * r + (q + 1) * moments[k, q]
                    dacc -= s1 / (d * d)
                continue
            if lev > 0:
                nchild = offsets[lev] - offsets[lev - 1]
                for c in range(b * FANOUT, min((b + 1) * FANOUT, nchild)):
                    stack_lev[sp] = lev - 1
                    stack_blk[sp] = c
                    sp += 1
                continue
            e = min((b + 1) * BLOCK_CELLS, ncell)
            for j in range(b * BLOCK_CELLS, e):
                fa = f[j]
                fb = f[j + 1]
                if fa == 0.0 and fb == 0.0:
                    continue
                a = x0 + j * h
                lg, q = _cell_logs(zi, a, a + h, h)
                acc += fa * lg + (fb - fa) * q
                if want_deriv:
                    # integration by parts: -int f/(z-t)^2 = boundary + int f'/(z-t)
                    dacc += (fb - fa) / h * lg + fa / (zi - a) - fb / (zi - a - h)
        out[i] = acc
        dout[i] = dacc
    return out, dout
