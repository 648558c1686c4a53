"""Newton's method with continuation in ``Im z`` for analytic systems on C+.

A system maps unknowns ``W`` of shape (P, J) and points ``z`` of shape (P,)
to ``(R, Jac, scale)``: residuals (P, J), Jacobians (P, J, J) and a size used
to make the stopping test relative.  Every unknown must stay in C+.

The solve starts at height ``y_top`` with ``W = z`` and walks down to the
requested points in steps of ``LEVEL_FACTOR``, predicting each step with the
tangent ``dW/dz = Jac^{-1} e_0`` (the systems used here depend on ``z``
through their first equation only, as ``-z``).  Steps that fail are split.
"""

import numpy as np

from .errors import NumericalError

NEWTON_TOL = 1e-13
ACCEPT_TOL = 1e-12
MAX_NEWTON = 40
LEVEL_FACTOR = 0.25
MAX_SPLIT = 12


def _rnorm(R, z, scale):
    return np.max(np.abs(R), axis=1) / (1.0 + np.abs(z) + scale)


def newton(system, W, z):
    """Damped Newton from ``W``; returns ``(W, ok, Jac)``."""
    W = W.copy()
    P, J = W.shape
    ok = np.zeros(P, dtype=bool)
    Jac_out = np.zeros((P, J, J), dtype=complex)
    active = np.arange(P)
    R, Jac, sc = system(W, z)
    res = _rnorm(R, z, sc)
    for _ in range(MAX_NEWTON):
        conv = res <= NEWTON_TOL
        ok[active[conv]] = True
        Jac_out[active[conv]] = Jac[conv]
        keep = ~conv
        active, R, Jac, res = active[keep], R[keep], Jac[keep], res[keep]
        if not active.size:
            break
        try:
            step = np.linalg.solve(Jac, R[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        Wa = W[active]
        za = z[active]
        t = np.ones(len(active))
        accepted = np.zeros(len(active), dtype=bool)
        for _ in range(30):
            todo = np.flatnonzero(~accepted)
            if not todo.size:
                break
            trial = Wa[todo] - t[todo, None] * step[todo]
            up = np.all(trial.imag > 0, axis=1)
            gi = todo[up]
            if gi.size:
                Rt, Jt, st = system(trial[up], za[gi])
                rt = _rnorm(Rt, za[gi], st)
                better = (rt < res[gi] * (1 - 1e-4 * t[gi])) | (rt <= NEWTON_TOL)
                b = gi[better]
                Wa[b] = trial[up][better]
                R[b], Jac[b], res[b] = Rt[better], Jt[better], rt[better]
                accepted[b] = True
            t[~accepted] /= 2
        W[active] = Wa
        if not np.all(accepted):
            # no descent direction left: stop iterating on these points
            done = ~accepted & (res <= ACCEPT_TOL)
            ok[active[done]] = True
            Jac_out[active[done]] = Jac[done]
            keep = accepted
            active, R, Jac, res = active[keep], R[keep], Jac[keep], res[keep]
            if not active.size:
                break
    if active.size:
        close = res <= ACCEPT_TOL
        ok[active[close]] = True
        Jac_out[active[close]] = Jac[close]
    return W, ok, Jac_out


def _tangent(Jac):
    P, J, _ = Jac.shape
    e0 = np.zeros((P, J, 1), dtype=complex)
    e0[:, 0, 0] = 1.0
    return np.linalg.solve(Jac, e0)[..., 0]


def _walk(system, W, Jac, x, y_from, y_to, depth=0):
    T = _tangent(Jac)
    dz = 1j * (y_to - y_from)
    Wn, ok, Jn = newton(system, W + T * dz[:, None], x + 1j * y_to)
    if np.all(ok):
        return Wn, Jn
    if depth >= MAX_SPLIT:
        raise NumericalError(f"continuation failed at {int((~ok).sum())} points")
    bad = np.flatnonzero(~ok)
    y_mid = np.sqrt(y_from[bad] * y_to[bad])
    Wm, Jm = _walk(system, W[bad], Jac[bad], x[bad], y_from[bad], y_mid, depth + 1)
    Wb, Jb = _walk(system, Wm, Jm, x[bad], y_mid, y_to[bad], depth + 1)
    Wn[bad], Jn[bad] = Wb, Jb
    return Wn, Jn


def continuation_solve(system, z, J, y_top):
    """Solve ``system`` at the points ``z`` (1-d, Im z > 0); returns (P, J)."""
    x, y = z.real, z.imag
    y_top = max(y_top, 2.0 * y.max())
    zt = x + 1j * y_top
    W, ok, Jac = newton(system, np.repeat(zt[:, None], J, axis=1), zt)
    if not np.all(ok):
        raise NumericalError("continuation start point did not converge")
    ycur = np.full(x.shape, y_top)
    while np.any(ycur > y):
        ynext = np.maximum(ycur * LEVEL_FACTOR, y)
        move = np.flatnonzero(ycur > y)
        Wm, Jm = _walk(system, W[move], Jac[move], x[move], ycur[move], ynext[move])
        W[move], Jac[move] = Wm, Jm
        ycur = ynext
    return W
