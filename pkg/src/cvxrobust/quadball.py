"""Exact minimization of a quadratic over an l2 ball (trust-region subproblem).

Used to evaluate the true worst-case margin of a quadratic-form classifier
inside a robustness ball, which the S-procedure certifies.
"""

import numpy as np

from .errors import DomainError
from .polynet import evaluate


def min_quadratic_over_ball(H, p, radius):
    """min over ||delta||_2 <= radius of 0.5 d'Hd + p'd; returns (value, argmin).

    Eigendecomposition-based Moré-Sorensen solve, hard case included.
    """
    if radius < 0:
        raise DomainError("radius must be nonnegative")
    p = np.asarray(p, dtype=float)
    if radius == 0 or p.size == 0:
        return 0.0, np.zeros_like(p)
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    w, V = np.linalg.eigh(H)
    pb = V.T @ p
    lo = w[0]

    def delta_for(nu):
        den = w + nu
        out = np.zeros_like(pb)
        mask = den > 0
        out[mask] = -pb[mask] / den[mask]
        return out

    if lo > 0:
        d0 = delta_for(0.0)
        if np.linalg.norm(d0) <= radius:
            d = V @ d0
            return float(0.5 * d @ H @ d + p @ d), d

    nu_floor = max(0.0, -lo)
    # components orthogonal to the bottom eigenspace at nu = nu_floor
    den = w + nu_floor
    active = den > 1e-14 * max(abs(w[-1]), 1.0)
    norm_at_floor = np.linalg.norm(pb[active] / den[active]) if np.any(active) else 0.0
    bottom = ~active

    if norm_at_floor <= radius and np.all(np.abs(pb[bottom]) <= 1e-11 * max(np.linalg.norm(pb), 1.0)):
        # hard case: pad with a bottom-eigenspace direction to reach the boundary
        d0 = np.zeros_like(pb)
        d0[active] = -pb[active] / den[active]
        if np.any(bottom):
            tau = np.sqrt(max(radius**2 - norm_at_floor**2, 0.0))
            d0[np.argmax(bottom)] = tau
        d = V @ d0
        return float(0.5 * d @ H @ d + p @ d), d

    # secular equation ||delta(nu)|| = radius on (nu_floor, inf); phi decreasing
    hi = nu_floor + np.linalg.norm(pb) / radius + 1.0
    lo_nu = nu_floor
    for _ in range(200):
        mid = 0.5 * (lo_nu + hi)
        den = w + mid
        nrm = np.linalg.norm(pb / den)
        if nrm > radius:
            lo_nu = mid
        else:
            hi = mid
        if hi - lo_nu <= 1e-15 * max(hi, 1.0):
            break
    nu = 0.5 * (lo_nu + hi)
    d0 = -pb / (w + nu)
    # rescale onto the boundary to absorb the final bisection gap
    nd = np.linalg.norm(d0)
    if nd > 0:
        d0 *= radius / nd
    d = V @ d0
    return float(0.5 * d @ H @ d + p @ d), d


def worst_case_margin(clf, x, y, radius):
    """Exact min over the l2 ball of radius `radius` around x of y * f(x + delta)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (clf.dim,):
        raise DomainError("x dimension mismatch")
    if y not in (-1, 1, -1.0, 1.0):
        raise DomainError("y must be +/-1")
    a, b = clf.coeffs.a, clf.coeffs.b
    H = 2.0 * y * a * clf.Q
    p = y * (2.0 * a * (clf.Q @ x) + b * clf.g)
    val, _ = min_quadratic_over_ball(H, p, radius)
    return float(y * evaluate(clf, x) + val)
