"""Vectorised adaptive Simpson quadrature."""

from __future__ import annotations

import numpy as np

from .errors import ShootingError


class QuadratureError(ShootingError):
    """Adaptive refinement did not reach the requested tolerance."""


def _simpson(fa, fm, fb, h):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, breakpoints, tol: float = 1e-10, max_depth: int = 40) -> float:
    """Integral of vectorised ``f`` over ``[breakpoints[0], breakpoints[-1]]``.

    Every interval between consecutive breakpoints starts as one Simpson panel;
    a panel is accepted when the Richardson estimate ``|S2 - S1| / 15`` is
    below its share of ``tol`` (proportional to its length), otherwise it is
    halved.  Refinement also stops once the summed error estimate of all
    panels fits the global budget, which copes with endpoint singularities
    like ``sqrt(x)``.  All panels of one generation are evaluated in a single call.
    """
    x = np.asarray(breakpoints, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("need at least two breakpoints")
    if np.any(np.diff(x) < 0):
        raise ValueError("breakpoints must be non-decreasing")
    x = np.unique(x)
    if len(x) < 2:
        return 0.0
    total_len = x[-1] - x[0]
    a, b = x[:-1], x[1:]
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, b - a)
    result = 0.0
    spent = 0.0
    for _ in range(max_depth):
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(np.concatenate([lm, rm])).reshape(2, -1)
        left = _simpson(fa, flm, fm, m - a)
        right = _simpson(fm, frm, fb, b - m)
        err = (left + right - whole) / 15.0
        if spent + float(np.sum(np.abs(err))) <= tol:
            return result + float(np.sum(left + right + err))
        ok = np.abs(err) <= tol * (b - a) / total_len
        result += float(np.sum((left + right + err)[ok]))
        spent += float(np.sum(np.abs(err[ok])))
        keep = ~ok
        if not np.any(keep):
            return result
        a, m, b = a[keep], m[keep], b[keep]
        fa, fm, fb, flm, frm = fa[keep], fm[keep], fb[keep], flm[keep], frm[keep]
        left, right = left[keep], right[keep]
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        fa, fb = np.concatenate([fa, fm]), np.concatenate([fm, fb])
        fm = np.concatenate([flm, frm])
        whole = np.concatenate([left, right])
        m = 0.5 * (a + b)
    raise QuadratureError(f"adaptive Simpson did not converge after {max_depth} levels ({len(a)} panels left)")
