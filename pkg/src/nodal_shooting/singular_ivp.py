"""Singular initial value problems ``w'' + (H(r)/r) w' + mu g(w) = 0``.

Here ``g(w) = |w|^(p-1) w - linear * w`` with ``linear = 1`` for the sphere
equation and ``linear = 0`` for the Emden-Fowler limit.  The solution is
launched from a truncated series at a small radius ``r_start`` and continued
with an embedded Dormand-Prince 5(4) pair under PI step control.  Node data
``(w, w', w'', w''')`` feed a piecewise quintic Hermite interpolant that is
used for dense output, event location and residual checks.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import geometry
from .errors import IntegrationError

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
PI_BETA = 0.04
PI_ALPHA = 0.2 - 0.75 * PI_BETA
MIN_STEP = 1e-14
MAX_STEPS = 2_000_000
RESCALE_ABOVE = 1e4
EVENT_XTOL = 1e-13
ZERO_GRADING = 0.25
ZERO_FLOOR = 1e-6

# Dormand-Prince 5(4)
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


@dataclass(frozen=True)
class SingularProblem:
    """One singular IVP on ``[0, A]`` with ``w(0) = d``, ``w'(0) = 0``.

    ``damping`` is an optional fast scalar version of ``H(r)/r`` and
    ``damping_prime`` its derivative; without them both are derived from
    ``H`` (the derivative by central differences).
    """

    H: Callable[[float], float]
    A: float
    mu: float
    p: float
    d: float
    linear: float = 1.0
    damping: Optional[Callable[[float], float]] = None
    damping_prime: Optional[Callable[[float], float]] = None
    label: str = ""
    H0: float = field(init=False)

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError(f"A must be positive, got {self.A}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        h0 = float(self.H(0.0))
        if not math.isfinite(h0):
            raise ValueError("H(0) must be finite")
        object.__setattr__(self, "H0", h0)

    def coef(self, r: float) -> float:
        if self.damping is not None:
            return self.damping(r)
        return self.H(r) / r

    def coef_prime(self, r: float) -> float:
        if self.damping_prime is not None:
            return self.damping_prime(r)
        dr = 1e-6 * max(r, 1e-3)
        return (self.coef(r + dr) - self.coef(r - dr)) / (2 * dr)

    def nonlinearity(self, w):
        return np.abs(w) ** (self.p - 1) * w - self.linear * w

    def nonlinearity_prime(self, w):
        return self.p * np.abs(w) ** (self.p - 1) - self.linear


# --------------------------------------------------------------------------
# series launch


def _gtilde(problem: SingularProblem, t: float) -> float:
    return abs(t) ** (problem.p - 1) * t - problem.linear * t


def series_coefficients(problem: SingularProblem) -> tuple[float, float]:
    """``(a2, a4)`` in ``w = d + a2 r^2 + a4 r^4 + ...``."""
    mu, d, H0 = problem.mu, problem.d, problem.H0
    a2 = -mu * _gtilde(problem, d) / (2 * (1 + H0))
    delta = 1e-3 * min(problem.A, 1.0)
    H2 = (float(problem.H(delta)) - H0) / delta**2
    gp = problem.p * abs(d) ** (problem.p - 1) - problem.linear
    a4 = -a2 * (2 * H2 + mu * gp) / (4 * (3 + H0))
    return a2, a4


def series_start(problem: SingularProblem, r_start: float) -> tuple[float, float]:
    """Second order series state ``(w, w')`` at ``r_start``."""
    if not 0 < r_start <= 1e-3 * problem.A * (1 + 1e-12):
        raise ValueError(f"r_start={r_start!r} must lie in (0, 1e-3*A] with A={problem.A!r}")
    k = problem.mu * _gtilde(problem, problem.d) / (1 + problem.H0)
    return problem.d - k * r_start**2 / 2, -k * r_start


def launch_radius(problem: SingularProblem, atol: float, rtol: float) -> float:
    """Smallest sensible launch radius keeping the dropped ``r^4`` term under tolerance.

    Both ``w`` and ``w'`` are checked; the error in ``w'`` matters because the
    ``H/r`` damping amplifies it right after the launch.
    """
    a2, a4 = series_coefficients(problem)
    upper = 1e-3 * problem.A
    tol = 0.1 * (atol + rtol * abs(problem.d))
    if a4 == 0.0:
        return upper
    r = (tol / abs(a4)) ** 0.25
    r = min(r, math.sqrt(0.05 * rtol * abs(a2) / abs(a4)))
    return min(upper, max(r, 1e-9 * problem.A))


# --------------------------------------------------------------------------
# Dormand-Prince core


def _dopri(problem: SingularProblem, r0: float, w0: float, v0: float, atol: float, rtol: float, max_step: float):
    mu, p, lin, A = problem.mu, problem.p, problem.linear, problem.A
    pm1 = p - 1.0
    coef = problem.coef
    fabs = abs
    isfinite = math.isfinite

    def acc(r, w, v):
        return -coef(r) * v - mu * (fabs(w) ** pm1 * w - lin * w)

    rs = [r0]
    ws = [w0]
    vs = [v0]
    r, w, v = r0, w0, v0
    a1 = acc(r, w, v)
    as_ = [a1]

    # initial step (Hairer & Wanner heuristic), capped by the launch radius scale
    sw0 = atol + rtol * fabs(w)
    sv0 = atol + rtol * fabs(v)
    d0 = math.sqrt(((w / sw0) ** 2 + (v / sv0) ** 2) / 2)
    d1 = math.sqrt(((v / sw0) ** 2 + (a1 / sv0) ** 2) / 2)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, max_step, r0)
    w1 = w + h * v
    v1 = v + h * a1
    a_1 = acc(r + h, w1, v1)
    d2 = math.sqrt((((v1 - v) / sw0) ** 2 + ((a_1 - a1) / sv0) ** 2) / 2) / h
    dm = max(d1, d2)
    h1 = max(1e-6, h * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.2
    h = min(100 * h, h1, max_step, r0)

    # |w|^(p-1) w is only finitely smooth at w = 0 unless p is an odd integer,
    # so near a zero the steps are kept below ZERO_GRADING times the distance
    # to it (down to a floor) and a node is landed on the zero itself
    land = not (float(p).is_integer() and int(p) % 2 == 1)
    zfloor = ZERO_FLOOR * max_step
    landing = landed = False
    z_last = -math.inf

    errold = 1e-4
    reject = False
    nsteps = 0
    while r < A:
        if nsteps > MAX_STEPS:
            raise IntegrationError("too many steps", r, {"w": w, "wp": v, "steps": nsteps})
        if h < MIN_STEP:
            raise IntegrationError(f"step size collapsed below {MIN_STEP:g} at r={r!r}", r, {"w": w, "wp": v, "h": h})
        if land:
            gap = r - z_last
            if w * v < 0:
                gap = min(gap, -w / v)
            h = min(h, max(ZERO_GRADING * gap, zfloor))
        last = False
        if r + 1.01 * h >= A:
            h = A - r
            last = True
        # stage 1 slope is (v, a1)
        kw1, kv1 = v, a1
        kw2 = v + h * A21 * kv1
        ww = w + h * A21 * kw1
        kv2 = acc(r + C2 * h, ww, kw2)
        ww = w + h * (A31 * kw1 + A32 * kw2)
        kw3 = v + h * (A31 * kv1 + A32 * kv2)
        kv3 = acc(r + C3 * h, ww, kw3)
        ww = w + h * (A41 * kw1 + A42 * kw2 + A43 * kw3)
        kw4 = v + h * (A41 * kv1 + A42 * kv2 + A43 * kv3)
        kv4 = acc(r + C4 * h, ww, kw4)
        ww = w + h * (A51 * kw1 + A52 * kw2 + A53 * kw3 + A54 * kw4)
        kw5 = v + h * (A51 * kv1 + A52 * kv2 + A53 * kv3 + A54 * kv4)
        kv5 = acc(r + C5 * h, ww, kw5)
        ww = w + h * (A61 * kw1 + A62 * kw2 + A63 * kw3 + A64 * kw4 + A65 * kw5)
        kw6 = v + h * (A61 * kv1 + A62 * kv2 + A63 * kv3 + A64 * kv4 + A65 * kv5)
        kv6 = acc(r + h, ww, kw6)
        wn = w + h * (B1 * kw1 + B3 * kw3 + B4 * kw4 + B5 * kw5 + B6 * kw6)
        vn = v + h * (B1 * kv1 + B3 * kv3 + B4 * kv4 + B5 * kv5 + B6 * kv6)
        rn = A if last else r + h
        an = acc(rn, wn, vn)
        if not (isfinite(wn) and isfinite(vn) and isfinite(an)):
            if h > 1e3 * MIN_STEP:
                h *= 0.25
                reject = True
                continue
            raise IntegrationError(
                f"non-finite state near r={r!r}", r, {"w": w, "wp": v, "h": h, "blow_up": True}
            )
        ew = h * (E1 * kw1 + E3 * kw3 + E4 * kw4 + E5 * kw5 + E6 * kw6 + E7 * vn)
        ev = h * (E1 * kv1 + E3 * kv3 + E4 * kv4 + E5 * kv5 + E6 * kv6 + E7 * an)
        sw = atol + rtol * max(fabs(w), fabs(wn))
        sv = atol + rtol * max(fabs(v), fabs(vn))
        err = math.sqrt(((ew / sw) ** 2 + (ev / sv) ** 2) / 2)
        fac11 = err**PI_ALPHA if err > 0 else 0.0
        if err <= 1.0:
            fac = fac11 / errold**PI_BETA
            fac = max(1 / FAC_MAX, min(1 / FAC_MIN, fac / SAFETY))
            hnew = h / fac
            if land and not (landing or landed) and w * wn < 0:
                dist = _crossing_fraction(w, v, wn, vn, h) * h
                if dist > 1e-3 * zfloor and h - dist > 1e-9 * h:
                    if dist > 2 * zfloor:
                        h = ZERO_GRADING * dist
                    else:
                        h = dist
                        landing = True
                    continue
            errold = max(err, 1e-4)
            r, w, v, a1 = rn, wn, vn, an
            rs.append(r)
            ws.append(w)
            vs.append(v)
            as_.append(a1)
            nsteps += 1
            if reject:
                hnew = min(hnew, h)
            reject = False
            h = min(hnew, max_step)
            landed = landing
            if landing:
                z_last = r
                landing = False
        else:
            h = h / min(1 / FAC_MIN, fac11 / SAFETY)
            reject = True
    return rs, ws, vs, as_


def _crossing_fraction(w0, v0, w1, v1, h):
    """Zero in ``(0, 1)`` of the cubic Hermite through ``(w0, h v0)`` and ``(w1, h v1)``."""
    d0, d1 = h * v0, h * v1

    def cubic(t):
        t2 = t * t
        t3 = t2 * t
        return ((2 * t3 - 3 * t2 + 1) * w0 + (t3 - 2 * t2 + t) * d0
                + (-2 * t3 + 3 * t2) * w1 + (t3 - t2) * d1)

    return brentq(cubic, 0.0, 1.0, xtol=1e-14)


# --------------------------------------------------------------------------
# quintic Hermite dense output


def _quintic_coeffs(x, y, dy, ddy):
    hh = np.diff(x)
    c0 = y[:-1]
    c1 = hh * dy[:-1]
    c2 = 0.5 * hh**2 * ddy[:-1]
    Y1 = y[1:] - (c0 + c1 + c2)
    D1 = hh * dy[1:] - (c1 + 2 * c2)
    S1 = hh**2 * ddy[1:] - 2 * c2
    c3 = 10 * Y1 - 4 * D1 + 0.5 * S1
    c4 = -15 * Y1 + 7 * D1 - S1
    c5 = 6 * Y1 - 3 * D1 + 0.5 * S1
    return hh, np.stack([c0, c1, c2, c3, c4, c5], axis=1)


def _poly_eval(coeffs, hh, idx, t, order):
    c = coeffs[idx]
    if order == 0:
        return c[..., 0] + t * (c[..., 1] + t * (c[..., 2] + t * (c[..., 3] + t * (c[..., 4] + t * c[..., 5]))))
    dp = c[..., 1] + t * (2 * c[..., 2] + t * (3 * c[..., 3] + t * (4 * c[..., 4] + t * 5 * c[..., 5])))
    return dp / hh[idx]


@dataclass(frozen=True, eq=False)
class SolutionTrajectory:
    """Dense solution of a singular IVP with located zeros and critical points.

    ``reflected`` marks a trajectory that was integrated from ``pi`` towards
    ``a0`` and mapped back to the original radius ``r -> pi - r``.
    """

    r: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    wpp: np.ndarray
    wppp: np.ndarray
    zeros: np.ndarray
    criticals: np.ndarray
    problem: SingularProblem
    r_start: float
    atol: float
    rtol: float
    reflected: bool = False
    rescaled: bool = False

    def __post_init__(self):
        for name in ("r", "w", "wp", "wpp", "wppp", "zeros", "criticals"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        hh, cw = _quintic_coeffs(self.r, self.w, self.wp, self.wpp)
        _, cv = _quintic_coeffs(self.r, self.wp, self.wpp, self.wppp)
        object.__setattr__(self, "_hh", hh)
        object.__setattr__(self, "_cw", cw)
        object.__setattr__(self, "_cv", cv)

    # -- dense output
    @property
    def domain(self) -> tuple[float, float]:
        return float(self.r[0]), float(self.r[-1])

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise ValueError(f"evaluation outside trajectory domain [{lo}, {hi}]")
        x = np.clip(x, lo, hi)
        idx = np.clip(np.searchsorted(self.r, x, side="right") - 1, 0, len(self.r) - 2)
        t = (x - self.r[idx]) / self._hh[idx]
        return x, idx, t

    def eval(self, x):
        """``w`` at ``x`` (scalar or array)."""
        _, idx, t = self._locate(x)
        out = _poly_eval(self._cw, self._hh, idx, t, 0)
        return float(out) if out.ndim == 0 else out

    def eval_derivative(self, x):
        """``w'`` at ``x`` from the derivative channel."""
        _, idx, t = self._locate(x)
        out = _poly_eval(self._cv, self._hh, idx, t, 0)
        return float(out) if out.ndim == 0 else out

    def eval_second(self, x):
        """``w''`` as the derivative of the ``w'`` channel."""
        _, idx, t = self._locate(x)
        out = _poly_eval(self._cv, self._hh, idx, t, 1)
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    # -- ODE data in the original radius
    def coef_at(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.reflected:
            vals = [-self.problem.coef(math.pi - xi) for xi in x]
        else:
            vals = [self.problem.coef(xi) for xi in x]
        return np.asarray(vals)

    def singular_margin(self) -> tuple[float, float]:
        """Sub-interval where the trajectory was integrated (outside the series launch)."""
        lo, hi = self.domain
        if self.reflected:
            return lo, hi - self.r_start
        return lo + self.r_start, hi

    def ode_residual(self, x):
        """Residual of the ODE on the interpolant and the magnitude of its terms."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        w = self.eval(x)
        wp = self.eval_derivative(x)
        wpp = self.eval_second(x)
        cw = self.coef_at(x) * wp
        gw = self.problem.mu * self.problem.nonlinearity(w)
        res = wpp + cw + gw
        scale = np.maximum.reduce([np.abs(wpp), np.abs(cw), np.abs(gw)])
        return res, scale

    # -- summaries
    @property
    def endpoint(self) -> tuple[float, float]:
        """``(w, w')`` at the far end of the integration (``A`` forward, ``pi - A`` reflected)."""
        if self.reflected:
            return float(self.w[0]), float(self.wp[0])
        return float(self.w[-1]), float(self.wp[-1])

    def zeros_in(self, lo: float, hi: float) -> np.ndarray:
        z = self.zeros
        return z[(z > lo) & (z < hi)]

    @property
    def max_step(self) -> float:
        return float(np.max(self._hh))

    def local_step(self, x: float) -> float:
        _, idx, _ = self._locate(x)
        return float(self._hh[idx])

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["r", "w", "wp"])
        for row in zip(self.r, self.w, self.wp):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue() if fh is None else ""

    def metadata(self) -> dict:
        pr = self.problem
        return {
            "label": pr.label,
            "A": pr.A,
            "mu": pr.mu,
            "p": pr.p,
            "d": pr.d,
            "linear": pr.linear,
            "H0": pr.H0,
            "atol": self.atol,
            "rtol": self.rtol,
            "r_start": self.r_start,
            "reflected": self.reflected,
            "rescaled": self.rescaled,
            "nodes": int(len(self.r)),
            "domain": list(self.domain),
            "endpoint": list(self.endpoint),
            "zeros": [float(z) for z in self.zeros],
            "criticals": [float(z) for z in self.criticals],
        }

    def to_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# events


def _sign_brackets(xs, ys):
    nz = np.flatnonzero(ys != 0.0)
    if len(nz) < 2:
        return []
    s = np.sign(ys[nz])
    flips = np.flatnonzero(s[:-1] * s[1:] < 0)
    return [(xs[nz[i]], xs[nz[i + 1]]) for i in flips]


def _find_roots(fun, grid_x, grid_y):
    roots = []
    for a, b in _sign_brackets(grid_x, grid_y):
        roots.append(brentq(fun, a, b, xtol=EVENT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200))
    return np.asarray(roots, dtype=float)


def _event_grid(r):
    hh = np.diff(r)
    frac = np.array([0.0, 0.25, 0.5, 0.75])
    grid = (r[:-1, None] + hh[:, None] * frac[None, :]).ravel()
    return np.append(grid, r[-1])


def locate_events(traj: SolutionTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Zeros of ``w`` and ``w'`` bracketed on a sub-sampled grid and refined with Brent's method."""
    grid = _event_grid(traj.r)
    zeros = _find_roots(traj.eval, grid, traj.eval(grid))
    crit = _find_roots(traj.eval_derivative, grid, traj.eval_derivative(grid))
    return zeros, crit


# --------------------------------------------------------------------------
# integration drivers


def _check_tols(atol, rtol):
    for name, v in (("atol", atol), ("rtol", rtol)):
        if not 1e-14 <= v <= 1e-4:
            raise ValueError(f"{name}={v!r} outside [1e-14, 1e-4]")


def _assemble(problem, r_start, rs, ws, vs, as_, atol, rtol, rescaled=False, scale=None):
    r = np.asarray(rs)
    w = np.asarray(ws)
    v = np.asarray(vs)
    a = np.asarray(as_)
    # node at the singular endpoint: w'' -> -mu g(d)/(1+H0), w''' -> 0
    a_zero = -problem.mu * _gtilde(problem, problem.d) / (1 + problem.H0)
    r = np.concatenate([[0.0], r])
    w = np.concatenate([[problem.d], w])
    v = np.concatenate([[0.0], v])
    a = np.concatenate([[a_zero], a])
    cvals = np.array([problem.coef(x) for x in r[1:]])
    cprime = np.array([problem.coef_prime(x) for x in r[1:]])
    j = -cprime * v[1:] - cvals * a[1:] - problem.mu * problem.nonlinearity_prime(w[1:]) * v[1:]
    jerk = np.concatenate([[0.0], j])
    if scale is not None:
        amp, beta = scale
        r = r / beta
        w, v, a, jerk = amp * w, amp * beta * v, amp * beta**2 * a, amp * beta**3 * jerk
        r_start = r_start / beta
    return r, w, v, a, jerk, r_start


def integrate(problem: SingularProblem, atol: float = 1e-10, rtol: float = 1e-10, rescale: Optional[bool] = None) -> SolutionTrajectory:
    """Integrate ``problem`` on ``[0, A]``.

    For ``|d| > 1e4`` (or ``rescale=True``) the amplitude-normalised variable
    ``z(s) = w(s / beta) / |d|`` with ``beta = sqrt(mu) |d|^((p-1)/2)`` is
    integrated instead and mapped back.
    """
    _check_tols(atol, rtol)
    if rescale is None:
        rescale = abs(problem.d) > RESCALE_ABOVE
    if rescale and problem.d != 0:
        return _integrate_rescaled(problem, atol, rtol)
    r0 = launch_radius(problem, atol, rtol)
    w0, v0 = series_start(problem, r0)
    rs, ws, vs, as_ = _dopri(problem, r0, w0, v0, atol, rtol, problem.A / 50)
    r, w, v, a, jerk, r_start = _assemble(problem, r0, rs, ws, vs, as_, atol, rtol)
    traj = SolutionTrajectory(r, w, v, a, jerk, np.empty(0), np.empty(0), problem, r_start, atol, rtol)
    zeros, crit = locate_events(traj)
    object.__setattr__(traj, "zeros", _frozen(zeros))
    object.__setattr__(traj, "criticals", _frozen(crit))
    return traj


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _integrate_rescaled(problem: SingularProblem, atol, rtol) -> SolutionTrajectory:
    amp = abs(problem.d)
    beta = math.sqrt(problem.mu) * amp ** ((problem.p - 1) / 2)
    base = problem

    def Hs(s):
        return base.H(s / beta)

    def cs(s):
        return base.coef(s / beta) / beta

    def cps(s):
        return base.coef_prime(s / beta) / beta**2

    zprob = SingularProblem(
        Hs, base.A * beta, 1.0, base.p, math.copysign(1.0, base.d), base.linear * amp ** (1 - base.p),
        cs, cps, label=base.label + ":rescaled",
    )
    z_atol = max(atol / amp, 1e-14)
    r0 = launch_radius(zprob, z_atol, rtol)
    w0, v0 = series_start(zprob, r0)
    rs, ws, vs, as_ = _dopri(zprob, r0, w0, v0, z_atol, rtol, zprob.A / 50)
    r, w, v, a, jerk, r_start = _assemble(zprob, r0, rs, ws, vs, as_, z_atol, rtol, scale=(amp, beta))
    r[-1] = base.A
    traj = SolutionTrajectory(r, w, v, a, jerk, np.empty(0), np.empty(0), base, r_start, atol, rtol, rescaled=True)
    zeros, crit = locate_events(traj)
    object.__setattr__(traj, "zeros", _frozen(zeros))
    object.__setattr__(traj, "criticals", _frozen(crit))
    return traj


# --------------------------------------------------------------------------
# sphere-family problems


def family_problem(family, mu: float, p: float, d: float, A: Optional[float] = None, reflected: bool = False) -> SingularProblem:
    """IVP with ``H(r) = h(r) r / sin r`` (or the reflected profile) on ``[0, A]``."""
    s = 0.5 * (family.m_minus + family.m_plus)
    t = 0.5 * (family.m_plus - family.m_minus)
    if reflected:
        t = -t
    a0 = geometry.a0(family)
    if A is None:
        A = math.pi - a0 if reflected else a0
    if not 0 < A < math.pi:
        raise ValueError(f"A={A!r} must lie in (0, pi)")
    cos, sin = math.cos, math.sin

    def H(r):
        r = np.asarray(r, dtype=float)
        hr = s * np.cos(r) - t
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(r == 0, hr, hr * r / np.where(r == 0, 1.0, np.sin(r)))
        return float(out) if out.ndim == 0 else out

    def damping(r):
        return (s * cos(r) - t) / sin(r)

    def damping_prime(r):
        sr = sin(r)
        return -s - (s * cos(r) - t) * cos(r) / (sr * sr)

    side = "backward" if reflected else "forward"
    label = f"{side}:ell={family.ell},m=({family.m_minus},{family.m_plus})"
    return SingularProblem(H, float(A), float(mu), float(p), float(d), 1.0, damping, damping_prime, label)


def _warn_admissible(family, p):
    rng = geometry.admissible_p(family)
    if not rng.contains(p):
        warnings.warn(f"p={p} outside the admissible window (1, {rng.upper})", RuntimeWarning, stacklevel=3)


def solve_forward(family, mu: float, p: float, d: float, atol: float = 1e-10, rtol: float = 1e-10, A: Optional[float] = None) -> SolutionTrajectory:
    """Trajectory from ``w(0) = d`` up to the matching point ``a0`` (or ``A``)."""
    _warn_admissible(family, p)
    return integrate(family_problem(family, mu, p, d, A), atol, rtol)


def reflect(traj: SolutionTrajectory) -> SolutionTrajectory:
    """Map a trajectory in ``s = pi - r`` back to the radius ``r``."""
    r = math.pi - traj.r[::-1]
    return SolutionTrajectory(
        r, traj.w[::-1], -traj.wp[::-1], traj.wpp[::-1], -traj.wppp[::-1],
        (math.pi - traj.zeros)[::-1], (math.pi - traj.criticals)[::-1],
        traj.problem, traj.r_start, traj.atol, traj.rtol, reflected=True, rescaled=traj.rescaled,
    )


def solve_backward(family, mu: float, p: float, c: float, atol: float = 1e-10, rtol: float = 1e-10, A: Optional[float] = None) -> SolutionTrajectory:
    """Trajectory with ``w(pi) = c``, ``w'(pi) = 0`` on ``[a0, pi]`` (or ``[pi - A, pi]``)."""
    _warn_admissible(family, p)
    return reflect(integrate(family_problem(family, mu, p, c, A, reflected=True), atol, rtol))


# --------------------------------------------------------------------------
# fixed-step oracle


def rk4_fixed(problem: SingularProblem, step: float, r_start: Optional[float] = None):
    """Classical RK4 with a constant step; returns arrays ``r, w, w'``.

    Independent of the adaptive path: used only as a test oracle.
    """
    if r_start is None:
        r_start = min(step, 1e-3 * problem.A)
    w, v = series_start(problem, r_start)
    mu, p, lin = problem.mu, problem.p, problem.linear
    coef = problem.coef
    n = int(math.ceil((problem.A - r_start) / step))
    hstep = (problem.A - r_start) / n
    rs = np.empty(n + 1)
    ws = np.empty(n + 1)
    vs = np.empty(n + 1)
    r = r_start
    rs[0], ws[0], vs[0] = r, w, v

    def acc(r, w, v):
        return -coef(r) * v - mu * (abs(w) ** (p - 1) * w - lin * w)

    for i in range(1, n + 1):
        k1w, k1v = v, acc(r, w, v)
        k2w, k2v = v + 0.5 * hstep * k1v, acc(r + 0.5 * hstep, w + 0.5 * hstep * k1w, v + 0.5 * hstep * k1v)
        k3w, k3v = v + 0.5 * hstep * k2v, acc(r + 0.5 * hstep, w + 0.5 * hstep * k2w, v + 0.5 * hstep * k2v)
        k4w, k4v = v + hstep * k3v, acc(r + hstep, w + hstep * k3w, v + hstep * k3v)
        w = w + hstep / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
        v = v + hstep / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        r = r_start + i * hstep
        rs[i], ws[i], vs[i] = r, w, v
    return rs, ws, vs


def count_sign_changes(values) -> int:
    values = np.asarray(values, dtype=float)
    values = values[values != 0]
    return int(np.sum(np.sign(values[:-1]) != np.sign(values[1:])))
