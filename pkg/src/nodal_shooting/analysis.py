"""Numerical checks of the energy method and of the blow-up rescaling.

Notation for a trajectory of ``w'' + c(r) w' + g(w) = 0`` with
``c = h / sin`` on the forward side:

* ``g(t) = mu (|t|^(p-1) t - t)`` and ``G(t) = mu (|t|^(p+1)/(p+1) - t^2/2)``;
* energy ``E = w'^2 / 2 + G(w)`` with ``E' = -c w'^2``;
* integrating factor ``q`` with ``q'/q = c``;
* ``zeta`` solving ``zeta' = c zeta - 1``, ``zeta(a0) = 0``, i.e.
  ``zeta(r) = q(r) int_r^a0 ds / q(s)``;
* ``P = q w w' + 2 q zeta E`` whose derivative is
  ``q (G(w) (4 c zeta - 2) - g(w) w)``.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from . import geometry
from .errors import IntegrationError, ShootingError
from .quadrature import adaptive_simpson
from .singular_ivp import SingularProblem, SolutionTrajectory, family_problem, integrate

ZETA_FLOOR = 1e-6


def G_fun(t, mu: float, p: float, linear: float = 1.0):
    t = np.asarray(t, dtype=float)
    return mu * (np.abs(t) ** (p + 1) / (p + 1) - linear * t * t / 2)


def g_fun(t, mu: float, p: float, linear: float = 1.0):
    t = np.asarray(t, dtype=float)
    return mu * (np.abs(t) ** (p - 1) * t - linear * t)


# --------------------------------------------------------------------------
# energy


@dataclass
class EnergyTrace:
    r: np.ndarray
    E: np.ndarray
    coef_sign: np.ndarray
    max_increase: float
    max_decrease: float

    @property
    def samples(self):
        return list(zip(self.r.tolist(), self.E.tolist()))

    def nonincreasing(self, slack: float = 1e-9) -> bool:
        """``E`` does not rise between consecutive nodes where ``h >= 0``."""
        return self.max_increase <= slack

    def nondecreasing(self, slack: float = 1e-9) -> bool:
        """``E`` does not fall between consecutive nodes where ``h <= 0``."""
        return self.max_decrease <= slack

    @property
    def minimum(self) -> float:
        return float(np.min(self.E))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["r", "E"])
        for a, b in zip(self.r, self.E):
            wr.writerow([repr(float(a)), repr(float(b))])
        return buf.getvalue()

    def report(self) -> dict:
        return {"nodes": int(len(self.r)), "min_E": self.minimum, "max_E": float(np.max(self.E)),
                "max_increase_where_h_nonneg": self.max_increase,
                "max_decrease_where_h_nonpos": self.max_decrease}


def energy_trace(traj: SolutionTrajectory, family=None, mu: Optional[float] = None,
                 p: Optional[float] = None) -> EnergyTrace:
    """Energy at every node, with the monotonicity defect on each sign of ``h``."""
    mu = traj.problem.mu if mu is None else mu
    p = traj.problem.p if p is None else p
    r, w, wp = traj.r, traj.w, traj.wp
    E = wp * wp / 2 + G_fun(w, mu, p, traj.problem.linear)
    mid = 0.5 * (r[:-1] + r[1:])
    sign = np.sign(traj.coef_at(mid))
    dE = np.diff(E)
    inc = dE[sign >= 0]
    dec = -dE[sign <= 0]
    return EnergyTrace(r.copy(), E, sign, float(inc.max(initial=0.0)), float(dec.max(initial=0.0)))


def energy_derivative_check(traj: SolutionTrajectory, points: Sequence[float], step: float = 1e-6) -> float:
    """Max relative gap between a central difference of ``E`` and ``-c w'^2``."""
    pr = traj.problem
    lo, hi = traj.singular_margin()
    worst = 0.0
    for x in points:
        if not lo + 2 * step < x < hi - 2 * step:
            continue
        E = [traj.eval_derivative(y) ** 2 / 2 + float(G_fun(traj.eval(y), pr.mu, pr.p, pr.linear))
             for y in (x - step, x + step)]
        fd = (E[1] - E[0]) / (2 * step)
        exact = -float(traj.coef_at(x)[0]) * traj.eval_derivative(x) ** 2
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-300))
    return worst


# --------------------------------------------------------------------------
# integrating factor and zeta


def q_factor(family, r):
    r = np.asarray(r, dtype=float)
    mm, mp = family.m_minus, family.m_plus
    out = 2.0 ** ((mm + mp) / 2) * np.sin(r / 2) ** mm * np.cos(r / 2) ** mp
    return float(out) if out.ndim == 0 else out


def _coef(family, r):
    return geometry.h_coeff(family, r) / np.sin(r)


def q_identity_check(family, grid=None, step: float = 1e-7) -> float:
    """Max ``|q'/q - h/sin|`` with ``q'/q`` from central differences of ``log q``."""
    if grid is None:
        grid = np.linspace(0.01, math.pi - 0.01, 10_000)
    grid = np.asarray(grid, dtype=float)
    dlog = (np.log(q_factor(family, grid + step)) - np.log(q_factor(family, grid - step))) / (2 * step)
    return float(np.max(np.abs(dlog - _coef(family, grid))))


class Zeta:
    """``zeta`` on ``[0, a0]`` from backward integration of its linear ODE.

    Below ``ZETA_FLOOR`` the small-``r`` form is used: ``zeta ~ r/(m-1)`` for
    ``m = m_- >= 2`` and ``zeta ~ -r log r + C r`` for ``m_- = 1``, with the
    constant fitted to the integrated value at the floor.
    """

    def __init__(self, family, rtol: float = 1e-12, atol: float = 1e-15):
        self.family = family
        self.a0 = geometry.a0(family)
        self.m = family.m_minus
        fam = family

        def rhs(r, z):
            return _coef(fam, r) * z - 1.0

        sol = solve_ivp(rhs, (self.a0, ZETA_FLOOR), [0.0], method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True)
        if not sol.success:
            raise IntegrationError(f"zeta integration failed: {sol.message}")
        self._dense = sol.sol
        self.nfev = sol.nfev
        zf = float(sol.sol(ZETA_FLOOR)[0])
        self._floor_value = zf
        if self.m >= 2:
            self._slope = zf / ZETA_FLOOR
        else:
            self._slope = zf / ZETA_FLOOR + math.log(ZETA_FLOOR)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < -1e-15) or np.any(r > self.a0 + 1e-12):
            raise ValueError(f"zeta is defined on [0, a0={self.a0}]")
        r = np.clip(r, 0.0, self.a0)
        out = np.empty_like(r)
        small = r < ZETA_FLOOR
        big = ~small
        if np.any(big):
            out[big] = self._dense(r[big])[0]
        if np.any(small):
            rs = r[small]
            if self.m >= 2:
                out[small] = self._slope * rs
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    out[small] = np.where(rs > 0, rs * (self._slope - np.log(np.where(rs > 0, rs, 1.0))), 0.0)
        return float(out) if out.ndim == 0 else out

    def ode_residual(self, r, rel_step: float = 1e-4, max_step: float = 1e-5) -> np.ndarray:
        """``zeta' - (c zeta - 1)`` with ``zeta'`` from central differences.

        The step is proportional to ``r`` since the third derivative grows like ``1/r^2``.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        hstep = np.minimum(max_step, rel_step * r)
        lo = np.maximum(r - hstep, ZETA_FLOOR)
        hi = np.minimum(r + hstep, self.a0)
        d = (self(hi) - self(lo)) / (hi - lo)
        return d - (_coef(self.family, r) * self(r) - 1.0)

    def direct(self, r: float) -> float:
        """``q(r) int_r^a0 ds/q(s)`` by adaptive Gauss-Kronrod (cross-check)."""
        if r >= self.a0:
            return 0.0
        val, _ = quad(lambda s: 1.0 / q_factor(self.family, s), r, self.a0, epsabs=0, epsrel=1e-12, limit=200)
        return q_factor(self.family, r) * val

    def limit_bracket(self, r):
        """``zeta (4 h/sin - 2)``; tends to ``4m/(m-1)`` at 0 when ``m_- >= 2``."""
        return self(r) * (4 * _coef(self.family, r) - 2)


@functools.lru_cache(maxsize=32)
def _zeta_cached(ell, mm, mp):
    return Zeta(geometry.make_family(ell, mm, mp))


def zeta_for(family) -> Zeta:
    return _zeta_cached(family.ell, family.m_minus, family.m_plus)


def zeta(family, r):
    """``zeta(r)`` on ``[0, a0]``."""
    return zeta_for(family)(r)


def zeta_limit_constant(family) -> float:
    m = family.m_minus
    return math.inf if m == 1 else 4 * m / (m - 1)


# --------------------------------------------------------------------------
# Pohozaev-type identity


@dataclass
class PohozaevReport:
    r: float
    lhs: float
    rhs: float
    rel_error: float
    rhs_literal: float = math.nan

    def as_dict(self) -> dict:
        return asdict(self)


def pohozaev_integrand(traj: SolutionTrajectory, family, mu: float, p: float, literal: bool = False):
    """Vectorised integrand of the identity along the dense interpolant.

    ``literal=True`` multiplies the whole bracket ``4 h/sin - 2`` by
    ``zeta``; that variant is kept only to report how far it is off.
    """
    z = zeta_for(family)
    linear = traj.problem.linear

    def f(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        sp = s[pos]
        w = np.asarray(traj.eval(sp))
        Gw = G_fun(w, mu, p, linear)
        gw = g_fun(w, mu, p, linear) * w
        c = _coef(family, sp)
        zs = z(sp)
        if literal:
            bracket = Gw * zs * (4 * c - 2)
        else:
            bracket = Gw * (4 * c * zs - 2)
        out[pos] = q_factor(family, sp) * (bracket - gw)
        return out

    return f


def pohozaev_lhs(traj: SolutionTrajectory, family, mu: float, p: float, r: float) -> float:
    w = traj.eval(r)
    wp = traj.eval_derivative(r)
    q = q_factor(family, r)
    E = wp * wp / 2 + float(G_fun(w, mu, p, traj.problem.linear))
    return float(q * w * wp + 2 * q * zeta(family, r) * E)


def pohozaev_check(traj: SolutionTrajectory, family, mu: Optional[float] = None, p: Optional[float] = None,
                   r_list: Optional[Sequence[float]] = None, tol: float = 1e-10) -> list[PohozaevReport]:
    """Both sides of the identity at each radius in ``r_list``.

    The right side is integrated with adaptive Simpson over the trajectory
    nodes; the relative error uses ``max(|lhs|, int q |integrand|)`` so that
    cancellation near a zero of ``P`` is not mistaken for failure.
    """
    if traj.reflected:
        raise ValueError("the identity is set up on the forward side [0, a0]")
    mu = traj.problem.mu if mu is None else mu
    p = traj.problem.p if p is None else p
    a0 = geometry.a0(family)
    if r_list is None:
        r_list = [a0 / 4, a0 / 2, a0]
    f = pohozaev_integrand(traj, family, mu, p)
    f_lit = pohozaev_integrand(traj, family, mu, p, literal=True)
    out = []
    for r in r_list:
        if not 0 < r <= min(a0, traj.domain[1]) + 1e-12:
            raise ValueError(f"r={r} outside (0, a0]")
        r = min(r, a0)
        nodes = np.concatenate([[0.0], traj.r[(traj.r > 0) & (traj.r < r)], [r]])
        rhs = adaptive_simpson(f, nodes, tol)
        mag = adaptive_simpson(lambda s: np.abs(f(s)), nodes, tol)
        lit = adaptive_simpson(f_lit, nodes, tol)
        lhs = pohozaev_lhs(traj, family, mu, p, r)
        denom = max(abs(lhs), mag, 1e-300)
        out.append(PohozaevReport(float(r), lhs, rhs, abs(lhs - rhs) / denom, lit))
    return out


# --------------------------------------------------------------------------
# first radius where w falls to kappa d


@dataclass
class R0Report:
    d: float
    kappa: float
    r0: float
    monotone: bool
    sin_half: float
    sin_lower: float
    sin_upper: float
    cos_half: float
    kappa1: float
    cos_bound_literal: float
    cos_bound_reading: float
    cos_bound_derived: float

    @property
    def sin_bounds_hold(self) -> bool:
        return self.sin_lower <= self.sin_half <= self.sin_upper

    @property
    def cos_reading_holds(self) -> bool:
        return self.cos_bound_reading <= self.cos_half

    @property
    def cos_derived_holds(self) -> bool:
        return self.cos_bound_derived <= self.cos_half

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(sin_bounds_hold=self.sin_bounds_hold, cos_reading_holds=self.cos_reading_holds,
                   cos_derived_holds=self.cos_derived_holds,
                   cos_literal_holds=self.cos_bound_literal <= self.cos_half)
        return out


def r0_locate(traj: SolutionTrajectory, kappa: float, family=None) -> R0Report:
    """First radius with ``w = kappa d`` and the bounds on sin(r0/2), cos(r0/2) there.

    Three versions of the cosine bound are reported: the uncorrected one
    ``kappa1 exp(d/g(kappa d))``, the sign-corrected reading
    ``kappa1 exp(-d/g(kappa d))`` and the form that follows from the
    derivation, ``exp((kappa-1)(m_-+1)/2 * d/g(kappa d))``.
    """
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    pr = traj.problem
    d = pr.d
    if traj.reflected or d <= 0:
        raise ValueError("needs a forward trajectory with d > 0")
    if kappa * d < 1:
        raise ValueError(f"kappa*d = {kappa * d} must be at least 1")
    m = pr.H0 if family is None else family.m_minus
    target = kappa * d
    below = np.flatnonzero(traj.w <= target)
    if len(below) == 0:
        raise ShootingError(f"w never reaches kappa*d = {target} before A = {pr.A}")
    j = int(below[0])
    r0 = brentq(lambda x: traj.eval(x) - target, traj.r[j - 1], traj.r[j], xtol=1e-14)
    seg = traj.w[: j]
    monotone = bool(np.all(seg >= target - 1e-10) and np.all(seg <= d + 1e-10))
    gd = float(g_fun(d, pr.mu, pr.p, pr.linear))
    gk = float(g_fun(target, pr.mu, pr.p, pr.linear))
    k1 = math.exp((kappa - 1) * (m + 1) / 2)
    k2 = math.sqrt((1 - kappa) * (m + 1) / 2)
    k3 = math.sqrt((m + 1) * (1 - kappa))
    ratio = d / gk
    return R0Report(
        d=d, kappa=kappa, r0=float(r0), monotone=monotone,
        sin_half=math.sin(r0 / 2), sin_lower=k2 * math.sqrt(d / gd), sin_upper=k3 * math.sqrt(ratio),
        cos_half=math.cos(r0 / 2), kappa1=k1,
        cos_bound_literal=k1 * math.exp(ratio), cos_bound_reading=k1 * math.exp(-ratio),
        cos_bound_derived=math.exp((kappa - 1) * (m + 1) / 2 * ratio),
    )


# --------------------------------------------------------------------------
# choice of constants and positivity threshold


@dataclass
class PositivityConstants:
    theta_step: float
    kappa: float
    eps: float
    delta: float
    mu: float
    p: float
    m_minus: int

    def quantity(self, d):
        """``[theta G(kappa d) - g(d) d] (d/g(d))^((m_-+1)/2)``."""
        d = np.asarray(d, dtype=float)
        G = G_fun(self.kappa * d, self.mu, self.p)
        gd = g_fun(d, self.mu, self.p)
        return (self.theta_step * G - gd * d) * (d / gd) ** ((self.m_minus + 1) / 2)

    def threshold(self, grid) -> float:
        """Smallest grid value beyond which the quantity stays positive."""
        grid = np.sort(np.asarray(grid, dtype=float))
        vals = self.quantity(grid)
        bad = np.flatnonzero(~(vals > 0))
        if len(bad) == 0:
            return float(grid[0])
        if bad[-1] == len(grid) - 1:
            raise ShootingError("quantity not positive at the end of the grid")
        return float(grid[bad[-1] + 1])

    def as_dict(self) -> dict:
        return asdict(self)


def positivity_constants(family, mu: float, p: float, eps: float = 0.05, delta: float = 0.05) -> PositivityConstants:
    """Constants ``theta_step`` and ``kappa = (1-delta)^(1/(p+1))``.

    ``theta_step = 4 m_-/(m_- - 1) - eps``; for ``m_- = 1`` the limit is
    infinite and ``2 (p+1)`` is used instead.
    """
    m = family.m_minus
    theta = 4 * m / (m - 1) - eps if m >= 2 else 2 * (p + 1)
    kappa = (1 - delta) ** (1 / (p + 1))
    if theta * kappa ** (p + 1) <= p + 1:
        raise ValueError(f"theta_step*kappa^(p+1) = {theta * kappa ** (p + 1):.4g} must exceed p+1 = {p + 1}")
    return PositivityConstants(theta, kappa, eps, delta, mu, p, m)


# --------------------------------------------------------------------------
# blow-up rescaling and the Emden-Fowler limit


@dataclass
class RescaledTrajectory:
    """``z_d(s) = d^(-2/(p-1)) w(s / (d sqrt(mu)))`` on ``[0, K]``."""

    d: float
    K: float
    source: SolutionTrajectory
    amp: float
    speed: float

    def eval(self, s):
        s = np.asarray(s, dtype=float)
        out = np.asarray(self.source.eval(s / self.speed)) / self.amp
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    def eval_derivative(self, s):
        s = np.asarray(s, dtype=float)
        out = np.asarray(self.source.eval_derivative(s / self.speed)) / (self.amp * self.speed)
        return float(out) if out.ndim == 0 else out

    @property
    def zeros(self) -> np.ndarray:
        z = self.source.zeros * self.speed
        return z[z <= self.K]


def rescaled(traj: SolutionTrajectory, d: float, mu: float, p: float, K: float = 10.0) -> RescaledTrajectory:
    """Blow-up rescaling of a trajectory started at ``d^(2/(p-1))``."""
    if d <= 0:
        raise ValueError("d must be positive")
    amp = d ** (2 / (p - 1))
    if not math.isclose(traj.problem.d, amp, rel_tol=1e-12):
        raise ValueError(f"trajectory starts at {traj.problem.d}, expected d^(2/(p-1)) = {amp}")
    speed = d * math.sqrt(mu)
    if K / speed > traj.domain[1] * (1 + 1e-12):
        raise ValueError(f"window K={K} needs the source on [0, {K / speed}], have [0, {traj.domain[1]}]")
    return RescaledTrajectory(d, K, traj, amp, speed)


def rescaled_family(family, mu: float, p: float, d: float, K: float = 10.0, atol: float = 1e-10,
                    rtol: float = 1e-10) -> RescaledTrajectory:
    """Integrate the family IVP far enough to cover ``[0, K]`` after rescaling."""
    speed = d * math.sqrt(mu)
    A = max(K / speed, geometry.a0(family)) if K / speed < math.pi else None
    if A is None:
        raise ValueError(f"window K={K} maps beyond pi for d={d}")
    amp = d ** (2 / (p - 1))
    traj = integrate(family_problem(family, mu, p, amp, A=A), atol, rtol)
    return rescaled(traj, d, mu, p, K)


def limit_solution(H0: float, p: float, K: float = 10.0, atol: float = 1e-10, rtol: float = 1e-10) -> SolutionTrajectory:
    """``v'' + (H0/r) v' + |v|^(p-1) v = 0``, ``v(0) = 1``, ``v'(0) = 0`` on ``[0, K]``."""
    if H0 < 0:
        raise ValueError("H0 must be non-negative")
    if not (H0 + 1) / 2 < (p + 1) / (p - 1):
        warnings.warn("outside the oscillatory regime (H0+1)/2 < (p+1)/(p-1)", RuntimeWarning, stacklevel=2)
    prob = SingularProblem(lambda r: H0, float(K), 1.0, float(p), 1.0, 0.0,
                           lambda r: H0 / r, lambda r: -H0 / (r * r), label=f"limit:H0={H0}")
    return integrate(prob, atol, rtol)


def limit_distance(z: RescaledTrajectory, v: SolutionTrajectory, count: int = 4001) -> float:
    """Sup-distance between ``z_d`` and ``v`` on ``[0, K]``."""
    s = np.linspace(0.0, min(z.K, v.domain[1]), count)
    return float(np.max(np.abs(z.eval(s) - v.eval(s))))


def first_zero_error(z: RescaledTrajectory, v: SolutionTrajectory) -> float:
    if len(z.zeros) == 0 or len(v.zeros) == 0:
        return math.inf
    return float(abs(z.zeros[0] - v.zeros[0]))


def reports_to_json(reports) -> str:
    return json.dumps([r.as_dict() for r in reports], indent=2, sort_keys=True)
