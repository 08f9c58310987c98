"""Double shooting: glue a forward and a backward solution at ``a0``.

A match is a pair ``(d, c)`` with ``I(d) = J(c)``.  Candidate pairs are
found where the forward curve ``R = (theta, rho)`` meets the backward curve
shifted by ``M pi`` in the angle-radius plane; the glued function then has
exactly ``M`` zeros, and for odd ``M`` the final value is ``-c``.  Every
candidate is polished by a damped Newton iteration on ``I(d) - J(c)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry
from .errors import BudgetExhausted, MatchError
from .shooting import (
    I_map, J_map, N_from_angle, PhasePoint, SpiralCurve, scan_spiral, zero_count_from_angle,
)
from .singular_ivp import SolutionTrajectory, solve_backward, solve_forward

TOL_MATCH = 1e-8
NEWTON_MAXITER = 200
ZERO_AT_A0 = 1e-6
SAMPLE_MARGIN = 1e-4


@dataclass
class MatchedSolution:
    d: float
    c: float
    forward: SolutionTrajectory
    backward: SolutionTrajectory
    match_residual: float
    zeros: np.ndarray
    criticals: np.ndarray
    k_zeros: int
    a0: float
    radius: float
    degenerate: bool = False
    certificate: dict = field(default_factory=dict)
    alternatives: list = field(default_factory=list)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        return x, x <= self.a0

    def eval(self, x):
        """Glued ``w`` on ``[0, pi]``."""
        x, left = self._split(x)
        out = np.where(left, self.forward.eval(np.minimum(x, self.a0)), self.backward.eval(np.maximum(x, self.a0)))
        return float(out) if out.ndim == 0 else out

    __call__ = eval

    def eval_derivative(self, x):
        x, left = self._split(x)
        out = np.where(left, self.forward.eval_derivative(np.minimum(x, self.a0)),
                       self.backward.eval_derivative(np.maximum(x, self.a0)))
        return float(out) if out.ndim == 0 else out

    def sample_points(self, count: int = 2000) -> np.ndarray:
        # backward nodes are stored as pi - s, which near pi resolves s only to
        # about 1e-16 absolute; SAMPLE_MARGIN keeps that below 1e-12 relative
        lo = max(self.forward.singular_margin()[0], SAMPLE_MARGIN)
        hi = min(self.backward.singular_margin()[1], math.pi - SAMPLE_MARGIN)
        return np.linspace(lo, hi, count)

    def ode_residual(self, x=None):
        """Residual and term scale of the ODE on the glued interpolant."""
        x = self.sample_points() if x is None else np.atleast_1d(np.asarray(x, dtype=float))
        left = x <= self.a0
        res = np.empty_like(x)
        scale = np.empty_like(x)
        if np.any(left):
            res[left], scale[left] = self.forward.ode_residual(x[left])
        if np.any(~left):
            res[~left], scale[~left] = self.backward.ode_residual(x[~left])
        return res, scale

    @property
    def endpoint_derivatives(self) -> tuple[float, float]:
        return float(self.forward.wp[0]), float(self.backward.wp[-1])

    def rolle_ok(self) -> bool:
        """Every pair of consecutive zeros encloses a recorded critical point."""
        z, cr = self.zeros, self.criticals
        return all(np.any((cr > a) & (cr < b)) for a, b in zip(z[:-1], z[1:]))

    def summary(self) -> dict:
        res, scale = self.ode_residual()
        return {
            "d": self.d, "c": self.c, "a0": self.a0, "radius": self.radius,
            "match_residual": self.match_residual, "k_zeros": self.k_zeros,
            "zeros": [float(v) for v in self.zeros], "criticals": [float(v) for v in self.criticals],
            "degenerate": self.degenerate,
            "max_ode_residual": float(np.max(np.abs(res))),
            "max_relative_ode_residual": float(np.max(np.abs(res) / (1 + scale))),
            "endpoint_derivatives": list(self.endpoint_derivatives),
            "certificate": self.certificate,
            "alternatives": self.alternatives,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["r", "w", "wp"])
        f, b = self.forward, self.backward
        for arrs in ((f.r, f.w, f.wp), (b.r[1:], b.w[1:], b.wp[1:])):
            for row in zip(*arrs):
                wr.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def match_residual(family, mu, p, d, c, atol=1e-10, rtol=1e-10):
    """``I(d) - J(c)`` and its Euclidean norm."""
    i = I_map(family, mu, p, d, atol, rtol)
    j = J_map(family, mu, p, c, atol, rtol)
    vec = np.array([i.w - j.w, i.wp - j.wp])
    return vec, float(np.hypot(*vec))


def assemble(d, c, forward: SolutionTrajectory, backward: SolutionTrajectory, tol_match: float = TOL_MATCH,
             family=None) -> MatchedSolution:
    """Glue the two trajectories at ``a0`` and merge their events."""
    a0 = forward.domain[1]
    if abs(backward.domain[0] - a0) > 1e-12:
        raise MatchError(f"trajectories meet at different radii {a0} and {backward.domain[0]}")
    wi, vi = forward.endpoint
    wj, vj = backward.endpoint
    radius = math.hypot(wi, vi)
    resid = math.hypot(wi - wj, vi - vj)
    tol = tol_match * (1 + radius)
    if resid > tol:
        raise MatchError(f"match residual {resid:.3e} above tolerance {tol:.3e}", best=(d, c, resid))
    degenerate = bool(np.all(forward.wp == 0) and np.all(backward.wp == 0))
    at_a0 = (not degenerate) and d != 0 and abs(wi) <= ZERO_AT_A0 * (1 + radius)
    crit_a0 = (not degenerate) and abs(vi) <= ZERO_AT_A0 * (1 + radius)
    gap = ZERO_AT_A0 * (1 + radius) / max(abs(vi), 1e-300) if at_a0 else 0.0
    fz = forward.zeros[forward.zeros < a0 - gap]
    bz = backward.zeros[backward.zeros > a0 + gap]
    zeros = list(fz) + ([a0] if at_a0 else []) + list(bz)
    if degenerate:
        crit = []
    else:
        cgap = ZERO_AT_A0 if crit_a0 else 0.0
        crit = [0.0] + list(forward.criticals[forward.criticals < a0 - cgap])
        if crit_a0:
            crit.append(a0)
        crit += list(backward.criticals[backward.criticals > a0 + cgap]) + [math.pi]
    zeros = np.array(sorted(zeros))
    return MatchedSolution(float(d), float(c), forward, backward, resid, zeros, np.array(sorted(crit)),
                           int(len(zeros)), a0, radius, degenerate)


# --------------------------------------------------------------------------
# candidate intersections in the angle-radius plane


def polyline_intersections(P: np.ndarray, Q: np.ndarray):
    """All crossings between polylines ``P`` and ``Q`` (arrays of 2-D vertices).

    Returns tuples ``(i, s, j, t)``: segment ``P[i]P[i+1]`` at fraction ``s``
    meets ``Q[j]Q[j+1]`` at fraction ``t``.
    """
    p0, p1 = P[:-1], P[1:]
    q0, q1 = Q[:-1], Q[1:]
    dp = (p1 - p0)[:, None, :]
    dq = (q1 - q0)[None, :, :]
    diff = q0[None, :, :] - p0[:, None, :]
    den = dp[..., 0] * dq[..., 1] - dp[..., 1] * dq[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (diff[..., 0] * dq[..., 1] - diff[..., 1] * dq[..., 0]) / den
        t = (diff[..., 0] * dp[..., 1] - diff[..., 1] * dp[..., 0]) / den
    ok = (den != 0) & (s >= 0) & (s <= 1) & (t >= 0) & (t <= 1)
    ii, jj = np.nonzero(ok)
    return [(int(i), float(s[i, j]), int(j), float(t[i, j])) for i, j in zip(ii, jj)]


def _plane(curve: SpiralCurve, shift: float = 0.0) -> np.ndarray:
    return np.column_stack([curve.angles - shift, curve.radii])


@dataclass
class Seed:
    d: float
    c: float
    shift: int
    d_bracket: tuple
    c_bracket: tuple


def seeds_for_shift(R: SpiralCurve, S: SpiralCurve, shift: int) -> list[Seed]:
    """Intersections of ``R`` with ``S - (shift*pi, 0)``; ``c`` carries the sign ``(-1)^shift``."""
    sign = -1.0 if shift % 2 else 1.0
    out = []
    for i, s, j, t in polyline_intersections(_plane(R), _plane(S, shift * math.pi)):
        d = R.params[i] + s * (R.params[i + 1] - R.params[i])
        c = S.params[j] + t * (S.params[j + 1] - S.params[j])
        out.append(Seed(float(d), float(sign * c), shift, (R.params[i], R.params[i + 1]), (S.params[j], S.params[j + 1])))
    out.sort(key=lambda sd: abs(sd.d) + abs(sd.c))
    return out


# --------------------------------------------------------------------------
# Newton polish


def find_match(family, mu, p, d0, c0, *, bracket=None, tol_match=TOL_MATCH, atol=1e-10, rtol=1e-10,
               maxiter=NEWTON_MAXITER):
    """Damped Newton on ``I(d) - J(c)`` with a finite-difference Jacobian.

    ``bracket = ((d_lo, d_hi), (c_lo, c_hi))`` bounds the search (magnitudes
    for ``c``); when Newton stalls the bracketing segments are bisected to
    produce a better seed.  Returns ``(d, c)``.
    """
    def F(x):
        i = I_map(family, mu, p, x[0], atol, rtol)
        j = J_map(family, mu, p, x[1], atol, rtol)
        return np.array([i.w - j.w, i.wp - j.wp]), i.radius

    x = np.array([d0, c0], dtype=float)
    if bracket is not None:
        (dlo, dhi), (clo, chi) = bracket
        if not (dlo <= abs(d0) <= dhi and clo <= abs(c0) <= chi):
            raise MatchError("seed outside the bracket", best=(d0, c0, math.inf))
    fx, rad = F(x)
    best = (float(x[0]), float(x[1]), float(np.hypot(*fx)))
    for _ in range(maxiter):
        nrm = float(np.hypot(*fx))
        if nrm < best[2]:
            best = (float(x[0]), float(x[1]), nrm)
        if nrm <= tol_match * (1 + rad):
            return float(x[0]), float(x[1])
        jac = np.empty((2, 2))
        for k in range(2):
            hk = 1e-7 * max(1.0, abs(x[k]))
            xp = x.copy()
            xp[k] += hk
            jac[:, k] = (F(xp)[0] - fx) / hk
        try:
            step = -np.linalg.solve(jac, fx)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(jac, fx, rcond=None)[0]
        # keep |d|, |c| from collapsing onto the trivial branch
        lim = 0.25 * np.maximum(np.abs(x), 1e-3)
        scale = min(1.0, float(np.min(lim / np.maximum(np.abs(step), 1e-300))))
        step *= scale
        lam = 1.0
        while True:
            xn = x + lam * step
            fn, radn = F(xn)
            if np.hypot(*fn) < (1 - 1e-4 * lam) * nrm or lam < 1e-4:
                break
            lam *= 0.5
        if lam < 1e-4 and np.hypot(*fn) >= nrm:
            raise MatchError(f"Newton stalled with residual {nrm:.3e}", best=best)
        x, fx, rad = xn, fn, radn
        if bracket is not None and not (bracket[0][0] * 0.5 <= abs(x[0]) <= bracket[0][1] * 2
                                        and bracket[1][0] * 0.5 <= abs(x[1]) <= bracket[1][1] * 2):
            raise MatchError("Newton left the bracket", best=best)
    raise MatchError(f"Newton did not converge in {maxiter} iterations", best=best)


def _bisect_seed(family, mu, p, seed: Seed, R: SpiralCurve, S: SpiralCurve, rounds: int = 30) -> Seed:
    """Shrink the two bracketing segments around their crossing."""
    sign = -1.0 if seed.shift % 2 else 1.0
    (d0, d1), (c0, c1) = seed.d_bracket, seed.c_bracket

    def pt_R(d):
        ph = R.phase(d)
        return np.array([R.angle_at(d, ph), ph.radius])

    def pt_S(c):
        ph = S.phase(c)
        return np.array([S.angle_at(c, ph) - seed.shift * math.pi, ph.radius])

    pr = [pt_R(d0), pt_R(d1)]
    ps = [pt_S(c0), pt_S(c1)]
    for _ in range(rounds):
        dm, cm = 0.5 * (d0 + d1), 0.5 * (c0 + c1)
        prm, psm = pt_R(dm), pt_S(cm)
        chosen = None
        for (da, db, pa, pb) in ((d0, dm, pr[0], prm), (dm, d1, prm, pr[1])):
            for (ca, cb, qa, qb) in ((c0, cm, ps[0], psm), (cm, c1, psm, ps[1])):
                hit = polyline_intersections(np.array([pa, pb]), np.array([qa, qb]))
                if hit:
                    chosen = (da, db, pa, pb, ca, cb, qa, qb, hit[0])
                    break
            if chosen:
                break
        if chosen is None:
            break
        d0, d1, pr0, pr1, c0, c1, ps0, ps1, (_, s, _, t) = chosen
        pr, ps = [pr0, pr1], [ps0, ps1]
    s_, t_ = 0.5, 0.5
    hit = polyline_intersections(np.array(pr), np.array(ps))
    if hit:
        _, s_, _, t_ = hit[0]
    return Seed(d0 + s_ * (d1 - d0), sign * (c0 + t_ * (c1 - c0)), seed.shift, (d0, d1), (c0, c1))


def polish(family, mu, p, seed: Seed, R: SpiralCurve, S: SpiralCurve, *, tol_match=TOL_MATCH,
           atol=1e-10, rtol=1e-10):
    try:
        return find_match(family, mu, p, seed.d, seed.c, tol_match=tol_match, atol=atol, rtol=rtol)
    except MatchError:
        better = _bisect_seed(family, mu, p, seed, R, S)
        return find_match(family, mu, p, better.d, better.c, tol_match=tol_match, atol=atol, rtol=rtol)


def build_match(family, mu, p, d, c, *, tol_match=TOL_MATCH, atol=1e-10, rtol=1e-10) -> MatchedSolution:
    fw = solve_forward(family, mu, p, d, atol, rtol)
    bw = solve_backward(family, mu, p, c, atol, rtol)
    return assemble(d, c, fw, bw, tol_match)


def constant_solution(family, mu, p, value=1.0, atol=1e-10, rtol=1e-10) -> MatchedSolution:
    return build_match(family, mu, p, value, value, atol=atol, rtol=rtol)


def predicted_zero_count(R: SpiralCurve, S: SpiralCurve, d: float, c: float, zero_at_a0: bool = False) -> tuple:
    """``(n(d), N(|c|), total)`` from the unwrapped angles at the matched pair.

    A zero sitting at ``a0`` puts both angles on a half-integer multiple of
    ``pi`` where the floor formulas are ill-conditioned; the angles are then
    snapped to that multiple (where neither formula counts it) and the zero is
    added once.
    """
    theta = R.angle_at(d)
    vartheta = S.angle_at(abs(c))
    if zero_at_a0:
        snap = lambda a: (math.floor(a / math.pi) + 0.5) * math.pi  # noqa: E731
        theta, vartheta = snap(theta), snap(vartheta)
    n = zero_count_from_angle(theta)
    N = N_from_angle(vartheta)
    return n, N, n + N + int(zero_at_a0)


def _repolish(family, mu, p, sol: MatchedSolution, tol: float, tol_match: float) -> MatchedSolution:
    try:
        d, c = find_match(family, mu, p, sol.d, sol.c, tol_match=0.01 * tol_match, atol=tol, rtol=tol)
    except MatchError:
        d, c = sol.d, sol.c
    try:
        out = build_match(family, mu, p, d, c, tol_match=tol_match, atol=tol, rtol=tol)
    except MatchError:
        return sol
    if out.k_zeros != sol.k_zeros:
        return sol
    out.certificate = dict(sol.certificate, polish_tol=tol)
    return out


def _is_trivial(v):
    return v == 0 or abs(abs(v) - 1.0) < 1e-9


def solve_for_k(family, mu: float, p: float, k: int, budget: float = 1000.0, *, start: float = 16.0,
                extra_shifts: int = 2, tol_match: float = TOL_MATCH, atol: float = 1e-10, rtol: float = 1e-10,
                workers: int = 1, max_dangle: float = math.pi / 8, max_dlogrho: float = 0.05,
                polish_tol: Optional[float] = 1e-12) -> MatchedSolution:
    """Nodal solution with at least ``k`` zeros in ``[0, pi]``.

    The parameter window ``[1, D]`` is doubled from ``start`` up to
    ``budget``; within it the forward curve is intersected with the backward
    curve shifted by ``k, k+1, ...`` multiples of ``pi``.  Among converged
    matches the one with the smallest ``|d| + |c|`` is returned and the rest
    are listed in ``alternatives``.  The winner is re-solved with
    integrator tolerance ``polish_tol`` so the glued interpolant satisfies
    the ODE to well below the working accuracy.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        sol = constant_solution(family, mu, p, 1.0, atol, rtol)
        sol.certificate = {"shift": 0, "note": "constant solution"}
        return sol
    rng = geometry.admissible_p(family)
    if not rng.contains(p):
        raise ValueError(f"p={p} outside the admissible window (1, {rng.upper})")
    D = min(start, budget)
    achieved = {}
    while True:
        R = scan_spiral("forward", 1.0, D, family, mu, p, max_dangle=max_dangle, max_dlogrho=max_dlogrho,
                        atol=atol, rtol=rtol, workers=workers, find_crossings=False)
        S = scan_spiral("backward", 1.0, D, family, mu, p, max_dangle=max_dangle, max_dlogrho=max_dlogrho,
                        atol=atol, rtol=rtol, workers=workers, find_crossings=False)
        achieved = {"D": D, "min_theta": float(R.angles.min()), "max_vartheta": float(S.angles.max()),
                    "n_max": int(R.zero_counts.max()), "N_max": int(S.zero_counts.max())}
        found = []
        for shift in range(k, k + extra_shifts + 1):
            for seed in seeds_for_shift(R, S, shift):
                if _is_trivial(seed.d) or _is_trivial(seed.c):
                    continue
                try:
                    d, c = polish(family, mu, p, seed, R, S, tol_match=tol_match, atol=atol, rtol=rtol)
                except MatchError:
                    continue
                if _is_trivial(d) or _is_trivial(c):
                    continue
                sol = build_match(family, mu, p, d, c, tol_match=tol_match, atol=atol, rtol=rtol)
                if sol.k_zeros < k:
                    continue
                sol.certificate = {
                    "shift": shift,
                    "seed": [seed.d, seed.c],
                    "d_bracket": list(seed.d_bracket), "c_bracket": list(seed.c_bracket),
                    "window": D,
                }
                n, N, total = predicted_zero_count(R, S, d, c, bool(np.any(sol.zeros == sol.a0)))
                sol.certificate.update({"n_forward": n, "N_backward": N, "predicted_zeros": total})
                if any(abs(o.d - sol.d) < 1e-6 * (1 + abs(sol.d)) and abs(o.c - sol.c) < 1e-6 * (1 + abs(sol.c))
                       for o in found):
                    continue
                found.append(sol)
            if found:
                break
        if found:
            found.sort(key=lambda s: abs(s.d) + abs(s.c))
            best = found[0]
            if polish_tol is not None and polish_tol < min(atol, rtol):
                best = _repolish(family, mu, p, best, polish_tol, tol_match)
            best.alternatives = [{"d": s.d, "c": s.c, "k_zeros": s.k_zeros, "shift": s.certificate["shift"]}
                                 for s in found[1:]]
            return best
        if D >= budget:
            raise BudgetExhausted(f"no match with >= {k} zeros for parameters up to {budget}", achieved)
        D = min(2 * D, budget)
