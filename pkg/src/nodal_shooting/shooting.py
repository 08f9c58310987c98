"""Phase maps at the matching point and the spiral curves they trace.

``I(d) = (w_d(a0), w_d'(a0))`` comes from the forward problem launched at
``r = 0`` and ``J(c)`` from the backward problem launched at ``r = pi``.
Both are sampled over a parameter range, their polar angles are unwrapped
continuously from the anchor ``I(1) = J(1) = (1, 0)`` and the number of
zeros on each side is read off the angle.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from . import geometry
from .errors import BudgetExhausted
from .singular_ivp import solve_backward, solve_forward

HALF_PI = math.pi / 2
_PI_LONG = np.longdouble("3.14159265358979323846264338327950288")
MAX_SAMPLES = 1_000_000


class PhasePoint(NamedTuple):
    w: float
    wp: float

    @property
    def radius(self) -> float:
        return math.hypot(self.w, self.wp)

    @property
    def angle(self) -> float:
        return math.atan2(self.wp, self.w)


def I_map(family, mu, p, d, atol=1e-10, rtol=1e-10) -> PhasePoint:
    """Forward phase map ``(w_d(a0), w_d'(a0))``."""
    if d == 0:
        return PhasePoint(0.0, 0.0)
    return PhasePoint(*solve_forward(family, mu, p, d, atol, rtol).endpoint)


def J_map(family, mu, p, c, atol=1e-10, rtol=1e-10) -> PhasePoint:
    """Backward phase map ``(w~_c(a0), w~_c'(a0))``."""
    if c == 0:
        return PhasePoint(0.0, 0.0)
    return PhasePoint(*solve_backward(family, mu, p, c, atol, rtol).endpoint)


def _side_sample(args):
    fam_key, mu, p, param, side, atol, rtol = args
    family = geometry.make_family(*fam_key)
    a0 = geometry.a0(family)
    if side == "forward":
        traj = solve_forward(family, mu, p, param, atol, rtol)
        nz = int(np.sum(traj.zeros < a0))
    else:
        traj = solve_backward(family, mu, p, param, atol, rtol)
        nz = int(np.sum(traj.zeros > a0))
    w, wp = traj.endpoint
    return w, wp, nz


def wrap(delta):
    """Reduce an angle difference to ``(-pi, pi]``."""
    return (np.asarray(delta) + math.pi) % (2 * math.pi) - math.pi


def unwrap_angle(params, points, anchor: float = 1.0, anchor_angle: float = 0.0) -> np.ndarray:
    """Continuous polar angle along ``points`` (ordered by ``params``), pinned at ``anchor``.

    Neighbouring samples are assumed to differ by less than ``pi`` in true angle.
    """
    params = np.asarray(params, dtype=float)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any(np.diff(params) <= 0):
        raise ValueError("params must be strictly increasing")
    idx = np.flatnonzero(params == anchor)
    if len(idx) != 1:
        raise ValueError(f"anchor parameter {anchor} must appear exactly once among the samples")
    principal = np.arctan2(pts[:, 1], pts[:, 0])
    steps = wrap(np.diff(principal))
    ang = np.concatenate([[0.0], np.cumsum(steps)])
    return ang - ang[idx[0]] + anchor_angle


def negative_branch(theta_positive):
    """Angle for ``-d`` given the angle for ``d > 0``."""
    return np.asarray(theta_positive) - math.pi


def zero_count_from_angle(theta: float) -> int:
    """Zeros before ``a0`` of the forward solution with unwrapped angle ``theta``."""
    x = (np.longdouble(theta) - _PI_LONG / 2) / _PI_LONG
    return int(-np.floor(x) - 1)


def N_from_angle(vartheta: float) -> int:
    """Zeros after ``a0`` of the backward solution with unwrapped angle ``vartheta``."""
    x = (-np.longdouble(vartheta) - _PI_LONG / 2) / _PI_LONG
    return int(-np.floor(x) - 1)


@dataclass
class Crossing:
    """Where the curve meets the ray ``angle = target``: first and last parameter."""

    level: int
    target: float
    param_min: float
    param_max: float
    radius_min: float
    radius_max: float
    params: list = field(default_factory=list)


@dataclass
class SpiralCurve:
    side: str
    params: np.ndarray
    angles: np.ndarray
    radii: np.ndarray
    zero_counts: np.ndarray
    points: np.ndarray
    lo: float
    hi: float
    crossings: dict = field(default_factory=dict)
    family: Optional[geometry.IsoparametricFamily] = None
    mu: float = 1.0
    p: float = 3.0
    atol: float = 1e-10
    rtol: float = 1e-10

    @property
    def forward(self) -> bool:
        return self.side == "forward"

    def in_range(self) -> np.ndarray:
        return (self.params >= self.lo) & (self.params <= self.hi)

    def phase(self, param: float) -> PhasePoint:
        fn = I_map if self.forward else J_map
        return fn(self.family, self.mu, self.p, param, self.atol, self.rtol)

    def angle_at(self, param: float, point: Optional[PhasePoint] = None) -> float:
        """Unwrapped angle at an arbitrary parameter, continued from the nearest sample."""
        if point is None:
            point = self.phase(param)
        j = int(np.argmin(np.abs(self.params - param)))
        base = math.atan2(self.points[j, 1], self.points[j, 0])
        return float(self.angles[j] + wrap(point.angle - base))

    def zero_count_formula(self) -> np.ndarray:
        fn = zero_count_from_angle if self.forward else N_from_angle
        return np.array([fn(a) for a in self.angles], dtype=int)

    def rows(self):
        return list(zip(self.params, self.angles, self.radii, self.zero_counts))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["param", "angle", "radius", "zero_count"])
        for a, b, c, d in self.rows():
            wr.writerow([repr(float(a)), repr(float(b)), repr(float(c)), int(d)])
        return buf.getvalue()

    def crossing_table(self) -> list[dict]:
        out = []
        for lvl in sorted(self.crossings):
            cr = self.crossings[lvl]
            out.append({
                "level": lvl, "target": cr.target,
                "param_min": cr.param_min, "param_max": cr.param_max,
                "radius_min": cr.radius_min, "radius_max": cr.radius_max,
                "all_params": list(cr.params),
            })
        return out

    def to_json(self) -> str:
        return json.dumps({
            "side": self.side, "range": [self.lo, self.hi], "samples": int(len(self.params)),
            "mu": self.mu, "p": self.p, "crossings": self.crossing_table(),
        }, indent=2, sort_keys=True)


def _evaluate(family, mu, p, params, side, atol, rtol, workers):
    key = (family.ell, family.m_minus, family.m_plus)
    jobs = [(key, mu, p, float(x), side, atol, rtol) for x in params]
    if workers and workers > 1 and len(jobs) > 8:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_side_sample, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_side_sample(j) for j in jobs]


def scan_spiral(side: str, lo: float, hi: float, family, mu: float, p: float, *,
                n_initial: int = 64, max_dangle: float = HALF_PI, max_dlogrho: Optional[float] = None,
                budget: int = 20000, atol: float = 1e-10, rtol: float = 1e-10, workers: int = 1,
                find_crossings: bool = True) -> SpiralCurve:
    """Sample ``I`` (``side='forward'``) or ``J`` (``'backward'``) on ``[lo, hi]`` and unwrap.

    Samples are bisected until consecutive principal angles differ by less
    than ``max_dangle`` (and, optionally, log-radii by ``max_dlogrho``).  The
    anchor ``1`` is always sampled so that the angle there is exactly 0.
    """
    if side in ("fwd", "forward"):
        side = "forward"
    elif side in ("bwd", "backward"):
        side = "backward"
    else:
        raise ValueError(f"side must be forward|backward, got {side!r}")
    if not 0 < lo < hi:
        raise ValueError(f"need 0 < lo < hi, got [{lo}, {hi}]")
    budget = min(budget, MAX_SAMPLES)
    a, b = min(lo, 1.0), max(hi, 1.0)
    grid = np.unique(np.concatenate([np.geomspace(a, b, n_initial), [1.0, lo, hi]]))
    values = _evaluate(family, mu, p, grid, side, atol, rtol, workers)
    params = list(grid)
    samples = dict(zip(params, values))
    while True:
        params = sorted(samples)
        pts = np.array([samples[x][:2] for x in params])
        principal = np.arctan2(pts[:, 1], pts[:, 0])
        bad = np.abs(wrap(np.diff(principal))) >= max_dangle
        if max_dlogrho is not None:
            rho = np.hypot(pts[:, 0], pts[:, 1])
            bad |= np.abs(np.diff(np.log(rho))) > max_dlogrho
        idx = np.flatnonzero(bad)
        if len(idx) == 0:
            break
        if len(samples) + len(idx) > budget:
            raise BudgetExhausted(
                f"angle refinement needs more than {budget} samples", {"samples": len(samples)}
            )
        mids = [0.5 * (params[i] + params[i + 1]) for i in idx]
        mids = [m for m in mids if m not in samples]
        if not mids:
            break
        for m, val in zip(mids, _evaluate(family, mu, p, mids, side, atol, rtol, workers)):
            samples[m] = val
    params = np.array(sorted(samples))
    pts = np.array([samples[x][:2] for x in params])
    counts = np.array([samples[x][2] for x in params], dtype=int)
    angles = unwrap_angle(params, pts)
    curve = SpiralCurve(side, params, angles, np.hypot(pts[:, 0], pts[:, 1]), counts, pts, lo, hi,
                        family=family, mu=mu, p=p, atol=atol, rtol=rtol)
    if find_crossings:
        curve.crossings = locate_crossings(curve)
    return curve


def locate_crossings(curve: SpiralCurve) -> dict:
    """All parameters in range where the angle equals ``-i pi`` (forward) or ``+j pi`` (backward)."""
    sign = -1 if curve.forward else 1
    sel = curve.in_range()
    params, angles = curve.params[sel], curve.angles[sel]
    if len(params) < 2:
        return {}
    top = int(math.floor(np.max(sign * angles) / math.pi))
    out = {}
    for level in range(1, top + 1):
        target = sign * level * math.pi
        diff = angles - target
        found = []
        for i in range(len(params) - 1):
            if diff[i] == 0.0:
                found.append(float(params[i]))
            elif diff[i] * diff[i + 1] < 0:
                fn = lambda x: curve.phase(x).wp  # noqa: E731
                fa, fb = curve.points[sel][i, 1], curve.points[sel][i + 1, 1]
                if fa * fb < 0:
                    found.append(brentq(fn, params[i], params[i + 1], xtol=1e-13, rtol=1e-14))
                else:
                    found.append(float(0.5 * (params[i] + params[i + 1])))
        if diff[-1] == 0.0:
            found.append(float(params[-1]))
        if not found:
            continue
        found = sorted(set(found))
        rmin = curve.phase(found[0]).radius
        rmax = curve.phase(found[-1]).radius
        out[level] = Crossing(level, target, found[0], found[-1], rmin, rmax, found)
    return out
