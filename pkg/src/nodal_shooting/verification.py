"""Named verification suites run by ``nodal-shooting verify``.

Each suite returns a JSON-ready dict with a boolean ``passed`` and the
numbers it was decided on.
"""

from __future__ import annotations

import math

import numpy as np

from . import analysis, geometry
from .singular_ivp import solve_backward, solve_forward

SUITES = ("energy", "pohozaev", "zeta", "limit", "r0")


def _strictly_increasing(vals) -> bool:
    return bool(np.all(np.diff(vals) > 0))


def _strictly_decreasing(vals) -> bool:
    return bool(np.all(np.diff(vals) < 0))


def energy_suite(family, mu, p, atol=1e-10, rtol=1e-10, ds=(10, 20, 40, 80), slack=1e-9) -> dict:
    rows = []
    for d in ds:
        fw = analysis.energy_trace(solve_forward(family, mu, p, d, atol, rtol))
        bw = analysis.energy_trace(solve_backward(family, mu, p, d, atol, rtol))
        rows.append({"d": d, "forward_max_increase": fw.max_increase, "backward_max_decrease": bw.max_decrease,
                     "min_energy_forward": fw.minimum,
                     "forward_ok": fw.nonincreasing(slack), "backward_ok": bw.nondecreasing(slack)})
    mins = [r["min_energy_forward"] for r in rows]
    passed = all(r["forward_ok"] and r["backward_ok"] for r in rows) and _strictly_increasing(mins)
    return {"suite": "energy", "slack": slack, "rows": rows, "min_energy_increasing": _strictly_increasing(mins),
            "passed": passed}


def pohozaev_suite(family, mu, p, atol=1e-10, rtol=1e-10, ds=(1, 10, 50), limit=1e-6) -> dict:
    a0 = geometry.a0(family)
    rows = []
    for d in ds:
        traj = solve_forward(family, mu, p, d, atol, rtol)
        for rep in analysis.pohozaev_check(traj, family, mu, p, [a0 / 4, a0 / 2, a0]):
            rows.append(dict(rep.as_dict(), d=d))
    worst = max(r["rel_error"] for r in rows)
    return {"suite": "pohozaev", "rows": rows, "max_rel_error": worst, "limit": limit, "passed": worst <= limit}


def zeta_suite(family, mu=None, p=None, atol=None, rtol=None, limit=1e-8) -> dict:
    z = analysis.zeta_for(family)
    a0 = z.a0
    grid = np.linspace(1e-4, a0, 2000)
    res = float(np.max(np.abs(z.ode_residual(grid))))
    probe = np.linspace(0.01, a0, 10)
    direct = float(max(abs(z(r) - z.direct(r)) for r in probe))
    out = {"suite": "zeta", "a0": a0, "zeta_at_a0": float(z(a0)), "max_ode_residual": res,
           "max_direct_gap": direct}
    ok = res <= limit and direct <= 1e-8 and abs(out["zeta_at_a0"]) <= 1e-14
    if family.m_minus >= 2:
        target = analysis.zeta_limit_constant(family)
        got = float(z.limit_bracket(1e-6))
        out.update(limit_bracket_target=target, limit_bracket_near_zero=got)
        ok = ok and abs(got - target) <= 1e-4 * target
    else:
        r = 0.01
        out.update(zeta_at_0_01=float(z(r)), log_envelope=10 * r * abs(math.log(r)))
        ok = ok and abs(out["zeta_at_0_01"]) <= out["log_envelope"]
    out["passed"] = bool(ok)
    return out


def limit_suite(family, mu, p, atol=1e-10, rtol=1e-10, ds=(4, 16, 64), K=10.0) -> dict:
    H0 = float(family.m_minus)
    v = analysis.limit_solution(H0, p, K, atol, rtol)
    rows = []
    for d in ds:
        z = analysis.rescaled_family(family, mu, p, d, K, atol, rtol)
        rows.append({"d": d, "sup_distance": analysis.limit_distance(z, v),
                     "first_zero_error": analysis.first_zero_error(z, v)})
    dist = [r["sup_distance"] for r in rows]
    zerr = [r["first_zero_error"] for r in rows]
    return {"suite": "limit", "H0": H0, "K": K, "limit_first_zero": float(v.zeros[0]) if len(v.zeros) else None,
            "rows": rows, "passed": _strictly_decreasing(dist) and _strictly_decreasing(zerr)}


def r0_suite(family, mu, p, atol=1e-10, rtol=1e-10, ds=(10, 20, 40), kappa=0.5) -> dict:
    reps = [analysis.r0_locate(solve_forward(family, mu, p, d, atol, rtol), kappa, family) for d in ds]
    rows = [r.as_dict() for r in reps]
    r0s = [r.r0 for r in reps]
    ok = _strictly_decreasing(r0s) and all(r.monotone and r.sin_bounds_hold and r.cos_reading_holds for r in reps)
    return {"suite": "r0", "kappa": kappa, "rows": rows, "r0_decreasing": _strictly_decreasing(r0s),
            "passed": bool(ok)}


def run_suite(name: str, family, mu: float, p: float, atol: float = 1e-10, rtol: float = 1e-10) -> dict:
    table = {"energy": energy_suite, "pohozaev": pohozaev_suite, "zeta": zeta_suite, "limit": limit_suite,
             "r0": r0_suite}
    if name not in table:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return table[name](family, mu, p, atol=atol, rtol=rtol)
