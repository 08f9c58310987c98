"""Acceptance criteria, one test each, at the stated tolerances and time limits.

Each test prints a single ``PASS``/``FAIL`` line with its measured numbers.
"""

import math
import time
import warnings

import numpy as np
import pytest

from nodal_shooting import geometry, matcher, shooting, verification
from nodal_shooting.singular_ivp import solve_forward


@pytest.fixture
def report(capsys):
    start = time.perf_counter()

    def emit(number, title, ok, detail, limit):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: {detail} [{elapsed:.1f}s < {limit:g}s]")
        assert ok, detail

    return emit


def test_01_constant_solutions(report):
    cases = []
    for args in ((1, 2, 2), (2, 1, 1), (2, 1, 3)):
        fam = geometry.make_family(*args)
        rng = geometry.admissible_p(fam)
        for p in (2.2, 3.0, 7.0):
            if not rng.contains(p):
                continue
            for d in (0.0, 1.0, -1.0):
                sol = matcher.build_match(fam, 1.0, p, d, d)
                r = np.linspace(0.0, math.pi, 2001)
                cases.append(float(np.max(np.abs(sol.eval(r) - d))))
    worst = max(cases)
    report(1, "constant solutions", worst <= 1e-10, f"{len(cases)} cases, max |w-d| = {worst:.1e}", 1.0 * len(cases))


def test_02_zero_count_formula(report, fam122):
    curve = shooting.scan_spiral("fwd", 1.0, 200.0, fam122, 1.0, 3.0)
    mismatches = 0
    for d in np.linspace(1.0, 200.0, 200):
        traj = solve_forward(fam122, 1.0, 3.0, d)
        theta = curve.angle_at(d, shooting.PhasePoint(*traj.endpoint))
        if shooting.zero_count_from_angle(theta) != int(np.sum(traj.zeros < fam122.a0)):
            mismatches += 1
    report(2, "zero-count formula", mismatches == 0, f"{mismatches} mismatches on 200 grid points", 120)


def test_03_prescribed_zeros(report, fam122):
    grid = np.linspace(1.0, 500.0, 500)
    counts = [int(np.sum(solve_forward(fam122, 1.0, 3.0, d).zeros < fam122.a0)) for d in grid]
    short = [d for d, n in zip(grid, counts) if n < 3]
    tail = grid[grid > max(short)] if short else grid
    ok = len(tail) > 0
    detail = "no D3 found"
    if ok:
        D3 = float(tail[0])
        zs = [solve_forward(fam122, 1.0, 3.0, d).zeros[:3] for d in (D3, 2 * D3, 4 * D3)]
        ok = all(len(z) == 3 for z in zs) and all(np.all(a > b) for a, b in zip(zs, zs[1:]))
        detail = f"D3 = {D3:g}, r_1..3 at D3: {np.round(zs[0], 4).tolist()}, at 4 D3: {np.round(zs[2], 4).tolist()}"
    report(3, "prescribed zeros", ok, detail, 120)


def _match_checks(sol, k):
    res, _ = sol.ode_residual()
    assert len(sol.sample_points()) == 2000
    worst = float(np.max(np.abs(res)))
    ok = (sol.k_zeros >= k and len(sol.criticals) >= k + 1 and sol.match_residual <= 1e-8 * (1 + sol.radius)
          and worst <= 1e-6 and sol.rolle_ok())
    detail = (f"d={sol.d:.10g} c={sol.c:.10g} zeros={sol.k_zeros} criticals={len(sol.criticals)} "
              f"|I-J|={sol.match_residual:.1e} residual={worst:.1e}")
    return ok, detail


def test_04a_match_k3(report, fam122):
    sol = matcher.solve_for_k(fam122, 1.0, 3.0, 3)
    ok, detail = _match_checks(sol, 3)
    report(4, "match (1,2,2) p=3 k=3", ok, detail, 300)


def test_04b_match_supercritical(report, fam211):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = matcher.solve_for_k(fam211, 1.0, 7.0, 2)
    ok, detail = _match_checks(sol, 2)
    report(4, "match (2,1,1) p=7 k=2", ok, detail, 300)


def test_05_energy(report, fam122):
    out = verification.energy_suite(fam122, 1.0, 3.0)
    mins = [round(r["min_energy_forward"], 3) for r in out["rows"]]
    report(5, "energy", out["passed"], f"min E over d=10,20,40,80: {mins}", 60)


def test_06_pohozaev(report, fam122):
    out = verification.pohozaev_suite(fam122, 1.0, 3.0)
    report(6, "Pohozaev identity", out["passed"], f"max relative error {out['max_rel_error']:.1e}", 60)


def test_07_rescaling_limit(report, fam122):
    out = verification.limit_suite(fam122, 1.0, 3.0)
    dist = [f"{r['sup_distance']:.1e}" for r in out["rows"]]
    zerr = [f"{r['first_zero_error']:.1e}" for r in out["rows"]]
    report(7, "rescaling limit", out["passed"], f"sup distance {dist}, first-zero error {zerr}", 60)


def _sphere_residual(fam, split, mu, p):
    lam = mu * fam.ell**2
    sol = matcher.solve_for_k(fam, mu, p, 3)
    rng = np.random.default_rng(2024)
    pts = []
    while len(pts) < 100:
        x = geometry.random_sphere_points(fam.n, 1, rng)[0]
        if geometry.focal_distance(fam, split, x) > 1e-2:
            pts.append(x)
    res = [abs(geometry.pde_residual(sol, fam, split, lam, p, x)) for x in pts]
    umax = float(np.max(np.abs(geometry.lifted(sol, fam, split)(np.array(pts)))))
    return max(res), 1e-3 * (1 + umax**p)


def test_08_sphere_residual(report, fam122, fam211):
    rows = [_sphere_residual(fam122, None, 1.0, 3.0), _sphere_residual(fam211, (1, 1), 1.0, 3.0)]
    ok = all(r <= lim for r, lim in rows)
    detail = ", ".join(f"ell={e}: {r:.1e} <= {lim:.1e}" for e, (r, lim) in zip((1, 2), rows))
    report(8, "sphere residual", ok, detail, 120)


def test_09_invariance_and_quotient(report, fam211):
    split = (1, 1)
    sol = matcher.solve_for_k(fam211, 1.0, 3.0, 3)
    u = geometry.lifted(sol, fam211, split)
    pts = geometry.random_sphere_points(fam211.n, 100, np.random.default_rng(9))
    dev = max(geometry.orbit_deviation(u, x, 16) for x in pts)
    scale = geometry.quotient_scale(16.0, 1.0, 3.0)
    law = all(geometry.quotient_eval(u, scale, x) == float(u(x[None, :])[0]) / 4.0 for x in pts[:10])
    report(9, "invariance and quotient", dev <= 1e-8 and scale == 4.0 and law,
           f"orbit deviation {dev:.1e}, scale {scale:g}", 120)


def test_10_spiral_geometry(report, fam122):
    R = shooting.scan_spiral("fwd", 1.0, 200.0, fam122, 1.0, 3.0)
    S = shooting.scan_spiral("bwd", 1.0, 200.0, fam122, 1.0, 3.0)
    anchors = R.angles[R.params == 1.0][0] == 0.0 and S.angles[S.params == 1.0][0] == 0.0
    bounds = bool(np.all(R.angles < math.pi / 2) and np.all(S.angles > -math.pi / 2))
    radii = [R.crossings[i].radius_max for i in sorted(R.crossings)]
    growing = len(radii) >= 2 and all(a < b for a, b in zip(radii, radii[1:]))
    trends = R.angles[-1] < R.angles[0] and S.angles[-1] > S.angles[0]
    report(10, "spiral geometry", anchors and bounds and growing and trends,
           f"theta(200)={R.angles[-1]:.2f} vartheta(200)={S.angles[-1]:.2f} crossing radii {np.round(radii, 3).tolist()}",
           60)
