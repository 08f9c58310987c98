import json
import math

import numpy as np
import pytest

from nodal_shooting import shooting
from nodal_shooting.errors import BudgetExhausted
from nodal_shooting.singular_ivp import solve_forward


@pytest.fixture(scope="module")
def fwd122(fam122):
    return shooting.scan_spiral("fwd", 1.0, 200.0, fam122, 1.0, 3.0)


@pytest.fixture(scope="module")
def bwd122(fam122):
    return shooting.scan_spiral("bwd", 1.0, 200.0, fam122, 1.0, 3.0)


def test_I_map_trivial(fam122):
    assert shooting.I_map(fam122, 1.0, 3.0, 1.0) == (1.0, 0.0)
    assert shooting.I_map(fam122, 1.0, 3.0, 0.0) == (0.0, 0.0)


def test_I_map_odd(fam122):
    a = shooting.I_map(fam122, 1.0, 3.0, 2.0)
    b = shooting.I_map(fam122, 1.0, 3.0, -2.0)
    assert abs(a.w + b.w) <= 1e-10 and abs(a.wp + b.wp) <= 1e-10


def test_J_map_trivial(fam213):
    assert shooting.J_map(fam213, 1.0, 2.5, 1.0) == (1.0, 0.0)
    assert shooting.J_map(fam213, 1.0, 2.5, 0.0) == (0.0, 0.0)


def test_J_map_reflects_I_on_symmetric_family(fam122):
    for c in (0.5, 3.0, 17.0):
        i = shooting.I_map(fam122, 1.0, 3.0, c)
        j = shooting.J_map(fam122, 1.0, 3.0, c)
        assert abs(j.w - i.w) <= 1e-9 and abs(j.wp + i.wp) <= 1e-9


def test_phase_point_polar():
    pt = shooting.PhasePoint(0.0, -2.0)
    assert pt.radius == 2.0 and pt.angle == pytest.approx(-math.pi / 2)


def test_unwrap_constant_samples():
    params = np.array([0.5, 1.0, 2.0, 3.0])
    ang = shooting.unwrap_angle(params, np.tile([1.0, 0.0], (4, 1)))
    assert np.all(ang == 0.0)


def test_unwrap_full_turns():
    t = np.linspace(0.0, -6 * math.pi, 200)
    params = np.linspace(1.0, 3.0, 200)
    pts = np.column_stack([np.cos(t), np.sin(t)])
    assert np.allclose(shooting.unwrap_angle(params, pts), t, atol=1e-12)


def test_unwrap_requires_anchor_and_order():
    with pytest.raises(ValueError):
        shooting.unwrap_angle([0.5, 2.0], [[1, 0], [1, 0]])
    with pytest.raises(ValueError):
        shooting.unwrap_angle([2.0, 1.0], [[1, 0], [1, 0]])


def test_negative_branch():
    assert shooting.negative_branch(0.0) == -math.pi


@pytest.mark.parametrize("theta,n", [(0.0, 0), (-3 * math.pi / 4, 1), (math.pi / 2 - 1e-12, 0),
                                     (-math.pi / 2 + 1e-12, 0), (-math.pi / 2 - 1e-12, 1), (-7.0, 2)])
def test_zero_count_from_angle(theta, n):
    assert shooting.zero_count_from_angle(theta) == n


def test_N_from_angle_mirrors():
    for a in np.linspace(-1, 20, 50):
        assert shooting.N_from_angle(a) == shooting.zero_count_from_angle(-a)


def test_zero_count_formula_at_integer_d(fam122, fwd122):
    for d in range(1, 101):
        traj = solve_forward(fam122, 1.0, 3.0, float(d))
        theta = fwd122.angle_at(float(d), shooting.PhasePoint(*traj.endpoint))
        assert shooting.zero_count_from_angle(theta) == int(np.sum(traj.zeros < fam122.a0)), d


def test_spiral_invariants(fwd122, bwd122):
    for curve, sign in ((fwd122, 1), (bwd122, -1)):
        assert curve.angles[curve.params == 1.0][0] == 0.0
        assert np.all(np.abs(np.diff(curve.angles)) < math.pi / 2)
        assert np.all(sign * curve.angles < math.pi / 2)
        assert np.all(curve.radii > 1e-12)
        assert np.array_equal(curve.zero_count_formula(), curve.zero_counts)


def test_spiral_limits(fwd122, bwd122):
    assert fwd122.angles[-1] < -2 * math.pi
    assert bwd122.angles[-1] > 2 * math.pi


def test_crossings_radius_increases(fwd122):
    levels = sorted(fwd122.crossings)
    assert levels[:3] == [1, 2, 3]
    radii = [fwd122.crossings[i].radius_max for i in levels]
    assert all(a < b for a, b in zip(radii, radii[1:]))
    for i in levels:
        cr = fwd122.crossings[i]
        assert fwd122.angle_at(cr.param_max) == pytest.approx(-i * math.pi, abs=1e-8)


def test_crossings_stable_under_tight_tolerance(fam122, fwd122):
    tight = shooting.scan_spiral("fwd", 1.0, 60.0, fam122, 1.0, 3.0, atol=1e-12, rtol=1e-12)
    for i in tight.crossings:
        assert tight.crossings[i].param_max == pytest.approx(fwd122.crossings[i].param_max, abs=1e-6)


def test_no_crossing_in_short_range(fam122):
    curve = shooting.scan_spiral("fwd", 0.5, 1.5, fam122, 1.0, 3.0)
    assert curve.crossings == {}


def test_radius_consistency(fam122, fwd122):
    for i in range(0, len(fwd122.params), 37):
        traj = solve_forward(fam122, 1.0, 3.0, fwd122.params[i])
        assert abs(math.hypot(*traj.endpoint) - fwd122.radii[i]) <= 1e-10


def test_scan_rejects_bad_input(fam122):
    with pytest.raises(ValueError):
        shooting.scan_spiral("sideways", 1.0, 2.0, fam122, 1.0, 3.0)
    with pytest.raises(ValueError):
        shooting.scan_spiral("fwd", 2.0, 1.0, fam122, 1.0, 3.0)
    with pytest.raises(BudgetExhausted):
        shooting.scan_spiral("fwd", 1.0, 200.0, fam122, 1.0, 3.0, max_dangle=0.01, budget=100)


def test_workers_do_not_change_result(fam122):
    a = shooting.scan_spiral("fwd", 1.0, 30.0, fam122, 1.0, 3.0)
    b = shooting.scan_spiral("fwd", 1.0, 30.0, fam122, 1.0, 3.0, workers=2)
    assert a.params.tobytes() == b.params.tobytes() and a.angles.tobytes() == b.angles.tobytes()


def test_spiral_exports(fwd122):
    lines = fwd122.to_csv().splitlines()
    assert lines[0] == "param,angle,radius,zero_count" and len(lines) == len(fwd122.params) + 1
    meta = json.loads(fwd122.to_json())
    assert meta["side"] == "forward" and meta["crossings"][0]["level"] == 1
