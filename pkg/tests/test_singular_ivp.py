import json
import math
import warnings

import numpy as np
import pytest

from conftest import oracle_zero_count, scipy_oracle
from nodal_shooting import geometry
from nodal_shooting.errors import IntegrationError
from nodal_shooting.singular_ivp import (
    SingularProblem, count_sign_changes, family_problem, integrate, launch_radius, rk4_fixed, series_start,
    solve_backward, solve_forward,
)

# I(10) on (1,2,2), mu=1, p=3 from scipy DOP853 at tolerance 1e-13
I10_ORACLE = (-1.9934518557226057, -0.048631177724098654)


def lane_emden(H0, p, d=1.0, A=10.0):
    return SingularProblem(lambda r: H0, A, 1.0, p, d, 0.0, label="test")


def test_series_start_trivial():
    prob = lane_emden(2.0, 3.0, d=1.0)
    sp = SingularProblem(lambda r: 2.0, 10.0, 1.0, 3.0, 1.0)
    assert series_start(sp, 0.01) == (1.0, 0.0)
    sp0 = SingularProblem(lambda r: 2.0, 10.0, 1.0, 3.0, 0.0)
    assert series_start(sp0, 0.01) == (0.0, 0.0)
    assert prob.H0 == 2.0


def test_series_start_example():
    sp = SingularProblem(lambda r: 2.0, 10.0, 1.0, 3.0, 2.0)
    w, v = series_start(sp, 0.01)
    assert w == pytest.approx(1.9999, abs=1e-15)
    assert v == pytest.approx(-0.02, abs=1e-15)
    # Richardson-style check: a launch at r/4 integrated to r agrees to O(r^4)
    ref = scipy_launch(sp, 0.0025, 0.01)
    assert abs(w - ref[0]) < 2e-7
    assert abs(v - ref[1]) < 5e-5


def scipy_launch(sp, r_from, r_to):
    from scipy.integrate import solve_ivp

    w0, v0 = series_start(sp, r_from)

    def rhs(r, y):
        return [y[1], -sp.coef(r) * y[1] - sp.mu * sp.nonlinearity(y[0])]

    return solve_ivp(rhs, (r_from, r_to), [w0, v0], method="DOP853", rtol=1e-12, atol=1e-14).y[:, -1]


def test_series_start_rejects_large_radius():
    sp = SingularProblem(lambda r: 2.0, 1.0, 1.0, 3.0, 2.0)
    with pytest.raises(ValueError):
        series_start(sp, 0.01)


def test_launch_radius_within_window():
    for d in (1.5, 10.0, 1e3):
        sp = SingularProblem(lambda r: 2.0, 1.0, 1.0, 3.0, d)
        r = launch_radius(sp, 1e-10, 1e-10)
        assert 1e-9 <= r <= 1e-3


def test_problem_validation():
    with pytest.raises(ValueError):
        SingularProblem(lambda r: 1.0, -1.0, 1.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        SingularProblem(lambda r: 1.0, 1.0, 0.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        SingularProblem(lambda r: 1.0, 1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("d", [1.0, -1.0, 0.0])
def test_constant_solutions(fam122, d):
    traj = solve_forward(fam122, 1.0, 3.0, d)
    assert np.max(np.abs(traj.w - d)) == 0.0
    assert len(traj.zeros) == 0 and len(traj.criticals) == 0


def test_d10_against_oracles(fam122):
    traj = solve_forward(fam122, 1.0, 3.0, 10.0)
    w, v = traj.endpoint
    assert w == pytest.approx(I10_ORACLE[0], abs=1e-8)
    assert v == pytest.approx(I10_ORACLE[1], abs=1e-8)
    rk = rk4_fixed(family_problem(fam122, 1.0, 3.0, 10.0), 1e-5)
    assert count_sign_changes(rk[1]) == len(traj.zeros) == 1


def test_tight_tolerance_converges_to_oracle(fam122):
    w, v = solve_forward(fam122, 1.0, 3.0, 10.0, 1e-13, 1e-13).endpoint
    assert abs(w - I10_ORACLE[0]) < 1e-11 and abs(v - I10_ORACLE[1]) < 1e-11


def test_lane_emden_closed_form():
    # H0 = 2, p = 5: v = (1 + r^2/3)^(-1/2)
    traj = integrate(lane_emden(2.0, 5.0))
    r = np.linspace(0, 10, 501)
    assert np.max(np.abs(traj.eval(r) - (1 + r**2 / 3) ** -0.5)) < 1e-9


def test_lane_emden_first_zero_stable():
    z10 = integrate(lane_emden(2.0, 3.0), 1e-10, 1e-10).zeros[0]
    z12 = integrate(lane_emden(2.0, 3.0), 1e-12, 1e-12).zeros[0]
    assert abs(z10 - z12) < 1e-8
    assert z12 == pytest.approx(6.896848619376960, abs=1e-8)


def test_odd_symmetry(fam122):
    a = solve_forward(fam122, 1.0, 3.0, 7.0)
    b = solve_forward(fam122, 1.0, 3.0, -7.0)
    assert np.array_equal(a.r, b.r)
    assert np.max(np.abs(a.w + b.w)) <= 1e-10
    assert np.allclose(a.zeros, b.zeros, atol=1e-12)


def test_determinism(fam211):
    a = solve_forward(fam211, 1.0, 3.0, 12.5)
    b = solve_forward(fam211, 1.0, 3.0, 12.5)
    assert a.r.tobytes() == b.r.tobytes() and a.w.tobytes() == b.w.tobytes()


def test_mu_only_dependence(fam122):
    # (lambda, ell) = (4, 2) and (1, 1) both give mu = 1
    H = lambda r: 2.0  # noqa: E731
    a = integrate(SingularProblem(H, 5.0, 4.0 / 2**2, 3.0, 3.0))
    b = integrate(SingularProblem(H, 5.0, 1.0 / 1**2, 3.0, 3.0))
    assert np.array_equal(a.w, b.w)


def test_ode_residual_small(fam122, fam213):
    for fam, p, d in ((fam122, 3.0, 40.0), (fam213, 2.5, 15.0)):
        traj = solve_forward(fam, 1.0, p, d)
        lo, hi = traj.singular_margin()
        x = np.linspace(lo, hi, 1000)
        res, scale = traj.ode_residual(x)
        assert np.all(np.abs(res) <= 100 * (traj.atol + traj.rtol * scale))


def test_ode_residual_relative_at_tight_tolerance(fam122):
    traj = solve_forward(fam122, 1.0, 3.0, 40.0, 1e-12, 1e-12)
    lo, hi = traj.singular_margin()
    res, scale = traj.ode_residual(np.linspace(lo, hi, 1000))
    assert np.all(np.abs(res) <= 100 * (1e-12 + 1e-12 * scale))


def test_events_bracketed_and_isolated(fam122):
    traj = solve_forward(fam122, 1.0, 3.0, 200.0)
    for z in traj.zeros:
        assert traj.eval(z - 1e-7) * traj.eval(z + 1e-7) < 0
        assert abs(traj.eval(z)) < 1e-9
    for c in traj.criticals:
        assert traj.eval_derivative(c - 1e-7) * traj.eval_derivative(c + 1e-7) < 0
    for a, b in zip(traj.zeros, traj.zeros[1:]):
        assert b - a > 10 * traj.local_step(a)
    assert np.all(np.diff(traj.r) > 0)


def test_interpolant_hits_nodes(fam211):
    traj = solve_forward(fam211, 1.0, 3.0, 9.0)
    assert np.array_equal(traj.eval(traj.r), traj.w)


def test_first_zero_decreases(fam122):
    firsts = [solve_forward(fam122, 1.0, 3.0, d).zeros[0] for d in (10, 20, 40, 80)]
    assert all(a > b for a, b in zip(firsts, firsts[1:]))


def test_supercritical_forward_zero(fam211):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ds = np.linspace(1.2, 5.0, 20)
        counts = [len(solve_forward(fam211, 1.0, 7.0, d).zeros) for d in ds]
    threshold = next(d for d, c in zip(ds, counts) if c >= 1)
    assert all(c >= 1 for d, c in zip(ds, counts) if d >= threshold)
    assert counts[-1] >= 1


def test_backward_trivial_and_reflection(fam122):
    assert solve_backward(fam122, 1.0, 3.0, 1.0).endpoint == (1.0, 0.0)
    f = solve_forward(fam122, 1.0, 3.0, 13.0)
    b = solve_backward(fam122, 1.0, 3.0, 13.0)
    assert np.allclose(math.pi - b.r[::-1], f.r, atol=1e-14)
    assert np.max(np.abs(b.w[::-1] - f.w)) <= 1e-9
    assert np.max(np.abs(b.wp[::-1] + f.wp)) <= 1e-9
    assert b.w[-1] == 13.0 and b.wp[-1] == 0.0


def test_backward_zero_count_against_oracle(fam213):
    b = solve_backward(fam213, 1.0, 2.5, 20.0)
    assert len(b.zeros) == oracle_zero_count(fam213, 1.0, 2.5, 20.0, reflected=True) == 1
    assert np.all(b.zeros > fam213.a0)


def test_admissible_warning(fam213):
    with pytest.warns(RuntimeWarning):
        solve_forward(fam213, 1.0, 3.5, 2.0)


def test_rescaled_branch_agrees(fam122):
    a = integrate(family_problem(fam122, 1.0, 3.0, 2e4), rescale=False)
    b = integrate(family_problem(fam122, 1.0, 3.0, 2e4), rescale=True)
    assert b.rescaled and len(a.zeros) == len(b.zeros)
    assert np.max(np.abs(a.zeros - b.zeros)) < 1e-8


def test_integration_error_on_blowup():
    # negative damping pumps energy until the state overflows
    prob = SingularProblem(lambda r: -50.0 * r * r, 50.0, 1.0, 9.0, 3.0, 1.0,
                           lambda r: -50.0 * r, lambda r: -50.0)
    with pytest.raises(IntegrationError) as err:
        integrate(prob)
    assert err.value.r is not None


def test_exports(fam122):
    traj = solve_forward(fam122, 1.0, 3.0, 10.0)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "r,w,wp" and len(lines) == len(traj.r) + 1
    meta = json.loads(traj.to_json())
    assert meta["d"] == 10.0 and len(meta["zeros"]) == 1
