from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loglap.assembly import assemble_alt
from loglap.errors import NoConvergence, NotCoercive
from loglap.geometry import Ball, DiscreteField, Domain, Rect, build_grid
from loglap.kernel import constants
from loglap.solve import (Nonlinearity, check_supersolution, solve_poisson, solve_semilinear, solve_torsion,
                          write_field_csv)
from loglap.spectral import lambda1, sign_change_witness


def _forms(dom, h):
    return assemble_alt(build_grid(dom, h), constants(dom.dim))


@pytest.fixture(scope="module")
def small_ball():
    return _forms(Domain.union(Ball((0.0, 0.0), 0.2)), 0.025)


def test_poisson_zero_rhs(small_ball):
    assert np.all(solve_poisson(small_ball, 0.0).u.values == 0.0)


def test_single_cell_poisson():
    F = _forms(Domain.union(Rect((-0.1,), (0.1,))), 0.2)
    out = solve_poisson(F, 1.0)
    assert out.u.values[0] == pytest.approx(0.2 / F.A[0, 0], rel=1e-14)
    assert out.u.values[0] == pytest.approx(0.2 / 0.8128889, rel=1e-4)
    assert solve_torsion(F).u.values[0] == out.u.values[0]


def test_poisson_not_coercive_at_witness():
    R, _ = sign_change_witness(cells_per_unit=4)
    F = _forms(Domain.union(Ball((0.0,), R)), 0.25)
    with pytest.raises(NotCoercive):
        solve_poisson(F, 1.0)


def test_torsion_positive_on_ball():
    F = _forms(Domain.union(Ball((0.0, 0.0), 0.2)), 0.0125)
    assert solve_torsion(F).positivity_min > 0


def test_torsion_positive_on_separated_balls():
    D = Domain.union(Ball((-1.0, 0.0), 0.1), Ball((1.0, 0.0), 0.1))
    F = _forms(D, 0.025)
    u = solve_torsion(F).u
    x = F.grid.centers[:, 0]
    assert np.all(u.values[x < 0] > 0) and np.all(u.values[x > 0] > 0)


def test_torsion_energy_bound(small_ball):
    F = small_ball
    u = solve_torsion(F).u.values
    l2 = math.sqrt(np.sum(F.m * u * u))
    assert l2 <= math.sqrt(np.sum(F.m)) / lambda1(F) * (1 + 1e-12)


def test_semilinear_constant_equals_torsion(small_ball):
    out = solve_semilinear(small_ball, Nonlinearity.const(1.0))
    ref = solve_torsion(small_ball).u.values
    assert np.allclose(out.u.values, ref, rtol=1e-9, atol=0)
    assert out.iterations == 1


def test_semilinear_linear_kind(small_ball):
    lam = lambda1(small_ball)
    out = solve_semilinear(small_ball, Nonlinearity.linear(lam - 1.0, 1.0))
    F = small_ball
    ref = np.linalg.solve(F.A - (lam - 1.0) * np.diag(F.m), F.m)
    assert np.allclose(out.u.values, ref, rtol=1e-8)


def test_semilinear_power_converges_or_reports(small_ball):
    u0 = 0.5 * solve_torsion(small_ball).u.values
    try:
        out = solve_semilinear(small_ball, Nonlinearity.power(2.0, 1.0), u0=u0)
    except NoConvergence:
        return
    R = small_ball.A @ out.u.values - small_ball.m * out.u.values ** 2
    assert np.linalg.norm(R) == pytest.approx(out.residual_norm, rel=1e-12, abs=1e-300)
    assert math.isfinite(out.newton_tail_constant())


def test_semilinear_no_convergence(small_ball):
    with pytest.raises(NoConvergence):
        solve_semilinear(small_ball, Nonlinearity.power(3.0, 50.0), max_iter=2, tol=1e-14)


def test_power_below_one_warns():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        f = Nonlinearity.power(0.5)
    assert any("Lipschitz" in str(w.message) for w in rec)
    assert not f.lipschitz


def test_nonlinearity_validation():
    with pytest.raises(ValueError):
        Nonlinearity("cubic", (1.0,))
    with pytest.raises(ValueError):
        Nonlinearity("linear", (1.0,))
    f = Nonlinearity.poly([1.0, 0.0, 3.0])
    assert f(2.0) == pytest.approx(13.0)
    assert f.deriv(2.0) == pytest.approx(12.0)
    assert f.divided_difference(2.0, 1.0) == pytest.approx(f(2.0) - f(1.0))


@given(s=st.floats(-2, 2), t=st.floats(-2, 2), c0=st.floats(-9, 9))
def test_divided_difference_ignores_constant(s, t, c0):
    a = Nonlinearity.poly([0.0, 1.0, -3.0, 0.5]).divided_difference(s, t)
    b = Nonlinearity.poly([c0, 1.0, -3.0, 0.5]).divided_difference(s, t)
    assert a == b


def test_supersolution_residuals(small_ball):
    F = small_ball
    u = solve_torsion(F).u
    hN = F.m[0]
    assert abs(check_supersolution(F, u, 0.0, 1.0)) <= 1e-10
    assert check_supersolution(F, u, 0.0, 0.5) == pytest.approx(0.5 * hN, rel=1e-8)
    assert check_supersolution(F, u, 0.0, 2.0) < 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_poisson_is_linear(small_ball, seed, a, b):
    rng = np.random.default_rng(seed)
    g1, g2 = rng.standard_normal((2, small_ball.n))
    u1 = solve_poisson(small_ball, g1).u.values
    u2 = solve_poisson(small_ball, g2).u.values
    u = solve_poisson(small_ball, a * g1 + b * g2).u.values
    ref = a * u1 + b * u2
    assert np.max(np.abs(u - ref)) <= 1e-10 * max(np.max(np.abs(ref)), 1e-300) + 1e-14


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_weak_maximum_principle(small_ball, seed):
    g = np.random.default_rng(seed).uniform(0, 1, small_ball.n)
    u = solve_poisson(small_ball, g).u
    assert u.values.min() >= -1e-10 * u.sup_norm()


def test_field_csv_format(tmp_path, small_ball):
    u = solve_torsion(small_ball).u
    p = tmp_path / "u.csv"
    write_field_csv(p, u)
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) == small_ball.n + 1
    vals = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]])
    assert np.array_equal(vals[:, 2], u.values)
    g1 = build_grid(Domain.union(Rect((0.0,), (1.0,))), 0.25)
    write_field_csv(p, DiscreteField(g1, np.ones(g1.n)))
    assert p.read_text().splitlines()[0] == "x,value"
