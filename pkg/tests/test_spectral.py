from __future__ import annotations

import math

import numpy as np
import pytest

from loglap.assembly import assemble_alt
from loglap.geometry import Ball, Domain, Rect, build_grid
from loglap.kernel import constants
from loglap.spectral import (ball_radius, discrete_lambda1, eigs, faber_krahn_check, lambda1, lambda1_lower_bound,
                             rayleigh_quotient, sign_change_witness)


def test_single_cell_eigenvalue():
    g = build_grid(Domain.union(Rect((-0.1,), (0.1,))), 0.2)
    F = assemble_alt(g, constants(1))
    (p,) = eigs(F, 1)
    assert p.lam == pytest.approx(F.A[0, 0] / F.m[0], rel=1e-14)
    assert p.lam == pytest.approx(4.0644, abs=1e-3)


@pytest.fixture(scope="module")
def ball_forms():
    g = build_grid(Domain.union(Ball((0.0, 0.0), 0.2)), 0.025)
    return assemble_alt(g, constants(2))


def test_eigenpairs_orthonormal_with_small_residual(ball_forms):
    F = ball_forms
    pairs = eigs(F, 5)
    lams = [p.lam for p in pairs]
    assert lams == sorted(lams)
    Phi = np.column_stack([p.phi.values for p in pairs])
    G = Phi.T @ (F.m[:, None] * Phi)
    assert np.allclose(np.diag(G), 1.0, atol=1e-10)
    assert np.max(np.abs(G - np.diag(np.diag(G)))) <= 1e-8
    nA = np.linalg.norm(F.A, 2)
    for p in pairs:
        r = F.A @ p.phi.values - p.lam * F.m * p.phi.values
        assert np.linalg.norm(r) <= 1e-8 * nA


def test_lambda1_is_rayleigh_infimum(ball_forms):
    F = ball_forms
    lam = lambda1(F)
    rng = np.random.default_rng(11)
    V = rng.standard_normal((10_000, F.n))
    rq = np.einsum("ij,jk,ik->i", V, F.A, V) / np.einsum("ij,j,ij->i", V, F.m, V)
    assert rq.min() - lam >= -1e-10
    assert rayleigh_quotient(F, eigs(F, 1)[0].phi.values) == pytest.approx(lam, rel=1e-12)


def test_first_eigenfunction_has_one_sign(ball_forms):
    phi = eigs(ball_forms, 1)[0].phi.values
    assert np.all(phi > 0)


def test_eigs_rejects_bad_k(ball_forms):
    with pytest.raises(ValueError):
        eigs(ball_forms, 0)
    with pytest.raises(ValueError):
        eigs(ball_forms, ball_forms.n + 1)


def test_lower_bound_examples():
    rho2 = constants(2).rho
    assert lambda1_lower_bound(math.pi * 0.04, 2) == pytest.approx(2 * math.log(5) - rho2, rel=1e-14)
    # frozen from mpmath: 2 log 5 - (2 log 2 - 2 gamma)
    assert lambda1_lower_bound(math.pi * 0.04, 2) == pytest.approx(2.9870127935513759, abs=1e-12)
    assert lambda1_lower_bound(0.4, 1) == pytest.approx(2.0644444613907, abs=1e-7)
    for N, vol in ((1, 2.0), (2, math.pi)):
        assert lambda1_lower_bound(vol, N) == pytest.approx(-abs(constants(N).rho), abs=1e-14)
    with pytest.raises(ValueError):
        lambda1_lower_bound(0.0, 2)


def test_ball_radius_inverts_volume():
    assert ball_radius(math.pi * 0.04, 2) == pytest.approx(0.2)
    assert ball_radius(0.4, 1) == pytest.approx(0.2)


@pytest.mark.parametrize("N,r,h", [(1, 0.05, 0.01), (1, 0.5, 1 / 64), (2, 0.1, 0.02), (2, 0.5, 0.05)])
def test_ball_eigenvalue_above_bound(N, r, h):
    D = Domain.union(Ball((0.0,) * N, r))
    assert discrete_lambda1(D, h) >= lambda1_lower_bound((2 * r) if N == 1 else math.pi * r * r, N) - 1e-9


def test_domain_monotonicity_nested_grids():
    outer = Domain.union(Rect((-0.3, -0.3), (0.3, 0.3)))
    inner = Domain.union(Ball((0.0, 0.0), 0.2))
    org = (0.0, 0.0)
    assert discrete_lambda1(inner, 0.025, origin=org) >= discrete_lambda1(outer, 0.025, origin=org) - 1e-9


def test_faber_krahn_ball_and_square():
    ball = faber_krahn_check(Domain.union(Ball((0.0, 0.0), 0.2)), 1 / 40)
    assert ball.passed
    assert abs(ball.metrics["lambda1_domain"] - ball.metrics["lambda1_ball"]) <= ball.metrics["tol_fk"]
    s = math.sqrt(math.pi * 0.04) / 2
    sq = faber_krahn_check(Domain.union(Rect((-s, -s), (s, s))), 1 / 40)
    assert sq.passed


def test_sign_change_witness():
    R, trace = sign_change_witness(cells_per_unit=4)
    assert R is not None and R <= 64
    assert trace[-1][1] < 0
    assert all(lam >= 0 for _, lam in trace[:-1])
