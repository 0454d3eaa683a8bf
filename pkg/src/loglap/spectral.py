"""Dirichlet eigenpairs of the discrete form and eigenvalue comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .assembly import FormMatrices, assemble_alt
from .audit import AuditEntry
from .geometry import Ball, DiscreteField, Domain, build_grid
from .kernel import QuadratureSpec, constants


@dataclass
class EigenPair:
    lam: float
    phi: DiscreteField


def _sym(F: FormMatrices) -> tuple[np.ndarray, np.ndarray]:
    s = 1.0 / np.sqrt(F.m)
    S = F.A * s[:, None] * s[None, :]
    return 0.5 * (S + S.T), s


def eigs(F: FormMatrices, k: int = 1) -> list[EigenPair]:
    """The k smallest generalized eigenpairs of (A, M), M-normalised.

    Eigenvectors are signed so that their largest-magnitude entry is positive.
    """
    n = F.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    S, s = _sym(F)
    w, V = eigh(S, subset_by_index=[0, k - 1], driver="evr")
    out = []
    for j in range(k):
        phi = V[:, j] * s
        if phi[np.argmax(np.abs(phi))] < 0:
            phi = -phi
        out.append(EigenPair(float(w[j]), DiscreteField(F.grid, phi)))
    return out


def lambda1(F: FormMatrices) -> float:
    S, _ = _sym(F)
    return float(eigh(S, eigvals_only=True, subset_by_index=[0, 0], driver="evr")[0])


def ball_radius(volume: float, N: int) -> float:
    return volume / 2.0 if N == 1 else math.sqrt(volume / math.pi)


def ball_volume(r: float, N: int) -> float:
    return 2.0 * r if N == 1 else math.pi * r * r


def lambda1_lower_bound(volume: float, N: int) -> float:
    """2 log(1/r) - |rho_N| for the ball B_r of the given volume."""
    if not volume > 0:
        raise ValueError("volume must be positive")
    r = ball_radius(volume, N)
    return 2.0 * math.log(1.0 / r) - abs(constants(N).rho)


def _ball_domain(r: float, N: int) -> Domain:
    return Domain.union(Ball((0.0,) * N, r))


def discrete_lambda1(domain: Domain, h: float, q: QuadratureSpec | None = None,
                     origin=None, threads: int | None = None) -> float:
    grid = build_grid(domain, h, origin=origin)
    return lambda1(assemble_alt(grid, constants(domain.dim), q, threads=threads))


def faber_krahn_check(domain: Domain, h: float, q: QuadratureSpec | None = None,
                      threads: int | None = None) -> AuditEntry:
    """Compare lambda_1(Omega) with lambda_1 of the ball of equal volume.

    Passes iff lambda_1(Omega) >= lambda_1(B) - tol_fk, with
    tol_fk = 0.05 |lambda_1(B)| + 2 delta and delta the larger change of the
    two eigenvalues between grid sizes 2h and h.
    """
    N = domain.dim
    vol = domain.measure()
    r = ball_radius(vol, N)
    ball = _ball_domain(r, N)
    lo = discrete_lambda1(domain, h, q, threads=threads)
    lb = discrete_lambda1(ball, h, q, threads=threads)
    lo2 = discrete_lambda1(domain, 2 * h, q, threads=threads)
    lb2 = discrete_lambda1(ball, 2 * h, q, threads=threads)
    delta = max(abs(lb - lb2), abs(lo - lo2))
    tol = 0.05 * abs(lb) + 2.0 * delta
    metrics = {"lambda1_domain": lo, "lambda1_ball": lb, "ball_radius": r,
               "refinement_delta": delta, "tol_fk": tol, "margin": lo - (lb - tol)}
    return AuditEntry.evaluate("faber_krahn", metrics, {"margin": (">=", 0.0)},
                               theorem="Faber-Krahn inequality for open bounded sets")


def sign_change_witness(cells_per_unit: int = 4, R_max: float = 64.0,
                        q: QuadratureSpec | None = None) -> tuple[float | None, list[tuple[float, float]]]:
    """Smallest R = 1, 2, 4, ... <= R_max with discrete lambda_1((-R, R)) < 0.

    Returns (R or None, [(R, lambda_1), ...]) in 1D at fixed cells per unit.
    """
    h = 1.0 / cells_per_unit
    trace = []
    R = 1.0
    while R <= R_max:
        lam = discrete_lambda1(_ball_domain(R, 1), h, q)
        trace.append((R, lam))
        if lam < 0:
            return R, trace
        R *= 2.0
    return None, trace


def rayleigh_quotient(F: FormMatrices, v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    return float(v @ F.A @ v / (v @ (F.m * v)))
