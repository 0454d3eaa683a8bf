"""Poisson, torsion and semilinear Dirichlet solves on the cell basis."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, lu_factor, lu_solve

from .assembly import FormMatrices
from .errors import NoConvergence, NotCoercive, SingularJacobian
from .geometry import DiscreteField


@dataclass(frozen=True)
class Nonlinearity:
    """f(t) of one of the kinds const, linear, power, poly.

    params: const -> (c,); linear -> (a, b) for a t + b; power -> (p, scale)
    for scale * max(t, 0)^p; poly -> coefficients c0, c1, ... of sum c_k t^k.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        n = {"const": 1, "linear": 2, "power": 2}
        if self.kind not in ("const", "linear", "power", "poly"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind in n and len(self.params) != n[self.kind]:
            raise ValueError(f"{self.kind} takes {n[self.kind]} parameters")
        if self.kind == "poly" and not self.params:
            raise ValueError("poly needs at least one coefficient")
        if self.kind == "power":
            if self.params[0] <= 0:
                raise ValueError("power exponent must be positive")
            if self.params[0] < 1:
                warnings.warn("power nonlinearity with p < 1 is not Lipschitz at 0", stacklevel=2)

    @classmethod
    def const(cls, c: float) -> Nonlinearity:
        return cls("const", (float(c),))

    @classmethod
    def linear(cls, a: float, b: float) -> Nonlinearity:
        return cls("linear", (float(a), float(b)))

    @classmethod
    def power(cls, p: float, scale: float = 1.0) -> Nonlinearity:
        return cls("power", (float(p), float(scale)))

    @classmethod
    def poly(cls, coefficients: Sequence[float]) -> Nonlinearity:
        return cls("poly", tuple(float(c) for c in coefficients))

    @property
    def lipschitz(self) -> bool:
        return not (self.kind == "power" and self.params[0] < 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k, p = self.kind, self.params
        if k == "const":
            return np.full_like(t, p[0])
        if k == "linear":
            return p[0] * t + p[1]
        if k == "power":
            return p[1] * np.maximum(t, 0.0) ** p[0]
        return np.polynomial.polynomial.polyval(t, p)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        k, p = self.kind, self.params
        if k == "const":
            return np.zeros_like(t)
        if k == "linear":
            return np.full_like(t, p[0])
        if k == "power":
            tp = np.maximum(t, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                d = p[1] * p[0] * tp ** (p[0] - 1.0)
            return np.where(tp > 0, d, 0.0 if p[0] > 1 else (p[1] if p[0] == 1 else np.inf))
        return np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(p))

    def divided_difference(self, s, t):
        """(f(s) - f(t)) / (s - t) for s != t, free of the constant term."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        k, p = self.kind, self.params
        if k == "const":
            return np.zeros(np.broadcast(s, t).shape)
        if k == "linear":
            return np.full(np.broadcast(s, t).shape, p[0])
        if k == "power":
            return (self(s) - self(t)) / (s - t)
        # sum_k c_k (s^k - t^k) / (s - t) = sum_k c_k sum_i s^i t^(k-1-i)
        out = np.zeros(np.broadcast(s, t).shape)
        for deg in range(1, len(p)):
            term = sum(s ** i * t ** (deg - 1 - i) for i in range(deg))
            out = out + p[deg] * term
        return out

    def lipschitz_on(self, lo: float, hi: float, samples: int = 257) -> float:
        """Sampled Lipschitz bound of f on [lo, hi]."""
        t = np.linspace(lo, hi, samples)
        return float(np.max(np.abs(self.deriv(t))))


@dataclass
class SolveOutcome:
    u: DiscreteField
    iterations: int
    residual_norm: float
    positivity_min: float
    history: list[float] = field(default_factory=list)

    def newton_tail_constant(self) -> float:
        """max r_{k+1} / r_k^2 over the last three residuals (inf if undefined)."""
        r = [x for x in self.history[-3:]]
        if len(r) < 2:
            return math.inf
        vals = [b / a ** 2 for a, b in zip(r[:-1], r[1:]) if a > 0]
        return max(vals) if vals else math.inf


def _values(g, F: FormMatrices) -> np.ndarray:
    if isinstance(g, DiscreteField):
        return g.values
    g = np.asarray(g, dtype=float)
    return np.full(F.n, float(g)) if g.ndim == 0 else g


def _outcome(F: FormMatrices, u: np.ndarray, res: float, it: int, hist=None) -> SolveOutcome:
    return SolveOutcome(DiscreteField(F.grid, u), it, float(res), float(np.min(u)), list(hist or [res]))


def solve_poisson(F: FormMatrices, g) -> SolveOutcome:
    """Solve A u = M g by Cholesky; NotCoercive when A is not positive definite."""
    rhs = F.m * _values(g, F)
    try:
        fac = cho_factor(F.A, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise NotCoercive("stiffness matrix is not positive definite: the first "
                          "eigenvalue is not positive at this resolution") from exc
    u = cho_solve(fac, rhs)
    return _outcome(F, u, np.linalg.norm(F.A @ u - rhs), 1)


def solve_torsion(F: FormMatrices) -> SolveOutcome:
    """Log-torsion function: L u = 1 in Omega, u = 0 outside."""
    return solve_poisson(F, np.ones(F.n))


def _factor_jacobian(J: np.ndarray, normA: float):
    def ok(fac):
        d = np.abs(np.diag(fac[0]))
        return np.all(np.isfinite(d)) and d.min() > 1e-14 * normA

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fac = lu_factor(J)
        if ok(fac):
            return fac
        n = len(J)
        for k in range(6, 1, -1):
            fac = lu_factor(J + 10.0 ** (-k) * normA * np.eye(n))
            if ok(fac):
                return fac
    raise SingularJacobian("Newton system is singular even with Levenberg shifts")


def default_start(F: FormMatrices, f: Nonlinearity) -> np.ndarray:
    """Positive start: (A + sigma M) u = M 1 with sigma = max(0, -lambda_min) + 0.1."""
    s = 1.0 / np.sqrt(F.m)
    lam_min = float(eigh(F.A * s[:, None] * s[None, :], eigvals_only=True, subset_by_index=[0, 0])[0])
    sigma = max(0.0, -lam_min) + 0.1
    return np.linalg.solve(F.A + sigma * np.diag(F.m), F.m)


def solve_semilinear(F: FormMatrices, f: Nonlinearity, u0=None, tol: float = 1e-10,
                     max_iter: int = 50) -> SolveOutcome:
    """Damped Newton for A u = M f(u).

    Armijo backtracking on ||R||_2 with factor 1/2 (at most 40 halvings);
    converged iff ||R|| <= tol (1 + ||M f(u)||).
    """
    A, m = F.A, F.m
    normA = float(np.linalg.norm(A, 2))
    u = default_start(F, f) if u0 is None else _values(u0, F).astype(float).copy()

    def resid(v):
        return A @ v - m * f(v)

    R = resid(u)
    r = float(np.linalg.norm(R))
    hist = [r]
    for it in range(1, max_iter + 1):
        J = A - np.diag(m * f.deriv(u))
        fac = _factor_jacobian(J, normA)
        du = -lu_solve(fac, R)
        t = 1.0
        for _ in range(41):
            v = u + t * du
            Rv = resid(v)
            rv = float(np.linalg.norm(Rv))
            if rv <= (1.0 - 1e-4 * t) * r:
                break
            t *= 0.5
        u, R, r = v, Rv, rv
        hist.append(r)
        if r <= tol * (1.0 + float(np.linalg.norm(m * f(u)))):
            return _outcome(F, u, r, it, hist)
    raise NoConvergence(f"Newton did not converge in {max_iter} iterations (residual {r:.3e})")


def check_supersolution(F: FormMatrices, u, V, g) -> float:
    """min_i (A u - M (V u + g))_i; nonnegative certifies a discrete supersolution."""
    uu, VV, gg = _values(u, F), _values(V, F), _values(g, F)
    return float(np.min(F.A @ uu - F.m * (VV * uu + gg)))


def write_field_csv(path, u: DiscreteField) -> None:
    """CSV with header 'x[,y],value' and one row per cell centre."""
    C = u.grid.centers
    head = "x,value" if u.grid.dim == 1 else "x,y,value"
    rows = [head]
    for c, v in zip(C, u.values):
        rows.append(",".join(f"{t:.17g}" for t in (*c, v)))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")
