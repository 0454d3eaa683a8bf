"""Quantitative audits of maximum principles, Hopf rates and symmetry.

Every audit returns an :class:`AuditEntry`; thresholds scale with the grid
size, since the statements being checked carry no rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import FormMatrices, small_measure_threshold
from .audit import AuditEntry
from .errors import BoundaryOutsideGrid, GridNotSymmetric
from .geometry import Ball, DiscreteField, Domain, Ellipse, Grid, ReflectionFrame
from .kernel import ell_array
from .solve import Nonlinearity

__all__ = [
    "AuditEntry",
    "MovingPlaneState",
    "moving_plane_state",
    "moving_plane_audit",
    "gnn_symmetry_audit",
    "radial_audit",
    "hopf_rate_audit",
    "interior_hopf_audit",
    "parallel_surface_audit",
    "strong_mp_audit",
    "small_measure_audit",
    "first_eigenfunction_sign_audit",
]


def _unit(e) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    return e / np.linalg.norm(e)


def _sup(u: DiscreteField) -> float:
    return u.sup_norm()


@dataclass
class MovingPlaneState:
    frame: ReflectionFrame
    w: DiscreteField
    cap_indices: np.ndarray
    c_field: DiscreteField
    u_sup: float


def _reflected_values(u: DiscreteField, frame: ReflectionFrame) -> np.ndarray:
    m = u.grid.reflection_map(frame)
    return np.where(m >= 0, u.values[np.maximum(m, 0)], 0.0)


def moving_plane_state(u: DiscreteField, e, lam: float, f: Nonlinearity | None = None) -> MovingPlaneState:
    """w = u(x_lambda) - u(x) on all cells and the difference quotient c_lambda."""
    frame = ReflectionFrame(tuple(_unit(e)), lam)
    ur = _reflected_values(u, frame)
    w = ur - u.values
    proj = u.grid.centers @ np.asarray(frame.e)
    cap = np.flatnonzero(proj > lam)
    c = np.zeros(u.grid.n)
    if f is not None:
        diff = ur - u.values
        nz = diff != 0
        c[nz] = -f.divided_difference(ur[nz], u.values[nz])
    return MovingPlaneState(frame, DiscreteField(u.grid, w), cap, DiscreteField(u.grid, c), _sup(u))


def moving_plane_audit(u: DiscreteField, e, lambdas, f: Nonlinearity | None = None,
                       tol_mp: float | None = None) -> list[AuditEntry]:
    """Sign of w_lambda on the cap {x.e > lambda} for each lambda.

    Pass iff min w >= -tol_mp, tol_mp = 10 h ||u||_inf by default.
    """
    grid = u.grid
    tol = 10.0 * grid.h * _sup(u) if tol_mp is None else tol_mp
    out = []
    for lam in lambdas:
        st = moving_plane_state(u, e, float(lam), f)
        wcap = st.w.values[st.cap_indices]
        cinf = float(np.max(np.abs(st.c_field.values[st.cap_indices]))) if len(wcap) else 0.0
        delta, _ = small_measure_threshold(cinf, grid.dim)
        metrics = {
            "lambda": float(lam),
            "min_w": float(wcap.min()) if len(wcap) else 0.0,
            "c_inf": cinf,
            "cap_measure": len(wcap) * grid.cell_measure,
            "small_measure_delta": delta,
            "tol_mp": tol,
        }
        out.append(AuditEntry.evaluate("moving_plane", metrics, {"min_w": (">=", -tol)},
                                       theorem="antisymmetric weak maximum principle"))
    return out


def _symmetry_plane(grid: Grid, e: np.ndarray) -> float:
    dom = grid.domain
    return 0.5 * (dom.support(e) - dom.support(-e))


def _lines_along(grid: Grid, frame: ReflectionFrame):
    """Groups of cells on common grid lines parallel to the frame axis,
    each sorted by increasing x.e."""
    k, sgn = frame.axis()
    idx = grid.index
    others = [j for j in range(grid.dim) if j != k]
    key = idx[:, others] if others else np.zeros((grid.n, 1), dtype=np.int64)
    order = np.lexsort((sgn * idx[:, k], *key.T[::-1]))
    ks = key[order]
    brk = np.flatnonzero(np.any(np.diff(ks, axis=0) != 0, axis=1)) + 1
    return np.split(order, brk)


def gnn_symmetry_audit(u: DiscreteField, e, lam: float | None = None,
                       f: Nonlinearity | None = None) -> AuditEntry:
    """Reflection symmetry about {x.e = lam} and monotone decrease on the cap.

    asym = max |u(x) - u(x_ref)| / ||u||; mono = largest increase between
    neighbouring cap cells along e, over ||u||.  Thresholds 10 h / diam.
    Metrics are always computed; the verdict is skipped when u is not
    positive or f is not Lipschitz.
    """
    grid = u.grid
    e = _unit(e)
    lam = _symmetry_plane(grid, e) if lam is None else lam
    frame = ReflectionFrame(tuple(e), lam)
    if frame.axis() is None:
        raise GridNotSymmetric(f"direction {tuple(e)} is not a lattice axis")
    ur = _reflected_values(u, frame)
    s = _sup(u) or 1.0
    asym = float(np.max(np.abs(u.values - ur))) / s
    k, sgn = frame.axis()
    proj = grid.centers @ e
    mono = 0.0
    for line in _lines_along(grid, frame):
        cap = line[proj[line] > lam]
        if len(cap) < 2:
            continue
        step = np.abs(np.diff(grid.index[cap, k])) == 1
        inc = np.diff(u.values[cap])[step]
        if inc.size:
            mono = max(mono, float(inc.max()))
    mono /= s
    thr = 10.0 * grid.h / grid.domain.diameter()
    metrics = {"asym": asym, "mono": mono, "threshold": thr, "plane": float(lam)}
    thm = "symmetry and monotonicity of positive solutions in convex symmetric sets"
    if f is not None and not f.lipschitz:
        return AuditEntry.skipped("gnn_symmetry", "nonlinearity is not Lipschitz", thm, metrics)
    if not np.all(u.values > 0):
        return AuditEntry.skipped("gnn_symmetry", "u is not positive", thm, metrics)
    return AuditEntry.evaluate("gnn_symmetry", metrics, {"asym": ("<=", thr), "mono": ("<=", thr)}, theorem=thm)


def _ball_radius_about(grid: Grid, center: np.ndarray) -> float:
    pieces = grid.domain.pieces
    if len(pieces) == 1 and isinstance(pieces[0], Ball) and np.allclose(pieces[0].center, center):
        return pieces[0].radius
    return float(np.max(np.linalg.norm(grid.centers - center, axis=1)) + 0.5 * grid.h * math.sqrt(grid.dim))


def radial_audit(u: DiscreteField, center, R: float | None = None) -> AuditEntry:
    """Radial symmetry and radial decrease via bins of width h."""
    grid = u.grid
    center = np.atleast_1d(np.asarray(center, dtype=float))
    R = _ball_radius_about(grid, center) if R is None else R
    r = np.linalg.norm(grid.centers - center, axis=1)
    b = np.floor(r / grid.h).astype(np.int64)
    s = _sup(u) or 1.0
    spread, means = 0.0, []
    for k in np.unique(b):
        v = u.values[b == k]
        spread = max(spread, float(v.max() - v.min()))
        means.append(float(v.mean()))
    inc = max([0.0] + [b2 - b1 for b1, b2 in zip(means[:-1], means[1:])])
    thr = 10.0 * grid.h / R
    metrics = {"spread": spread / s, "increase": inc / s, "threshold": thr, "radius": R}
    return AuditEntry.evaluate("radial", metrics, {"spread": ("<=", thr), "increase": ("<=", thr)},
                               theorem="radial symmetry and radial decrease on balls")


def _hopf_band(u: DiscreteField, B: Ball):
    grid = u.grid
    c = np.asarray(B.center)
    d = B.radius - np.linalg.norm(grid.centers - c, axis=1)
    hi = min(0.1, B.radius / 2)
    sel = (d >= 2 * grid.h) & (d <= hi)
    if not np.any(sel):
        return None
    rho = u.values[sel] / np.sqrt(ell_array(d[sel]))
    return float(rho.min()), float(rho.max())


def hopf_rate_audit(u: DiscreteField, B: Ball, refined: DiscreteField | None = None,
                    band_cap: float = 10.0) -> AuditEntry:
    """Boundary growth rate ell^{1/2}(dist): rho = u / ell^{1/2}(dist(x, dB))
    over cells with dist in [2h, min(0.1, R/2)].

    Pass iff rho_min > 0, band = rho_max / rho_min <= band_cap and, when a
    refined field is supplied, its band does not exceed this one.
    """
    name, thm = "hopf_rate", "Hopf lemma with rate ell^{1/2}(dist)"
    inside = B.contains(u.grid.centers)
    if not np.all(u.values[inside] > 0):
        return AuditEntry.skipped(name, "u is not positive inside the ball", thm)
    mm = _hopf_band(u, B)
    if mm is None:
        return AuditEntry.skipped(name, "no cells in the boundary window", thm)
    lo, hi = mm
    band = hi / lo if lo > 0 else math.inf
    metrics = {"rho_min": lo, "rho_max": hi, "band": band, "band_cap": band_cap}
    thresholds = {"rho_min": (">", 0.0), "band": ("<=", band_cap)}
    if refined is not None:
        mr = _hopf_band(refined, B)
        if mr is None or mr[0] <= 0:
            band_r = math.inf
        else:
            band_r = mr[1] / mr[0]
        metrics["band_refined"] = band_r
        metrics["band_growth"] = band_r - band
        thresholds["band_growth"] = ("<=", 0.0)
    return AuditEntry.evaluate(name, metrics, thresholds, theorem=thm)


def interior_hopf_audit(u, frame: ReflectionFrame, Q=None, slope_floor: float | None = None,
                        n_cells: int = 4) -> AuditEntry:
    """Linear growth of w away from the symmetry plane.

    ``u`` is a field (w is built from the frame) or a MovingPlaneState.  Along
    the grid line through the plane point nearest Q, the slope of w against
    the distance to the plane is fitted through the origin over the first
    ``n_cells`` cap cells.  Pass iff slope >= slope_floor (default
    tol_mp / h = 10 ||u||_inf).
    """
    if isinstance(u, MovingPlaneState):
        st = u
    else:
        st = moving_plane_state(u, frame.e, frame.offset)
    grid = st.w.grid
    e = np.asarray(st.frame.e)
    if st.frame.axis() is None:
        raise GridNotSymmetric("interior Hopf audit needs an axis-parallel plane")
    k, _ = st.frame.axis()
    C = grid.centers
    dist = C @ e - st.frame.offset
    cap = dist > 0
    if not np.any(cap):
        return AuditEntry.skipped("interior_hopf", "empty cap", "Hopf lemma on the symmetry hyperplane")
    if Q is None:
        Q = np.mean(C[cap], axis=0)
        Q = Q - (Q @ e - st.frame.offset) * e
    Q = np.asarray(Q, dtype=float)
    perp = np.delete(C - Q, k, axis=1)
    pn = np.linalg.norm(perp, axis=1) if perp.size else np.zeros(grid.n)
    near = np.min(pn[cap])
    on_line = cap & np.isclose(pn, near, atol=1e-9 * grid.h)
    # one line only: the one whose transverse offset sorts first
    cand = np.flatnonzero(on_line)
    key = np.delete(grid.index[cand], k, axis=1)
    first = np.all(key == key[np.lexsort(key.T[::-1])[0]], axis=1) if key.size else np.ones(len(cand), bool)
    line = cand[first]
    line = line[np.argsort(dist[line])][:n_cells]
    d, w = dist[line], st.w.values[line]
    slope = float(d @ w / (d @ d))
    floor = 10.0 * st.u_sup if slope_floor is None else slope_floor
    metrics = {"slope": slope, "slope_floor": floor, "cells": int(len(line)), "min_w": float(w.min())}
    return AuditEntry.evaluate("interior_hopf", metrics, {"slope": (">=", floor)},
                               theorem="Hopf lemma on the symmetry hyperplane")


def _boundary_samples(G: Domain, n: int = 256) -> np.ndarray:
    if len(G.pieces) == 1 and G.dim == 2:
        p = G.pieces[0]
        t = 2 * math.pi * np.arange(n) / n
        if isinstance(p, Ball):
            return np.asarray(p.center) + p.radius * np.column_stack([np.cos(t), np.sin(t)])
        if isinstance(p, Ellipse):
            return np.asarray(p.center) + np.column_stack([p.axes[0] * np.cos(t), p.axes[1] * np.sin(t)])
    B = G.boundary_points(1e-3)
    sel = np.linspace(0, len(B) - 1, n).round().astype(int)
    return B[sel]


def parallel_surface_audit(u: DiscreteField, G: Domain, R: float,
                           reference_osc: float | None = None, n_samples: int = 256) -> AuditEntry:
    """Oscillation of u on dG for u solved on G + B_R.

    For a ball G: pass iff osc <= 10 h / R and the field is radial about
    the centre.  Otherwise, with ``reference_osc`` (the ball-G value at the
    same h): pass iff osc >= 5 * reference_osc.
    """
    grid = u.grid
    P = _boundary_samples(G, n_samples)
    pos = grid.locate(P)
    if np.any(pos < 0):
        raise BoundaryOutsideGrid(f"{int(np.sum(pos < 0))} boundary samples of G lie outside the cells")
    v = u.values[pos]
    s = _sup(u) or 1.0
    osc = float(v.max() - v.min()) / s
    thm = "parallel surface rigidity"
    pieces = G.pieces
    if len(pieces) == 1 and isinstance(pieces[0], Ball):
        rad = radial_audit(u, pieces[0].center, pieces[0].radius + R)
        thr = 10.0 * grid.h / R
        metrics = {"osc": osc, "threshold": thr, "radial_spread": rad.metrics["spread"],
                   "radial_pass": 1.0 if rad.passed else 0.0}
        return AuditEntry.evaluate("parallel_surface", metrics,
                                   {"osc": ("<=", thr), "radial_pass": (">=", 1.0)}, theorem=thm)
    metrics = {"osc": osc}
    if reference_osc is None:
        return AuditEntry.skipped("parallel_surface", "non-ball G needs the ball-G reference oscillation",
                                  thm, metrics)
    metrics["reference_osc"] = reference_osc
    metrics["ratio"] = osc / reference_osc if reference_osc > 0 else math.inf
    return AuditEntry.evaluate("parallel_surface", metrics, {"ratio": (">=", 5.0)}, theorem=thm)


def strong_mp_audit(u: DiscreteField, zero_tol: float = 1e-12) -> AuditEntry:
    """Dichotomy: u > 0 on every cell, or u vanishes identically."""
    s = _sup(u)
    mn = float(u.values.min()) if u.values.size else 0.0
    trivial = s <= zero_tol
    positive = mn > 0
    metrics = {"min_u": mn, "sup_u": s, "nonpositive_cells": int(np.sum(u.values <= 0)),
               "dichotomy": 1.0 if (trivial or positive) else 0.0}
    return AuditEntry.evaluate("strong_mp", metrics, {"dichotomy": (">=", 1.0)},
                               theorem="strong maximum principle")


def small_measure_audit(F: FormMatrices, V_inf: float, lam1: float, measure: float | None = None) -> AuditEntry:
    """If |Omega| < delta(V_inf) the first eigenvalue must exceed V_inf."""
    delta, r = small_measure_threshold(V_inf, F.grid.dim)
    vol = F.grid.measure() if measure is None else measure
    metrics = {"measure": vol, "delta": delta, "r_star": r, "lambda1": lam1, "V_inf": V_inf}
    if not vol < delta:
        return AuditEntry.skipped("mp_small", "measure is not below the threshold", "small-measure maximum principle",
                                  metrics)
    return AuditEntry.evaluate("mp_small", metrics, {"lambda1": (">", V_inf)},
                               theorem="maximum principle in sets with small measure")


def first_eigenfunction_sign_audit(phi: DiscreteField) -> AuditEntry:
    """min * max >= -1e-8 ||phi||^2_inf (no sign change)."""
    v = phi.values
    s = float(np.max(np.abs(v)))
    metrics = {"sign_product": float(v.min() * v.max()) / (s * s) if s else 0.0}
    return AuditEntry.evaluate("first_eigenfunction_sign", metrics, {"sign_product": (">=", -1e-8)},
                               theorem="first eigenfunction does not change sign")
