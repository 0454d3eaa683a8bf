"""Galerkin matrices of the logarithmic Dirichlet form on cell indicators.

Two independent routes are provided:

* ``assemble_alt`` uses the representation
  E_L(u, u) = c/2 ∬ (u(x)-u(y))^2 |x-y|^{-N} + ∫ (h_Ω + ρ) u^2,
* ``assemble_def`` uses the cutoff kernels k (|z| < 1) and j (|z| >= 1)
  together with the exterior interaction of each cell.

All pair integrals are written in the difference variable z = y - x,

    J(C_i, C_j) = ∫ |z|^{-N} w(z) dz,   w(z) = |C_i ∩ (C_j - z)|,

where w is a product of piecewise linear tents.  The radial integral of each
bilinear piece is exact; only the polar angle is sampled (2D).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from ._quad import composite_rule, graded_panels, tensor_rule
from .geometry import Grid
from .kernel import KernelConstants, QuadratureSpec, constants, grid_ray_potential

Cutoff = Literal["none", "below_one", "above_one"]
CATALAN = 0.915965594177219015054603514932


@dataclass(frozen=True)
class Cell:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    @classmethod
    def cube(cls, lo, h: float) -> Cell:
        lo = tuple(float(t) for t in np.atleast_1d(lo))
        return cls(lo, tuple(t + h for t in lo))


# -------------------------------------------------------------- pair integral


def _tent_pieces(ai, bi, aj, bj, splits: Sequence[float]):
    """Linear pieces (p, q, T(p), T(q)) of w_k(z) = |[ai,bi] ∩ [aj-z, bj-z]|."""
    pts = sorted({aj - bi, aj - ai, bj - bi, bj - ai})
    lo, hi = pts[0], pts[-1]
    pts = sorted(set(pts) | {s for s in splits if lo < s < hi})

    def T(z):
        return max(0.0, min(bi, bj - z) - max(ai, aj - z))

    return [(p, q, T(p), T(q)) for p, q in zip(pts[:-1], pts[1:]) if q > p]


def _keep_1d(p, q, cutoff):
    if cutoff == "below_one":
        return max(abs(p), abs(q)) <= 1.0
    if cutoff == "above_one":
        return min(abs(p), abs(q)) >= 1.0
    return True


def _pair_1d(ci: Cell, cj: Cell, cutoff: Cutoff) -> float:
    total = 0.0
    for p, q, tp, tq in _tent_pieces(ci.lo[0], ci.hi[0], cj.lo[0], cj.hi[0], (-1.0, 0.0, 1.0)):
        if not _keep_1d(p, q, cutoff):
            continue
        beta = (tq - tp) / (q - p)
        if p >= 0:
            alpha = tp - beta * p
            if p == 0.0:
                if alpha != 0.0:
                    raise ValueError("overlapping cells: the full kernel is not integrable")
                total += beta * q
            else:
                total += alpha * math.log(q / p) + beta * (q - p)
        else:
            # z = -s with s in [-q, -p]
            alpha = tp - beta * p
            if q == 0.0:
                if alpha != 0.0:
                    raise ValueError("overlapping cells: the full kernel is not integrable")
                total += beta * p
            else:
                total += alpha * math.log(p / q) + beta * (p - q)
    return total


def _angle_nodes(q: QuadratureSpec):
    panels = max(1, q.subdivision_levels // 4)
    edges = graded_panels(0.0, 1.0, q.cutoff_refine, q.cutoff_refine, uniform=panels)
    return composite_rule(edges, q.gauss_order)


def _polar_rects(rects: np.ndarray, coef: np.ndarray, cutoff: Cutoff, q: QuadratureSpec) -> np.ndarray:
    """∬_rect (a1 + b1 z1)(a2 + b2 z2) / |z|^2 dz for rectangles whose
    interior avoids the origin; rows are (p1, q1, p2, q2) and (a1, b1, a2, b2)."""
    R = len(rects)
    if R == 0:
        return np.zeros(0)
    p1, q1, p2, q2 = rects.T
    a1, b1, a2, b2 = coef.T
    A = a1 * a2
    corners = np.stack([np.column_stack([p1, p2]), np.column_stack([q1, p2]),
                        np.column_stack([q1, q2]), np.column_stack([p1, q2])], axis=1)
    cc = np.column_stack([0.5 * (p1 + q1), 0.5 * (p2 + q2)])
    phic = np.arctan2(cc[:, 1], cc[:, 0])

    def rel(P):
        ang = np.arctan2(P[..., 1], P[..., 0]) - phic[:, None]
        return np.mod(ang + np.pi, 2 * np.pi) - np.pi

    at_origin = np.all(corners == 0.0, axis=-1)
    dc = np.where(at_origin, np.nan, rel(corners))
    lo = np.nanmin(dc, axis=1)
    hi = np.nanmax(dc, axis=1)
    brk = [lo[:, None], dc, hi[:, None]]
    if cutoff != "none":
        hits = []
        for k in range(4):
            P, Q = corners[:, k], corners[:, (k + 1) % 4]
            d = Q - P
            AA = np.sum(d * d, axis=1)
            BB = 2 * np.sum(P * d, axis=1)
            CC = np.sum(P * P, axis=1) - 1.0
            disc = BB * BB - 4 * AA * CC
            s = np.sqrt(np.maximum(disc, 0.0))
            for sg in (-1.0, 1.0):
                t = (-BB + sg * s) / (2 * AA)
                ok = (disc > 0) & (t > 0) & (t < 1)
                X = P + t[:, None] * d
                hits.append(np.where(ok, rel(X[:, None, :])[:, 0], np.nan))
        brk.append(np.column_stack(hits))
    B = np.concatenate(brk, axis=1)
    B = np.where(np.isnan(B), hi[:, None], B)
    B = np.clip(B, lo[:, None], hi[:, None])
    B.sort(axis=1)
    ta, tb = B[:, :-1], B[:, 1:]
    u, w = _angle_nodes(q)
    th = phic[:, None, None] + ta[..., None] + (tb - ta)[..., None] * u
    wt = (tb - ta)[..., None] * w
    cth, sth = np.cos(th), np.sin(th)

    def slab(p, qq, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            ta_, tb_ = p[:, None, None] / d, qq[:, None, None] / d
        small = np.abs(d) < 1e-300
        inside = (p[:, None, None] <= 0) & (qq[:, None, None] >= 0)
        lo_ = np.where(small, np.where(inside, -np.inf, np.inf), np.minimum(ta_, tb_))
        hi_ = np.where(small, np.where(inside, np.inf, -np.inf), np.maximum(ta_, tb_))
        return lo_, hi_

    l1, h1 = slab(p1, q1, cth)
    l2, h2 = slab(p2, q2, sth)
    r1 = np.maximum(np.maximum(l1, l2), 0.0)
    r2 = np.minimum(h1, h2)
    if cutoff == "below_one":
        r2 = np.minimum(r2, 1.0)
    elif cutoff == "above_one":
        r1 = np.maximum(r1, 1.0)
    ok = r2 > r1
    Bc = (a1 * b2)[:, None, None] * sth + (b1 * a2)[:, None, None] * cth
    Cc = (b1 * b2)[:, None, None] * cth * sth
    Ab = np.broadcast_to(A[:, None, None], r1.shape)
    zero_start = ok & (r1 == 0.0)
    scale = np.maximum(np.abs(rects).max(axis=1), 1e-300) ** 2
    if np.any(zero_start & (np.abs(Ab) > 1e-13 * scale[:, None, None])):
        raise ValueError("overlapping cells: the full kernel is not integrable")
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(ok & ~zero_start, np.log(np.where(ok, r2, 1.0) / np.where(ok & ~zero_start, r1, 1.0)), 0.0)
    G = np.where(ok, Ab * lg + Bc * (r2 - r1) + 0.5 * Cc * (r2 * r2 - r1 * r1), 0.0)
    return np.sum((G * wt).reshape(R, -1), axis=1)


def _pieces_2d(ci: Cell, cj: Cell):
    ax = [_tent_pieces(ci.lo[k], ci.hi[k], cj.lo[k], cj.hi[k], (0.0,)) for k in range(2)]
    rects, coef = [], []
    for (p1, q1, s1, t1) in ax[0]:
        be1 = (t1 - s1) / (q1 - p1)
        al1 = s1 - be1 * p1
        for (p2, q2, s2, t2) in ax[1]:
            be2 = (t2 - s2) / (q2 - p2)
            al2 = s2 - be2 * p2
            rects.append((p1, q1, p2, q2))
            coef.append((al1, be1, al2, be2))
    return np.array(rects, dtype=float).reshape(-1, 4), np.array(coef, dtype=float).reshape(-1, 4)


def pair_integral(ci: Cell, cj: Cell, cutoff: Cutoff = "none", q: QuadratureSpec | None = None) -> float:
    """∬_{C_i × C_j} |x - y|^{-N} dx dy, optionally restricted to |x-y| < 1
    (``below_one``) or |x-y| >= 1 (``above_one``)."""
    q = q or QuadratureSpec()
    if cutoff not in ("none", "below_one", "above_one"):
        raise ValueError(f"unknown cutoff {cutoff!r}")
    if len(ci.lo) == 1:
        return _pair_1d(ci, cj, cutoff)
    rects, coef = _pieces_2d(ci, cj)
    return float(np.sum(_polar_rects(rects, coef, cutoff, q)))


# ----------------------------------------------------------- offset tables

_CHUNK = 32


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("LOGLAP_THREADS", "0")) or (os.cpu_count() or 1)
    return max(1, int(threads))


def offset_table(h: float, N: int, keys: np.ndarray, cutoff: Cutoff, q: QuadratureSpec,
                 threads: int | None = None) -> np.ndarray:
    """J for lattice offsets ``keys`` (rows of nonnegative ints, one per axis)
    between cells of side h.  Chunks are fixed in size, so the result does
    not depend on the number of worker threads."""
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, N)
    zero = np.zeros(N)

    def one(d):
        return pair_integral(Cell.cube(zero, h), Cell.cube(d * h, h), cutoff, q)

    def chunk(s):
        block = keys[s:s + _CHUNK]
        if N == 1:
            return np.array([one(d) for d in block])
        parts = [_pieces_2d(Cell.cube(zero, h), Cell.cube(d * h, h)) for d in block]
        sizes = [len(r) for r, _ in parts]
        rects = np.concatenate([r for r, _ in parts])
        coef = np.concatenate([c for _, c in parts])
        vals = _polar_rects(rects, coef, cutoff, q)
        return np.array([v.sum() for v in np.split(vals, np.cumsum(sizes)[:-1])])

    starts = list(range(0, len(keys), _CHUNK))
    nt = _resolve_threads(threads)
    if nt == 1 or len(starts) == 1:
        out = [chunk(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            out = list(ex.map(chunk, starts))
    return np.concatenate(out) if out else np.zeros(0)


def self_energy(h: float, N: int) -> float:
    """S(h) = ∫_{|z|<1} (h^N - w(z)) |z|^{-N} dz, w the self-overlap of a
    cube of side h: the exterior interaction of a single cell within unit range."""
    if N == 1:
        m = min(h, 1.0)
        return 2.0 * (m + h * math.log(1.0 / m))
    if h <= 1.0 / math.sqrt(2.0):
        return h * h * (2 * math.pi * (1 - math.log(2) + math.log(1.0 / h)) + 2 * math.log(2) + 4 * CATALAN)
    return _self_energy_polar(h)


def _self_energy_polar(h: float, order: int = 40) -> float:
    """Polar evaluation of S(h) in 2D (any h); eight symmetric sectors."""
    brk = [0.0, math.pi / 4]
    if h < 1.0:
        brk.append(math.acos(min(h, 1.0)))
    brk = sorted(b for b in set(brk) if 0 <= b <= math.pi / 4)
    t, w = composite_rule(graded_panels(brk[0], brk[-1], uniform=1) if len(brk) == 2
                          else np.array(brk), order)
    c, s = np.cos(t), np.sin(t)
    rstar = h / c
    m = np.minimum(rstar, 1.0)
    val = h * (c + s) * m - 0.5 * c * s * m * m + np.where(rstar < 1.0, h * h * np.log(1.0 / rstar), 0.0)
    return 8.0 * float(val @ w)


# ------------------------------------------------------------------ matrices


@dataclass
class FormMatrices:
    """Stiffness matrix ``A`` and diagonal mass ``m`` of the discrete form."""

    A: np.ndarray
    m: np.ndarray
    route: str
    grid: Grid
    K: KernelConstants
    q: QuadratureSpec
    parts: dict = field(default_factory=dict)

    @property
    def M(self) -> np.ndarray:
        return np.diag(self.m)

    @property
    def n(self) -> int:
        return len(self.m)


def _table_lookup(grid: Grid, cutoff: Cutoff, q: QuadratureSpec, threads, extent=None):
    """Dense map offset -> J over all offsets between grid cells (or up to
    ``extent`` per axis).  Returns (table, span) with table indexed by |d|."""
    N = grid.dim
    span = grid.index.max(axis=0) - grid.index.min(axis=0) if extent is None else np.full(N, extent)
    if N == 1:
        first = 0 if cutoff == "above_one" else 1
        keys = np.arange(first, span[0] + 1)[:, None]
        vals = np.zeros(span[0] + 1)
        if len(keys):
            vals[first:] = offset_table(grid.h, 1, keys, cutoff, q, threads)
        return vals, span
    m = int(span.max())
    i, j = np.triu_indices(m + 1)
    keys = np.column_stack([i, j])
    if cutoff != "above_one":
        keys = keys[1:]
    vals = offset_table(grid.h, 2, keys, cutoff, q, threads)
    table = np.zeros((m + 1, m + 1))
    table[keys[:, 0], keys[:, 1]] = vals
    table[keys[:, 1], keys[:, 0]] = vals
    return table, span


def _dense_from_table(grid: Grid, table: np.ndarray) -> np.ndarray:
    idx = grid.index
    n = grid.n
    out = np.empty((n, n))
    blk = max(1, 4_000_000 // max(n, 1))
    for s in range(0, n, blk):
        d = np.abs(idx[s:s + blk, None, :] - idx[None, :, :])
        out[s:s + blk] = table[d[..., 0]] if grid.dim == 1 else table[d[..., 0], d[..., 1]]
    return out


def _self_above_one(h: float, N: int, q: QuadratureSpec) -> float:
    if h * math.sqrt(N) < 1.0:
        return 0.0
    c = Cell.cube(np.zeros(N), h)
    return pair_integral(c, c, "above_one", q)


def _ray_cell_average(grid: Grid, K: KernelConstants, q: QuadratureSpec, r_cut, order: int) -> np.ndarray:
    """∫_{C_i} of the ray potential of Omega_h ∪ (3^N block of i), per cell."""
    nodes, weights = tensor_rule(order, grid.dim)
    h = grid.h
    lo = grid.origin + grid.index * h
    X = (lo[:, None, :] + h * nodes[None, :, :]).reshape(-1, grid.dim)
    src = np.repeat(grid.index, len(weights), axis=0)
    vals = grid_ray_potential(grid, X, K, q, r_cut=r_cut, src=src)
    return vals.reshape(grid.n, -1) @ (weights * h ** grid.dim)


def _block_correction(grid: Grid, table_fn) -> np.ndarray:
    """Σ over the 3^N block cells of i that are not grid cells of table_fn(|d|)."""
    N = grid.dim
    offs = np.array(np.meshgrid(*([[-1, 0, 1]] * N), indexing="ij")).reshape(N, -1).T
    offs = offs[np.any(offs != 0, axis=1)]
    out = np.zeros(grid.n)
    for d in offs:
        missing = grid.lookup(grid.index + d) < 0
        out += missing * table_fn(np.abs(d))
    return out


def assemble_alt(grid: Grid, K: KernelConstants | None = None, q: QuadratureSpec | None = None,
                 potential: Literal["identity", "rays"] = "identity",
                 threads: int | None = None) -> FormMatrices:
    """Stiffness matrix from the h_Ω representation.

    A_ij = -c J_ij (i != j) and A_ii = c Σ_{j≠i} J_ij + H_i + ρ h^N with
    H_i = ∫_{C_i} h_{Ω_h}.  ``potential="identity"`` evaluates H_i exactly
    through the lattice identity H_i = c (S(h) - J_ii^{>1}) - c Σ_{j≠i} J_ij;
    ``"rays"`` integrates h_{Ω_h} over the cell by tensor Gauss with the
    3^N neighbour block removed from the singular part.
    """
    K = K or constants(grid.dim)
    q = q or QuadratureSpec()
    N, h, c = grid.dim, grid.h, K.c
    table, _ = _table_lookup(grid, "none", q, threads)
    J = _dense_from_table(grid, table)
    np.fill_diagonal(J, 0.0)
    rowsum = J.sum(axis=1)
    if potential == "identity":
        H = c * (self_energy(h, N) - _self_above_one(h, N, q)) - c * rowsum
    elif potential == "rays":
        look = (lambda d: table[d[0]]) if N == 1 else (lambda d: table[d[0], d[1]])
        H = _ray_cell_average(grid, K, q, None, q.gauss_order) + c * _block_correction(grid, look)
    else:
        raise ValueError(f"unknown potential rule {potential!r}")
    rho_term = K.rho * h ** N
    A = -c * J
    A[np.diag_indices_from(A)] = c * rowsum + H + rho_term
    parts = {"J": J, "offdiag_sum": c * rowsum, "H": H, "rho_term": rho_term}
    return FormMatrices(A=A, m=np.full(grid.n, h ** N), route="alt", grid=grid, K=K, q=q, parts=parts)


def assemble_def(grid: Grid, K: KernelConstants | None = None, q: QuadratureSpec | None = None,
                 exterior: Literal["lattice", "rays"] = "lattice",
                 threads: int | None = None) -> FormMatrices:
    """Stiffness matrix from the cutoff-kernel definition.

    A = E - c J^{>1} + ρ h^N I, where E has off-diagonal -c J^{<1}_ij and
    diagonal c Σ_{j≠i} J^{<1}_ij + B_i, B_i = c ∫_{C_i} ∫_{B_1(x) \\ Ω_h} |x-y|^{-N}.
    ``exterior="lattice"`` sums the k-interaction of C_i with every
    complement cell of the lattice; ``"rays"`` integrates along rays.
    """
    K = K or constants(grid.dim)
    q = q or QuadratureSpec()
    N, h, c = grid.dim, grid.h, K.c
    Tk, _ = _table_lookup(grid, "below_one", q, threads)
    Tj, _ = _table_lookup(grid, "above_one", q, threads)
    Jk = _dense_from_table(grid, Tk)
    np.fill_diagonal(Jk, 0.0)
    Jj = _dense_from_table(grid, Tj)
    if exterior == "lattice":
        reach = int(math.ceil(1.0 / h)) + 1
        full, _ = _table_lookup(grid, "below_one", q, threads, extent=reach)
        if N == 1:
            total = 2.0 * full.sum()
        else:
            total = 4.0 * full.sum() - 2.0 * full[0, :].sum() - 2.0 * full[:, 0].sum() + full[0, 0]
        B = c * (total - Jk.sum(axis=1))
    elif exterior == "rays":
        look = (lambda d: Tk[d[0]]) if N == 1 else (lambda d: Tk[d[0], d[1]])
        B = _ray_cell_average(grid, K, q, 1.0, q.gauss_order) + c * _block_correction(grid, look)
    else:
        raise ValueError(f"unknown exterior rule {exterior!r}")
    E = -c * Jk
    E[np.diag_indices_from(E)] = c * Jk.sum(axis=1) + B
    rho_term = K.rho * h ** N
    A = E - c * Jj
    A[np.diag_indices_from(A)] += rho_term
    parts = {"Jk": Jk, "Jj": Jj, "B": B, "rho_term": rho_term}
    return FormMatrices(A=A, m=np.full(grid.n, h ** N), route="def", grid=grid, K=K, q=q, parts=parts)


def route_discrepancy(F1: FormMatrices, F2: FormMatrices) -> float:
    """max |A1 - A2| / max |A1|."""
    return float(np.max(np.abs(F1.A - F2.A)) / np.max(np.abs(F1.A)))


def quadratic_form_direct(F: FormMatrices, u: np.ndarray) -> float:
    """(c/2) Σ_ij (u_i - u_j)^2 J_ij + Σ_i (H_i + ρ h^N) u_i^2 (alt route parts)."""
    J = F.parts["J"]
    u = np.asarray(u, dtype=float)
    diff = (u[:, None] - u[None, :]) ** 2
    return float(0.5 * F.K.c * np.sum(diff * J) + np.sum((F.parts["H"] + F.parts["rho_term"]) * u * u))


def small_measure_threshold(V_inf: float, N: int) -> tuple[float, float]:
    """(delta, r_star): r_star = exp(-(V_inf + |ρ_N|)/2), delta = |B_{r_star}|.

    Any Ω with |Ω| < delta has first eigenvalue above V_inf.
    """
    if V_inf < 0:
        raise ValueError("V_inf must be nonnegative")
    rho = constants(N).rho
    r = math.exp(-(V_inf + abs(rho)) / 2.0)
    delta = 2.0 * r if N == 1 else math.pi * r * r
    return delta, r


def write_matrix(path, A: np.ndarray) -> None:
    """Plain-text dense dump: header 'rows cols', rows of 17-digit values."""
    A = np.atleast_2d(A)
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_matrix(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    r, c = (int(t) for t in text[0].split())
    return np.array([[float(t) for t in ln.split()] for ln in text[1:1 + r]]).reshape(r, c)
