"""Constants, kernels and pointwise evaluation of the logarithmic Laplacian.

The operator has Fourier symbol ``2 log|xi|`` and the pointwise form

    L u(x) = c_N int_{B_1(x)} (u(x) - u(y)) / |x-y|^N dy
             - c_N int_{R^N \\ B_1(x)} u(y) / |x-y|^N dy + rho_N u(x).

Radial integrals of ``|z|^{-N}`` against indicator functions are evaluated in
closed form as log-ratios along rays; only the angular variable is sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import digamma, gamma

from ._quad import composite_rule, graded_panels
from .errors import (
    NonPowerOfTwoGrid,
    PointOutsideDomain,
    QuadratureDivergence,
    SingularArgument,
    UnsupportedDimension,
)
from .geometry import DiscreteField, Domain, Grid

EULER_GAMMA = 0.57721566490153286061


@dataclass(frozen=True)
class KernelConstants:
    N: int
    c: float
    rho: float


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature knobs.

    gauss_order: nodes per panel for pair integrals and cell averages.
    subdivision_levels: panel refinement of pair integrals (2D: angular panels
        per piece grow with it).
    angular_nodes: angular nodes for ray integrals in 2D.
    cutoff_refine: dyadic grading toward the |z| = 1 crossings and toward
        tangent directions in angular rules.
    """

    gauss_order: int = 6
    subdivision_levels: int = 12
    angular_nodes: int = 256
    cutoff_refine: int = 4

    def __post_init__(self):
        for name in ("gauss_order", "subdivision_levels", "angular_nodes", "cutoff_refine"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")

    def doubled(self) -> QuadratureSpec:
        return QuadratureSpec(2 * self.gauss_order, 2 * self.subdivision_levels,
                              self.angular_nodes, self.cutoff_refine)


def constants(N: int) -> KernelConstants:
    """c_N = Gamma(N/2) pi^{-N/2}, rho_N = 2 log 2 + psi(N/2) - gamma."""
    if N not in (1, 2):
        raise UnsupportedDimension(f"dimension {N} is not supported (1 or 2)")
    c = float(gamma(N / 2) * math.pi ** (-N / 2))
    rho = float(2 * math.log(2) + digamma(N / 2) - EULER_GAMMA)
    return KernelConstants(N=N, c=c, rho=rho)


def kernel_eval(z, K: KernelConstants) -> tuple[float, float]:
    """(k(z), j(z)); the unit sphere belongs to j."""
    r = math.hypot(*np.atleast_1d(np.asarray(z, dtype=float)))
    if r == 0.0:
        raise SingularArgument("kernel is singular at z = 0")
    with np.errstate(over="ignore", divide="ignore"):
        v = float(K.c / np.float64(r) ** K.N)
    return (v, 0.0) if r < 1.0 else (0.0, v)


def ell(r: float) -> float:
    """1 / |log(min(r, 0.1))|."""
    if not r > 0:
        raise ValueError("ell needs r > 0")
    return 1.0 / abs(math.log(min(r, 0.1)))


def ell_array(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return 1.0 / np.abs(np.log(np.minimum(r, 0.1)))


# ------------------------------------------------------------- ray helpers


def _first_exit_log(a, b, covered0):
    """Per-ray sums for piecewise intervals sorted by start.

    Returns (r_exit, later) where r_exit ends the covered component through
    r = 0 and ``later`` is the log-measure int dr/r of the union beyond it.
    """
    n, P = a.shape
    E = np.zeros(n)
    for p in range(P):
        ext = covered0 & np.isfinite(a[:, p]) & (a[:, p] <= E)
        E = np.where(ext, np.maximum(E, b[:, p]), E)
    # union log-measure beyond E
    run = E.copy()
    later = np.zeros(n)
    for p in range(P):
        ok = np.isfinite(a[:, p]) & (b[:, p] > run)
        lo = np.maximum(a[:, p], run)
        later += np.where(ok, np.log(np.where(ok, b[:, p], 1.0) / np.where(ok, lo, 1.0)), 0.0)
        run = np.where(ok, b[:, p], run)
    return E, later


def _domain_F(domain: Domain, x: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Per-direction F = int_0^inf (1{r<1} - 1_Omega(x + r d)) dr / r."""
    X = np.broadcast_to(x, D.shape)
    t0, t1 = domain.line_intervals(np.ascontiguousarray(X), D)
    t0 = t0.T.copy()
    t1 = t1.T.copy()
    t0 = np.where(np.isfinite(t0) & (t1 > 0), np.maximum(t0, 0.0), np.nan)
    t1 = np.where(np.isfinite(t0), t1, np.nan)
    order = np.argsort(np.where(np.isfinite(t0), t0, np.inf), axis=1)
    a = np.take_along_axis(t0, order, axis=1)
    b = np.take_along_axis(t1, order, axis=1)
    E, later = _first_exit_log(a, b, np.ones(len(D), dtype=bool))
    return -np.log(E) - later


def _circle_line_hits(c, r, p, q):
    d = q - p
    f = p - c
    A = d @ d
    B = 2 * f @ d
    C = f @ f - r * r
    disc = B * B - 4 * A * C
    if disc < 0:
        return []
    s = math.sqrt(disc)
    return [p + t * d for t in ((-B - s) / (2 * A), (-B + s) / (2 * A)) if 0 <= t <= 1]


def _circle_circle_hits(c1, r1, c2, r2):
    d = float(np.linalg.norm(c2 - c1))
    if d == 0 or d > r1 + r2 or d < abs(r1 - r2):
        return []
    a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
    hh = math.sqrt(max(r1 * r1 - a * a, 0.0))
    m = c1 + a * (c2 - c1) / d
    perp = np.array([-(c2 - c1)[1], (c2 - c1)[0]]) / d
    return [m + hh * perp, m - hh * perp]


def _seg_seg_hit(p1, q1, p2, q2):
    d1, d2 = q1 - p1, q2 - p2
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if den == 0:
        return []
    w = p2 - p1
    t = (w[0] * d2[1] - w[1] * d2[0]) / den
    s = (w[0] * d1[1] - w[1] * d1[0]) / den
    return [p1 + t * d1] if 0 <= t <= 1 and 0 <= s <= 1 else []


def _angular_breaks(domain: Domain, x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Directions where the ray integrand may lose smoothness.

    Returns (sorted angles in [0, 2 pi), all_pieces_known).
    """
    curves = []
    known = True
    for p in domain.pieces:
        cs = p.curves()
        if not cs:
            known = False
        curves.extend(cs)
    pts = []
    tangents = []
    for kind, *g in curves:
        if kind == "segment":
            pts.extend(g)
        else:
            c, r = g
            d = float(np.linalg.norm(c - x))
            if d > r:
                base = math.atan2(*(c - x)[::-1])
                off = math.asin(r / d)
                tangents += [base - off, base + off]
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            (k1, *g1), (k2, *g2) = curves[i], curves[j]
            if k1 == "circle" and k2 == "circle":
                pts.extend(_circle_circle_hits(g1[0], g1[1], g2[0], g2[1]))
            elif k1 == "circle":
                pts.extend(_circle_line_hits(g1[0], g1[1], g2[0], g2[1]))
            elif k2 == "circle":
                pts.extend(_circle_line_hits(g2[0], g2[1], g1[0], g1[1]))
            else:
                pts.extend(_seg_seg_hit(g1[0], g1[1], g2[0], g2[1]))
    ang = [math.atan2(*(np.asarray(p) - x)[::-1]) for p in pts
           if np.linalg.norm(np.asarray(p) - x) > 1e-14]
    ang = np.mod(np.array(ang + tangents, dtype=float), 2 * math.pi)
    ang = np.unique(np.round(ang, 14))
    return ang, known


def _angular_rule(domain: Domain, x: np.ndarray, q: QuadratureSpec):
    """Nodes/weights on [0, 2 pi) adapted to the kinks of the ray integrand."""
    M = q.angular_nodes
    breaks, known = _angular_breaks(domain, x)
    if not known:
        # curved pieces without explicit kinks: fine uniform Gauss panels
        edges = np.linspace(0.0, 2 * math.pi, max(M // 8, 1) + 1)
        if len(breaks):
            edges = np.unique(np.concatenate([edges, breaks]))
        return composite_rule(edges, 8)
    if len(breaks) == 0:
        t = 2 * math.pi * np.arange(M) / M
        return t, np.full(M, 2 * math.pi / M)
    edges = np.concatenate([breaks, [breaks[0] + 2 * math.pi]])
    order = max(8, int(math.ceil(M / len(breaks))))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1e-15:
            continue
        panels = graded_panels(a, b, q.cutoff_refine, q.cutoff_refine)
        n, w = composite_rule(panels, order)
        nodes.append(n)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


# ------------------------------------------------------------- lattice rays


def lattice_ray_segments(grid: Grid, X: np.ndarray, D: np.ndarray, r_max: float):
    """Split rays X + r D, r in (0, r_max), at lattice faces and at r = 1.

    Returns (a, b, idx): interval ends of shape (n, K) and lattice indices
    of shape (n, K, N) of the cell containing each sub-interval.
    """
    n, N = X.shape
    h = grid.h
    K = int(math.ceil(r_max / h)) + 2
    ts = []
    k = np.arange(K)
    for ax in range(N):
        x = (X[:, ax] - grid.origin[ax]) / h
        d = D[:, ax]
        pos = d > 0
        neg = d < 0
        m0 = np.where(pos, np.floor(x) + 1, np.ceil(x) - 1)
        step = np.where(pos, 1.0, -1.0)
        m = m0[:, None] + step[:, None] * k[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (m - x[:, None]) * h / d[:, None]
        t = np.where((pos | neg)[:, None], t, np.inf)
        ts.append(t)
    ts.append(np.zeros((n, 1)))
    ts.append(np.ones((n, 1)))
    ts.append(np.full((n, 1), r_max))
    T = np.sort(np.minimum(np.concatenate(ts, axis=1), r_max), axis=1)
    a, b = T[:, :-1], T[:, 1:]
    mid = 0.5 * (a + b)
    P = X[:, None, :] + mid[..., None] * D[:, None, :]
    idx = np.floor((P - grid.origin) / h).astype(np.int64)
    return a, b, idx


def _grid_occupancy(grid: Grid, idx: np.ndarray, src: np.ndarray | None = None) -> np.ndarray:
    shape = idx.shape[:-1]
    occ = grid.lookup(idx.reshape(-1, idx.shape[-1])).reshape(shape) >= 0
    if src is not None:
        occ |= np.all(np.abs(idx - src[:, None, :]) <= 1, axis=-1)
    return occ


def _ray_F(a, b, occ, r_cut: float | None = None):
    """F per ray from sub-intervals; with r_cut only r < r_cut is counted
    and the result is int_0^{r_cut} (1 - 1_occ) dr / r."""
    n = a.shape[0]
    valid = b > a
    out_first = valid & ~occ
    has = out_first.any(axis=1)
    j = np.argmax(out_first, axis=1)
    rows = np.arange(n)
    r_exit = np.where(has, a[rows, j], b[:, -1])
    later_mask = valid & occ & (a >= r_exit[:, None])
    if r_cut is not None:
        later_mask &= a < r_cut
        r_exit = np.minimum(r_exit, r_cut)
        with np.errstate(divide="ignore"):
            lg = np.log(np.where(later_mask, np.minimum(b, r_cut), 1.0) / np.where(later_mask, a, 1.0))
        return math.log(r_cut) - np.log(r_exit) - lg.sum(axis=1)
    with np.errstate(divide="ignore"):
        lg = np.log(np.where(later_mask, b, 1.0) / np.where(later_mask, a, 1.0))
    return -np.log(r_exit) - lg.sum(axis=1)


def _directions(N: int, q: QuadratureSpec):
    if N == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    M = q.angular_nodes
    t = 2 * math.pi * (np.arange(M) + 0.5) / M
    return np.column_stack([np.cos(t), np.sin(t)]), np.full(M, 2 * math.pi / M)


def grid_ray_potential(grid: Grid, X: np.ndarray, K: KernelConstants, q: QuadratureSpec,
                       r_cut: float | None = None, src: np.ndarray | None = None,
                       chunk: int = 200_000) -> np.ndarray:
    """h_{Omega_h} (r_cut None) or the exterior potential
    c int_{B_{r_cut}(x) \\ Omega_h} |x-y|^{-N} dy at points X.

    ``src`` adds, per point, the 3^N lattice block around the given index to
    the occupied set (used to remove the near-boundary log singularity).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Dirs, W = _directions(grid.dim, q)
    lo = grid.origin + grid.index.min(axis=0) * grid.h
    hi = grid.origin + (grid.index.max(axis=0) + 1) * grid.h
    r_max = r_cut if r_cut is not None else float(np.linalg.norm(hi - lo)) + 2 * grid.h + 1.0
    r_max = max(r_max, 1.0)
    nd = len(Dirs)
    per = max(1, chunk // (nd * (int(r_max / grid.h) + 4)))
    out = np.empty(len(X))
    for s in range(0, len(X), per):
        Xc = X[s:s + per]
        m = len(Xc)
        XX = np.repeat(Xc, nd, axis=0)
        DD = np.tile(Dirs, (m, 1))
        a, b, idx = lattice_ray_segments(grid, XX, DD, r_max)
        S = None if src is None else np.repeat(np.atleast_2d(src[s:s + per]), nd, axis=0)
        occ = _grid_occupancy(grid, idx, S)
        F = _ray_F(a, b, occ, r_cut)
        out[s:s + per] = K.c * (F.reshape(m, nd) @ W)
    return out


# ------------------------------------------------------------------- h_Omega


def h_omega(domain, x, K: KernelConstants, q: QuadratureSpec | None = None) -> float:
    """Geometric potential c_N (int_{B_1(x) \\ Omega} - int_{Omega \\ B_1(x)}) |x-y|^{-N} dy.

    ``domain`` may be a :class:`Domain` or a :class:`Grid` (the cell union).
    """
    q = q or QuadratureSpec()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(domain, Grid):
        if domain.locate(x)[0] < 0:
            raise PointOutsideDomain(f"{x} is not in the cell union")
        return float(grid_ray_potential(domain, x[None, :], K, q)[0])
    if domain.dim != K.N or len(x) != K.N:
        raise ValueError("dimension mismatch between domain, point and constants")
    if not domain.contains_many(x[None, :])[0]:
        raise PointOutsideDomain(f"{x} is not in the domain")
    if K.N == 1:
        F = _domain_F(domain, x, np.array([[1.0], [-1.0]]))
        return float(K.c * F.sum())
    t, w = _angular_rule(domain, x, q)
    D = np.column_stack([np.cos(t), np.sin(t)])
    F = _domain_F(domain, x, D)
    return float(K.c * (F @ w))


# ------------------------------------------------------- pointwise operator


def _field_apply(u: DiscreteField, x: np.ndarray, K: KernelConstants, q: QuadratureSpec) -> float:
    grid = u.grid
    pos = grid.locate(x)[0]
    if pos < 0 or not np.allclose(grid.centers[pos], x, atol=1e-9 * grid.h):
        raise PointOutsideDomain(f"{x} is not a cell centre")
    Dirs, W = _directions(grid.dim, q)
    lo = grid.origin + grid.index.min(axis=0) * grid.h
    hi = grid.origin + (grid.index.max(axis=0) + 1) * grid.h
    r_max = max(float(np.linalg.norm(hi - lo)) + 2 * grid.h, 1.0)
    XX = np.repeat(x[None, :], len(Dirs), axis=0)
    a, b, idx = lattice_ray_segments(grid, XX, Dirs, r_max)
    p = grid.lookup(idx.reshape(-1, grid.dim)).reshape(a.shape)
    v = np.where(p >= 0, u.values[np.maximum(p, 0)], 0.0)
    u0 = u.values[pos]
    ok = (b > a) & (a > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.where(ok, np.log(np.where(ok, b, 1.0) / np.where(ok, a, 1.0)), 0.0)
    near = np.where(a < 1.0, (u0 - v) * lg, 0.0).sum(axis=1)
    far = np.where(a >= 1.0, v * lg, 0.0).sum(axis=1)
    return float(K.c * ((near - far) @ W) + K.rho * u0)


def _at(u: Callable, x: np.ndarray) -> float:
    return float(np.asarray(u(x[None, :]), dtype=float).ravel()[0])


def _check_dini(u: Callable, x: np.ndarray, dirs: np.ndarray) -> None:
    u0 = _at(u, x)
    q4 = max(abs(_at(u, x + 1e-4 * d) - u0) for d in dirs)
    q8 = max(abs(_at(u, x + 1e-8 * d) - u0) for d in dirs)
    if q8 > 1e-10 * (abs(u0) + q4) and q8 >= 0.9 * q4:
        raise QuadratureDivergence(
            f"near integrand unbounded at {x}: |u(x) - u(y)| does not shrink as y -> x")


def _callable_apply(u: Callable, x: np.ndarray, K: KernelConstants, q: QuadratureSpec,
                    far_limit: float) -> float:
    N = K.N
    Dirs, W = _directions(N, q)
    if N == 2:
        M = min(q.angular_nodes, 128)
        t = 2 * math.pi * np.arange(M) / M
        Dirs = np.column_stack([np.cos(t), np.sin(t)])
        W = np.full(M, 2 * math.pi / M)
    _check_dini(u, x, Dirs[: min(len(Dirs), 8)])
    u0 = _at(u, x)
    rn, rw = composite_rule(graded_panels(0.0, 1.0, left=q.cutoff_refine, uniform=4), 2 * q.gauss_order)
    far_edges = np.linspace(1.0, 1.0 + far_limit, int(math.ceil(far_limit)) * 2 + 1)
    fn, fw = composite_rule(far_edges, 2 * q.gauss_order)

    def ev(r):
        P = x[None, None, :] + r[None, :, None] * Dirs[:, None, :]
        return np.asarray(u(P.reshape(-1, N)), dtype=float).reshape(len(Dirs), len(r))

    near = ((u0 - ev(rn)) / rn[None, :]) @ rw
    far = (ev(fn) / fn[None, :]) @ fw
    return float(K.c * ((near - far) @ W) + K.rho * u0)


def apply_pointwise(u, x, K: KernelConstants, q: QuadratureSpec | None = None,
                    far_limit: float = 12.0) -> float:
    """Evaluate L_Delta u at x.

    ``u`` is a :class:`DiscreteField` (x must be a cell centre) or a
    vectorised callable mapping (m, N) points to m values; callables are
    integrated out to distance ``far_limit`` beyond the unit sphere.
    """
    q = q or QuadratureSpec()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(u, DiscreteField):
        return _field_apply(u, x, K, q)
    return _callable_apply(u, x, K, q, far_limit)


# ---------------------------------------------------------- symbol oracle


def _freqs(shape, L: float):
    if any(n & (n - 1) or n < 2 for n in shape):
        raise NonPowerOfTwoGrid(f"grid shape {shape} is not a power of two")
    ks = [2 * math.pi * np.fft.fftfreq(n, d=L / n) for n in shape]
    mesh = np.meshgrid(*ks, indexing="ij")
    return np.sqrt(sum(k * k for k in mesh))


def symbol_oracle_apply(samples: np.ndarray, L: float, K: KernelConstants | None = None) -> np.ndarray:
    """Apply the symbol 2 log|xi| on the periodic box [-L/2, L/2)^N.

    The xi = 0 mode is sent to zero.
    """
    u = np.asarray(samples, dtype=float)
    if K is not None and u.ndim != K.N:
        raise ValueError(f"expected a {K.N}-dimensional array")
    xi = _freqs(u.shape, L)
    sym = np.zeros_like(xi)
    nz = xi > 0
    sym[nz] = 2.0 * np.log(xi[nz])
    return np.real(np.fft.ifftn(sym * np.fft.fftn(u)))


def frac_power(samples: np.ndarray, L: float, s: float) -> np.ndarray:
    """Apply |xi|^{2s} (the fractional Laplacian of order s) periodically."""
    u = np.asarray(samples, dtype=float)
    xi = _freqs(u.shape, L)
    return np.real(np.fft.ifftn(xi ** (2 * s) * np.fft.fftn(u)))


def periodic_points(n: int, L: float, N: int) -> np.ndarray:
    """Sample coordinates of the periodic box, shape (n,)*N + (N,)."""
    x = -L / 2 + L * np.arange(n) / n
    mesh = np.meshgrid(*([x] * N), indexing="ij")
    return np.stack(mesh, axis=-1)
