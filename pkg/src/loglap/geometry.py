"""Bounded open sets in R^1 / R^2, Cartesian cell grids and reflections.

A :class:`Domain` is a finite union of convex pieces (balls, boxes, ellipses),
optionally given as a Minkowski sum ``G + B_R``.  Every piece answers
containment, distance and line-intersection queries, which is all the kernel
and the audits need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyGrid, GridNotSymmetric

# -------------------------------------------------------------------- pieces


def _as_vec(v) -> tuple[float, ...]:
    return tuple(float(t) for t in np.atleast_1d(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec(self.center))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, P):
        P = np.atleast_2d(P)
        return np.sum((P - self.center) ** 2, axis=1) < self.radius ** 2

    def dist(self, P):
        P = np.atleast_2d(P)
        return np.maximum(np.linalg.norm(P - self.center, axis=1) - self.radius, 0.0)

    def line_interval(self, X, D):
        b = np.sum((X - self.center) * D, axis=1)
        cc = np.sum((X - self.center) ** 2, axis=1) - self.radius ** 2
        disc = b * b - cc
        hit = disc > 0
        s = np.sqrt(np.where(hit, disc, 0.0))
        return np.where(hit, -b - s, np.nan), np.where(hit, -b + s, np.nan)

    def support(self, e):
        return float(np.dot(self.center, e)) + self.radius * float(np.linalg.norm(e))

    def bbox(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def volume(self) -> float:
        return 2 * self.radius if self.dim == 1 else math.pi * self.radius ** 2

    def boundary_points(self, spacing: float):
        c = np.asarray(self.center)
        if self.dim == 1:
            return np.array([[c[0] - self.radius], [c[0] + self.radius]])
        n = max(16, int(math.ceil(2 * math.pi * self.radius / spacing)))
        t = 2 * math.pi * np.arange(n) / n
        return c + self.radius * np.column_stack([np.cos(t), np.sin(t)])

    def curves(self):
        return [("circle", np.asarray(self.center), self.radius)]


@dataclass(frozen=True)
class Rect:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_vec(self.lo))
        object.__setattr__(self, "hi", _as_vec(self.hi))
        if len(self.lo) != len(self.hi) or not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"rect needs hi > lo componentwise, got {self.lo}, {self.hi}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, P):
        P = np.atleast_2d(P)
        return np.all((P > self.lo) & (P < self.hi), axis=1)

    def dist(self, P):
        P = np.atleast_2d(P)
        d = np.maximum(np.maximum(np.asarray(self.lo) - P, P - np.asarray(self.hi)), 0.0)
        return np.linalg.norm(d, axis=1)

    def line_interval(self, X, D):
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        t0 = np.full(len(X), -np.inf)
        t1 = np.full(len(X), np.inf)
        for k in range(self.dim):
            d = D[:, k]
            x = X[:, k]
            par = d == 0
            with np.errstate(divide="ignore", invalid="ignore"):
                a = (lo[k] - x) / d
                b = (hi[k] - x) / d
            ta = np.where(par, np.where((x > lo[k]) & (x < hi[k]), -np.inf, np.inf), np.minimum(a, b))
            tb = np.where(par, np.where((x > lo[k]) & (x < hi[k]), np.inf, -np.inf), np.maximum(a, b))
            t0 = np.maximum(t0, ta)
            t1 = np.minimum(t1, tb)
        hit = t1 > t0
        return np.where(hit, t0, np.nan), np.where(hit, t1, np.nan)

    def support(self, e):
        e = np.asarray(e, dtype=float)
        return float(np.sum(np.maximum(np.asarray(self.lo) * e, np.asarray(self.hi) * e)))

    def bbox(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def corners(self):
        (x0, y0), (x1, y1) = self.lo, self.hi
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def boundary_points(self, spacing: float):
        if self.dim == 1:
            return np.array([[self.lo[0]], [self.hi[0]]])
        c = self.corners()
        pts = []
        for k in range(4):
            p, q = c[k], c[(k + 1) % 4]
            n = max(4, int(math.ceil(np.linalg.norm(q - p) / spacing)))
            t = np.arange(n) / n
            pts.append(p + t[:, None] * (q - p))
        return np.vstack(pts)

    def curves(self):
        c = self.corners()
        return [("segment", c[k], c[(k + 1) % 4]) for k in range(4)]


def _ellipse_dist(P, axes):
    """Distance from points P (centred coordinates) to a filled axis-aligned
    ellipse. Safeguarded Newton on the parametric angle, 64 iterations cap,
    with bisection whenever Newton leaves the bracket."""
    a, b = axes
    px, py = np.abs(P[:, 0]), np.abs(P[:, 1])
    inside = (px / a) ** 2 + (py / b) ** 2 <= 1.0
    lo = np.zeros(len(P))
    hi = np.full(len(P), math.pi / 2)
    t = np.arctan2(a * py, b * px)

    def g(t):
        return (a * a - b * b) * np.cos(t) * np.sin(t) - px * a * np.sin(t) + py * b * np.cos(t)

    def dg(t):
        return ((a * a - b * b) * np.cos(2 * t) - px * a * np.cos(t) - py * b * np.sin(t))

    for _ in range(64):
        gt = g(t)
        pos = gt > 0
        lo = np.where(pos, t, lo)
        hi = np.where(pos, hi, t)
        d = dg(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - gt / d
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        t = np.where(bad, 0.5 * (lo + hi), tn)
    qx, qy = a * np.cos(t), b * np.sin(t)
    d = np.hypot(px - qx, py - qy)
    return np.where(inside, 0.0, d)


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, ...]
    axes: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec(self.center))
        object.__setattr__(self, "axes", _as_vec(self.axes))
        if len(self.axes) != len(self.center) or not all(s > 0 for s in self.axes):
            raise ValueError(f"ellipse semi-axes must be positive, got {self.axes}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, P):
        P = np.atleast_2d(P)
        return np.sum(((P - self.center) / self.axes) ** 2, axis=1) < 1.0

    def dist(self, P):
        P = np.atleast_2d(P) - np.asarray(self.center)
        if self.dim == 1:
            return np.maximum(np.abs(P[:, 0]) - self.axes[0], 0.0)
        return _ellipse_dist(P, self.axes)

    def line_interval(self, X, D):
        ax = np.asarray(self.axes)
        Xs = (X - self.center) / ax
        Ds = D / ax
        a = np.sum(Ds * Ds, axis=1)
        b = np.sum(Xs * Ds, axis=1) / a
        cc = (np.sum(Xs * Xs, axis=1) - 1.0) / a
        disc = b * b - cc
        hit = disc > 0
        s = np.sqrt(np.where(hit, disc, 0.0))
        return np.where(hit, -b - s, np.nan), np.where(hit, -b + s, np.nan)

    def support(self, e):
        e = np.asarray(e, dtype=float)
        return float(np.dot(self.center, e) + np.sqrt(np.sum((np.asarray(self.axes) * e) ** 2)))

    def bbox(self):
        c = np.asarray(self.center)
        return c - np.asarray(self.axes), c + np.asarray(self.axes)

    def volume(self) -> float:
        return 2 * self.axes[0] if self.dim == 1 else math.pi * self.axes[0] * self.axes[1]

    def perimeter(self) -> float:
        a, b = self.axes
        hh = ((a - b) / (a + b)) ** 2
        return math.pi * (a + b) * (1 + 3 * hh / (10 + math.sqrt(4 - 3 * hh)))

    def boundary_points(self, spacing: float):
        c = np.asarray(self.center)
        if self.dim == 1:
            return np.array([[c[0] - self.axes[0]], [c[0] + self.axes[0]]])
        n = max(16, int(math.ceil(2 * math.pi * max(self.axes) / spacing)))
        t = 2 * math.pi * np.arange(n) / n
        return c + np.column_stack([self.axes[0] * np.cos(t), self.axes[1] * np.sin(t)])

    def curves(self):
        return []


@dataclass(frozen=True)
class _OffsetEllipse:
    """Minkowski sum of an ellipse with a ball: convex, handled numerically."""

    base: Ellipse
    R: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, P):
        return self.base.dist(P) < self.R

    def dist(self, P):
        return np.maximum(self.base.dist(P) - self.R, 0.0)

    def bbox(self):
        lo, hi = self.base.bbox()
        return lo - self.R, hi + self.R

    def line_interval(self, X, D, rel_tol: float = 1e-10):
        lo, hi = self.bbox()
        box = Rect(tuple(lo - 1e-9), tuple(hi + 1e-9))
        ta, tb = box.line_interval(X, D)
        hit = np.isfinite(ta)
        ta = np.where(hit, ta, 0.0)
        tb = np.where(hit, tb, 1.0)
        scale = float(np.max(hi - lo))

        def f(t):
            return self.base.dist(X + t[:, None] * D)

        # distance to a convex set is convex along a line: golden section
        gr = (math.sqrt(5) - 1) / 2
        a, b = ta.copy(), tb.copy()
        c1 = b - gr * (b - a)
        c2 = a + gr * (b - a)
        f1, f2 = f(c1), f(c2)
        for _ in range(80):
            left = f1 < f2
            b = np.where(left, c2, b)
            a = np.where(left, a, c1)
            c2n = np.where(left, c1, a + gr * (b - a))
            c1n = np.where(left, b - gr * (b - a), c2)
            f2 = np.where(left, f1, np.nan)
            f1 = np.where(left, np.nan, f2)
            c1, c2 = c1n, c2n
            f1 = np.where(np.isnan(f1), f(c1), f1)
            f2 = np.where(np.isnan(f2), f(c2), f2)
        tm = 0.5 * (a + b)
        hit &= f(tm) < self.R

        def crossing(inner, outer):
            x, y = inner.copy(), outer.copy()
            for _ in range(200):
                if np.all(np.abs(y - x) <= rel_tol * scale):
                    break
                m = 0.5 * (x + y)
                ins = f(m) < self.R
                x = np.where(ins, m, x)
                y = np.where(ins, y, m)
            return 0.5 * (x + y)

        t0 = crossing(tm, ta)
        t1 = crossing(tm, tb)
        return np.where(hit, t0, np.nan), np.where(hit, t1, np.nan)

    def support(self, e):
        return self.base.support(e) + self.R * float(np.linalg.norm(e))

    def volume(self) -> float:
        if self.dim == 1:
            return self.base.volume() + 2 * self.R
        return self.base.volume() + self.base.perimeter() * self.R + math.pi * self.R ** 2

    def boundary_points(self, spacing: float):
        if self.dim == 1:
            c, a = self.base.center[0], self.base.axes[0] + self.R
            return np.array([[c - a], [c + a]])
        a, b = self.base.axes
        n = max(16, int(math.ceil(2 * math.pi * (max(a, b) + self.R) / spacing)))
        t = 2 * math.pi * np.arange(n) / n
        p = np.column_stack([a * np.cos(t), b * np.sin(t)])
        nrm = np.column_stack([b * np.cos(t), a * np.sin(t)])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        return np.asarray(self.base.center) + p + self.R * nrm

    def curves(self):
        return []


def _expand(piece, R: float) -> list:
    """Pieces whose union is ``piece + B_R``."""
    if isinstance(piece, Ball):
        return [Ball(piece.center, piece.radius + R)]
    if isinstance(piece, Rect):
        lo, hi = np.asarray(piece.lo), np.asarray(piece.hi)
        if piece.dim == 1:
            return [Rect(lo - R, hi + R)]
        out = [Rect(lo - [R, 0], hi + [R, 0]), Rect(lo - [0, R], hi + [0, R])]
        out += [Ball(tuple(c), R) for c in piece.corners()]
        return out
    if isinstance(piece, Ellipse):
        if piece.dim == 1:
            return [Rect((piece.center[0] - piece.axes[0] - R,), (piece.center[0] + piece.axes[0] + R,))]
        return [_OffsetEllipse(piece, R)]
    raise TypeError(f"cannot expand {type(piece).__name__}")


# -------------------------------------------------------------------- domain


@dataclass(frozen=True)
class Domain:
    """Open bounded set: union of primitives, or ``base + B_radius``."""

    primitives: tuple = ()
    base: Domain | None = None
    radius: float | None = None
    pieces: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.base is not None:
            if not (self.radius and self.radius > 0):
                raise ValueError("minkowski radius must be positive")
            pieces = tuple(p for q in self.base.pieces for p in _expand(q, self.radius))
        else:
            if not self.primitives:
                raise ValueError("domain needs at least one primitive")
            pieces = tuple(self.primitives)
        dims = {p.dim for p in pieces}
        if len(dims) != 1 or dims.pop() not in (1, 2):
            raise ValueError("all primitives must share dimension 1 or 2")
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def union(cls, *prims) -> Domain:
        return cls(primitives=tuple(prims))

    @classmethod
    def minkowski(cls, G: Domain, R: float) -> Domain:
        return cls(base=G, radius=float(R))

    @property
    def mode(self) -> str:
        return "union" if self.base is None else "minkowski"

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def contains_many(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.base is not None:
            return self.base.dist(P) < self.radius
        out = np.zeros(len(P), dtype=bool)
        for p in self.pieces:
            out |= p.contains(P)
        return out

    def contains_closed(self, P, eps: float) -> np.ndarray:
        return self.dist(P) <= eps

    def dist(self, P) -> np.ndarray:
        """Distance to the closure (zero inside)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return np.min([p.dist(P) for p in self.pieces], axis=0)

    def bbox(self):
        los, his = zip(*(p.bbox() for p in self.pieces))
        return np.min(los, axis=0), np.max(his, axis=0)

    def support(self, e) -> float:
        return max(p.support(np.asarray(e, dtype=float)) for p in self.pieces)

    def diameter(self) -> float:
        if self.dim == 1:
            lo, hi = self.bbox()
            return float(hi[0] - lo[0])
        t = np.linspace(0, math.pi, 721)
        return max(self.support((math.cos(a), math.sin(a))) + self.support((-math.cos(a), -math.sin(a)))
                   for a in t)

    def measure(self) -> float:
        """Lebesgue measure; exact for a single convex piece, for Minkowski
        sums of one convex primitive, and for pairwise disjoint unions."""
        if self.base is not None and len(self.base.pieces) == 1:
            return _steiner(self.base.pieces[0], self.radius)
        if len(self.pieces) == 1:
            return self.pieces[0].volume()
        if _pairwise_disjoint(self.pieces):
            return float(sum(p.volume() for p in self.pieces))
        return _lattice_measure(self)

    def boundary_points(self, spacing: float) -> np.ndarray:
        pts = []
        for i, p in enumerate(self.pieces):
            b = p.boundary_points(spacing)
            keep = np.ones(len(b), dtype=bool)
            for j, q in enumerate(self.pieces):
                if j != i:
                    keep &= ~q.contains(b)
            pts.append(b[keep])
        return np.vstack(pts)

    def line_intervals(self, X, D):
        """Per-piece (t0, t1) arrays of shape (n_pieces, n) for lines X + t D."""
        t0, t1 = zip(*(p.line_interval(X, D) for p in self.pieces))
        return np.array(t0), np.array(t1)


def _steiner(piece, R: float) -> float:
    if piece.dim == 1:
        lo, hi = piece.bbox()
        return float(hi[0] - lo[0]) + 2 * R
    if isinstance(piece, Ball):
        return math.pi * (piece.radius + R) ** 2
    if isinstance(piece, Rect):
        w, h = np.asarray(piece.hi) - np.asarray(piece.lo)
        return float(w * h + 2 * (w + h) * R + math.pi * R * R)
    if isinstance(piece, Ellipse):
        return piece.volume() + piece.perimeter() * R + math.pi * R * R
    raise TypeError(type(piece).__name__)


def _pairwise_disjoint(pieces) -> bool:
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            a, b = pieces[i], pieces[j]
            if isinstance(a, Ball) and isinstance(b, Ball):
                if np.linalg.norm(np.subtract(a.center, b.center)) < a.radius + b.radius:
                    return False
                continue
            alo, ahi = a.bbox()
            blo, bhi = b.bbox()
            if np.all(alo < bhi) and np.all(blo < ahi):
                return False
    return True


def _lattice_measure(domain: Domain, n: int = 2000) -> float:
    lo, hi = domain.bbox()
    hstep = float(np.max(hi - lo)) / n
    axes = [lo[k] + hstep * (np.arange(int(np.ceil((hi[k] - lo[k]) / hstep))) + 0.5)
            for k in range(domain.dim)]
    if domain.dim == 1:
        return float(domain.contains_many(axes[0][:, None]).sum() * hstep)
    total = 0
    for x in axes[0]:
        P = np.column_stack([np.full(len(axes[1]), x), axes[1]])
        total += int(domain.contains_many(P).sum())
    return total * hstep ** 2


def contains(domain: Domain, x) -> bool:
    """True iff x lies in the open set."""
    return bool(domain.contains_many(np.atleast_2d(np.asarray(x, dtype=float)))[0])


def ray_segments(domain: Domain, x, theta, r_max: float) -> list[tuple[float, float]]:
    """Maximal radial intervals (r_in, r_out) in (0, r_max) with x + r theta in the set."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    D = np.atleast_2d(np.asarray(theta, dtype=float))
    t0, t1 = domain.line_intervals(X, D)
    ivs = []
    for a, b in zip(t0[:, 0], t1[:, 0]):
        if not np.isfinite(a):
            continue
        a, b = max(a, 0.0), min(b, r_max)
        if b > a:
            ivs.append((float(a), float(b)))
    ivs.sort()
    out: list[tuple[float, float]] = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


# ---------------------------------------------------------------- reflections


@dataclass(frozen=True)
class ReflectionFrame:
    e: tuple[float, ...]
    offset: float = 0.0

    def __post_init__(self):
        e = _as_vec(self.e)
        if abs(math.fsum(t * t for t in e) - 1.0) > 1e-12:
            raise ValueError(f"frame normal must be a unit vector, got {e}")
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "offset", float(self.offset))

    def axis(self) -> tuple[int, float] | None:
        """(k, sign) when e = sign * e_k, else None."""
        nz = [k for k, t in enumerate(self.e) if t != 0.0]
        if len(nz) == 1 and abs(self.e[nz[0]]) == 1.0:
            return nz[0], self.e[nz[0]]
        return None


def reflect(x, frame: ReflectionFrame):
    """x - 2 (x.e - lambda) e."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(frame.e)
    s = x @ e - frame.offset
    return x - 2.0 * np.multiply.outer(s, e) if x.ndim > 1 else x - 2.0 * s * e


def critical_value(domain: Domain, e, tol: float = 1e-3) -> float:
    """Critical position of the moving plane in direction e.

    Sweeps lambda downward from sup{x.e} and returns the smallest lambda such
    that every reflected cap Q_mu(E_mu), mu in (lambda, Lambda_e), lies in the
    closure of E. The inclusion is tested on boundary samples spaced <= tol.
    """
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    top = domain.support(e)
    bottom = -domain.support(-e)
    B = domain.boundary_points(tol)
    proj = B @ e
    eps = 0.5 * tol

    def good(lam):
        cap = B[proj > lam]
        if len(cap) == 0:
            return True
        refl = cap - 2.0 * np.outer(cap @ e - lam, e)
        return bool(np.all(domain.contains_closed(refl, eps)))

    lam = top
    while lam - tol > bottom and good(lam - tol):
        lam -= tol
    lo, hi = lam - tol, lam
    for _ in range(40):
        if hi - lo < 1e-3 * tol:
            break
        mid = 0.5 * (lo + hi)
        if good(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


# ---------------------------------------------------------------------- grid


@dataclass
class Grid:
    """Uniform lattice of closed cubes of side h whose centres lie in the domain.

    Cell k occupies ``origin + h * (index[k] + [0, 1]^N)``.
    """

    h: float
    origin: np.ndarray
    index: np.ndarray
    domain: Domain
    symmetry_planes: list[ReflectionFrame]

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64)
        self._imin = self.index.min(axis=0) - 2
        shape = self.index.max(axis=0) - self._imin + 3
        self._lut = np.full(tuple(shape), -1, dtype=np.int64)
        self._lut[tuple((self.index - self._imin).T)] = np.arange(len(self.index))

    @property
    def dim(self) -> int:
        return self.index.shape[1]

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def centers(self) -> np.ndarray:
        return self.origin + (self.index + 0.5) * self.h

    @property
    def cell_measure(self) -> float:
        return self.h ** self.dim

    def measure(self) -> float:
        return self.n * self.cell_measure

    def lookup(self, idx) -> np.ndarray:
        """Positions of lattice indices in the cell list (-1 when absent)."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64)) - self._imin
        shape = np.array(self._lut.shape)
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        out = np.full(len(idx), -1, dtype=np.int64)
        out[ok] = self._lut[tuple(idx[ok].T)]
        return out

    def locate(self, P) -> np.ndarray:
        """Cell position containing each point (-1 outside the cell union)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return self.lookup(np.floor((P - self.origin) / self.h).astype(np.int64))

    def plane_index(self, frame: ReflectionFrame) -> tuple[int, int, int]:
        """(axis, sign, q) with the plane at origin_k + q h / 2; raises
        GridNotSymmetric when the plane is not lattice compatible."""
        ax = frame.axis()
        if ax is None or ax[0] >= self.dim:
            raise GridNotSymmetric(f"plane normal {frame.e} is not a lattice axis")
        k, sgn = ax
        p = frame.offset * sgn
        q2 = 2.0 * (p - self.origin[k]) / self.h
        q = int(round(q2))
        if abs(q2 - q) > 1e-7:
            raise GridNotSymmetric(f"plane x_{k} = {p} is not on the lattice (h = {self.h})")
        return k, int(sgn), q

    def reflection_map(self, frame: ReflectionFrame) -> np.ndarray:
        """For every cell, the position of its mirrored cell (-1 if absent)."""
        k, _, q = self.plane_index(frame)
        idx = self.index.copy()
        idx[:, k] = q - 1 - idx[:, k]
        return self.lookup(idx)

    def is_symmetric(self, frame: ReflectionFrame) -> bool:
        try:
            m = self.reflection_map(frame)
        except GridNotSymmetric:
            return False
        return bool(np.all(m >= 0) and np.array_equal(m[m], np.arange(self.n)))


@dataclass
class DiscreteField:
    """Piecewise constant function on a grid; zero outside the cells."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"field has shape {self.values.shape}, grid has {self.grid.n} cells")

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __call__(self, P) -> np.ndarray:
        pos = self.grid.locate(P)
        return np.where(pos >= 0, self.values[np.maximum(pos, 0)], 0.0)


def build_grid(domain: Domain, h: float, align_planes: Sequence[ReflectionFrame] = (),
               origin=None) -> Grid:
    """Cells of side h with centre in the domain, lattice shifted so that the
    requested axis-parallel planes are lattice planes.

    ``origin`` pins the lattice (one face per axis) so that grids of nested
    domains share their cells.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    N = domain.dim
    lo, hi = domain.bbox()
    if origin is None:
        # faces through the lower bounding-box corner on axes where the box
        # tiles exactly, else through the coordinate origin
        w = (hi - lo) / h
        origin = np.where(np.abs(w - np.round(w)) < 1e-9, np.mod(lo, h), 0.0)
    else:
        origin = np.mod(np.asarray(origin, dtype=float), h)
    fixed = [False] * N
    for fr in align_planes:
        ax = fr.axis()
        if ax is None:
            raise ValueError(f"alignment plane {fr.e} is not axis-parallel")
        k, sgn = ax
        if k < N and not fixed[k]:
            q2 = 2.0 * (fr.offset * sgn - origin[k]) / h
            if abs(q2 - round(q2)) > 1e-9:
                origin[k] = math.fmod(fr.offset * sgn, h)
            fixed[k] = True
    ranges = [np.arange(int(math.floor((lo[k] - origin[k]) / h)) - 1,
                        int(math.ceil((hi[k] - origin[k]) / h)) + 1) for k in range(N)]
    mesh = np.meshgrid(*ranges, indexing="ij")
    idx = np.column_stack([m.ravel() for m in mesh])
    centers = origin + (idx + 0.5) * h
    keep = domain.contains_many(centers)
    if not np.any(keep):
        raise EmptyGrid(f"no cell centre of side {h} lies in the domain")
    grid = Grid(h=float(h), origin=origin, index=idx[keep], domain=domain, symmetry_planes=[])
    grid.symmetry_planes = [fr for fr in align_planes if grid.is_symmetric(fr)]
    return grid
