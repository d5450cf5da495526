"""Finite-dimensional convex geometry.

Points are plain ``numpy`` float arrays. Convex sets (:class:`Polytope`,
:class:`SimplexM`, :class:`Ball`, :class:`ProductSet`) share a small duck-typed
surface used by every other module:

    dim, contains(p, tol), bounds(), barycenter(), sample(rng, count)

Hull membership and the extraction programs of the economy module are decided
by :func:`linprog_eq`, a dense two-phase tableau simplex with Bland's rule.
That is plenty for the handful of variables these problems carry.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import pick


class GeometryError(ValueError):
    """Raised on malformed geometric input (dimension mismatch, bad weights)."""


class GridTooFine(GeometryError):
    """Raised when a requested grid would exceed the configured point cap."""


def as_point(coords) -> np.ndarray:
    p = np.asarray(coords, dtype=float).reshape(-1)
    if p.size < 1:
        raise GeometryError("a point needs at least one coordinate")
    if not np.all(np.isfinite(p)):
        raise GeometryError(f"non-finite coordinates: {p}")
    return p


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise GeometryError("expected a nonempty sequence of points")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("non-finite coordinates in point list")
    return arr


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Indices that sort ``points`` lexicographically (first coordinate major)."""
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    return np.lexsort(points.T[::-1])


def _clean(points: np.ndarray) -> np.ndarray:
    # lattice arithmetic leaves 1e-17 debris and -0.0; both break lexicographic ties
    return np.round(points, 12) + 0.0


# ---------------------------------------------------------------------------
# linear programming


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray]
    value: float


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _run_simplex(T, basis, ncols, tol, max_iter):
    """Minimise the objective stored in the last row of tableau ``T``.

    Only the first ``ncols`` columns may enter. Returns "optimal" or "unbounded".
    """
    m = T.shape[0] - 1
    for _ in range(max_iter):
        cost = T[-1, :ncols]
        entering = np.flatnonzero(cost < -tol)
        if entering.size == 0:
            return "optimal"
        col = int(entering[0])  # Bland: smallest index
        column = T[:m, col]
        positive = column > tol
        if not positive.any():
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = min(ties, key=lambda r: basis[r])
        _pivot(T, row, col)
        basis[row] = col
    raise RuntimeError("simplex iteration limit reached")


def linprog_eq(c, A_eq, b_eq, tol: float = 1e-10, max_iter: int = 5000) -> LPResult:
    """Solve ``min c.x  s.t.  A_eq x = b_eq, x >= 0`` by the two-phase method."""
    A = np.array(A_eq, dtype=float, ndmin=2)
    b = np.array(b_eq, dtype=float).reshape(-1)
    c = np.array(c, dtype=float).reshape(-1)
    m, n = A.shape
    if b.size != m or c.size != n:
        raise GeometryError("inconsistent LP dimensions")
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # phase 1: artificials a >= 0 with A x + a = b, minimise sum(a)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _run_simplex(T, basis, n + m, tol, max_iter)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[-1, -1] > 1e3 * tol * scale:
        return LPResult("infeasible", None, math.inf)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cols = np.flatnonzero(np.abs(T[r, :n]) > tol)
            if cols.size == 0:
                continue
            _pivot(T, r, int(cols[0]))
            basis[r] = int(cols[0])
        keep.append(r)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[r] for r in keep]
    T2[-1, :n] = c
    for r, j in enumerate(basis):
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[r]

    status = _run_simplex(T2, basis, n, tol, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", None, -math.inf)
    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = T2[r, -1]
    x[x < 0] = 0.0
    return LPResult("optimal", x, float(c @ x))


# ---------------------------------------------------------------------------
# core operations


def convex_combination(points, weights, tol: float = 1e-12) -> np.ndarray:
    P = as_points(points)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != P.shape[0]:
        raise GeometryError(f"{P.shape[0]} points but {w.size} weights")
    if np.any(w < -tol):
        raise GeometryError(f"negative weight in {w}")
    if abs(w.sum() - 1.0) > tol:
        raise GeometryError(f"weights sum to {w.sum()!r}, not 1")
    return w @ P


def hull_distance(p, vertices) -> tuple[float, np.ndarray]:
    """Smallest sup-norm distance from ``p`` to co(vertices) and the weights attaining it."""
    V = as_points(vertices)
    p = as_point(p)
    if V.shape[1] != p.size:
        raise GeometryError(f"point has dimension {p.size}, vertices {V.shape[1]}")
    k, n = V.shape
    # variables: lambda (k), t, s1 (n), s2 (n)
    nvar = k + 1 + 2 * n
    A = np.zeros((2 * n + 1, nvar))
    b = np.zeros(2 * n + 1)
    A[:n, :k] = V.T
    A[:n, k] = -1.0
    A[:n, k + 1:k + 1 + n] = np.eye(n)
    b[:n] = p
    A[n:2 * n, :k] = V.T
    A[n:2 * n, k] = 1.0
    A[n:2 * n, k + 1 + n:] = -np.eye(n)
    b[n:2 * n] = p
    A[-1, :k] = 1.0
    b[-1] = 1.0
    c = np.zeros(nvar)
    c[k] = 1.0
    res = linprog_eq(c, A, b)
    if res.status != "optimal":  # cannot happen: the program is always feasible and bounded
        raise RuntimeError(f"hull distance LP returned {res.status}")
    lam = res.x[:k]
    return float(np.abs(lam @ V - p).max()), lam


def hull_membership(p, vertices, tol: Optional[float] = None) -> bool:
    tol = pick(tol, "lp")
    if tol <= 0:
        raise GeometryError("tolerance must be positive")
    V = as_points(vertices) if len(vertices) else None
    if V is None:
        raise GeometryError("empty vertex list")
    dist, _ = hull_distance(p, V)
    return dist <= tol


def support_function(vertices, y) -> float:
    if len(vertices) == 0:
        raise GeometryError("empty vertex list")
    V = as_points(vertices)
    y = as_point(y)
    if V.shape[1] != y.size:
        raise GeometryError(f"direction has dimension {y.size}, vertices {V.shape[1]}")
    return float((V @ y).max())


# ---------------------------------------------------------------------------
# convex sets


def _dedup(V: np.ndarray, tol: float) -> np.ndarray:
    kept: list[np.ndarray] = []
    for v in V:
        if not any(np.abs(v - u).max() <= tol for u in kept):
            kept.append(v)
    return np.array(kept)


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex hull of finitely many vertices (V-representation)."""

    vertices: np.ndarray
    box: Optional[tuple] = None  # (lo, hi) when the polytope is an axis-aligned box

    def __post_init__(self):
        V = as_points(self.vertices)
        object.__setattr__(self, "vertices", _dedup(V, pick(None, "dedup")))

    @classmethod
    def from_box(cls, lo, hi) -> "Polytope":
        lo, hi = as_point(lo), as_point(hi)
        if lo.size != hi.size or np.any(lo > hi):
            raise GeometryError("box needs lo <= hi of equal dimension")
        corners = np.array(list(itertools.product(*zip(lo, hi))), dtype=float)
        return cls(corners, box=(tuple(lo), tuple(hi)))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def contains(self, p, tol: Optional[float] = None) -> bool:
        tol = pick(tol, "membership")
        p = as_point(p)
        if self.box is not None:
            lo, hi = np.array(self.box[0]), np.array(self.box[1])
            return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))
        lo, hi = self.bounds()
        if np.any(p < lo - tol) or np.any(p > hi + tol):
            return False
        return hull_membership(p, self.vertices, tol)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def barycenter(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.box is not None:
            lo, hi = self.bounds()
            return lo + rng.random((count, self.dim)) * (hi - lo)
        # Dirichlet weights over the vertices: covers the polytope, not uniformly
        w = rng.dirichlet(np.ones(len(self.vertices)), size=count)
        return w @ self.vertices

    def __repr__(self) -> str:
        if self.box is not None:
            return f"Box(lo={list(self.box[0])}, hi={list(self.box[1])})"
        return f"Polytope({len(self.vertices)} vertices in R^{self.dim})"


@dataclass(frozen=True)
class SimplexM:
    """The price simplex {x in R^n_+ : sum x = 1}."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise GeometryError("simplex needs n >= 1")

    @property
    def dim(self) -> int:
        return self.n

    @property
    def vertices(self) -> np.ndarray:
        return np.eye(self.n)

    def contains(self, p, tol: Optional[float] = None) -> bool:
        tol = 1e-12 if tol is None else tol
        p = as_point(p)
        return p.size == self.n and bool(np.all(p >= -tol)) and abs(p.sum() - 1.0) <= tol

    def bounds(self):
        return np.zeros(self.n), np.ones(self.n)

    def barycenter(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.dirichlet(np.ones(self.n), size=count)


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball; kept apart from :class:`Polytope` on purpose."""

    center: tuple
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in as_point(self.center)))
        if not self.radius > 0:
            raise GeometryError("ball radius must be positive")

    @classmethod
    def unit(cls, n: int) -> "Ball":
        return cls(tuple([0.0] * n), 1.0)

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, p, tol: Optional[float] = None) -> bool:
        tol = pick(tol, "membership")
        p = as_point(p)
        return float(np.linalg.norm(p - np.array(self.center))) <= self.radius + tol

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def barycenter(self) -> np.ndarray:
        return np.array(self.center)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        g = rng.standard_normal((count, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(count) ** (1.0 / self.dim)
        return np.array(self.center) + g * r[:, None]


@dataclass(frozen=True)
class ProductSet:
    """Cartesian product of convex sets, flattened into one coordinate vector."""

    factors: tuple

    @property
    def dims(self) -> list[int]:
        return [f.dim for f in self.factors]

    @property
    def dim(self) -> int:
        return sum(self.dims)

    def split(self, p) -> list[np.ndarray]:
        p = np.asarray(p, dtype=float)
        cuts = np.cumsum(self.dims)[:-1]
        return np.split(p, cuts, axis=-1)

    def contains(self, p, tol: Optional[float] = None) -> bool:
        return all(f.contains(b, tol) for f, b in zip(self.factors, self.split(as_point(p))))

    def bounds(self):
        los, his = zip(*(f.bounds() for f in self.factors))
        return np.concatenate(los), np.concatenate(his)

    def barycenter(self) -> np.ndarray:
        return np.concatenate([f.barycenter() for f in self.factors])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.hstack([f.sample(rng, count) for f in self.factors])


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    resolution: float
    source: str = ""
    _index: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def index_of(self, p, tol: float = 1e-9) -> Optional[int]:
        """Index of the grid point within ``tol`` (sup norm) of ``p``, if any."""
        p = as_point(p)
        key = tuple(np.round(p, 9))
        if key in self._index:
            return self._index[key]
        close = np.flatnonzero(np.abs(self.points - p).max(axis=1) <= tol)
        idx = int(close[0]) if close.size else None
        if idx is not None:
            self._index[key] = idx
        return idx

    def nearest(self, p) -> int:
        d = np.linalg.norm(self.points - as_point(p), axis=1)
        return int(np.flatnonzero(d <= d.min() + 1e-15)[0])


def _composition_count(m: int, n: int) -> int:
    return math.comb(m + n - 1, n - 1)


def compositions(m: int, n: int):
    """All n-tuples of nonnegative integers summing to m, lexicographic."""
    if n == 1:
        yield (m,)
        return
    for first in range(m + 1):
        for rest in compositions(m - first, n - 1):
            yield (first,) + rest


def make_grid(region, resolution: float, cap: Optional[int] = None) -> Grid:
    """Canonically ordered grid of ``region`` at the given spacing."""
    if not resolution > 0:
        raise GeometryError("resolution must be positive")
    cap = pick(cap, "grid_cap")
    if isinstance(region, SimplexM):
        m = max(1, math.ceil(1.0 / resolution - 1e-12))
        count = _composition_count(m, region.n)
        if count > cap:
            raise GridTooFine(f"simplex grid would hold {count} points (cap {cap})")
        pts = np.array(list(compositions(m, region.n)), dtype=float) / m
        source = f"compositions of {m} into {region.n} parts"
    elif isinstance(region, ProductSet):
        sub = [make_grid(f, resolution, cap) for f in region.factors]
        count = math.prod(len(g) for g in sub)
        if count > cap:
            raise GridTooFine(f"product grid would hold {count} points (cap {cap})")
        pts = np.array([np.concatenate(c) for c in itertools.product(*(g.points for g in sub))])
        source = "product of " + ", ".join(g.source for g in sub)
    else:
        lo, hi = region.bounds()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GeometryError("cannot grid an unbounded region; truncate it first")
        steps = [int(math.floor((h - l) / resolution + 1e-9)) + 1 for l, h in zip(lo, hi)]
        count = math.prod(steps)
        if count > cap:
            raise GridTooFine(f"lattice would hold {count} points (cap {cap})")
        axes = [l + resolution * np.arange(s) for l, s in zip(lo, steps)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        mesh = _clean(mesh)
        keep = [p for p in mesh if region.contains(p)]
        pts = np.array(keep) if keep else np.zeros((0, len(lo)))
        source = f"lattice spacing {resolution} over {region!r}"
    pts = _clean(pts)
    if len(pts) == 0:
        pts = region.barycenter().reshape(1, -1)
        source += " (empty lattice; barycenter)"
    pts = pts[canonical_order(pts)]
    return Grid(pts, float(resolution), source)


def grid_from_points(points, resolution: float, source: str) -> Grid:
    pts = as_points(points)
    return Grid(pts[canonical_order(pts)], float(resolution), source)


def merge_into_grid(grid: Grid, extra, tol: float = 1e-9) -> Grid:
    """Add ``extra`` points to ``grid``, reusing existing points within ``tol``."""
    pts = list(grid.points)
    for q in np.atleast_2d(np.asarray(extra, dtype=float)):
        if len(q) == 0:
            continue
        if np.abs(np.asarray(pts) - q).max(axis=1).min() > tol:
            pts.append(q)
    return grid_from_points(np.array(pts), grid.resolution, grid.source + " + sampled points")
