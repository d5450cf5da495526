"""Subsets D of a convex set K and sampling validators for their denseness.

A :class:`DenseSubset` couples an exact membership predicate with a seeded
sampler. The validators here are one-sided: a pass is evidence gathered at
the sampled scale (``eps``, budgets), a fail carries a replayable witness.
Denseness is not decidable from finitely many samples, and nothing here
pretends otherwise.

Built-in families:

* ``full``          D = K.
* ``rational_grid`` points whose coordinates are fractions a/b with b <= q.
* ``punctured``     K minus the relative interior of a polytope A.
* ``sphere_in_ball`` the unit sphere inside the closed unit ball. In a Hilbert
  space of infinite dimension the sphere is weakly dense in the ball; in R^n
  it is not dense at all, so ``check_dense`` fails on it. It is kept because
  it anchors the counterexample suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT_SEED
from .geometry import (
    Ball,
    GeometryError,
    Grid,
    SimplexM,
    as_point,
    as_points,
    compositions,
    convex_combination,
)

SAMPLER_ATTEMPTS = 200


class SamplerExhausted(RuntimeError):
    """Raised when a sampler cannot deliver the requested number of members."""


@dataclass(frozen=True, eq=False)
class DenseSubset:
    parent: object
    member: Callable[[np.ndarray], bool]
    draw: Callable[[np.random.Generator, int], np.ndarray]
    label: str
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.parent.dim

    def contains(self, p, tol=None) -> bool:
        return bool(self.member(as_point(p)))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` member points; raises :class:`SamplerExhausted` if it cannot."""
        out: list[np.ndarray] = []
        for _ in range(SAMPLER_ATTEMPTS):
            need = count - len(out)
            if need <= 0:
                break
            for p in np.atleast_2d(self.draw(rng, need)):
                if self.member(p) and self.parent.contains(p, 1e-9):
                    out.append(p)
        if len(out) < count:
            raise SamplerExhausted(f"{self.label}: produced {len(out)} of {count} members")
        return np.array(out[:count])

    @property
    def is_full(self) -> bool:
        return self.kind == "full"


# ---------------------------------------------------------------------------
# built-ins


def full(parent) -> DenseSubset:
    return DenseSubset(parent, lambda p: parent.contains(p), parent.sample, f"full({parent!r})", "full")


def _is_rational(c: float, q: int) -> bool:
    return abs(float(Fraction(c).limit_denominator(q)) - c) <= 1e-12


def rational_grid(parent, q: int) -> DenseSubset:
    """Points of ``parent`` whose coordinates are fractions with denominator <= q.

    The sampler draws from the sublattice (1/B)Z^n with B = isqrt(q). Two such
    points x, y have x + (j/m)(y - x) in (1/(B m))Z^n, a member whenever B m <= q,
    so segments between sampled members keep members at parameter spacing about
    1/isqrt(q). Sampling finer rationals would leave those segments almost empty.
    """
    if q < 1:
        raise GeometryError("rational grid needs q >= 1")
    base = max(1, math.isqrt(q))

    def member(p):
        return all(_is_rational(float(c), q) for c in p) and parent.contains(p)

    def draw(rng, count):
        if isinstance(parent, SimplexM):
            # random composition of `base` into n parts
            cuts = np.sort(rng.integers(0, base + 1, size=(count, parent.n - 1)), axis=1)
            edges = np.hstack([np.zeros((count, 1)), cuts, np.full((count, 1), base)])
            return np.diff(edges, axis=1) / base
        raw = parent.sample(rng, count)
        return np.round(raw * base) / base

    return DenseSubset(parent, member, draw, f"rational_grid(q={q})", "rational_grid", {"q": q, "base": base})


class _RelativeInterior:
    """Membership in the relative interior of co(A), precomputed once.

    A is mapped into coordinates of its affine hull, where qhull supplies the
    facet inequalities; a point is inside iff it lies on the affine hull and
    strictly satisfies every facet.
    """

    def __init__(self, A: np.ndarray, tol: float = 1e-9):
        self.tol = tol
        self.origin = A.mean(axis=0)
        _, s, vt = np.linalg.svd(A - self.origin)
        rank = int(np.sum(s > 1e-12 * max(1.0, s.max(initial=0.0))))
        self.basis = vt[:rank]
        local = (A - self.origin) @ self.basis.T
        if rank == 0:
            self.equations = None
        elif rank == 1:
            self.equations = np.array([[1.0, -local.max()], [-1.0, local.min()]])
        else:
            from scipy.spatial import ConvexHull

            self.equations = ConvexHull(local).equations

    def __call__(self, p: np.ndarray) -> bool:
        d = p - self.origin
        local = self.basis @ d
        if np.linalg.norm(d - self.basis.T @ local) > self.tol:
            return False
        if self.equations is None:
            return True
        return bool(np.all(self.equations[:, :-1] @ local + self.equations[:, -1] < -self.tol))


def punctured(parent, removed) -> DenseSubset:
    """``parent`` minus the (relatively) open polytope with vertices ``removed``.

    The removed set only has to sit inside the parent; its closure may touch
    the parent's boundary, as the square inscribed in the unit ball does.
    """
    A = as_points(removed)
    if A.shape[1] != parent.dim:
        raise GeometryError("removed polytope has the wrong dimension")
    if not all(parent.contains(v, 1e-9) for v in A):
        raise GeometryError("removed polytope is not inside the parent set")

    inside_removed = _RelativeInterior(A)

    def member(p):
        return parent.contains(p) and not inside_removed(p)

    return DenseSubset(parent, member, parent.sample, f"punctured(parent={parent!r}, removed={len(A)}-gon)",
                       "punctured", {"removed": A.tolist()})


def sphere_in_ball(n: int) -> DenseSubset:
    ball = Ball.unit(n)

    def member(p):
        return abs(float(np.linalg.norm(p)) - 1.0) <= 1e-9

    def draw(rng, count):
        g = rng.standard_normal((count, n))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    return DenseSubset(ball, member, draw, f"sphere_in_ball(n={n})", "sphere_in_ball", {"n": n})


INSCRIBED_SQUARE = [(-1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
SQUARE_CROSSING_PAIR = ((0.6, 0.6, 0.0), (-0.6, -0.6, 0.0))


def builtin_subset(kind: str, parent=None, **params) -> DenseSubset:
    if kind == "full":
        return full(parent)
    if kind == "rational_grid":
        return rational_grid(parent, int(params.get("q", 1000)))
    if kind == "punctured":
        parent = parent if parent is not None else Ball.unit(3)
        return punctured(parent, params.get("removed", INSCRIBED_SQUARE))
    if kind == "sphere_in_ball":
        return sphere_in_ball(int(params.get("n", 3)))
    raise GeometryError(f"unknown dense subset kind {kind!r}")


def restrict(D: DenseSubset, region) -> DenseSubset:
    """D intersected with a smaller convex region (used by truncation)."""

    def member(p):
        return D.member(p) and region.contains(p)

    def draw(rng, count):
        pts = region.sample(rng, count)
        if D.is_full:
            return pts
        return D.draw(rng, count)

    kind = "full" if D.is_full else D.kind
    return DenseSubset(region, member, draw, f"{D.label} within {region!r}", kind, dict(D.params))


# ---------------------------------------------------------------------------
# validators


def check_dense(U: DenseSubset, grid: Grid, eps: float, seed: int = DEFAULT_SEED) -> bool:
    if not eps > 0:
        raise ValueError("eps must be positive")
    # a grid point that is itself a member needs no sample near it
    open_pts = np.array([g for g in grid.points if not U.member(g)]).reshape(-1, grid.points.shape[1])
    if len(open_pts) == 0:
        return True
    budget = max(10_000, 100 * len(grid))
    rng = np.random.default_rng(seed)
    members = U.sample(rng, budget)
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(members).query(open_pts)
    return bool(np.all(dist <= eps))


@dataclass
class SsdCheckReport:
    dense_ok: bool
    segment_ok: bool
    witness: Optional[dict]
    samples_used: int

    def to_record(self) -> dict:
        return {"dense_ok": self.dense_ok, "segment_ok": self.segment_ok,
                "witness": self.witness, "samples_used": self.samples_used}


def _candidate_parameters(target: float, budget: int, rng: np.random.Generator):
    """Parameters near ``target``: rationals j/m for growing m, then random jitter."""
    yield target
    m = 1
    while budget > 0 and m <= budget // 2:
        yield round(target * m) / m
        budget -= 1
        m += 1
    for _ in range(budget):
        yield float(np.clip(target + rng.normal(scale=0.01), 0.0, 1.0))


def segment_members(U: DenseSubset, x, y, targets, eps: float, budget: int, rng) -> list:
    """For each target parameter, a member parameter within eps (in space) or None."""
    x, y = as_point(x), as_point(y)
    length = float(np.linalg.norm(y - x))
    per_point = max(1, budget // max(1, len(targets)))
    found = []
    for t in targets:
        hit = None
        for s in _candidate_parameters(t, per_point, rng):
            if abs(s - t) * length > eps:
                continue
            if s in (0.0, 1.0) or U.member(x + s * (y - x)):
                hit = s
                break
        found.append(hit)
    return found


def _segment_failure(U, x, y, per_segment, eps, rng, budget=1000):
    targets = np.linspace(0.0, 1.0, per_segment)
    hits = segment_members(U, x, y, targets, eps, budget, rng)
    bad = [i for i, h in enumerate(hits) if h is None]
    if not bad:
        return None
    i = bad[0]
    # widen to the maximal run of uncovered subdivision points around the first failure
    j = i
    while j + 1 < len(targets) and hits[j + 1] is None:
        j += 1
    lo = targets[i - 1] if i > 0 else 0.0
    hi = targets[j + 1] if j + 1 < len(targets) else 1.0
    return {"x": as_point(x).tolist(), "y": as_point(y).tolist(),
            "uncovered": [float(lo), float(hi)], "failing_t": float(targets[i])}


def check_self_segment_dense(U: DenseSubset, pairs: int = 50, per_segment: int = 20, eps: float = 0.05,
                             seed: int = DEFAULT_SEED, forced_pairs=None, dense_grid: Optional[Grid] = None,
                             ) -> SsdCheckReport:
    """Sampled check that [x, y] meets U densely for member pairs x, y.

    ``forced_pairs`` are tested before (and in addition to) the sampled ones.
    ``dense_grid``, when given, also runs :func:`check_dense` for ``dense_ok``;
    otherwise ``dense_ok`` is reported as True and left to the caller.
    """
    if pairs < 1 or per_segment < 2:
        raise ValueError("need pairs >= 1 and per_segment >= 2")
    rng = np.random.default_rng(seed)
    candidates = [tuple(map(as_point, pr)) for pr in (forced_pairs or [])]
    pts = U.sample(rng, 2 * pairs)
    candidates += [(pts[2 * i], pts[2 * i + 1]) for i in range(pairs)]
    dense_ok = True if dense_grid is None else check_dense(U, dense_grid, eps, seed)
    used = 2 * pairs
    for k, (x, y) in enumerate(candidates):
        seg_rng = np.random.default_rng([seed, k])
        w = _segment_failure(U, x, y, per_segment, eps, seg_rng)
        used += per_segment
        if w is not None:
            w.update(pair_index=k, seed=seed, per_segment=per_segment, eps=eps)
            return SsdCheckReport(dense_ok, False, w, used)
    return SsdCheckReport(dense_ok, True, None, used)


def replay_witness(U: DenseSubset, witness: dict) -> bool:
    """Re-test a witness segment; True if the failure reproduces."""
    rng = np.random.default_rng([witness["seed"], witness["pair_index"]])
    again = _segment_failure(U, witness["x"], witness["y"], witness["per_segment"], witness["eps"], rng)
    return again is not None and again["uncovered"] == witness["uncovered"]


def _hull_grid(hull: np.ndarray, res: float) -> np.ndarray:
    m = max(1, math.ceil(1.0 / res - 1e-12))
    W = np.array(list(compositions(m, len(hull))), dtype=float) / m
    return W


def _nearby_weights(w: np.ndarray, m: int) -> np.ndarray:
    # largest-remainder rounding of w onto the composition lattice of m
    raw = w * m
    base = np.floor(raw).astype(int)
    short = m - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base / m


def check_hull_trace_dense(U: DenseSubset, hull_points, grid_res: float = 0.1, eps: float = 0.05,
                           seed: int = DEFAULT_SEED, budget: int = 10_000) -> bool:
    """Check that co{u_1..u_n} intersected with U is eps-dense in the hull."""
    H = as_points(hull_points)
    if not 2 <= len(H) <= 6:
        raise ValueError("need between 2 and 6 hull points")
    for u in H:
        if not U.member(u):
            raise GeometryError(f"hull point {u.tolist()} is not a member of {U.label}")
    rng = np.random.default_rng(seed)
    diam = max(float(np.linalg.norm(a - b)) for a in H for b in H) or 1.0
    for w in _hull_grid(H, grid_res):
        g = w @ H
        if not _member_near(U, H, w, g, eps, diam, budget, rng):
            return False
    return True


def _member_near(U, H, w, g, eps, diam, budget, rng) -> bool:
    if U.member(g):
        return True
    tries = 0
    m = 1
    structured = budget // 2
    while tries < structured and m <= structured:
        cand = _nearby_weights(w, m) @ H
        tries += 1
        m += 1
        if np.linalg.norm(cand - g) <= eps and U.member(cand):
            return True
    smax = min(1.0, eps / diam)
    while tries < budget:
        tries += 1
        s = smax * rng.random()
        v = (1 - s) * w + s * rng.dirichlet(np.ones(len(H)))
        cand = convex_combination(H, v / v.sum(), tol=1e-9)
        if np.linalg.norm(cand - g) <= eps and U.member(cand):
            return True
    return False
