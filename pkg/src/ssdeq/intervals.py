"""Interval-valued bifunctions and sampling validators for their hypotheses.

A closed convex subset of R is an interval, possibly unbounded, so every
set-valued map K x K -> R with closed convex values is represented by its two
endpoint functions. Semicontinuity of such a map reduces to the endpoints:

* lower semicontinuous  <=>  lo is upper and hi is lower semicontinuous;
* upper semicontinuous  <=>  lo is lower and hi is upper semicontinuous.

Validators never decide a property; they test it at a stated scale (grid,
Lipschitz slack ``L``, tolerance) and return a :class:`ValidationVerdict`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .config import DEFAULT_SEED, pick
from .dense_sets import SamplerExhausted
from .geometry import Grid, as_point, compositions

INF = math.inf


@dataclass(frozen=True)
class ExtInterval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints may not be NaN")
        if lo == INF or hi == -INF or lo > hi:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, v: float) -> "ExtInterval":
        return cls(v, v)

    def subset_of(self, other: "ExtInterval", tol: float = 0.0) -> bool:
        return other.lo <= self.lo + tol and self.hi <= other.hi + tol

    def __repr__(self) -> str:
        left = "(" if self.lo == -INF else "["
        right = ")" if self.hi == INF else "]"
        return f"{left}{self.lo:g}, {self.hi:g}{right}"


def geq_zero(I: ExtInterval, tol: float = 0.0) -> bool:
    return I.lo >= -tol


def leq_zero(I: ExtInterval, tol: float = 0.0) -> bool:
    return I.hi <= tol


def meets_plus(I: ExtInterval, tol: float = 0.0) -> bool:
    return I.hi >= -tol


def meets_minus(I: ExtInterval, tol: float = 0.0) -> bool:
    return I.lo <= tol


def contains_zero(I: ExtInterval, tol: float = 0.0) -> bool:
    return I.lo <= tol and I.hi >= -tol


def _nan_to(a, value):
    a = np.asarray(a, dtype=float)
    return np.where(np.isnan(a), value, a)


# Signed margins: the predicate holds within tol iff margin >= -tol.
MARGINS: dict[str, Callable] = {
    "geq_zero": lambda lo, hi: lo,
    "meets_plus": lambda lo, hi: hi,
    "leq_zero": lambda lo, hi: -np.asarray(hi, dtype=float),
    "meets_minus": lambda lo, hi: -np.asarray(lo, dtype=float),
    "contains_zero": lambda lo, hi: np.minimum(-np.asarray(lo, dtype=float), hi),
}

PREDICATES = {
    "geq_zero": geq_zero,
    "meets_plus": meets_plus,
    "leq_zero": leq_zero,
    "meets_minus": meets_minus,
    "contains_zero": contains_zero,
}


def margin(predicate: str, lo, hi):
    return MARGINS[predicate](lo, hi)


def minkowski_combination(intervals: Sequence[ExtInterval], weights: Sequence[float]) -> ExtInterval:
    w = [float(v) for v in weights]
    if len(w) != len(intervals) or not w:
        raise ValueError("need one weight per interval")
    if any(v < -1e-12 for v in w) or abs(sum(w) - 1.0) > 1e-12:
        raise ValueError(f"weights {w} are not convex weights")
    terms = [(v, I) for v, I in zip(w, intervals) if v > 0]
    lo = math.fsum(v * I.lo for v, I in terms) if all(I.lo > -INF for _, I in terms) else -INF
    hi = math.fsum(v * I.hi for v, I in terms) if all(I.hi < INF for _, I in terms) else INF
    return ExtInterval(lo, hi)


# ---------------------------------------------------------------------------
# bifunctions

BatchFn = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True, eq=False)
class Bifunction:
    """(x, y) -> ExtInterval, optionally with a vectorised endpoint evaluator.

    ``batch(X, Y)`` returns ``(lo, hi)`` arrays of shape ``(len(X), len(Y))``.
    ``scalar`` marks a single-valued bifunction; its convexity is that of a
    real function rather than the set inclusion, which would demand affinity.
    """

    eval: Callable[[np.ndarray, np.ndarray], ExtInterval]
    name: str = "F"
    batch: Optional[BatchFn] = None
    scalar: bool = False
    claims: frozenset = frozenset()
    domain: object = None

    def __call__(self, x, y) -> ExtInterval:
        return self.eval(as_point(x), as_point(y))

    def endpoints(self, X, Y, workers: Optional[int] = None):
        """Endpoint matrices over all pairs; row order is preserved under threading."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        workers = pick(workers, "workers")
        chunks = np.array_split(np.arange(len(X)), max(1, min(workers, len(X))))
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda idx: self._endpoints(X[idx], Y), chunks))
        else:
            parts = [self._endpoints(X, Y)]
        lo = np.vstack([p[0] for p in parts])
        hi = np.vstack([p[1] for p in parts])
        return lo, hi

    def _endpoints(self, X, Y):
        if self.batch is not None:
            lo, hi = self.batch(X, Y)
            return np.broadcast_to(lo, (len(X), len(Y))).astype(float), \
                np.broadcast_to(hi, (len(X), len(Y))).astype(float)
        lo = np.empty((len(X), len(Y)))
        hi = np.empty((len(X), len(Y)))
        for i, x in enumerate(X):
            for j, y in enumerate(Y):
                I = self.eval(x, y)
                lo[i, j], hi[i, j] = I.lo, I.hi
        return lo, hi

    def diagonal(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = [self.eval(x, x) for x in X]
        return np.array([v.lo for v in vals]), np.array([v.hi for v in vals])


def scalar_bifunction(phi, batch=None, name="phi", **kw) -> Bifunction:
    def ev(x, y):
        return ExtInterval.point(phi(x, y))

    b = None
    if batch is not None:
        def b(X, Y):
            v = batch(X, Y)
            return v, v
    return Bifunction(ev, name, b, scalar=True, **kw)


def upper_ray(phi, batch=None, name="F1", **kw) -> Bifunction:
    """F(x, y) = [phi(x, y), +inf)."""
    b = None
    if batch is not None:
        def b(X, Y):
            v = batch(X, Y)
            return v, np.full_like(v, INF)
    return Bifunction(lambda x, y: ExtInterval(phi(x, y), INF), name, b, **kw)


def lower_ray(phi, batch=None, name="F2", **kw) -> Bifunction:
    """F(x, y) = (-inf, phi(x, y)]."""
    b = None
    if batch is not None:
        def b(X, Y):
            v = batch(X, Y)
            return np.full_like(v, -INF), v
    return Bifunction(lambda x, y: ExtInterval(-INF, phi(x, y)), name, b, **kw)


def constant_bifunction(lo: float, hi: float, name: Optional[str] = None) -> Bifunction:
    I = ExtInterval(lo, hi)

    def b(X, Y):
        return np.full((len(X), len(Y)), I.lo), np.full((len(X), len(Y)), I.hi)

    return Bifunction(lambda x, y: I, name or f"const{I!r}", b)


def inner_product_minus_one(X, Y):
    return np.atleast_2d(X) @ np.atleast_2d(Y).T - 1.0


def potential_gap(g, g_batch=None):
    """phi(x, y) = g(y) - g(x), with a batch form when ``g_batch`` is given."""

    def phi(x, y):
        return float(g(y) - g(x))

    batch = None
    if g_batch is not None:
        def batch(X, Y):
            return g_batch(Y)[None, :] - g_batch(X)[:, None]
    return phi, batch


def squared_norm(x):
    return float(np.dot(x, x))


def squared_norm_rows(X):
    return np.einsum("ij,ij->i", X, X)


# ---------------------------------------------------------------------------
# verdicts


class Status(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(u) for u in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, Enum):
        return v.value
    return v


@dataclass
class ValidationVerdict:
    condition: str
    status: Status
    witness: Optional[dict] = None
    detail: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status is Status.PASS

    def to_record(self) -> dict:
        return _jsonable({"condition": self.condition, "status": self.status,
                          "witness": self.witness, "detail": self.detail, "stats": self.stats})


# ---------------------------------------------------------------------------
# convexity / concavity of y -> F(x, y)


def convex_inclusion_holds(values, weights, target: ExtInterval, tol: float) -> bool:
    """sum w_i F(y_i) is contained in F(sum w_i y_i)."""
    return minkowski_combination(values, weights).subset_of(target, tol)


def concave_inclusion_holds(values, weights, target: ExtInterval, tol: float) -> bool:
    """F(sum w_i y_i) is contained in sum w_i F(y_i)."""
    return target.subset_of(minkowski_combination(values, weights), tol)


def _weighted(endpoints, weights, infinite):
    if any(e == infinite for w, e in zip(weights, endpoints) if w > 0):
        return infinite
    # same summation as minkowski_combination, so both forms round identically
    return math.fsum(w * e for w, e in zip(weights, endpoints) if w > 0)


def convex_endpoint_holds(values, weights, target: ExtInterval, tol: float) -> bool:
    """lo convex and hi concave along the sampled combination."""
    lo_mix = _weighted([v.lo for v in values], weights, -INF)
    hi_mix = _weighted([v.hi for v in values], weights, INF)
    lo_ok = target.lo == -INF or target.lo <= lo_mix + tol
    hi_ok = target.hi == INF or target.hi >= hi_mix - tol
    return lo_ok and hi_ok


def concave_endpoint_holds(values, weights, target: ExtInterval, tol: float) -> bool:
    """lo concave and hi convex along the sampled combination."""
    lo_mix = _weighted([v.lo for v in values], weights, -INF)
    hi_mix = _weighted([v.hi for v in values], weights, INF)
    lo_ok = lo_mix == -INF or target.lo >= lo_mix - tol
    hi_ok = hi_mix == INF or target.hi <= hi_mix + tol
    return lo_ok and hi_ok


def _random_weights(rng: np.random.Generator, k: int, structured: bool) -> np.ndarray:
    if structured:
        m = int(rng.integers(k, 9))
        options = [c for c in compositions(m - k, k)]
        parts = np.array(options[int(rng.integers(len(options)))]) + 1
        return parts / m
    return rng.dirichlet(np.ones(k))


def sample_combination(D, rng: np.random.Generator, k: int, budget: int = 100, structured: bool = True,
                       pool: Optional[np.ndarray] = None):
    """Draw y_1..y_k in D and weights with sum w_i y_i in D; None if the budget runs out.

    With ``pool`` the points are drawn from those rows instead of D's sampler.
    """
    for _ in range(budget):
        if pool is not None:
            ys = pool[rng.integers(len(pool), size=k)]
        else:
            ys = D.sample(rng, k)
        w = _random_weights(rng, k, structured)
        comb = w @ ys
        if D.contains(comb):
            return ys, w, comb
    return None


def _check_shape_in_y(F: Bifunction, x, D, trials: int, seed: int, concave: bool, tol: float,
                      condition: str, scalar: Optional[bool]):
    scalar = F.scalar if scalar is None else scalar
    x = as_point(x)
    rng = np.random.default_rng(seed)
    tested = 0
    for t in range(trials):
        if t == 10 and tested == 0:
            break  # combinations keep leaving D; more draws will not change the verdict
        k = 2 + int(rng.integers(2))
        try:
            draw = sample_combination(D, rng, k, budget=25, structured=(t % 2 == 0))
        except SamplerExhausted:
            draw = None
        if draw is None:
            continue
        ys, w, comb = draw
        values = [F(x, y) for y in ys]
        target = F(x, comb)
        tested += 1
        if scalar:
            mix = float(np.dot(w, [v.lo for v in values]))
            ok = target.lo >= mix - tol if concave else target.lo <= mix + tol
        else:
            inc = (concave_inclusion_holds if concave else convex_inclusion_holds)(values, w, target, tol)
            end = (concave_endpoint_holds if concave else convex_endpoint_holds)(values, w, target, tol)
            if inc != end:
                raise AssertionError(f"inclusion and endpoint forms disagree at ys={ys.tolist()}, w={w.tolist()}")
            ok = inc
        if not ok:
            return ValidationVerdict(condition, Status.FAIL,
                                     {"x": x, "ys": ys, "weights": w, "combination": comb,
                                      "values": [(v.lo, v.hi) for v in values], "target": (target.lo, target.hi)},
                                     f"violated on trial {t}", {"trials": t + 1, "tested": tested})
    if tested == 0:
        return ValidationVerdict(condition, Status.INCONCLUSIVE, None,
                                 "no sampled combination landed in D; the property is vacuous on the samples",
                                 {"trials": trials, "tested": 0})
    return ValidationVerdict(condition, Status.PASS, None, "", {"trials": trials, "tested": tested})


def check_convex_in_y(F: Bifunction, x, D, trials: int = 200, seed: int = DEFAULT_SEED,
                      tol: Optional[float] = None, scalar: Optional[bool] = None) -> ValidationVerdict:
    return _check_shape_in_y(F, x, D, trials, seed, False, pick(tol, "inclusion"), "convex-in-y", scalar)


def check_concave_in_y(F: Bifunction, x, D, trials: int = 200, seed: int = DEFAULT_SEED,
                       tol: Optional[float] = None, scalar: Optional[bool] = None) -> ValidationVerdict:
    return _check_shape_in_y(F, x, D, trials, seed, True, pick(tol, "inclusion"), "concave-in-y", scalar)


# ---------------------------------------------------------------------------
# semicontinuity


def _diff(a, b):
    # a - b where equal infinities count as no difference
    with np.errstate(invalid="ignore"):
        return _nan_to(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 0.0)


def semicontinuity_excess(mode: str, lo_c, hi_c, lo_n, hi_n):
    """Violation amount (before slack) of a neighbour n against centre c."""
    if mode == "lsc":  # lo usc, hi lsc
        return np.maximum(_diff(lo_n, lo_c), _diff(hi_c, hi_n))
    if mode == "usc":  # lo lsc, hi usc
        return np.maximum(_diff(lo_c, lo_n), _diff(hi_n, hi_c))
    if mode == "usc_real":
        return _diff(lo_n, lo_c)
    if mode == "lsc_real":
        return _diff(lo_c, lo_n)
    raise ValueError(f"unknown semicontinuity mode {mode!r}")


def check_semicontinuity(points: np.ndarray, lo: np.ndarray, hi: np.ndarray, mode: str, radius: float,
                         tol: Optional[float] = None, lipschitz: Optional[float] = None,
                         centers: Optional[np.ndarray] = None, condition: str = "") -> ValidationVerdict:
    """Compare each centre against grid neighbours within ``radius``.

    A pair (c, n) violates when the relevant endpoint moves the wrong way by more
    than ``tol + L * |c - n|``. The worst offending pair is reported.
    """
    from scipy.spatial import cKDTree

    tol = pick(tol, "certificate")
    L = pick(lipschitz, "lipschitz")
    points = np.asarray(points, dtype=float)
    idx = np.arange(len(points)) if centers is None else np.asarray(centers, dtype=int)
    tree = cKDTree(points)
    lists = tree.query_ball_point(points[idx], radius + 1e-12)
    counts = np.fromiter((len(l) for l in lists), dtype=int, count=len(lists))
    cs = np.repeat(idx, counts)
    ns = np.fromiter((n for l in lists for n in l), dtype=int, count=int(counts.sum()))
    keep = cs != ns
    cs, ns = cs[keep], ns[keep]
    pairs = int(cs.size)
    worst, worst_pair = 0.0, None
    if pairs:
        dist = np.linalg.norm(points[ns] - points[cs], axis=1)
        excess = semicontinuity_excess(mode, lo[cs], hi[cs], lo[ns], hi[ns]) - (tol + L * dist)
        k = int(np.argmax(excess))
        if excess[k] > 0.0:
            worst, worst_pair = float(excess[k]), (int(cs[k]), int(ns[k]))
    stats = {"pairs": pairs, "radius": radius, "lipschitz": L, "tol": tol, "mode": mode,
             "scale": f"grid of {len(points)} points, L={L}, tol={tol}"}
    if worst_pair is None:
        return ValidationVerdict(condition or mode, Status.PASS, None, "", stats)
    c, n = worst_pair
    return ValidationVerdict(condition or mode, Status.FAIL,
                             {"center": points[c], "neighbour": points[n],
                              "center_value": (lo[c], hi[c]), "neighbour_value": (lo[n], hi[n]),
                              "excess": worst},
                             "semicontinuity violated beyond the Lipschitz slack", stats)


def _radius(grid: Grid, radius):
    return 1.5 * grid.resolution if radius is None else radius


def check_lsc_in_x(F: Bifunction, y, K_grid: Grid, radius=None, tol=None, lipschitz=None,
                   real: Optional[bool] = None) -> ValidationVerdict:
    real = F.scalar if real is None else real
    lo, hi = F.endpoints(K_grid.points, as_point(y)[None, :])
    mode = "lsc_real" if real else "lsc"
    return check_semicontinuity(K_grid.points, lo[:, 0], hi[:, 0], mode, _radius(K_grid, radius), tol,
                                lipschitz, condition="lsc-in-x")


def check_usc_in_x(F: Bifunction, y, K_grid: Grid, radius=None, tol=None, lipschitz=None,
                   real: Optional[bool] = None) -> ValidationVerdict:
    real = F.scalar if real is None else real
    lo, hi = F.endpoints(K_grid.points, as_point(y)[None, :])
    mode = "usc_real" if real else "usc"
    return check_semicontinuity(K_grid.points, lo[:, 0], hi[:, 0], mode, _radius(K_grid, radius), tol,
                                lipschitz, condition="usc-in-x")


def check_semicontinuity_in_y(F: Bifunction, x, K_grid: Grid, centers, mode: str, radius=None, tol=None,
                              lipschitz=None) -> ValidationVerdict:
    """Semicontinuity of y -> F(x, y) at the given centre indices of the grid."""
    lo, hi = F.endpoints(as_point(x)[None, :], K_grid.points)
    return check_semicontinuity(K_grid.points, lo[0], hi[0], mode, _radius(K_grid, radius), tol, lipschitz,
                                centers=centers, condition=f"{mode.replace('_real', '')}-in-y")


def check_diagonal(F: Bifunction, D_grid: Grid, kind: str, tol: Optional[float] = None) -> ValidationVerdict:
    tol = pick(tol, "certificate")
    lo, hi = F.diagonal(D_grid.points)
    m = margin(kind, lo, hi)
    bad = np.flatnonzero(m < -tol)
    stats = {"min_margin": float(np.min(m)), "points": len(D_grid)}
    if bad.size:
        i = int(bad[0])
        return ValidationVerdict(f"diagonal-{kind}", Status.FAIL,
                                 {"x": D_grid.points[i], "value": (lo[i], hi[i])}, "", stats)
    return ValidationVerdict(f"diagonal-{kind}", Status.PASS, None, "", stats)
