"""Equilibrium problems on closed, possibly unbounded, convex domains.

In R^n the weak and norm topologies coincide and closed balls are compact, so
every "weakly" qualified hypothesis is checked in its norm form. The solver
works on the truncation K0 = K ∩ B(0, r1), then certifies points outside K0 with
the segment argument: for y far out, the combination c = lam*z0 + (1-lam)*y lies
on the shell |c| = r1, and the shape of y -> F(x0, y) gives

    margin(y) >= (margin(c) - lam * margin(z0)) / (1 - lam).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import dense_sets
from .config import DEFAULT_SEED, DEFAULTS
from .geometry import GeometryError, Polytope, as_point, as_points, linprog_eq
from .intervals import Bifunction, Status, ValidationVerdict, _jsonable, margin
from .solvers import (
    EquilibriumProblem,
    Kind,
    SolveReport,
    SolverConfig,
    build_grids,
    margin_matrix,
    predicate_of,
    solve_compact,
)


# ---------------------------------------------------------------------------
# unbounded domains


@dataclass(eq=False)
class ConeSet:
    """base + cone(directions): a polytope plus nonnegative combinations of recession directions."""

    base: Polytope
    directions: np.ndarray

    def __post_init__(self):
        self.directions = as_points(self.directions)
        if self.directions.shape[1] != self.base.dim:
            raise GeometryError("directions must match the base dimension")
        D = self.directions
        axes = np.all((np.abs(D) == 1.0).sum(axis=1) == 1) and np.all((D != 0).sum(axis=1) == 1)
        self._axis_cone = bool(axes and len(self.base.vertices) == 1)

    @classmethod
    def orthant(cls, n: int) -> "ConeSet":
        return cls(Polytope(np.zeros((1, n))), np.eye(n))

    @classmethod
    def whole_space(cls, n: int) -> "ConeSet":
        return cls(Polytope(np.zeros((1, n))), np.vstack([np.eye(n), -np.eye(n)]))

    @property
    def dim(self) -> int:
        return self.base.dim

    def contains(self, p, tol: Optional[float] = None) -> bool:
        tol = DEFAULTS.membership if tol is None else tol
        p = as_point(p)
        if self._axis_cone:
            lo, hi = self.bounds()
            return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))
        V, R = self.base.vertices, self.directions
        n, nv, nr = self.dim, len(V), len(R)
        # p = V^T lam + R^T mu + s+ - s-, sum lam = 1, minimise total slack
        A = np.zeros((n + 1, nv + nr + 2 * n))
        A[:n, :nv] = V.T
        A[:n, nv:nv + nr] = R.T
        A[:n, nv + nr:nv + nr + n] = np.eye(n)
        A[:n, nv + nr + n:] = -np.eye(n)
        A[n, :nv] = 1.0
        c = np.zeros(A.shape[1])
        c[nv + nr:] = 1.0
        res = linprog_eq(c, A, np.concatenate([p, [1.0]]))
        return res.status == "optimal" and res.value <= tol

    def bounds(self):
        lo, hi = self.base.bounds()
        lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
        lo[np.any(self.directions < 0, axis=0)] = -np.inf
        hi[np.any(self.directions > 0, axis=0)] = np.inf
        return lo, hi

    def barycenter(self) -> np.ndarray:
        return self.base.barycenter()

    def sample(self, rng: np.random.Generator, count: int, scale: float = 1.0) -> np.ndarray:
        mu = rng.exponential(scale, size=(count, len(self.directions)))
        mu *= rng.random((count, len(self.directions))) < 0.7  # mix of faces and interior
        return self.base.sample(rng, count) + mu @ self.directions

    def __repr__(self) -> str:
        return f"Cone(base={self.base!r}, {len(self.directions)} directions)"


def is_bounded(K) -> bool:
    lo, hi = K.bounds()
    return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))


@dataclass(eq=False)
class Truncation:
    """K ∩ closed ball of radius r around the origin."""

    K: object
    r: float

    @property
    def dim(self) -> int:
        return self.K.dim

    def contains(self, p, tol: Optional[float] = None) -> bool:
        tol = DEFAULTS.membership if tol is None else tol
        p = as_point(p)
        return bool(np.linalg.norm(p) <= self.r + tol) and self.K.contains(p, tol)

    def bounds(self):
        lo, hi = self.K.bounds()
        return np.maximum(lo, -self.r), np.minimum(hi, self.r)

    def barycenter(self) -> np.ndarray:
        b = self.K.barycenter()
        if self.contains(b):
            return b
        lo, hi = self.bounds()
        return (lo + hi) / 2

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo, hi = self.bounds()
        out = []
        for _ in range(1000):
            cand = lo + rng.random((4 * count, self.dim)) * (hi - lo)
            out.extend(p for p in cand if self.contains(p))
            if len(out) >= count:
                return np.array(out[:count])
        raise GeometryError("truncation sampler exhausted")

    def __repr__(self) -> str:
        return f"Truncation({self.K!r}, r={self.r})"


# ---------------------------------------------------------------------------
# coercivity data


class Mode(str, Enum):
    COMPACT_SET = "compact_set"            # y0 refutes every x outside a compact set (a ball of radius r)
    RADIUS_WITNESS = "radius_witness"      # same with |y0| <= r
    SHRINKING_WITNESS = "shrinking_witness"  # for |x| > r some |y| < |x| with F(x, y) meeting (-inf, 0]
    ZERO_WITNESS = "zero_witness"          # for |x| <= r some y0 in D, |y0| < r, with 0 in F(x, y0)
    LEQ_WITNESS = "leq_witness"            # ... with F(x, y0) <= 0
    SCALAR_ZERO_WITNESS = "scalar_zero_witness"  # ... with phi(x, y0) = 0


OUTER_MODES = (Mode.COMPACT_SET, Mode.RADIUS_WITNESS, Mode.SHRINKING_WITNESS)
INNER_PREDICATE = {Mode.ZERO_WITNESS: "contains_zero", Mode.LEQ_WITNESS: "leq_zero",
                   Mode.SCALAR_ZERO_WITNESS: "equals_zero"}


@dataclass
class CoercivitySpec:
    mode: Mode
    r: float
    r1: Optional[float] = None
    y0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.r1 is None:
            self.r1 = 2.0 * self.r
        if not self.r1 > self.r:
            raise ValueError("the truncation radius r1 must exceed r")
        if self.y0 is not None:
            self.y0 = as_point(self.y0)

    def validate_witness(self, D) -> Optional[str]:
        if self.y0 is None:
            return None
        if not D.contains(self.y0):
            return "y0 is not a member of D"
        norm = float(np.linalg.norm(self.y0))
        strict = self.mode in (Mode.ZERO_WITNESS, Mode.LEQ_WITNESS, Mode.SCALAR_ZERO_WITNESS)
        if norm > self.r + 1e-12 or (strict and norm >= self.r):
            return f"|y0| = {norm} is too large for r = {self.r}"
        return None


def _inner_margin(mode: Mode, lo, hi):
    pred = INNER_PREDICATE[mode]
    if pred == "equals_zero":
        return -np.abs(np.asarray(lo, dtype=float))
    return margin(pred, lo, hi)


def _outer_samples(K, r: float, count: int, rng) -> np.ndarray:
    out = []
    for scale in (r, 2 * r, 4 * r, 8 * r):
        cand = K.sample(rng, 8 * count, scale=scale) if isinstance(K, ConeSet) else K.sample(rng, 8 * count)
        out.extend(p for p in cand if np.linalg.norm(p) > r)
        if len(out) >= count:
            break
    return np.array(out[:count]).reshape(-1, K.dim)


def _shrinking_candidates(K, x: np.ndarray, pool: np.ndarray) -> np.ndarray:
    nx = np.linalg.norm(x)
    scaled = np.array([t * x for t in np.linspace(0.0, 0.95, 20)])
    cands = np.vstack([scaled, pool[np.linalg.norm(pool, axis=1) < nx]])
    return np.array([c for c in cands if K.contains(c)])


def check_coercivity(F: Bifunction, K, D, spec: CoercivitySpec, kind: Kind = Kind.STRONG_GEQ,
                     outer_samples: int = 200, seed: int = DEFAULT_SEED, tol: float = 1e-9) -> ValidationVerdict:
    """Sampled check of the mode's coercivity clause; vacuous (pass) for bounded K."""
    condition = f"coercivity:{spec.mode.value}"
    if is_bounded(K):
        return ValidationVerdict(condition, Status.PASS, None, "K is bounded; the condition is vacuous", {})
    problem = spec.validate_witness(D)
    if problem:
        return ValidationVerdict(condition, Status.FAIL, {"y0": spec.y0}, problem, {})
    rng = np.random.default_rng(seed)
    pred = predicate_of(kind)
    stats = {"mode": spec.mode.value, "r": spec.r, "samples": 0}

    if spec.mode in (Mode.COMPACT_SET, Mode.RADIUS_WITNESS):
        if spec.y0 is None:
            raise ValueError(f"{spec.mode.value} needs y0")
        xs = _outer_samples(K, spec.r, outer_samples, rng)
        if len(xs) == 0:
            return ValidationVerdict(condition, Status.INCONCLUSIVE, None, "no sample left the ball", stats)
        lo, hi = F.endpoints(xs, spec.y0[None, :])
        m = np.asarray(margin(pred, lo[:, 0], hi[:, 0]), dtype=float)
        stats["samples"] = len(xs)
        bad = np.flatnonzero(~(m < 0.0))  # the kind's predicate must fail strictly at (x, y0)
        if bad.size:
            i = int(bad[0])
            return ValidationVerdict(condition, Status.FAIL, {"x": xs[i], "y0": spec.y0, "value": (lo[i, 0], hi[i, 0])},
                                     "y0 does not refute an outer point", stats)
        return ValidationVerdict(condition, Status.PASS, None, "", stats)

    if spec.mode is Mode.SHRINKING_WITNESS:
        xs = _outer_samples(K, spec.r, outer_samples, rng)
        pool = Truncation(K, float(np.max(np.linalg.norm(xs, axis=1)))).sample(rng, 64) if len(xs) else None
        stats["samples"] = len(xs)
        for x in xs:
            cands = _shrinking_candidates(K, x, pool)
            lo, hi = F.endpoints(x[None, :], cands)
            m = np.asarray(margin(pred, lo[0], hi[0]), dtype=float)
            # "meets (-inf, 0]" for the >= kinds: the kind's margin is at most zero
            if not np.any(m <= tol):
                return ValidationVerdict(condition, Status.FAIL, {"x": x, "candidates": len(cands)},
                                         "no smaller-norm y found for an outer point", stats)
        return ValidationVerdict(condition, Status.PASS, None, "existential witness searched on a shrinking grid", stats)

    # inner modes: every x with |x| <= r must have a witness y0 in D with |y0| < r
    xs = Truncation(K, spec.r).sample(rng, outer_samples)
    xs = np.vstack([np.zeros((1, K.dim)), xs]) if K.contains(np.zeros(K.dim)) else xs
    stats["samples"] = len(xs)
    if spec.y0 is not None:
        cands = spec.y0[None, :]
    else:
        pool = Truncation(K, spec.r).sample(rng, 256)
        cands = np.array([c for c in pool if np.linalg.norm(c) < spec.r and D.contains(c)])
    lo, hi = F.endpoints(xs, cands)
    m = _inner_margin(spec.mode, lo, hi).max(axis=1)
    bad = np.flatnonzero(m < -tol)
    if bad.size:
        i = int(bad[0])
        return ValidationVerdict(condition, Status.FAIL, {"x": xs[i], "y0": spec.y0, "best_margin": float(m[i])},
                                 f"no witness with {INNER_PREDICATE[spec.mode]}", stats)
    return ValidationVerdict(condition, Status.PASS, None, "", stats)


# ---------------------------------------------------------------------------
# solving with an extension certificate


@dataclass
class CertificateLine:
    y: np.ndarray
    lam: float
    combination: np.ndarray
    margin: float          # kind's margin at (x0, combination)
    implied_bound: float   # lower bound on margin(x0, y) from the shape inequality
    direct_margin: float   # margin(x0, y) evaluated directly, as a cross-check
    in_D: bool = True

    def to_record(self) -> dict:
        return _jsonable({"y": self.y, "lambda": self.lam, "combination": self.combination, "margin": self.margin,
                          "implied_bound": self.implied_bound, "direct_margin": self.direct_margin,
                          "in_D": self.in_D})


@dataclass
class ExtensionCertificate:
    z0: Optional[np.ndarray]
    z0_margin: float = float("nan")
    checks: list = field(default_factory=list)
    note: str = ""

    def to_record(self) -> dict:
        return _jsonable({"z0": self.z0, "z0_margin": self.z0_margin, "note": self.note,
                          "checks": [c.to_record() for c in self.checks]})


def shell_parameter(z0: np.ndarray, y: np.ndarray, r1: float) -> float:
    """mu in (0, 1] with |z0 + mu (y - z0)| = r1, assuming |z0| < r1 <= |y|."""
    d = y - z0
    a, b, c = float(d @ d), float(2 * z0 @ d), float(z0 @ z0 - r1 * r1)
    if a == 0.0:
        return 1.0
    return float((-b + np.sqrt(b * b - 4 * a * c)) / (2 * a))


def recheck_line(p: EquilibriumProblem, x0, z0, line: CertificateLine) -> tuple[float, float]:
    """Recompute (combination error, margin error) of a certificate line from (y, lam, z0)."""
    comb = line.lam * as_point(z0) + (1.0 - line.lam) * line.y
    m = float(margin_matrix(p, as_point(x0)[None, :], comb[None, :])[0, 0])
    return float(np.max(np.abs(comb - line.combination))), abs(m - line.margin)


def _outer_probes(K, r1: float, res: float, budget: int, seed: int) -> np.ndarray:
    from .geometry import make_grid

    outer = make_grid(Truncation(K, 3.0 * r1), res)
    pts = [q for q in outer.points if np.linalg.norm(q) > r1 + 1e-12]
    if isinstance(K, ConeSet) and budget > 0:
        rng = np.random.default_rng([seed, 7])
        dirs = K.sample(rng, budget, scale=r1)
        for d in dirs:
            nd = np.linalg.norm(d)
            if nd > 1e-12:
                # a recession probe far out along a sampled direction
                q = d / nd * (3.0 + 5.0 * rng.random()) * r1
                if K.contains(q):
                    pts.append(q)
    if not pts:
        return np.zeros((0, K.dim))
    P = np.array(pts)
    norms = np.linalg.norm(P, axis=1)
    angles = np.round(P / norms[:, None], 12)
    order = np.lexsort((norms,) + tuple(angles[:, k] for k in reversed(range(P.shape[1]))))
    return P[order]  # canonical: direction first, then radius


def _pick_z0(p: EquilibriumProblem, spec: CoercivitySpec, x0: np.ndarray, grids, cfg) -> tuple[Optional[np.ndarray], str]:
    if spec.mode in (Mode.ZERO_WITNESS, Mode.LEQ_WITNESS, Mode.SCALAR_ZERO_WITNESS):
        if spec.y0 is not None:
            return spec.y0, "witness from the coercivity data"
        pts = grids.grid.points
        cand = pts[grids.d_mask & (np.linalg.norm(pts, axis=1) < spec.r)]
        if len(cand) == 0:
            return None, "no D-grid point inside radius r"
        lo, hi = p.F.endpoints(x0[None, :], cand)
        m = _inner_margin(spec.mode, lo[0], hi[0])
        return cand[int(np.argmax(m))], "searched on the D-grid"
    if np.linalg.norm(x0) < spec.r1 - 1e-12:
        return x0, "x0 lies inside the truncation"
    if spec.y0 is not None:
        return spec.y0, "witness from the coercivity data"
    pts = grids.grid.points
    cand = pts[np.linalg.norm(pts, axis=1) < np.linalg.norm(x0)]
    lo, hi = p.F.endpoints(x0[None, :], cand)
    m = np.asarray(margin(predicate_of(p.kind), lo[0], hi[0]))
    ok = np.flatnonzero(m <= cfg.tol)
    return (cand[int(ok[0])], "smaller-norm witness searched on the grid") if ok.size else (None, "no smaller-norm witness")


def solve_noncompact(p: EquilibriumProblem, spec: CoercivitySpec, k_res: float = 0.25, d_res: Optional[float] = None,
                     tol: Optional[float] = None, cfg: Optional[SolverConfig] = None, probe_budget: int = 64,
                     validate: bool = True) -> tuple[SolveReport, ExtensionCertificate]:
    cfg = cfg or SolverConfig()
    tol = cfg.tol if tol is None else tol
    if is_bounded(p.K):
        return solve_compact(p, k_res, d_res, tol, cfg, validate), ExtensionCertificate(None, note="K is bounded")

    K0 = Truncation(p.K, spec.r1)
    sub = EquilibriumProblem(K0, dense_sets.restrict(p.D, K0), p.F, p.kind, p.name)
    grids = build_grids(sub, k_res, d_res, cfg)
    report = solve_compact(sub, k_res, d_res, tol, cfg, validate, grids=grids)
    report.grids["truncation_radius"] = spec.r1
    if not report.found:
        return report, ExtensionCertificate(None, note="no solution on the truncation")

    x0 = report.x0
    z0, how = _pick_z0(sub, spec, x0, grids, cfg)
    cert = ExtensionCertificate(z0, note=how)
    if z0 is None:
        report.status, report.extension_witness = "extension_failed", None
        return report, cert
    lo, hi = p.F.endpoints(x0[None, :], z0[None, :])
    cert.z0_margin = float(np.asarray(margin(predicate_of(p.kind), lo, hi))[0, 0])
    if spec.mode in INNER_PREDICATE:
        wm = float(_inner_margin(spec.mode, lo, hi)[0, 0])
        if wm < -tol:
            cert.note = f"{how}; {INNER_PREDICATE[spec.mode]} fails at (x0, z0) with margin {wm}"
            report.status, report.extension_witness = "extension_failed", z0
            return report, cert

    probes = _outer_probes(p.K, spec.r1, k_res, probe_budget, cfg.seed)
    worst = None
    for y in probes:
        lam = 1.0 - shell_parameter(z0, y, spec.r1)
        comb = lam * z0 + (1.0 - lam) * y
        in_d = p.D.contains(comb)
        if not in_d:
            # move toward z0 until the combination is a D-member; stays inside the truncation
            for j in range(1, 64):
                lam_j = 1.0 - (1.0 - lam) * (1.0 - j / 64.0)
                c = lam_j * z0 + (1.0 - lam_j) * y
                if p.D.contains(c):
                    lam, comb, in_d = lam_j, c, True
                    break
        pair = margin_matrix(p, x0[None, :], np.vstack([comb, y]))[0]
        bound = (float(pair[0]) - lam * cert.z0_margin) / (1.0 - lam)
        line = CertificateLine(y, lam, comb, float(pair[0]), bound, float(pair[1]), in_d)
        cert.checks.append(line)
        if bound < -tol and worst is None:
            worst = y
    report.extension_checked = True
    if worst is not None:
        report.status, report.extension_witness = "extension_failed", worst
    return report, cert
