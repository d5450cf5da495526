"""Grid solvers for equilibrium problems on compact convex domains.

The search is constructive: build a grid of K and a grid of D, score every
candidate x by its worst-case signed margin over the D-grid, keep the best,
then re-check that candidate against every grid point of K (the extension
from D to K). A negative best margin yields ``no_solution_on_grid`` together
with per-x refuting points; nothing here proves existence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import dense_sets
from .config import DEFAULT_SEED, DEFAULTS, Tolerances
from .geometry import Ball, Grid, make_grid, merge_into_grid
from .intervals import (
    Bifunction,
    Status,
    ValidationVerdict,
    _jsonable,
    check_concave_in_y,
    check_convex_in_y,
    check_diagonal,
    check_semicontinuity,
    inner_product_minus_one,
    lower_ray,
    margin,
    scalar_bifunction,
    upper_ray,
)


class Kind(str, Enum):
    STRONG_GEQ = "strong_geq"    # F(x0, y) >= 0
    STRONG_LEQ = "strong_leq"    # F(x0, y) <= 0
    WEAK_PLUS = "weak_plus"      # F(x0, y) meets [0, inf)
    WEAK_MINUS = "weak_minus"    # F(x0, y) meets (-inf, 0]
    SCALAR_GEQ = "scalar_geq"    # phi(x0, y) >= 0
    SCALAR_LEQ = "scalar_leq"    # phi(x0, y) <= 0


# predicate, semicontinuity mode (x and y), shape in y
KIND_TABLE = {
    Kind.STRONG_GEQ: ("geq_zero", "lsc", "convex"),
    Kind.STRONG_LEQ: ("leq_zero", "lsc", "convex"),
    Kind.WEAK_PLUS: ("meets_plus", "usc", "concave"),
    Kind.WEAK_MINUS: ("meets_minus", "usc", "concave"),
    Kind.SCALAR_GEQ: ("geq_zero", "usc_real", "convex"),
    Kind.SCALAR_LEQ: ("leq_zero", "lsc_real", "concave"),
}


def predicate_of(kind: Kind) -> str:
    return KIND_TABLE[Kind(kind)][0]


class ConfigurationError(ValueError):
    pass


@dataclass(eq=False)
class EquilibriumProblem:
    K: object
    D: dense_sets.DenseSubset
    F: Bifunction
    kind: Kind
    name: str = ""

    def __post_init__(self):
        self.kind = Kind(self.kind)
        scalar_kind = self.kind in (Kind.SCALAR_GEQ, Kind.SCALAR_LEQ)
        if scalar_kind and not self.F.scalar:
            raise ConfigurationError(f"{self.kind.value} needs a single-valued bifunction")
        if self.D.dim != self.K.dim:
            raise ConfigurationError("D and K live in different dimensions")


@dataclass
class SolverConfig:
    tol: float = DEFAULTS.solve
    cert_tol: float = DEFAULTS.certificate
    seed: int = DEFAULT_SEED
    lipschitz: float = DEFAULTS.lipschitz
    radius_factor: float = 1.5
    shape_trials: int = 100
    shape_points: int = 8
    center_budget: int = DEFAULTS.center_budget
    d_samples: int = DEFAULTS.d_samples
    workers: int = DEFAULTS.workers

    @classmethod
    def from_tolerances(cls, t: Tolerances, **kw) -> "SolverConfig":
        return cls(tol=t.solve, cert_tol=t.certificate, lipschitz=t.lipschitz, center_budget=t.center_budget,
                   d_samples=t.d_samples, workers=t.workers, **kw)


@dataclass(eq=False)
class ProblemGrids:
    grid: Grid           # K-grid merged with sampled D points, canonical order
    d_mask: np.ndarray   # which grid points are D-members
    k_res: float
    d_res: float

    @property
    def d_points(self) -> np.ndarray:
        return self.grid.points[self.d_mask]

    @property
    def d_grid(self) -> Grid:
        return Grid(self.d_points, self.d_res, "D-members of the K-grid")

    def summary(self) -> dict:
        return {"k_res": self.k_res, "d_res": self.d_res, "k_points": int(len(self.grid)),
                "d_points": int(self.d_mask.sum())}


def build_grids(p: EquilibriumProblem, k_res: float, d_res: Optional[float] = None,
                cfg: Optional[SolverConfig] = None) -> ProblemGrids:
    cfg = cfg or SolverConfig()
    d_res = k_res if d_res is None else d_res
    grid = make_grid(p.K, k_res)
    if d_res != k_res:
        finer = make_grid(p.K, d_res)
        grid = merge_into_grid(grid, [q for q in finer.points if p.D.contains(q)])
    if not p.D.is_full and cfg.d_samples > 0:
        rng = np.random.default_rng([cfg.seed, 1])
        grid = merge_into_grid(grid, p.D.sample(rng, cfg.d_samples))
    d_mask = np.array([p.D.contains(q) for q in grid.points], dtype=bool)
    if not d_mask.any():
        raise ConfigurationError(f"no grid point is a member of {p.D.label}")
    return ProblemGrids(grid, d_mask, k_res, d_res)


def margin_matrix(p: EquilibriumProblem, X, Y, workers: int = 1) -> np.ndarray:
    lo, hi = p.F.endpoints(X, Y, workers)
    return np.asarray(margin(predicate_of(p.kind), lo, hi), dtype=float)


# ---------------------------------------------------------------------------
# hypothesis validation


def _strided(indices: np.ndarray, budget: int) -> np.ndarray:
    if len(indices) <= budget:
        return indices
    picks = np.linspace(0, len(indices) - 1, budget).round().astype(int)
    return indices[np.unique(picks)]


def _combine(condition: str, verdicts: list[tuple[object, ValidationVerdict]], note: str = "") -> ValidationVerdict:
    tested = [v for _, v in verdicts]
    for anchor, v in verdicts:
        if v.status is Status.FAIL:
            w = dict(v.witness or {})
            w["anchor"] = anchor
            return ValidationVerdict(condition, Status.FAIL, w, v.detail, dict(v.stats, anchors=len(tested)))
    if tested and all(v.status is Status.INCONCLUSIVE for v in tested):
        return ValidationVerdict(condition, Status.INCONCLUSIVE, None, note or tested[0].detail,
                                 {"anchors": len(tested)})
    stats = dict(tested[0].stats) if tested else {}
    stats["anchors"] = len(tested)
    return ValidationVerdict(condition, Status.PASS, None, note, stats)


def validate_hypotheses(p: EquilibriumProblem, cfg: Optional[SolverConfig] = None, k_res: float = 0.25,
                        grids: Optional[ProblemGrids] = None) -> dict[str, ValidationVerdict]:
    """Sampled checks of the four hypotheses matching ``p.kind``.

    * ``x_semicontinuity``: x -> F(x, y) on the K-grid, for y on the D-grid;
    * ``y_semicontinuity_off_D``: y -> F(x, y) at K-grid points outside D only;
    * ``shape_in_y``: convexity (or concavity) of y -> F(x, y) on D for x in D;
    * ``diagonal``: the kind's predicate on F(x, x) over the D-grid.
    """
    cfg = cfg or SolverConfig()
    grids = grids or build_grids(p, k_res, cfg=cfg)
    pred, semi, shape = KIND_TABLE[p.kind]
    pts = grids.grid.points
    radius = cfg.radius_factor * grids.k_res
    d_idx = np.flatnonzero(grids.d_mask)
    out: dict[str, ValidationVerdict] = {}

    ys = _strided(d_idx, cfg.center_budget)
    lo, hi = p.F.endpoints(pts, pts[ys], cfg.workers)
    out["x_semicontinuity"] = _combine(f"{semi}-in-x", [
        (pts[j], check_semicontinuity(pts, lo[:, c], hi[:, c], semi, radius, cfg.cert_tol, cfg.lipschitz))
        for c, j in enumerate(ys)])

    off = np.flatnonzero(~grids.d_mask)
    if off.size == 0:
        out["y_semicontinuity_off_D"] = ValidationVerdict(f"{semi}-in-y", Status.PASS, None,
                                                          "K-grid has no points outside D; vacuous", {})
    else:
        xs = _strided(np.arange(len(pts)), cfg.center_budget)
        lo, hi = p.F.endpoints(pts[xs], pts, cfg.workers)
        out["y_semicontinuity_off_D"] = _combine(f"{semi}-in-y", [
            (pts[i], check_semicontinuity(pts, lo[r], hi[r], semi, radius, cfg.cert_tol, cfg.lipschitz,
                                          centers=off))
            for r, i in enumerate(xs)], note="checked at (K minus D)-grid points only")

    checker = check_convex_in_y if shape == "convex" else check_concave_in_y
    anchors = _strided(d_idx, cfg.shape_points)
    shape_v = _combine(f"{shape}-in-y", [
        (pts[i], checker(p.F, pts[i], p.D, cfg.shape_trials, cfg.seed + r, cfg.cert_tol))
        for r, i in enumerate(anchors)])
    if shape_v.status is Status.INCONCLUSIVE:
        # vacuous on D's samples; the same inclusion on all of K is stronger and implies it on D
        K_full = dense_sets.full(p.K)
        shape_v = _combine(f"{shape}-in-y", [
            (pts[i], checker(p.F, pts[i], K_full, cfg.shape_trials, cfg.seed + r, cfg.cert_tol))
            for r, i in enumerate(anchors)],
            note="no sampled combination stayed in D; established on K, which contains D")
    out["shape_in_y"] = shape_v
    out["diagonal"] = check_diagonal(p.F, grids.d_grid, pred, cfg.cert_tol)
    return out


# ---------------------------------------------------------------------------
# solving


@dataclass(eq=False)
class SolveReport:
    status: str  # "found" | "no_solution_on_grid" | "extension_failed"
    kind: Kind
    x0: Optional[np.ndarray]
    residual: float
    d_residual: float
    grids: dict
    extension_checked: bool = False
    extension_witness: Optional[np.ndarray] = None
    witness_map: Optional[list] = None  # [(x, y)] for no_solution_on_grid
    universal_witness: Optional[np.ndarray] = None
    universal_value: Optional[float] = None
    hypotheses: dict = field(default_factory=dict)
    grid: Optional[Grid] = field(default=None, repr=False)
    name: str = ""

    @property
    def found(self) -> bool:
        return self.status == "found"

    def to_record(self) -> dict:
        rec = {
            "status": self.status,
            "kind": self.kind.value,
            "x0": self.x0,
            "residual": self.residual,
            "d_residual": self.d_residual,
            "grids": self.grids,
            "extension_checked": self.extension_checked,
            "extension_witness": self.extension_witness,
            "universal_witness": self.universal_witness,
            "universal_value": self.universal_value,
            "hypotheses": {k: v.to_record() for k, v in self.hypotheses.items()},
        }
        if self.witness_map is not None:
            rec["witnesses"] = len(self.witness_map)
        return _jsonable(rec)


def _first_max(values: np.ndarray, slack: float = 1e-12) -> int:
    # grid order is lexicographic, so the first near-maximiser is the lexicographic tie-break
    return int(np.flatnonzero(values >= values.max() - slack)[0])


def solve_compact(p: EquilibriumProblem, k_res: float = 0.25, d_res: Optional[float] = None,
                  tol: Optional[float] = None, cfg: Optional[SolverConfig] = None, validate: bool = True,
                  grids: Optional[ProblemGrids] = None) -> SolveReport:
    cfg = cfg or SolverConfig()
    tol = cfg.tol if tol is None else tol
    grids = grids or build_grids(p, k_res, d_res, cfg)
    pts = grids.grid.points
    M = margin_matrix(p, pts, grids.d_points, cfg.workers)
    per_x = M.min(axis=1)
    i0 = _first_max(per_x)
    x0 = pts[i0]
    hyps = validate_hypotheses(p, cfg, grids=grids) if validate else {}
    common = dict(kind=p.kind, grids=grids.summary(), hypotheses=hyps, grid=grids.grid, name=p.name)

    if per_x[i0] >= -tol:
        # extension step: the conclusion quantifies over all of K, not just D
        full_row = margin_matrix(p, x0[None, :], pts, 1)[0]
        j = int(np.argmin(full_row))
        residual = float(full_row[j])
        if residual >= -tol:
            return SolveReport("found", x0=x0, residual=residual, d_residual=float(per_x[i0]),
                               extension_checked=True, **common)
        return SolveReport("extension_failed", x0=x0, residual=residual, d_residual=float(per_x[i0]),
                           extension_checked=True, extension_witness=pts[j], **common)

    # refutation over the whole K-grid: any y in K that violates x refutes it
    full = margin_matrix(p, pts, pts, cfg.workers)
    worst_case = full.max(axis=0)
    ju = int(np.flatnonzero(worst_case <= worst_case.min() + 1e-12)[0])
    witnesses = []
    for i in range(len(pts)):
        j = ju if full[i, ju] < -tol else int(np.argmin(full[i]))
        witnesses.append((pts[i], pts[j]))
    universal = pts[ju] if worst_case[ju] < -tol else None
    return SolveReport("no_solution_on_grid", x0=x0, residual=float(per_x[i0]), d_residual=float(per_x[i0]),
                       witness_map=witnesses, universal_witness=universal,
                       universal_value=float(worst_case[ju]), **common)


# ---------------------------------------------------------------------------
# the dense-but-not-self-segment-dense counterexample


def counterexample_problems(n: int = 3, D: str = "sphere") -> list[EquilibriumProblem]:
    """phi(x, y) = <x, y> - 1 on the unit ball, with its two interval forms."""

    def phi(x, y):
        return float(np.dot(x, y) - 1.0)

    K = Ball.unit(n)
    subset = dense_sets.sphere_in_ball(n) if D == "sphere" else dense_sets.full(K)
    return [
        EquilibriumProblem(K, subset, upper_ray(phi, inner_product_minus_one, "F1"), Kind.STRONG_GEQ, "F1"),
        EquilibriumProblem(K, subset, lower_ray(phi, inner_product_minus_one, "F2"), Kind.WEAK_PLUS, "F2"),
        EquilibriumProblem(K, subset, scalar_bifunction(phi, inner_product_minus_one, "phi"), Kind.SCALAR_GEQ,
                           "phi"),
    ]


def counterexample_suite(n: int = 3, res: float = 0.25, D: str = "sphere",
                         cfg: Optional[SolverConfig] = None) -> list[SolveReport]:
    return [solve_compact(p, res, cfg=cfg) for p in counterexample_problems(n, D)]
