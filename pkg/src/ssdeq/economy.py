"""Excess-demand economies on the price simplex and the equilibrium-price search.

An economy is a map C from prices x in the simplex M^n to polytopes of excess
demand. The search wraps it as the bifunction F(x, y) = (-inf, sigma(C(x), y)]
with sigma the support function, solves the weak problem "F(x0, y) meets
[0, inf) for every y", and extracts an excess demand z in C(x0) with z >= 0.
Polytope values make C(x0) - R^n_+ closed automatically.

Only upper hemicontinuity on D is checked, not the classical closed-graph
condition, so economies that fail the classical hypotheses can still pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import dense_sets
from .config import DEFAULTS
from .geometry import SimplexM, as_point, as_points, hull_membership, linprog_eq, support_function
from .intervals import Status, ValidationVerdict, _jsonable, check_semicontinuity, lower_ray
from .solvers import EquilibriumProblem, Kind, SolveReport, SolverConfig, build_grids, solve_compact


class EconomyError(ValueError):
    pass


@dataclass(eq=False)
class ExcessDemand:
    n: int
    values: Callable  # x -> (k, n) array of polytope vertices
    label: str = "economy"

    def vertices(self, x) -> np.ndarray:
        V = np.asarray(self.values(as_point(x)), dtype=float)
        V = V.reshape(-1, self.n) if V.size else V.reshape(0, self.n)
        if len(V) == 0:
            raise EconomyError(f"{self.label} returned no vertices at {x}")
        if not np.all(np.isfinite(V)):
            raise EconomyError(f"{self.label} returned non-finite vertices at {x}")
        return V


def sigma(C: ExcessDemand, x, y) -> float:
    return support_function(C.vertices(x), y)


def sigma_matrix(C: ExcessDemand, X, Y) -> np.ndarray:
    X, Y = as_points(X), as_points(Y)
    return np.array([(C.vertices(x) @ Y.T).max(axis=0) for x in X]).reshape(len(X), len(Y))


def as_bifunction(C: ExcessDemand):
    return lower_ray(lambda x, y: sigma(C, x, y), lambda X, Y: sigma_matrix(C, X, Y), f"sigma[{C.label}]")


# ---------------------------------------------------------------------------
# generators


def skew_linear(A=((0.0, 1.0), (-1.0, 0.0))) -> ExcessDemand:
    """C(x) = {Ax}; Walras' law holds with equality when A is skew-symmetric."""
    A = np.asarray(A, dtype=float)
    return ExcessDemand(A.shape[0], lambda x: (A @ x)[None, :], f"skew-linear{A.tolist()}")


def constant(c) -> ExcessDemand:
    c = as_point(c)
    return ExcessDemand(len(c), lambda x: c[None, :], f"constant{c.tolist()}")


def constant_polytope(V) -> ExcessDemand:
    V = as_points(V)
    return ExcessDemand(V.shape[1], lambda x: V, f"polytope({len(V)} vertices)")


def vertex_jump(threshold: float = 0.5) -> ExcessDemand:
    """Two goods; the value grows from {0} to [0, (1, 1)] once x_1 passes the threshold.

    The value at the threshold is the small one, so sigma(C(.), y) is not upper
    semicontinuous there for y with y_1 + y_2 > 0.
    """

    def values(x):
        if x[0] > threshold:
            return np.array([[0.0, 0.0], [1.0, 1.0]])
        return np.zeros((1, 2))

    return ExcessDemand(2, values, f"vertex-jump@{threshold}")


def dense_walras(A=((0.0, 1.0), (-1.0, 0.0)), q: int = 8, delta: float = 1.0) -> tuple[ExcessDemand, dense_sets.DenseSubset]:
    """Walras' law on the rational grid of denominator <= q only.

    C(x) = {Ax - p(x) x} with p(x) = delta * sum_i prod_{b <= q} |sin(pi b x_i)|,
    which vanishes exactly when every coordinate is a fraction with denominator
    <= q. Off that set sigma(C(x), x) = -p(x) |x|^2 < 0.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    b = np.arange(1, q + 1, dtype=float)

    def p(x):
        return delta * float(np.sum(np.prod(np.abs(np.sin(np.pi * np.outer(x, b))), axis=1)))

    def values(x):
        return (A @ x - p(x) * x)[None, :]

    C = ExcessDemand(n, values, f"dense-walras(q={q})")
    return C, dense_sets.rational_grid(SimplexM(n), q)


def violating(n: int = 2) -> ExcessDemand:
    """C(x) = {-x}: sigma(C(x), x) = -|x|^2 < 0 everywhere on the simplex."""
    return ExcessDemand(n, lambda x: (-x)[None, :], "violating(-x)")


# ---------------------------------------------------------------------------
# hypothesis checks


def check_walras_on_D(C: ExcessDemand, D, D_grid, tol: Optional[float] = None) -> ValidationVerdict:
    tol = DEFAULTS.certificate if tol is None else tol
    pts = np.array([x for x in D_grid.points if D.contains(x)])
    if len(pts) == 0:
        return ValidationVerdict("walras-on-D", Status.INCONCLUSIVE, None, "no D-grid point", {})
    vals = np.array([sigma(C, x, x) for x in pts])
    stats = {"points": len(pts), "min": float(vals.min()), "max_abs": float(np.abs(vals).max())}
    bad = np.flatnonzero(vals < -tol)
    if bad.size:
        i = int(bad[0])
        return ValidationVerdict("walras-on-D", Status.FAIL, {"x": pts[i], "sigma": float(vals[i])},
                                 "sigma(C(x), x) < 0", stats)
    return ValidationVerdict("walras-on-D", Status.PASS, None, "", stats)


def check_upper_hemi_on_D(C: ExcessDemand, D_grid, M_grid, radius: Optional[float] = None,
                          tol: Optional[float] = None, lipschitz: Optional[float] = None) -> ValidationVerdict:
    """x -> sigma(C(x), y) upper semicontinuous on the simplex grid, for each y on the D-grid."""
    radius = 1.5 * M_grid.resolution if radius is None else radius
    S = sigma_matrix(C, M_grid.points, D_grid.points)
    for j, y in enumerate(D_grid.points):
        v = check_semicontinuity(M_grid.points, S[:, j], S[:, j], "usc_real", radius, tol, lipschitz,
                                 condition="upper-hemicontinuity-on-D")
        if v.status is Status.FAIL:
            v.witness["y"] = y
            return v
    return ValidationVerdict("upper-hemicontinuity-on-D", Status.PASS, None, "", {"directions": len(D_grid)})


# ---------------------------------------------------------------------------
# solving


@dataclass(eq=False)
class DgnReport:
    status: str
    x0: Optional[np.ndarray]
    sigma_residual: float
    z: Optional[np.ndarray] = None
    z_negativity: float = float("nan")
    z_in_hull: Optional[bool] = None
    walras: Optional[ValidationVerdict] = None
    upper_hemi: Optional[ValidationVerdict] = None
    solve: Optional[SolveReport] = None
    note: str = ""

    @property
    def found(self) -> bool:
        return self.status == "found"

    def to_record(self) -> dict:
        rec = {"status": self.status, "x0": self.x0, "sigma_residual": self.sigma_residual, "z": self.z,
               "z_negativity": self.z_negativity, "z_in_hull": self.z_in_hull, "note": self.note,
               "walras": self.walras.to_record() if self.walras else None,
               "upper_hemi": self.upper_hemi.to_record() if self.upper_hemi else None,
               "solve": self.solve.to_record() if self.solve else None}
        return _jsonable(rec)


def extract_nonnegative(V: np.ndarray, tol: float = 1e-9):
    """Point z in co(V) closest to R^n_+ in total shortfall: min sum s, z + s >= 0.

    Variables: weights w (k), slacks s (n), surplus u (n) with V^T w + s - u = 0.
    Returns (z, s) or None when the LP fails.
    """
    V = as_points(V)
    k, n = V.shape
    A = np.zeros((n + 1, k + 2 * n))
    A[:n, :k] = V.T
    A[:n, k:k + n] = np.eye(n)
    A[:n, k + n:] = -np.eye(n)
    A[n, :k] = 1.0
    b = np.zeros(n + 1)
    b[n] = 1.0
    c = np.zeros(k + 2 * n)
    c[k:k + n] = 1.0
    res = linprog_eq(c, A, b, tol=min(tol, 1e-10))
    if res.status != "optimal":
        return None
    w = np.clip(res.x[:k], 0.0, None)
    w /= w.sum()
    return w @ V, res.x[k:k + n]


def solve_dgn(C: ExcessDemand, D: Optional[dense_sets.DenseSubset] = None, M_res: float = 0.05,
              tol: Optional[float] = None, cfg: Optional[SolverConfig] = None, validate: bool = True) -> DgnReport:
    cfg = cfg or SolverConfig()
    tol = cfg.tol if tol is None else tol
    M = SimplexM(C.n)
    D = D or dense_sets.full(M)
    p = EquilibriumProblem(M, D, as_bifunction(C), Kind.WEAK_PLUS, C.label)
    grids = build_grids(p, M_res, cfg=cfg)
    rep = solve_compact(p, M_res, tol=tol, cfg=cfg, validate=validate, grids=grids)
    walras = check_walras_on_D(C, D, grids.d_grid, cfg.cert_tol) if validate else None
    hemi = check_upper_hemi_on_D(C, grids.d_grid, grids.grid, tol=cfg.cert_tol, lipschitz=cfg.lipschitz) \
        if validate else None
    out = DgnReport(rep.status, rep.x0, rep.residual, walras=walras, upper_hemi=hemi, solve=rep)
    if not rep.found:
        out.note = "no equilibrium price on the grid"
        return out
    V = C.vertices(rep.x0)
    got = extract_nonnegative(V, cfg.cert_tol)
    if got is None:
        out.status, out.note = "extraction_failed", "extraction LP infeasible; the grid is probably too coarse"
        return out
    z, s = got
    out.z = z
    out.z_negativity = 0.0 - float(s.max()) + 0.0
    out.z_in_hull = hull_membership(z, V, 1e-9)
    return out
