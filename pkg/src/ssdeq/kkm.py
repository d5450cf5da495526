"""KKM maps on grids and the finite-intersection certificate.

For a bifunction F and a predicate P the map is

    G(y) = { x in K : P(F(x, y)) },   y in D,

stored per D-grid point as the sorted indices of K-grid points satisfying the
predicate. Ky Fan's lemma asks for one compact G(y); at desk scale every
G(y) is a finite set, so "at least one GSet" stands in for that hypothesis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import DEFAULT_SEED, pick
from .geometry import Grid
from .intervals import Bifunction, margin


@dataclass(eq=False)
class GSet:
    y: np.ndarray
    members: np.ndarray  # strictly increasing indices into the K-grid
    margins: Optional[np.ndarray] = field(default=None, repr=False)  # predicate margin of every K-grid x

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class KkmReport:
    covering_ok: Optional[bool] = None  # None: inconclusive
    covering_witness: Optional[dict] = None
    intersection_point: Optional[np.ndarray] = None
    intersection_index: Optional[int] = None
    intersection_residual: float = float("nan")
    emptied_by: Optional[np.ndarray] = None
    combinations_tested: int = 0

    def to_record(self) -> dict:
        from .intervals import _jsonable

        return _jsonable({
            "covering_ok": self.covering_ok,
            "covering_witness": self.covering_witness,
            "intersection_point": self.intersection_point,
            "intersection_residual": self.intersection_residual,
            "emptied_by": self.emptied_by,
            "combinations_tested": self.combinations_tested,
        })


def build_g_sets(F: Bifunction, predicate: str, K_grid: Grid, D_grid: Grid, tol: Optional[float] = None,
                 workers: Optional[int] = None) -> list[GSet]:
    if len(K_grid) == 0 or len(D_grid) == 0:
        raise ValueError("grids must be nonempty")
    tol = pick(tol, "certificate")
    lo, hi = F.endpoints(K_grid.points, D_grid.points, workers)
    M = np.asarray(margin(predicate, lo, hi), dtype=float)
    return [GSet(D_grid.points[j], np.flatnonzero(M[:, j] >= -tol), M[:, j].copy()) for j in range(len(D_grid))]


def check_kkm_covering(g_sets: list[GSet], K_grid: Grid, D, samples: int = 200, seed: int = DEFAULT_SEED,
                       max_k: int = 4) -> KkmReport:
    """Sample co{y_1..y_k} within D and test that it lies in the union of G(y_i).

    Each sampled combination is snapped to its nearest K-grid point.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    from scipy.spatial import cKDTree

    rng = np.random.default_rng(seed)
    pool = np.array([g.y for g in g_sets])
    tree = cKDTree(K_grid.points)
    member_sets = [set(g.members.tolist()) for g in g_sets]
    tested = 0
    for t in range(samples):
        k = 1 + int(rng.integers(min(max_k, len(g_sets))))
        chosen = np.sort(rng.choice(len(g_sets), size=k, replace=False))
        draw = None
        for _ in range(100):
            w = rng.dirichlet(np.ones(k)) if t % 2 else _small_weights(rng, k)
            comb = w @ pool[chosen]
            if D.contains(comb):
                draw = (w, comb)
                break
        if draw is None:
            continue
        w, comb = draw
        tested += 1
        _, nearest = tree.query(comb)
        nearest = int(nearest)
        if not any(nearest in member_sets[i] for i in chosen):
            return KkmReport(False, {"ys": pool[chosen], "weights": w, "combination": comb,
                                     "nearest_grid_point": K_grid.points[nearest]},
                             combinations_tested=tested)
    return KkmReport(True if tested else None, combinations_tested=tested)


def _small_weights(rng, k):
    if k == 1:
        return np.ones(1)
    parts = rng.integers(1, 5, size=k).astype(float)
    return parts / parts.sum()


def finite_intersection(g_sets: list[GSet], K_grid: Optional[Grid] = None) -> KkmReport:
    if not g_sets:
        raise ValueError("need at least one GSet")
    running = g_sets[0].members
    emptied = g_sets[0].y if running.size == 0 else None
    for g in g_sets[1:]:
        if running.size == 0:
            break
        running = np.intersect1d(running, g.members, assume_unique=True)
        if running.size == 0:
            emptied = g.y
    if running.size == 0:
        return KkmReport(intersection_point=None, emptied_by=emptied)
    first = int(running[0])  # indices follow the grid's lexicographic order
    residual = float("nan")
    if all(g.margins is not None for g in g_sets):
        residual = float(min(g.margins[first] for g in g_sets))
    point = K_grid.points[first] if K_grid is not None else None
    return KkmReport(intersection_point=point, intersection_index=first, intersection_residual=residual)


def kkm_certificate(F: Bifunction, predicate: str, K_grid: Grid, D_grid: Grid, D, samples: int = 200,
                    seed: int = DEFAULT_SEED, tol: Optional[float] = None) -> KkmReport:
    """Covering check plus finite intersection in one report."""
    g_sets = build_g_sets(F, predicate, K_grid, D_grid, tol)
    cover = check_kkm_covering(g_sets, K_grid, D, samples, seed)
    inter = finite_intersection(g_sets, K_grid)
    inter.covering_ok = cover.covering_ok
    inter.covering_witness = cover.covering_witness
    inter.combinations_tested = cover.combinations_tested
    return inter
