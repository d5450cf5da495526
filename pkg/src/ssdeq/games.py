"""Non-cooperative n-person games and equilibria through the Nikaido-Isoda function.

A multistrategy is a flat vector concatenating the players' blocks. With
losses f^i the Nikaido-Isoda function is

    phi(x, y) = sum_i f^i(x) - f^i(y^i, x^-i),

and x0 is an equilibrium exactly when phi(x0, y) <= 0 for every y. Because
the i-th term depends on y only through y^i, max_y phi(x, y) splits into one
best-response problem per player; the solver uses this, the test oracle does not.
"""
from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import dense_sets
from .config import DEFAULTS
from .geometry import Grid, GridTooFine, ProductSet, SimplexM, as_point, make_grid
from .intervals import Status, ValidationVerdict, _jsonable, check_convex_in_y, check_semicontinuity, \
    scalar_bifunction
from .solvers import EquilibriumProblem, Kind, SolverConfig, validate_hypotheses


@dataclass(eq=False)
class NPersonGame:
    strategy_sets: list            # per player: SimplexM or box Polytope
    losses: list                   # per player: f^i(x_flat) -> float
    dense_subsets: Optional[list] = None
    own_linear: Optional[Callable] = None  # (i, x) -> c with f^i(y^i, x^-i) = c . y^i, when losses are multilinear
    label: str = "game"

    def __post_init__(self):
        if len(self.strategy_sets) < 1 or len(self.losses) != len(self.strategy_sets):
            raise ValueError("need one loss per strategy set")
        if self.dense_subsets is None:
            self.dense_subsets = [dense_sets.full(E) for E in self.strategy_sets]
        self.E = ProductSet(tuple(self.strategy_sets))

    @property
    def n(self) -> int:
        return len(self.strategy_sets)

    def split(self, x) -> list[np.ndarray]:
        return self.E.split(as_point(x))

    def splice(self, x, i: int, yi) -> np.ndarray:
        """The multistrategy (y^i, x^-i)."""
        blocks = self.split(x)
        blocks[i] = as_point(yi)
        return np.concatenate(blocks)

    def loss(self, i: int, x) -> float:
        return float(self.losses[i](as_point(x)))

    def own_losses(self, i: int, x, candidates: np.ndarray) -> np.ndarray:
        """f^i(c, x^-i) for each candidate own strategy c."""
        if self.own_linear is not None:
            return np.asarray(candidates, dtype=float) @ self.own_linear(i, as_point(x))
        return np.array([self.loss(i, self.splice(x, i, c)) for c in candidates])

    def in_D(self, x) -> bool:
        return all(D.contains(b) for D, b in zip(self.dense_subsets, self.split(x)))


def matrix_game(tensors: Sequence, label: str = "matrix game") -> NPersonGame:
    """Mixed extension of a finite game given one loss tensor per player.

    tensors[i][a_1, ..., a_n] is player i's loss for the pure profile a.
    """
    T = [np.asarray(t, dtype=float) for t in tensors]
    shape = T[0].shape
    n = len(shape)
    if len(T) != n or any(t.shape != shape for t in T):
        raise ValueError("need n loss tensors of a common n-dimensional shape")
    sets = [SimplexM(k) for k in shape]
    offsets = np.cumsum([0] + list(shape))
    letters = string.ascii_lowercase[:n]

    def blocks(x):
        return [x[offsets[j]:offsets[j + 1]] for j in range(n)]

    def make_loss(i):
        spec = letters + "," + ",".join(letters) + "->"
        return lambda x: float(np.einsum(spec, T[i], *blocks(x)))

    def own_linear(i, x):
        b = blocks(x)
        others = [letters[j] for j in range(n) if j != i]
        spec = letters + "," + ",".join(others) + "->" + letters[i]
        return np.einsum(spec, T[i], *[b[j] for j in range(n) if j != i])

    return NPersonGame(sets, [make_loss(i) for i in range(n)], own_linear=own_linear, label=label)


def matching_pennies() -> NPersonGame:
    # player 1 wants to match, player 2 to mismatch; losses are negated payoffs
    L1 = np.array([[-1.0, 1.0], [1.0, -1.0]])
    return matrix_game([L1, -L1], "matching pennies")


PD_PAYOFFS = ((3.0, 3.0), (0.0, 5.0), (5.0, 0.0), (1.0, 1.0))  # (C,C), (C,D), (D,C), (D,D)


def prisoners_dilemma(payoffs=PD_PAYOFFS) -> NPersonGame:
    """Action 0 cooperates, action 1 defects; losses are negated payoffs."""
    P = np.asarray(payoffs, dtype=float).reshape(2, 2, 2)
    return matrix_game([-P[..., 0], -P[..., 1]], "prisoner's dilemma")


def singleton_game(n: int = 2) -> NPersonGame:
    return matrix_game([np.zeros((1,) * n) for _ in range(n)], "singleton game")


def pure(game: NPersonGame, actions: Sequence[int]) -> np.ndarray:
    return np.concatenate([np.eye(E.n)[a] for E, a in zip(game.strategy_sets, actions)])


def uniform(game: NPersonGame) -> np.ndarray:
    return np.concatenate([E.barycenter() for E in game.strategy_sets])


def phi(game: NPersonGame, x, y) -> float:
    x = as_point(x)
    ys = game.split(y)
    return float(sum(game.loss(i, x) - game.loss(i, game.splice(x, i, ys[i])) for i in range(game.n)))


def phi_bifunction(game: NPersonGame):
    return scalar_bifunction(lambda x, y: phi(game, x, y), name=f"nikaido-isoda[{game.label}]")


# ---------------------------------------------------------------------------
# grids and equilibrium tests


def player_grids(game: NPersonGame, res) -> list[Grid]:
    res_list = [res] * game.n if np.isscalar(res) else list(res)
    if len(res_list) != game.n:
        raise ValueError("one resolution per player")
    return [make_grid(E, r) for E, r in zip(game.strategy_sets, res_list)]


def best_responses(game: NPersonGame, x, grids: list[Grid]) -> list[tuple[int, float, float]]:
    """Per player: (grid index of the first best response, its loss, current loss)."""
    out = []
    for i, G in enumerate(grids):
        vals = game.own_losses(i, x, G.points)
        j = int(np.flatnonzero(vals <= vals.min() + 1e-15)[0])
        out.append((j, float(vals[j]), game.loss(i, x)))
    return out


def regret(game: NPersonGame, x, grids: list[Grid]) -> tuple[float, np.ndarray]:
    """V(x) = max over the product grid of phi(x, y), with a maximising y."""
    br = best_responses(game, x, grids)
    V = float(sum(cur - best for _, best, cur in br))
    y = np.concatenate([G.points[j] for (j, _, _), G in zip(br, grids)])
    return V, y


def is_equilibrium(game: NPersonGame, x0, grids: list[Grid], tol: float = 1e-9) -> tuple[bool, float, np.ndarray]:
    V, y = regret(game, x0, grids)
    return V <= tol, V, y


# ---------------------------------------------------------------------------
# hypotheses


def _strided(points: np.ndarray, budget: int) -> np.ndarray:
    if len(points) <= budget:
        return points
    return points[np.unique(np.linspace(0, len(points) - 1, budget).round().astype(int))]


def validate_nash_hypotheses(game: NPersonGame, res=0.1, tol: Optional[float] = None, seed: int = 0,
                             anchors: int = 6, with_phi: bool = True) -> dict:
    """Per-player checks plus the induced phi checked as a scalar <= problem on D = prod D^i.

    The others' dense subset is read as the product of the other players' D^j.
    """
    tol = DEFAULTS.certificate if tol is None else tol
    grids = player_grids(game, res)
    radius = 1.5 * max(G.resolution for G in grids)
    L = DEFAULTS.lipschitz
    prod_pts = np.array([np.concatenate(c) for c in itertools.product(*(G.points for G in grids))])
    out: dict = {}
    for i in range(game.n):
        Gi = grids[i]
        rest = [grids[j] for j in range(game.n) if j != i]
        vals = np.array([game.loss(i, x) for x in prod_pts])
        # total loss lsc on E
        out[(i, "loss_lsc")] = check_semicontinuity(prod_pts, vals, vals, "lsc_real", radius, tol, L,
                                                    condition=f"player {i}: loss lsc on E")
        # others -> f^i(y^i, x^-i) usc, for fixed own strategy
        others = np.array([np.concatenate(c) for c in itertools.product(*(G.points for G in rest))]) \
            if rest else np.zeros((1, 0))
        verdict = ValidationVerdict(f"player {i}: usc in others", Status.PASS, None, "", {})
        for yi in _strided(Gi.points, anchors):
            fv = np.array([game.loss(i, _assemble(game, i, yi, o)) for o in others])
            v = check_semicontinuity(others, fv, fv, "usc_real", radius, tol, L,
                                     condition=f"player {i}: usc in others") if len(others) > 1 else verdict
            if v.status is Status.FAIL:
                v.witness["own"] = yi
                verdict = v
                break
        out[(i, "others_usc")] = verdict
        # own strategy -> loss usc off D^i, and convex on D^i
        Di = game.dense_subsets[i]
        off = np.flatnonzero([not Di.contains(p) for p in Gi.points])
        verdict = ValidationVerdict(f"player {i}: usc in own off D", Status.PASS, None,
                                    "" if off.size else "no grid point outside D^i; vacuous", {})
        convex = ValidationVerdict(f"player {i}: convex in own on D", Status.PASS, None, "", {})
        for r, o in enumerate(_strided(others, anchors)):
            fv = np.array([game.loss(i, _assemble(game, i, c, o)) for c in Gi.points])
            if off.size:
                v = check_semicontinuity(Gi.points, fv, fv, "usc_real", radius, tol, L, centers=off)
                if v.status is Status.FAIL and verdict.passed:
                    v.witness["others"] = o
                    verdict = v
            own = scalar_bifunction(lambda oo, c, i=i: game.loss(i, _assemble(game, i, c, oo)))
            v = check_convex_in_y(own, o if o.size else np.zeros(1), Di, 60, seed + r, tol)
            if v.status is Status.FAIL and convex.passed:
                convex = v
        out[(i, "own_usc_off_D")] = verdict
        out[(i, "own_convex_on_D")] = convex
    if with_phi:
        D = _product_subset(game)
        p = EquilibriumProblem(game.E, D, phi_bifunction(game), Kind.SCALAR_LEQ, game.label)
        cfg = SolverConfig(center_budget=16, shape_points=4, shape_trials=40, seed=seed, d_samples=0)
        for k, v in validate_hypotheses(p, cfg, k_res=max(G.resolution for G in grids)).items():
            out[("phi", k)] = v
    return out


def _assemble(game: NPersonGame, i: int, own, others_flat) -> np.ndarray:
    dims = [E.dim for E in game.strategy_sets]
    blocks, pos = [], 0
    for j, d in enumerate(dims):
        if j == i:
            blocks.append(as_point(own))
        else:
            blocks.append(others_flat[pos:pos + d])
            pos += d
    return np.concatenate(blocks)


def _product_subset(game: NPersonGame) -> dense_sets.DenseSubset:
    subs = game.dense_subsets
    if all(D.is_full for D in subs):
        return dense_sets.full(game.E)

    def draw(rng, count):
        return np.hstack([D.sample(rng, count) for D in subs])

    return dense_sets.DenseSubset(game.E, game.in_D, draw, "product of players' subsets", "product")


# ---------------------------------------------------------------------------
# solving


@dataclass
class NashReport:
    x: np.ndarray
    blocks: list
    V: float
    certified: bool
    worst_y: np.ndarray
    rounds: int
    restarts: int
    history: list = field(default_factory=list, repr=False)

    def to_record(self) -> dict:
        return _jsonable({"x": self.x, "V": self.V, "certified": self.certified, "worst_y": self.worst_y,
                          "rounds": self.rounds, "restarts": self.restarts})


def exhaustive_regret(game: NPersonGame, grids: list[Grid], cap: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """All product-grid profiles (lexicographic) and their V values."""
    cap = DEFAULTS.grid_cap if cap is None else cap
    size = int(np.prod([len(G) for G in grids]))
    if size > cap:
        raise GridTooFine(f"product grid holds {size} profiles (cap {cap})")
    profiles = np.array([np.concatenate(c) for c in itertools.product(*(G.points for G in grids))])
    return profiles, np.array([regret(game, x, grids)[0] for x in profiles])


def solve_nash(game: NPersonGame, res=0.05, tol: float = 1e-6, max_rounds: int = 200,
               start: Optional[Sequence[int]] = None) -> NashReport:
    """Round-robin grid best response; on a revisited profile restart from the V-argmin of the product grid."""
    grids = player_grids(game, res)
    idx = list(start) if start is not None else [0] * game.n

    def profile(ix):
        return np.concatenate([G.points[j] for G, j in zip(grids, ix)])

    seen = {tuple(idx)}
    history = []
    restarts = 0
    best = (np.inf, tuple(idx))
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        for i in range(game.n):
            x = profile(idx)
            vals = game.own_losses(i, x, grids[i].points)
            # stay put when already a best response; otherwise take the first minimiser
            if vals[idx[i]] > vals.min() + 1e-15:
                idx[i] = int(np.flatnonzero(vals <= vals.min() + 1e-15)[0])
        V, _ = regret(game, profile(idx), grids)
        history.append((tuple(idx), V))
        if V < best[0]:
            best = (V, tuple(idx))
        if V <= tol:
            break
        key = tuple(idx)
        if key in seen:
            if restarts:
                break  # already restarted once: the exhaustive argmin is the best the grid offers
            restarts += 1
            profiles, Vs = exhaustive_regret(game, grids)
            k = int(np.flatnonzero(Vs <= Vs.min() + 1e-15)[0])
            idx = [G.index_of(b) for G, b in zip(grids, game.split(profiles[k]))]
            seen = {tuple(idx)}
            V = float(Vs[k])
            history.append((tuple(idx), V))
            if V < best[0]:
                best = (V, tuple(idx))
            if V <= tol:
                break
            continue
        seen.add(key)
    x = profile(best[1])
    ok, V, y = is_equilibrium(game, x, grids, tol)
    return NashReport(x, game.split(x), V, ok, y, rounds, restarts, history)
