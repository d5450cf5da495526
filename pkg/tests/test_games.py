import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdeq import dense_sets as ds
from ssdeq import games as gm
from ssdeq.geometry import Polytope, SimplexM


def brute_force_loss(tensor, blocks):
    """Expected loss by summing over pure profiles, no einsum."""
    total = 0.0
    for profile in itertools.product(*(range(len(b)) for b in blocks)):
        p = 1.0
        for b, a in zip(blocks, profile):
            p *= b[a]
        total += p * tensor[profile]
    return total


def brute_force_phi(tensors, x_blocks, y_blocks):
    total = 0.0
    for i, T in enumerate(tensors):
        dev = list(x_blocks)
        dev[i] = y_blocks[i]
        total += brute_force_loss(T, x_blocks) - brute_force_loss(T, dev)
    return total


def test_phi_examples():
    mp = gm.matching_pennies()
    u = gm.uniform(mp)
    assert gm.phi(mp, u, u) == 0
    for y in ([1, 0, 0, 1], [0.3, 0.7, 0.9, 0.1]):
        assert gm.phi(mp, u, y) == pytest.approx(0.0, abs=1e-15)
    pd = gm.prisoners_dilemma()
    # each player gains 5 - 3 = 2 by defecting alone from (C, C)
    assert gm.phi(pd, gm.pure(pd, (0, 0)), gm.pure(pd, (1, 1))) == pytest.approx(4.0)


def test_is_equilibrium_examples():
    mp = gm.matching_pennies()
    grids = gm.player_grids(mp, 0.1)
    ok, V, _ = gm.is_equilibrium(mp, gm.uniform(mp), grids, 1e-9)
    assert ok and V == pytest.approx(0.0, abs=1e-12)
    ok, V, y = gm.is_equilibrium(mp, gm.pure(mp, (0, 0)), grids, 1e-9)
    # heads/heads: the matcher is content, the mismatcher moves from loss 1 to -1
    assert not ok and V == pytest.approx(2.0)
    assert np.allclose(y[2:], (0, 1))
    single = gm.singleton_game()
    ok, V, _ = gm.is_equilibrium(single, gm.uniform(single), gm.player_grids(single, 0.5))
    assert ok and V == 0


def test_matrix_game_shape_errors():
    with pytest.raises(ValueError):
        gm.matrix_game([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(ValueError):
        gm.player_grids(gm.matching_pennies(), [0.1])


def test_bilinear_games_pass_every_hypothesis():
    for game in (gm.matching_pennies(), gm.prisoners_dilemma()):
        out = gm.validate_nash_hypotheses(game, res=0.25)
        assert all(v.passed for v in out.values()), {k: v.status for k, v in out.items()}


def kinked_game():
    box = Polytope.from_box([0], [1])
    # player 0 has a concave kink at 1/2 in its own strategy
    f0 = lambda x: -abs(x[0] - 0.5) + 0.1 * x[1]
    f1 = lambda x: (x[1] - x[0]) ** 2
    return gm.NPersonGame([box, box], [f0, f1], label="kinked")


def test_kinked_loss_fails_own_convexity():
    out = gm.validate_nash_hypotheses(kinked_game(), res=0.1, with_phi=False)
    v = out[(0, "own_convex_on_D")]
    assert not v.passed and v.witness is not None
    assert out[(1, "own_convex_on_D")].passed


def test_singleton_game_is_vacuous():
    out = gm.validate_nash_hypotheses(gm.singleton_game(), res=0.5)
    assert all(v.passed for v in out.values())
    rep = gm.solve_nash(gm.singleton_game())
    assert rep.certified and rep.V == 0


def test_solve_matching_pennies_against_exhaustive_oracle():
    mp = gm.matching_pennies()
    rep = gm.solve_nash(mp, res=0.05, tol=1e-6)
    assert rep.certified and rep.V <= 1e-6
    assert np.all(np.abs(rep.x - 0.5) <= 0.05 + 1e-12)
    profiles, Vs = gm.exhaustive_regret(mp, gm.player_grids(mp, 0.05))
    assert Vs.min() == pytest.approx(rep.V, abs=1e-12)
    assert np.all(Vs >= -1e-12)  # zero-sum: V never dips below 0
    near = profiles[Vs <= 1e-6]
    assert np.allclose(near, 0.5)


def test_solve_prisoners_dilemma():
    pd = gm.prisoners_dilemma()
    rep = gm.solve_nash(pd, res=0.05)
    assert rep.certified and np.allclose(rep.x, gm.pure(pd, (1, 1))) and rep.V == 0
    _, Vs = gm.exhaustive_regret(pd, gm.player_grids(pd, 0.05))
    assert int(np.sum(Vs <= 1e-9)) == 1


def test_product_dense_subset_membership():
    M = SimplexM(2)
    game = gm.matching_pennies()
    game.dense_subsets = [ds.rational_grid(M, 10), ds.rational_grid(M, 10)]
    assert game.in_D([0.3, 0.7, 0.5, 0.5])
    assert not game.in_D([0.3, 0.7, 1 / np.sqrt(2), 1 - 1 / np.sqrt(2)])


prob = st.floats(0, 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), prob, prob, prob, prob)
def test_phi_matches_the_brute_force_oracle(entries, a, b, c, d):
    T = np.array(entries).reshape(2, 2, 2)
    tensors = [T[..., 0], T[..., 1]]
    game = gm.matrix_game(tensors)
    xb, yb = [np.array([a, 1 - a]), np.array([b, 1 - b])], [np.array([c, 1 - c]), np.array([d, 1 - d])]
    got = gm.phi(game, np.concatenate(xb), np.concatenate(yb))
    assert got == pytest.approx(brute_force_phi(tensors, xb, yb), abs=1e-9)
    # phi(x, x) = 0 exactly
    assert gm.phi(game, np.concatenate(xb), np.concatenate(xb)) == 0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), prob, prob)
def test_equilibrium_means_small_unilateral_gains(entries, a, b):
    T = np.array(entries).reshape(2, 2, 2)
    game = gm.matrix_game([T[..., 0], T[..., 1]])
    grids = gm.player_grids(game, 0.25)
    x = np.array([a, 1 - a, b, 1 - b])
    ok, V, _ = gm.is_equilibrium(game, x, grids, 1e-9)
    gains = []
    for i, G in enumerate(grids):
        current = game.loss(i, x)
        gains.append(max(current - game.loss(i, game.splice(x, i, c)) for c in G.points))
    assert V == pytest.approx(sum(gains), abs=1e-9)
    if ok:
        assert all(g <= 1e-9 for g in gains)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=8, max_size=8), st.floats(0.1, 10))
def test_solution_is_invariant_under_positive_scaling(entries, scale):
    T = np.array(entries, dtype=float).reshape(2, 2, 2)
    a = gm.solve_nash(gm.matrix_game([T[..., 0], T[..., 1]]), res=0.25)
    b = gm.solve_nash(gm.matrix_game([scale * T[..., 0], scale * T[..., 1]]), res=0.25)
    assert np.allclose(a.x, b.x)
