import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdeq import dense_sets as ds
from ssdeq.geometry import Ball, GeometryError, Polytope, SimplexM, grid_from_points, make_grid

UNIT_SQUARE = Polytope.from_box([0, 0], [1, 1])


def punctured_ball():
    return ds.punctured(Ball.unit(3), ds.INSCRIBED_SQUARE)


def test_rational_grid_membership():
    U = ds.rational_grid(UNIT_SQUARE, 10)
    assert U.contains((0.3, 0.7))
    assert not U.contains((math.sqrt(2) / 2, 0.5))
    assert not U.contains((1 / 11, 0.5))  # denominator 11 > q
    assert not U.contains((1.2, 0.5))  # outside the parent


def test_punctured_membership():
    U = punctured_ball()
    assert not U.contains((0, 0, 0))
    assert not U.contains((0.9, 0, 0))
    assert U.contains((0.5, 0.5, 0))  # boundary of the removed square stays
    assert U.contains((0.6, 0.6, 0))
    assert U.contains((0, 0, 0.1))
    assert not U.contains((0, 0, 1.1))


def test_full_and_sphere_membership():
    M = SimplexM(2)
    F = ds.full(M)
    for p in [(0.5, 0.5), (1, 0), (0.6, 0.6)]:
        assert F.contains(p) == M.contains(p)
    S = ds.sphere_in_ball(3)
    assert S.contains((1, 0, 0)) and not S.contains((0.5, 0, 0))


def test_builtin_subset_errors():
    with pytest.raises((ValueError, GeometryError)):
        ds.builtin_subset("rational_grid", UNIT_SQUARE, q=0)
    with pytest.raises(GeometryError):
        ds.punctured(Ball.unit(3), [(2, 0, 0), (0, 2, 0), (0, 0, 2)])
    with pytest.raises(GeometryError):
        ds.builtin_subset("nonsense", UNIT_SQUARE)


@pytest.mark.parametrize("U", [
    ds.rational_grid(UNIT_SQUARE, 1000),
    ds.rational_grid(SimplexM(3), 50),
    ds.punctured(Ball.unit(3), ds.INSCRIBED_SQUARE),
    ds.sphere_in_ball(3),
    ds.full(Ball.unit(2)),
], ids=lambda U: U.kind)
def test_samples_are_members_of_set_and_parent(U):
    pts = U.sample(np.random.default_rng(1), 200)
    assert all(U.contains(p) and U.parent.contains(p, 1e-9) for p in pts)


def test_check_dense_examples():
    grid = make_grid(UNIT_SQUARE, 0.1)
    assert ds.check_dense(ds.rational_grid(UNIT_SQUARE, 100), grid, 0.02)
    assert ds.check_dense(ds.full(UNIT_SQUARE), grid, 0.01)
    assert not ds.check_dense(ds.sphere_in_ball(3), make_grid(Ball.unit(3), 0.2), 0.1)
    with pytest.raises(ValueError):
        ds.check_dense(ds.full(UNIT_SQUARE), grid, 0.0)


def test_check_dense_off_lattice_points_use_samples():
    # irrational grid points are not members, so the sampled members must come close
    pts = np.clip(make_grid(UNIT_SQUARE, 0.1).points + math.sqrt(2) / 200, 0, 1)  # 0.01 off the lattice
    shifted = grid_from_points(pts, 0.1, "shifted")
    assert ds.check_dense(ds.rational_grid(UNIT_SQUARE, 100), shifted, 0.02)
    # the sampler only draws from the coarse 1/10 lattice, so a tiny eps misses
    assert not ds.check_dense(ds.rational_grid(UNIT_SQUARE, 100), shifted, 0.001)


def test_self_segment_dense_rational_grid():
    rep = ds.check_self_segment_dense(ds.rational_grid(UNIT_SQUARE, 1000), 50, 20, 0.05)
    assert rep.segment_ok and rep.witness is None


def test_self_segment_dense_punctured_pair_fails_and_replays():
    U = punctured_ball()
    rep = ds.check_self_segment_dense(U, 5, 20, 0.05, forced_pairs=[ds.SQUARE_CROSSING_PAIR])
    assert not rep.segment_ok
    w = rep.witness
    lo, hi = w["uncovered"]
    assert lo < 0.5 < hi  # the gap surrounds the midpoint
    # the segment leaves the removed square where |x| + |y| = 1, i.e. at t = 1/12 and 11/12
    assert lo <= 1 / 12 + 0.05 and hi >= 11 / 12 - 0.05
    assert ds.replay_witness(U, w)


def test_hull_trace_examples():
    rational = ds.rational_grid(UNIT_SQUARE, 1000)
    assert ds.check_hull_trace_dense(rational, [(0.1, 0.2), (0.9, 0.3), (0.4, 0.8)], 0.1, 0.05)
    assert not ds.check_hull_trace_dense(punctured_ball(), ds.SQUARE_CROSSING_PAIR, 0.1, 0.05)
    assert ds.check_hull_trace_dense(ds.full(Ball.unit(2)), [(0, 0), (0.5, 0.5), (-0.3, 0.2)], 0.1, 0.05)
    with pytest.raises(GeometryError):
        ds.check_hull_trace_dense(punctured_ball(), [(0, 0, 0), (0.6, 0.6, 0)])


def test_failure_propagates_from_segments_to_hull():
    U = punctured_ball()
    rep = ds.check_self_segment_dense(U, 3, 20, 0.05, forced_pairs=[ds.SQUARE_CROSSING_PAIR])
    w = rep.witness
    assert not ds.check_hull_trace_dense(U, [w["x"], w["y"]], 0.1, 0.05)


def test_reports_are_deterministic():
    U = ds.rational_grid(UNIT_SQUARE, 1000)
    a = ds.check_self_segment_dense(U, 10, 10, 0.05, seed=7)
    b = ds.check_self_segment_dense(U, 10, 10, 0.05, seed=7)
    assert a.to_record() == b.to_record()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_full_set_is_self_segment_dense_for_every_seed(seed):
    assert ds.check_self_segment_dense(ds.full(Ball.unit(2)), 5, 10, 0.05, seed=seed).segment_ok


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rational_segments_stay_dense_for_every_seed(seed):
    rep = ds.check_self_segment_dense(ds.rational_grid(UNIT_SQUARE, 1000), 5, 20, 0.05, seed=seed)
    assert rep.segment_ok
