import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdeq import dense_sets as ds
from ssdeq.geometry import Ball, Polytope, grid_from_points, make_grid
from ssdeq.intervals import (
    Bifunction,
    ExtInterval,
    constant_bifunction,
    inner_product_minus_one,
    margin,
    upper_ray,
)
from ssdeq.kkm import build_g_sets, check_kkm_covering, finite_intersection, kkm_certificate

LINE = Polytope.from_box([-1], [1])
F1 = upper_ray(lambda x, y: float(np.dot(x, y) - 1.0), inner_product_minus_one)


def sq(v):
    return float(np.dot(v, v))


POTENTIAL = Bifunction(lambda x, y: ExtInterval(sq(y) - sq(x), np.inf), "potential")


def test_constant_zero_gives_full_sets():
    K = make_grid(LINE, 0.25)
    for g in build_g_sets(constant_bifunction(0, 0), "geq_zero", K, K):
        assert g.members.tolist() == list(range(len(K)))


def test_counterexample_set_at_origin_is_empty():
    K = make_grid(Ball.unit(3), 0.5)
    D = grid_from_points([(0, 0, 0), (1, 0, 0)], 0.5, "d")
    g0 = build_g_sets(F1, "geq_zero", K, D)[0]
    assert len(g0) == 0


def test_potential_sets_match_the_inequality():
    K = make_grid(LINE, 0.125)
    for g in build_g_sets(POTENTIAL, "geq_zero", K, K):
        expected = [i for i, x in enumerate(K.points) if sq(x) <= sq(g.y) + 1e-9]
        assert g.members.tolist() == expected
        assert np.all(np.diff(g.members) > 0)


def test_covering_examples():
    K = make_grid(LINE, 0.125)
    full = ds.full(LINE)
    rep = check_kkm_covering(build_g_sets(POTENTIAL, "geq_zero", K, K), K, full, samples=300)
    assert rep.covering_ok is True and rep.combinations_tested > 0
    assert check_kkm_covering(build_g_sets(constant_bifunction(0, 0), "geq_zero", K, K), K, full).covering_ok
    bad = check_kkm_covering(build_g_sets(constant_bifunction(-1, -1), "geq_zero", K, K), K, full)
    assert bad.covering_ok is False and bad.covering_witness is not None
    with pytest.raises(ValueError):
        check_kkm_covering(build_g_sets(POTENTIAL, "geq_zero", K, K), K, full, samples=0)


def test_intersection_examples():
    K = make_grid(LINE, 0.125)
    rep = finite_intersection(build_g_sets(POTENTIAL, "geq_zero", K, K), K)
    assert np.allclose(rep.intersection_point, [0.0]) and rep.intersection_residual == pytest.approx(0.0)

    Kb = make_grid(Ball.unit(3), 0.5)
    D = grid_from_points([(0, 0, 0), (0.5, 0, 0)], 0.5, "d")
    empty = finite_intersection(build_g_sets(F1, "geq_zero", Kb, D), Kb)
    assert empty.intersection_point is None and np.allclose(empty.emptied_by, 0)

    single = finite_intersection(build_g_sets(constant_bifunction(0, 0), "geq_zero", K, K)[:1], K)
    assert single.intersection_index == 0 and np.allclose(single.intersection_point, K.points[0])


def test_certificate_on_potential():
    K = make_grid(LINE, 0.25)
    rep = kkm_certificate(POTENTIAL, "geq_zero", K, K, ds.full(LINE))
    assert rep.covering_ok and np.allclose(rep.intersection_point, 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=3), st.floats(-1, 1))
def test_intersection_point_satisfies_every_set(shifts, extra):
    # F(x, y) = [sum_s |y - s| - |x - s|, inf): the sum of distances is its own potential
    K = make_grid(LINE, 0.125)
    F = Bifunction(lambda x, y: ExtInterval(float(sum(abs(y[0] - s) - abs(x[0] - s) for s in shifts)), np.inf))
    g_sets = build_g_sets(F, "geq_zero", K, K)
    rep = finite_intersection(g_sets, K)
    if rep.intersection_point is not None:
        x = rep.intersection_point
        for g in g_sets:
            lo, hi = F.endpoints(x[None, :], g.y[None, :])
            assert margin("geq_zero", lo, hi)[0, 0] >= -1e-9
    # monotone: one more set never enlarges the intersection
    more = g_sets + build_g_sets(F, "geq_zero", K, grid_from_points([(extra,)], 0.125, "extra"))
    a = finite_intersection(g_sets, K)
    b = finite_intersection(more, K)
    if a.intersection_index is None:
        assert b.intersection_index is None
    elif b.intersection_index is not None:
        assert b.intersection_index >= a.intersection_index
