import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ssdeq import dense_sets as ds
from ssdeq.geometry import Ball, Polytope, grid_from_points, make_grid
from ssdeq.intervals import (
    Bifunction,
    ExtInterval,
    Status,
    check_concave_in_y,
    check_convex_in_y,
    check_diagonal,
    check_lsc_in_x,
    check_usc_in_x,
    concave_endpoint_holds,
    concave_inclusion_holds,
    constant_bifunction,
    convex_endpoint_holds,
    convex_inclusion_holds,
    geq_zero,
    inner_product_minus_one,
    leq_zero,
    lower_ray,
    meets_minus,
    meets_plus,
    minkowski_combination,
    potential_gap,
    scalar_bifunction,
    squared_norm,
    squared_norm_rows,
    upper_ray,
)

INF = math.inf


def phi(x, y):
    return float(np.dot(x, y) - 1.0)


F1 = upper_ray(phi, inner_product_minus_one)
F2 = lower_ray(phi, inner_product_minus_one)
BOX = Polytope.from_box([-1, -1], [1, 1])


def test_interval_invariants():
    for lo, hi in [(1, 0), (INF, INF), (-INF, -INF), (math.nan, 0)]:
        with pytest.raises(ValueError):
            ExtInterval(lo, hi)
    assert ExtInterval(-INF, INF).subset_of(ExtInterval(-INF, INF))


def test_predicate_examples():
    assert geq_zero(ExtInterval(0, INF), 1e-9)
    assert not geq_zero(ExtInterval(-1, INF), 1e-9)
    assert geq_zero(ExtInterval(0, 0), 0)
    assert not meets_plus(ExtInterval(-INF, -1), 1e-9)
    assert meets_minus(ExtInterval(-1, 5), 0)
    assert leq_zero(ExtInterval(-INF, 0), 0)


def test_minkowski_examples():
    assert minkowski_combination([ExtInterval(0, 1), ExtInterval(2, 3)], [0.5, 0.5]) == ExtInterval(1, 2)
    I = minkowski_combination([ExtInterval(2, INF), ExtInterval(-4, INF)], [0.25, 0.75])
    assert I.lo == pytest.approx(0.25 * 2 - 0.75 * 4) and I.hi == INF
    J = ExtInterval(-3, 7)
    assert minkowski_combination([J], [1]) == J
    # zero weights drop the term, even an unbounded one
    assert minkowski_combination([ExtInterval(-INF, 0), ExtInterval(1, 2)], [0, 1]) == ExtInterval(1, 2)
    with pytest.raises(ValueError):
        minkowski_combination([J, J], [0.7, 0.7])


finite = st.floats(-100, 100, allow_nan=False)


@st.composite
def intervals(draw):
    a, b = sorted((draw(finite), draw(finite)))
    lo = -INF if draw(st.booleans()) and draw(st.booleans()) else a
    hi = INF if draw(st.booleans()) and draw(st.booleans()) else b
    return ExtInterval(lo, hi)


@settings(max_examples=200, deadline=None)
@given(intervals(), intervals(), intervals(), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_minkowski_flattening(I1, I2, I3, lam, mu):
    two = minkowski_combination([I1, I2], [lam, 1 - lam])
    nested = minkowski_combination([two, I3], [mu, 1 - mu])
    flat = minkowski_combination([I1, I2, I3], [mu * lam, mu * (1 - lam), 1 - mu])
    for a, b in ((nested.lo, flat.lo), (nested.hi, flat.hi)):
        assert a == b or abs(a - b) <= 1e-12 * max(1.0, abs(a))


@settings(max_examples=200, deadline=None)
@given(intervals())
def test_predicate_implications(I):
    if geq_zero(I, 0):
        assert meets_plus(I, 0)
    if leq_zero(I, 0):
        assert meets_minus(I, 0)


@settings(max_examples=300, deadline=None)
@given(st.lists(intervals(), min_size=2, max_size=3), intervals(), st.data())
def test_inclusion_and_endpoint_forms_agree(values, target, data):
    w = np.array(data.draw(st.lists(st.floats(0.05, 1), min_size=len(values), max_size=len(values))))
    w = w / w.sum()
    w[-1] = 1 - w[:-1].sum()
    assert convex_inclusion_holds(values, w, target, 1e-9) == convex_endpoint_holds(values, w, target, 1e-9)
    assert concave_inclusion_holds(values, w, target, 1e-9) == concave_endpoint_holds(values, w, target, 1e-9)


# ---------------------------------------------------------------------------
# convexity validators


def test_convex_examples():
    D = ds.full(BOX)
    affine = scalar_bifunction(lambda x, y: 2 * y[0] - y[1] + 3)
    assert check_convex_in_y(affine, (0, 0), D, 50).passed
    assert check_convex_in_y(F1, (0.3, -0.2), D, 50).passed
    bowl = Bifunction(lambda x, y: ExtInterval(-float(np.dot(y, y)), 0.0), "cap")
    v = check_convex_in_y(bowl, (0, 0), D, 50)
    assert v.status is Status.FAIL
    # independent re-check of the witness: the lower end must exceed the weighted lows
    w = v.witness
    mix_lo = sum(lam * -float(np.dot(y, y)) for lam, y in zip(w["weights"], w["ys"]))
    assert -float(np.dot(w["combination"], w["combination"])) > mix_lo + 1e-9


def test_concave_examples():
    D = ds.full(BOX)
    assert check_concave_in_y(F2, (0.3, -0.2), D, 50).passed
    assert check_concave_in_y(constant_bifunction(-1, 2), (0, 0), D, 50).passed
    # a convex upper end keeps the values concave
    cup = Bifunction(lambda x, y: ExtInterval(0.0, float(np.dot(y, y))), "cup")
    assert check_concave_in_y(cup, (0, 0), D, 50).passed
    dome = Bifunction(lambda x, y: ExtInterval(-INF, -float(np.dot(y, y))), "dome")
    v = check_concave_in_y(dome, (0, 0), D, 50)
    assert v.status is Status.FAIL
    w = v.witness
    mix_hi = sum(lam * -float(np.dot(y, y)) for lam, y in zip(w["weights"], w["ys"]))
    assert -float(np.dot(w["combination"], w["combination"])) > mix_hi + 1e-9


def test_hand_scan_finds_the_same_failure_as_the_validator():
    # scan lam in {1/4, 1/2, 3/4} on the segment from (-1, 0) to (1, 0): lo = -|y|^2 is concave
    y1, y2 = np.array([-1.0, 0.0]), np.array([1.0, 0.0])
    for lam in (0.25, 0.5, 0.75):
        c = lam * y1 + (1 - lam) * y2
        assert -c @ c > lam * -1 + (1 - lam) * -1


def test_convexity_on_sparse_set_is_inconclusive():
    v = check_convex_in_y(F1, (0, 0, 0), ds.sphere_in_ball(3), 30)
    assert v.status is Status.INCONCLUSIVE


# ---------------------------------------------------------------------------
# semicontinuity validators


def step_lo(x, y):
    return ExtInterval(1.0 if x[0] > 0 else 0.0, INF)


def step_hi(x, y):
    return ExtInterval(-INF, 1.0 if x[0] > 0 else 0.0)


def test_lsc_examples():
    grid = make_grid(BOX, 0.1)
    smooth = scalar_bifunction(lambda x, y: float(np.sin(x[0]) + x[1] * y[0]))
    assert check_lsc_in_x(smooth, (0.5, 0.5), grid).passed
    assert check_lsc_in_x(F1, (0.5, -0.5), grid).passed
    # the jump is 1 and neighbours sit 0.1 apart, so the slack must stay below 1: L = 5
    v = check_lsc_in_x(Bifunction(step_lo), (0, 0), grid, lipschitz=5.0)
    assert v.status is Status.FAIL
    assert v.witness["center"][0] == pytest.approx(0.0) and v.witness["neighbour"][0] > 0


def test_usc_examples():
    grid = make_grid(BOX, 0.1)
    smooth = scalar_bifunction(lambda x, y: float(np.cos(x[1]) - x[0] * y[1]))
    assert check_usc_in_x(smooth, (0.5, 0.5), grid).passed
    assert check_usc_in_x(F2, (0.5, -0.5), grid).passed
    v = check_usc_in_x(Bifunction(step_hi), (0, 0), grid, lipschitz=5.0)
    assert v.status is Status.FAIL
    assert v.witness["center"][0] == pytest.approx(0.0) and v.witness["neighbour"][0] > 0


def test_step_map_hides_behind_default_slack():
    # with L = 10 the slack equals the jump at spacing 0.1: the validator is scale-bound
    grid = make_grid(BOX, 0.1)
    assert check_lsc_in_x(Bifunction(step_lo), (0, 0), grid, lipschitz=10.0, radius=0.1).passed


# ---------------------------------------------------------------------------
# diagonal


def test_diagonal_examples():
    g, gb = potential_gap(squared_norm, squared_norm_rows)
    band = Bifunction(lambda x, y: ExtInterval(g(x, y), g(x, y) + 1), "band")
    grid = make_grid(BOX, 0.25)
    assert check_diagonal(band, grid, "geq_zero").passed
    sphere = grid_from_points(ds.sphere_in_ball(3).sample(np.random.default_rng(0), 40), 0.25, "sphere")
    assert check_diagonal(F1, sphere, "geq_zero").passed
    v = check_diagonal(F1, make_grid(Ball.unit(3), 0.25), "geq_zero")
    assert v.status is Status.FAIL and v.witness["value"][0] < 0
    origin = grid_from_points([(0, 0, 0)], 0.25, "origin")
    v0 = check_diagonal(F1, origin, "geq_zero")
    assert v0.witness["value"][0] == pytest.approx(-1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4))
def test_threaded_endpoints_match_serial(workers):
    F = Bifunction(lambda x, y: ExtInterval(float(x @ y) - 1, float(x @ y) + abs(x[0])))
    X = make_grid(BOX, 0.5).points
    a = F.endpoints(X, X, 1)
    b = F.endpoints(X, X, workers)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
