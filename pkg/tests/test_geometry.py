import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from ssdeq.geometry import (
    Ball,
    GeometryError,
    GridTooFine,
    Polytope,
    ProductSet,
    SimplexM,
    convex_combination,
    hull_distance,
    hull_membership,
    linprog_eq,
    make_grid,
    merge_into_grid,
    support_function,
)

SQUARE = [(0, 0), (1, 0), (0, 1), (1, 1)]


def scipy_in_hull(p, V, tol=1e-9):
    """Oracle: the same sup-norm feasibility problem solved by scipy's HiGHS."""
    V = np.asarray(V, float)
    k, n = V.shape
    # variables: lam (k), t; minimise t s.t. -t <= V^T lam - p <= t
    c = np.r_[np.zeros(k), 1.0]
    A_ub = np.block([[V.T, -np.ones((n, 1))], [-V.T, -np.ones((n, 1))]])
    b_ub = np.r_[p, -np.asarray(p, float)]
    A_eq = np.r_[np.ones(k), 0.0][None, :]
    res = linprog(c, A_ub, b_ub, A_eq, [1.0], bounds=[(0, None)] * (k + 1), method="highs")
    return res.fun <= tol


def test_convex_combination_examples():
    assert np.allclose(convex_combination([(0, 0), (1, 0)], [0.5, 0.5]), (0.5, 0))
    assert np.allclose(convex_combination([(2, 3)], [1]), (2, 3))
    mid = convex_combination([(0.6, 0.6, 0), (-0.6, -0.6, 0)], [0.5, 0.5])
    assert np.allclose(mid, 0)


@pytest.mark.parametrize("pts,w", [
    ([(0, 0), (1, 1, 1)], [0.5, 0.5]),
    ([(0, 0), (1, 1)], [1.5, -0.5]),
    ([(0, 0), (1, 1)], [0.5, 0.4]),
    ([], []),
])
def test_convex_combination_errors(pts, w):
    with pytest.raises((GeometryError, ValueError)):
        convex_combination(pts, w)


def test_hull_membership_examples():
    assert hull_membership((0.5, 0.5), SQUARE, 1e-9)
    assert not hull_membership((2, 2), SQUARE, 1e-9)
    assert hull_membership((1 / 3, 1 / 3, 1 / 3), np.eye(3), 1e-9)
    with pytest.raises(GeometryError):
        hull_membership((0, 0), [], 1e-9)


def test_hull_distance_is_sup_norm():
    d, lam = hull_distance((2.0, 0.5), SQUARE)
    assert d == pytest.approx(1.0)
    assert lam.sum() == pytest.approx(1.0)


def test_support_function_examples():
    assert support_function(SQUARE, (1, 0)) == 1
    assert support_function([(1, 0), (0, -1)], (1, 1)) == 1
    assert support_function(SQUARE, (0, 0)) == 0


def test_linprog_matches_scipy_on_small_problem():
    # min x1 + 2 x2 s.t. x1 + x2 + x3 = 1, x1 - x2 = 0.2
    A = np.array([[1.0, 1, 1], [1, -1, 0]])
    b = np.array([1.0, 0.2])
    c = np.array([1.0, 2.0, 0.0])
    ours = linprog_eq(c, A, b)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * 3, method="highs")
    assert ours.status == "optimal"
    assert ours.value == pytest.approx(ref.fun, abs=1e-12)


def test_linprog_infeasible():
    res = linprog_eq(np.zeros(2), np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert res.status == "infeasible"


def test_make_grid_examples():
    g = make_grid(SimplexM(2), 0.5)
    assert g.points.tolist() == [[0, 1], [0.5, 0.5], [1, 0]]
    assert len(make_grid(SimplexM(3), 0.5)) == 6
    line = make_grid(Polytope.from_box([0], [1]), 0.25)
    assert line.points.ravel().tolist() == [0, 0.25, 0.5, 0.75, 1]


def test_make_grid_members_and_order():
    for region in (Ball.unit(3), SimplexM(3), Polytope([(0, 0), (2, 0), (0, 1)])):
        g = make_grid(region, 0.25)
        assert all(region.contains(p, 1e-9) for p in g.points)
        keys = [tuple(p) for p in g.points]
        assert keys == sorted(keys)


def test_make_grid_cap_and_resolution_errors():
    with pytest.raises(GridTooFine):
        make_grid(Polytope.from_box([0, 0], [1, 1]), 1e-4, cap=1000)
    with pytest.raises(GeometryError):
        make_grid(SimplexM(2), 0.0)


def test_make_grid_falls_back_to_barycenter():
    tiny = Polytope([(0.01, 0.01), (0.02, 0.01), (0.01, 0.02)])
    g = make_grid(tiny, 0.5)
    assert len(g) == 1 and tiny.contains(g.points[0])


def test_product_grid_and_merge():
    P = ProductSet((SimplexM(2), SimplexM(2)))
    g = make_grid(P, 0.5)
    assert len(g) == 9
    merged = merge_into_grid(g, [(0.5, 0.5, 0.5, 0.5), (0.25, 0.75, 1, 0)])
    assert len(merged) == 10  # the first point is already present
    keys = [tuple(p) for p in merged.points]
    assert keys == sorted(keys)


def test_simplex_membership_tolerance():
    M = SimplexM(3)
    assert M.contains((0.2, 0.3, 0.5))
    assert not M.contains((0.2, 0.3, 0.5 + 1e-10))
    assert not M.contains((-1e-10, 0.5, 0.5 + 1e-10))


# ---------------------------------------------------------------------------
# properties

coords = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@st.composite
def vertex_sets(draw, n=2):
    k = draw(st.integers(1, 6))
    return np.array(draw(st.lists(st.lists(coords, min_size=n, max_size=n), min_size=k, max_size=k)))


@settings(max_examples=60, deadline=None)
@given(vertex_sets(), st.lists(coords, min_size=2, max_size=2), st.lists(coords, min_size=2, max_size=2),
       st.floats(0, 10))
def test_support_function_is_sublinear(V, y1, y2, t):
    s = lambda y: support_function(V, y)
    assert s(np.add(y1, y2)) <= s(y1) + s(y2) + 1e-9
    assert s(t * np.asarray(y1)) == pytest.approx(t * s(y1), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(vertex_sets(), st.data())
def test_convex_combinations_lie_in_hull(V, data):
    w = np.array(data.draw(st.lists(st.floats(0.01, 1), min_size=len(V), max_size=len(V))))
    w /= w.sum()
    if abs(w.sum() - 1) > 1e-12:
        w[-1] = 1 - w[:-1].sum()
    p = convex_combination(V, w, tol=1e-9)
    assert hull_membership(p, V, 1e-7)


@settings(max_examples=60, deadline=None)
@given(vertex_sets(), st.lists(coords, min_size=2, max_size=2))
def test_hull_membership_agrees_with_scipy(V, p):
    d, _ = hull_distance(p, V)
    # stay clear of the boundary where the two solvers may round differently
    if abs(d - 1e-6) > 1e-8:
        assert hull_membership(p, V, 1e-6) == scipy_in_hull(p, V, 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(5)))
def test_grid_invariant_under_vertex_permutation(perm):
    V = np.array([(0, 0), (2, 0), (2, 1), (1, 2), (0, 1)], float)
    a = make_grid(Polytope(V), 0.25)
    b = make_grid(Polytope(V[list(perm)]), 0.25)
    assert np.array_equal(a.points, b.points)
