import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polysweep.errors import EmptySet, InfeasiblePoint
from polysweep.geometry import (ConeCoefficients, MovingPolyhedron, NotMember, active_set,
                                check_licq, check_plicq, normal_cone_coeffs, project,
                                slater_point)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
# entries are 0 or at least 1e-3 in size: cones of angle 1e-8 are beyond a
# 1e-9 projection tolerance in double precision
entries = finite.filter(lambda v: v == 0.0 or abs(v) >= 1e-3)


def box2(lo=-1.0, hi=1.0):
    return MovingPolyhedron([[1, 0], [0, 1], [-1, 0], [0, -1]], [hi, hi, -lo, -lo])


# --- construction and active sets -------------------------------------


def test_unit_rows_flag_rejects_nonunit():
    with pytest.raises(ValueError):
        MovingPolyhedron([[2.0, 0.0]], [1.0], unit_rows=True)
    MovingPolyhedron([[1.0, 0.0]], [1.0], unit_rows=True)


def test_nonfinite_data_rejected():
    with pytest.raises(ValueError):
        MovingPolyhedron([[np.nan]], [1.0])


def test_interior_point_has_no_active_faces():
    assert len(active_set([0.0, 0.0], box2())) == 0


def test_pushing_data_active_at_origin():
    assert active_set([0.0], MovingPolyhedron([[-1.0]], [0.0])).indices == (0,)


def test_box_vertex_activates_two_faces():
    rng = np.random.default_rng(3)
    lo, hi = -rng.uniform(0.5, 2), rng.uniform(0.5, 2)
    P = box2(lo, hi)
    assert active_set([hi, lo], P, 1e-9).indices == (0, 3)


def test_active_set_outside_raises():
    with pytest.raises(InfeasiblePoint):
        active_set([2.0, 0.0], box2())


# --- projection --------------------------------------------------------


def test_projection_inside_is_identity():
    z, c = project([0.3, -0.2], box2())
    assert np.allclose(z, [0.3, -0.2]) and np.all(c.eta == 0)


def test_projection_set_at_time_zero_of_jump_example():
    # C = {1} x R described by x_1 <= 1 and -x_1 <= -1
    P = MovingPolyhedron([[1, 0], [-1, 0]], [1, -1])
    z, _ = project([0.0, 0.0], P)
    assert np.allclose(z, [1.0, 0.0], atol=1e-12)


def test_projection_set_after_jump():
    P = MovingPolyhedron([[1, 0], [-1, 0], [0, -1]], [1, -1, -1])
    z, _ = project([0.0, 0.0], P)
    assert np.allclose(z, [1.0, 1.0], atol=1e-12)


def test_projection_multipliers_satisfy_stationarity():
    P = box2()
    y = np.array([2.5, -3.0])
    z, c = project(y, P)
    assert np.allclose(z, [1.0, -1.0])
    assert np.linalg.norm(z - y + P.u.T @ c.eta) <= 1e-10
    assert np.all(c.eta >= 0) and np.abs(c.eta * P.slack(z)).max() <= 1e-10


def test_empty_polyhedron_has_farkas_ray():
    P = MovingPolyhedron([[1.0], [-1.0]], [0.0, -1.0])
    with pytest.raises(EmptySet) as err:
        project([0.0], P)
    y = err.value.ray
    assert y is not None and np.all(y >= 0)
    assert np.allclose(P.u.T @ y, 0) and P.b @ y < 0


@st.composite
def polyhedra(draw):
    n = draw(st.integers(1, 3))
    m = draw(st.integers(1, 5))
    A = np.array(draw(st.lists(st.lists(entries, min_size=n, max_size=n), min_size=m, max_size=m)))
    c = np.array(draw(st.lists(finite, min_size=n, max_size=n)))
    # c is inside with a margin, so C is nonempty
    margins = np.array(draw(st.lists(st.floats(0.0, 2.0), min_size=m, max_size=m)))
    return MovingPolyhedron(A, A @ c + margins), c


@settings(max_examples=200, deadline=None)
@given(polyhedra(), st.lists(finite, min_size=3, max_size=3), st.floats(0, 1))
def test_projection_variational_inequality(pc, yy, s):
    P, c = pc
    y = np.array(yy[:P.n]) * 2
    z, eta = project(y, P)
    w = z + s * (c - z)          # a point of C on the segment to c
    assert np.dot(y - z, w - z) <= 1e-9 * (1 + np.linalg.norm(y) ** 2)
    assert P.contains(z, 1e-9)
    assert np.linalg.norm(z - y + P.u.T @ eta.eta) <= 1e-9 * (1 + np.linalg.norm(y))


@settings(max_examples=150, deadline=None)
@given(polyhedra(), st.lists(finite, min_size=6, max_size=6))
def test_projection_nonexpansive_and_idempotent(pc, yy):
    P, _ = pc
    y1, y2 = np.array(yy[:P.n]) * 2, np.array(yy[3:3 + P.n]) * 2
    z1, z2 = project(y1, P)[0], project(y2, P)[0]
    assert np.linalg.norm(z1 - z2) <= np.linalg.norm(y1 - y2) + 1e-9
    assert np.linalg.norm(project(z1, P)[0] - z1) <= 1e-10 * (1 + np.linalg.norm(z1))


# --- normal cones and qualification -------------------------------------


def test_zero_vector_has_zero_coefficients():
    c = normal_cone_coeffs([1.0, 1.0], box2(), [0.0, 0.0])
    assert isinstance(c, ConeCoefficients) and np.all(c.eta == 0)


def test_orthonormal_generators():
    P = MovingPolyhedron([[1, 0], [0, 1]], [1, 1])
    c = normal_cone_coeffs([1.0, 1.0], P, [1.0, 1.0])
    assert np.allclose(c.eta, [1.0, 1.0])


def test_outside_cone_reports_distance():
    P = MovingPolyhedron([[1, 0], [0, 1]], [1, 1])
    r = normal_cone_coeffs([1.0, 0.0], P, [1.0, 1.0])
    assert isinstance(r, NotMember) and not r
    assert r.distance == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_cone_round_trip(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 4), rng.integers(1, 5)
    A = rng.normal(size=(m, n))
    x = rng.normal(size=n)
    act = rng.random(m) < 0.6
    b = A @ x + np.where(act, 0.0, rng.uniform(0.1, 1, m))
    eta = np.where(act, rng.uniform(0, 2, m), 0.0)
    P = MovingPolyhedron(A, b)
    v = A.T @ eta
    c = normal_cone_coeffs(x, P, v)
    assert isinstance(c, ConeCoefficients)
    assert np.linalg.norm(A.T @ c.eta - v) <= 1e-9 and np.all(c.eta >= 0)
    assert np.all(c.eta[~act] == 0)
    if check_licq(x, P):
        assert np.allclose(c.eta, eta, atol=1e-8)
        assert check_plicq(x, P)


def test_opposing_faces_fail_both_qualifications():
    P = MovingPolyhedron([[1, 0], [-1, 0]], [1, -1])
    assert not check_licq([1.0, 0.0], P) and not check_plicq([1.0, 0.0], P)


def test_orthonormal_faces_satisfy_licq():
    P = MovingPolyhedron([[1, 0], [0, 1]], [1, 1])
    assert check_licq([1.0, 1.0], P)


def test_single_face_satisfies_both():
    P = MovingPolyhedron([[0.6, 0.8]], [1.0])
    assert check_licq([0.6, 0.8], P) and check_plicq([0.6, 0.8], P)


def test_plicq_without_licq():
    P = MovingPolyhedron([[1, 0], [0, 1], [1, 1]], [0, 0, 0])
    assert not check_licq([0.0, 0.0], P) and check_plicq([0.0, 0.0], P)


# --- Slater points ------------------------------------------------------


def test_slater_whole_space_is_origin():
    assert np.array_equal(slater_point(MovingPolyhedron.empty(3)), np.zeros(3))


def test_slater_box():
    P = MovingPolyhedron([[1, 0], [0, 1]], [1, 1])
    s = slater_point(P)
    assert np.all(P.slack(s) > 0)


def test_slater_flat_set_is_none():
    P = MovingPolyhedron([[1, 0], [-1, 0], [0, -1]], [1, -1, -1])
    assert slater_point(P) is None


def test_slater_empty_raises():
    with pytest.raises(EmptySet):
        slater_point(MovingPolyhedron([[1.0], [-1.0]], [0.0, -1.0]))
