import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from singlat.dynamics import ell_V, flow_matrix, tau
from singlat.lattice import (
    MultiVector,
    RationalSubspace,
    decompose_norm_sq,
    eliminate,
    hnf,
    integer_kernel,
    saturate,
    vectors_from_json,
    vectors_to_json,
    wedge,
    wedge_float,
)


def minors(vs):
    """Plucker coordinates by brute-force determinants (oracle)."""
    A = np.array(vs, dtype=float)
    k, d = A.shape
    return [round(np.linalg.det(A[:, list(c)])) for c in itertools.combinations(range(d), k)]


def test_wedge_identity_minors():
    assert wedge([(1, 0, 0), (0, 1, 0)]).coords == (1, 0, 0)


def test_wedge_dependent_is_zero():
    assert wedge([(1, 0, 0), (2, 0, 0)]).is_zero()


def test_wedge_hand_minors():
    assert wedge([(1, 2, 3), (4, 5, 6)]).coords == (-3, -6, -3)


@given(st.lists(st.lists(st.integers(-9, 9), min_size=4, max_size=4), min_size=1, max_size=3))
def test_wedge_matches_determinant_oracle(vs):
    assert list(wedge(vs).coords) == minors(vs)


def test_wedge_float_agrees_with_exact():
    vs = [(1, 2, 3, 4), (0, 1, -1, 2)]
    assert np.allclose(wedge_float(np.array(vs, dtype=float)), wedge(vs).coords)


def test_multivector_grade_and_norm():
    w = wedge([(1, 0, 0), (0, 1, 0)])
    assert w.grade == 2 and w.dim == 3
    assert w.norm() == pytest.approx(1.0)
    assert MultiVector.scalar(3).grade == 0


def test_saturate_primitive_multiple():
    assert saturate([(2, 0, 0)]).basis == ((1, 0, 0),)


def test_saturate_already_saturated():
    assert saturate([(1, 0, 0), (0, 1, 0)]).basis == ((1, 0, 0), (0, 1, 0))


def test_saturate_plane():
    V = saturate([(2, 2, 0), (0, 2, 2)])
    for v in V.basis:
        assert v[0] - v[1] + v[2] == 0
    w = V.wedge()
    assert math.gcd(*w.coords) == 1
    # same line in the exterior power as the input wedge
    w_in = wedge([(2, 2, 0), (0, 2, 2)]).coords
    assert np.linalg.matrix_rank(np.array([w.coords, w_in], dtype=float)) == 1


def test_saturate_rejects_dependent():
    with pytest.raises(ValueError):
        saturate([(1, 2, 3), (2, 4, 6)])


def test_hnf_kernel():
    K = integer_kernel([[2, 0, 1]])
    for v in K:
        assert 2 * v[0] + v[2] == 0
    assert saturate(K).basis == ((1, 0, -2), (0, 1, 0))
    H, U, piv = hnf([[2, 4], [1, 3]])
    assert len(piv) == 2


def test_eliminate_single_vector():
    d = eliminate(RationalSubspace(((2, 0, 3),)))
    assert d.w0.grade == 0 and d.w0.coords == (1,)
    assert d.q == 3 and d.p == (-2, 0)


def test_eliminate_horizontal_has_q_zero():
    d = eliminate(RationalSubspace(((1, 0, 0),)))
    assert d.q == 0
    assert d.reassemble() == wedge([(1, 0, 0)])


def test_eliminate_two_vectors():
    d = eliminate(RationalSubspace(((1, 0, 0, 0), (0, 1, 0, 5))))
    assert d.w0.coords == wedge([(1, 0, 0, 0)]).coords
    assert d.q == 5 and d.p == (0, -1, 0)


def test_decompose_horizontal():
    V = RationalSubspace(((1, 0, 0),))
    a, b = decompose_norm_sq(V, (0.3, 0.4), (0.5, 0.5), 1.0)
    assert a == 0
    assert b == pytest.approx(math.e)  # ||g_1 e1||^2 = e^{2 * 0.5}


def test_decompose_identity_case():
    a, b = decompose_norm_sq(RationalSubspace(((0, 0, 1),)), (0.0, 0.0), (0.5, 0.5), 0.0)
    assert a == pytest.approx(1.0) and b == pytest.approx(0.0)


def test_decompose_pythagoras_example():
    V = RationalSubspace(((2, 0, 3),))
    a, b = decompose_norm_sq(V, (0.3, 0.4), (0.5, 0.5), 1.0)
    direct = np.linalg.norm(flow_matrix((0.5, 0.5), 1.0) @ tau((0.3, 0.4)) @ np.array([2, 0, 3])) ** 2
    assert a + b == pytest.approx(direct, rel=1e-9)


def test_ell_V_examples():
    assert ell_V(np.eye(3), RationalSubspace(((1, 0, 0),))) == pytest.approx(1.0)
    g = np.diag([2, 2, 0.25])
    assert ell_V(g, RationalSubspace(((1, 0, 0),))) == pytest.approx(2.0)
    assert ell_V(g, RationalSubspace(((1, 0, 0), (0, 0, 1)))) == pytest.approx(0.5)


def test_vectors_json_round_trip():
    vs = [(1, -2, 3), (10**30, 0, -1)]
    assert vectors_from_json(vectors_to_json(vs)) == vs
    V = saturate([(2, 2, 0), (0, 2, 2)])
    assert RationalSubspace.from_json(V.to_json()) == V


@given(st.lists(st.lists(st.integers(-20, 20), min_size=4, max_size=4), min_size=1, max_size=3))
def test_eliminate_round_trip_property(vs):
    A = np.array(vs, dtype=float)
    if np.linalg.matrix_rank(A) < len(vs):
        return
    V = saturate(vs)
    assert V.is_saturated()
    assert eliminate(V).reassemble() == V.wedge()
