import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from conftest import PHI_FRAC, PHI_FRAC_60
from singlat.diophantine import (
    ApproximationWitness,
    default_grid,
    dirichlet_check,
    find_witness,
    quasinorm,
    sandwich_check,
    sing_scan,
    totally_irrational_screen,
)
from singlat.exceptions import BudgetExceededError


def brute_witness(x, r, T, delta):
    """Smallest q by direct Fraction arithmetic over every admissible q (oracle)."""
    x = [Fraction(c) for c in x]
    bound = Fraction(delta) / Fraction(T)
    q = 1
    while q < Fraction(delta) * Fraction(T):
        p = [round(q * c) for c in x]
        if max(float(abs(q * c - pi)) ** (1 / ri) for c, pi, ri in zip(x, p, r)) < bound:
            return q, tuple(p)
        q += 1
    return None


def fibonacci_has_witness(T, delta):
    """Convergent oracle for x = phi - 1: best approximations are F_{k-1}/F_k."""
    with mpmath.workdps(60):
        x = (mpmath.sqrt(5) - 1) / 2
        a, b = 1, 1
        while b < delta * T:
            if abs(b * x - a) < mpmath.mpf(delta) / T:
                return True
            a, b = b, a + b
    return False


def test_quasinorm_examples():
    assert quasinorm((0, 0), (0.5, 0.5)) == 0
    assert quasinorm((0.04, 0.2), (2 / 3, 1 / 3)) == pytest.approx(0.008)
    assert quasinorm((0.3, -0.4), (0.5, 0.5)) == pytest.approx(0.16)


def test_rational_witness():
    w = find_witness((Fraction(1, 2), Fraction(1, 3)), (0.5, 0.5), 100, 0.1)
    assert w.q == 6 and w.p == (3, 2) and w.quasinorm_value == 0
    assert w.revalidate((Fraction(1, 2), Fraction(1, 3)), (0.5, 0.5))


def test_golden_no_witness():
    assert find_witness([PHI_FRAC], [1], 10**4, 0.2) is None
    assert not fibonacci_has_witness(10**4, 0.2)


def test_empty_q_range():
    assert find_witness((0.5, 0.5), (0.5, 0.5), 10, 0.05) is None


def test_rejects_bad_delta():
    with pytest.raises(ValueError):
        find_witness((0.5,), (1,), 10, 0)


def test_budget():
    with pytest.raises(BudgetExceededError):
        find_witness((math.sqrt(2) - 1, math.sqrt(3) - 1), (0.5, 0.5), 1e9, 0.5, cap=1000)


def test_dirichlet_examples():
    w = dirichlet_check([math.sqrt(2) - 1], 10, 1)
    assert w.q == 5 and w.p == (2,)
    assert abs(5 * (math.sqrt(2) - 1) - 2) == pytest.approx(0.0711, abs=1e-4)
    w0 = dirichlet_check([0, 0], 10, 1)
    assert w0.q == 1 and w0.p == (0, 0)


@given(st.floats(0, 0.999), st.floats(0, 0.999), st.sampled_from([2, 10, 100]))
def test_dirichlet_always_succeeds(a, b, T):
    assert dirichlet_check((a, b), T, 1.01) is not None


@given(
    st.fractions(0, 1, max_denominator=40),
    st.fractions(0, 1, max_denominator=40),
    st.sampled_from([(0.5, 0.5), (0.7, 0.3), (0.6, 0.4)]),
    st.sampled_from([5, 20, 60]),
    st.sampled_from([0.3, 0.6, 1.0]),
)
def test_find_witness_matches_brute_force(a, b, r, T, delta):
    w = find_witness((a, b), r, T, delta)
    ref = brute_witness((a, b), r, T, delta)
    if ref is None:
        assert w is None
    else:
        assert (w.q, w.p) == ref


def test_witness_serialization():
    w = find_witness((Fraction(1, 2), Fraction(1, 3)), (0.5, 0.5), 100, 0.1)
    d = w.to_dict()
    assert d["q"] == 6 and d["p"] == [3, 2]
    assert isinstance(w, ApproximationWitness)


def test_default_grid_endpoints():
    g = default_grid(2, 1e6, 2)
    assert g[0] == 2 and g[-1] == 1e6
    assert all(b > a for a, b in zip(g, g[1:]))


def test_scan_rational_point():
    rep = sing_scan((Fraction(1, 2), Fraction(1, 3)), (0.5, 0.5), delta_schedule=(0.5, 0.2, 0.05))
    for i, d in enumerate(rep.delta_schedule):
        for T, wit in zip(rep.grid, rep.table[i]):
            if T > 6 / d:
                assert wit is not None and wit.quasinorm_value == 0
    # frozen from the run: first grid T from which witnesses persist
    assert [rep.t0(i) for i in range(3)] == [16, 32, 128]
    assert rep.verdict(0).startswith("consistent-with-singular")


def test_scan_golden_refuted():
    grid = default_grid(100, 1e6, 2)
    rep = sing_scan([PHI_FRAC_60], [1], grid=grid, delta_schedule=(0.2,))
    assert rep.failures(0) == list(rep.grid)
    assert not any(fibonacci_has_witness(T, 0.2) for T in grid)
    assert rep.verdict(0).startswith("refuted")


def test_sandwich_rational():
    res = sandwich_check((Fraction(1, 2), Fraction(1, 3)), (0.5, 0.5), 6, 0.3)
    assert (res.lhs, res.mid, res.rhs) == (True, True, True)


def test_sandwich_contrapositive():
    # no witness at delta = eps forces the whole chain false
    res = sandwich_check([PHI_FRAC_60], [1], 5.0, 0.2)
    assert not res.rhs and not res.mid and not res.lhs
    assert res.consistent


def test_sandwich_preconditions():
    with pytest.raises(ValueError):
        sandwich_check((0.3, 0.4), (0.5, 0.5), 0.0, 1.5)


def test_total_irrationality_examples():
    assert not totally_irrational_screen((Fraction(1, 2), Fraction(1, 3)), 3)
    assert totally_irrational_screen((math.sqrt(2) - 1, math.sqrt(3) - 1), 100)
    assert not totally_irrational_screen((math.sqrt(2) - 1, 2 * math.sqrt(2) - 2), 2)
