from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from coflowsched.simplex import InfeasibleError, IterationLimitError, SimplexError, UnboundedError, simplex


def dense_rows(A):
    return [[(j, a) for j, a in enumerate(row) if a != 0] for row in A]


def test_small_known_optimum():
    # min -x - y  s.t. x + 2y <= 4, 3x + y <= 6
    res = simplex([-1, -1], dense_rows([[1, 2], [3, 1]]), ["<=", "<="], [4, 6])
    assert res.objective == pytest.approx(-2.8)
    assert res.x == pytest.approx([1.6, 1.2])


def test_exact_mode_returns_fractions():
    res = simplex([-1, -1], dense_rows([[1, 2], [3, 1]]), ["<=", "<="], [4, 6], exact=True)
    assert res.objective == Fraction(-14, 5)
    assert list(res.x) == [Fraction(8, 5), Fraction(6, 5)]


def test_equality_and_ge_rows():
    # min x + 2y  s.t. x + y = 3, x >= 1, y >= 1
    res = simplex([1, 2], dense_rows([[1, 1], [1, 0], [0, 1]]), ["=", ">=", ">="], [3, 1, 1], exact=True)
    assert res.objective == 4


def test_infeasible():
    with pytest.raises(InfeasibleError):
        simplex([1], [[(0, 1)], [(0, 1)]], ["<=", ">="], [1, 2])


def test_unbounded():
    with pytest.raises(UnboundedError):
        simplex([-1, 0], [[(0, 1), (1, -1)]], ["<="], [1])


def test_no_variables():
    with pytest.raises(SimplexError):
        simplex([], [], [], [])


def test_iteration_limit_reports_limit():
    A = np.arange(1, 31).reshape(5, 6) % 7 + 1
    with pytest.raises(IterationLimitError) as err:
        simplex([-1.0] * 6, dense_rows(A), ["<="] * 5, [10] * 5, max_iter=1)
    assert err.value.limit == 1


def test_beale_cycling_example_terminates():
    # classic example on which textbook Dantzig pricing cycles
    c = [Fraction(-3, 4), 150, Fraction(-1, 50), 6]
    A = [[Fraction(1, 4), -60, Fraction(-1, 25), 9], [Fraction(1, 2), -90, Fraction(-1, 50), 3], [0, 0, 1, 0]]
    for exact in (False, True):
        res = simplex(c, dense_rows(A), ["<="] * 3, [0, 0, 1], exact=exact)
        assert float(res.objective) == pytest.approx(-0.05)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_matches_highs_on_random_feasible_lps(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(2, 8), rng.integers(2, 10)
    A = rng.integers(-3, 6, size=(m, n)).astype(float)
    x0 = rng.random(n)
    slack = rng.random(m)
    senses = rng.choice(["<=", ">=", "="], size=m)
    b = A @ x0 + np.where(senses == "<=", slack, np.where(senses == ">=", -slack, 0.0))
    c = rng.integers(0, 5, size=n).astype(float)  # nonnegative costs keep it bounded
    res = simplex(list(c), dense_rows(A), list(senses), list(b))
    ub = [(A[i], b[i]) for i in range(m) if senses[i] == "<="] + [(-A[i], -b[i]) for i in range(m) if senses[i] == ">="]
    eq = [(A[i], b[i]) for i in range(m) if senses[i] == "="]
    ref = linprog(
        c,
        A_ub=np.array([r for r, _ in ub]) if ub else None,
        b_ub=np.array([v for _, v in ub]) if ub else None,
        A_eq=np.array([r for r, _ in eq]) if eq else None,
        b_eq=np.array([v for _, v in eq]) if eq else None,
        method="highs",
    )
    assert ref.status == 0
    assert res.objective == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)
    assert np.all(res.x >= 0)
    lhs = A @ res.x
    tol = 1e-7 * (1 + np.abs(b))
    assert np.all(np.where(senses == "<=", lhs <= b + tol, True))
    assert np.all(np.where(senses == ">=", lhs >= b - tol, True))
    assert np.all(np.where(senses == "=", np.abs(lhs - b) <= tol, True))
