import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import certificate_holds, highs
from shadowinfo.errors import DimensionMismatch
from shadowinfo.lpcore import LpProblem, LpStatus, check_certificate, solve, tolerances


def test_bounded_example():
    p = LpProblem(c=[-1.0], G=[[1.0], [-1.0]], g=[3.0, 0.0])
    sol = solve(p)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(-3.0)
    assert certificate_holds(p, sol)


def test_infeasible_example():
    p = LpProblem(c=[0.0], G=[[1.0], [-1.0]], g=[-1.0, 0.0])
    sol = solve(p)
    assert sol.status is LpStatus.INFEASIBLE
    assert certificate_holds(p, sol)
    assert sol.farkas_value <= -1e-9


def test_unbounded_example():
    p = LpProblem(c=[-1.0], G=[[-1.0]], g=[0.0])
    sol = solve(p)
    assert sol.status is LpStatus.UNBOUNDED
    assert sol.ray[0] > 0
    assert certificate_holds(p, sol)


def test_equality_rows_and_constant():
    # min x + y + 5 s.t. x + y = 2, x >= 0, y >= 0
    p = LpProblem(c=[1.0, 1.0], G=[[-1.0, 0.0], [0.0, -1.0]], g=[0.0, 0.0], A=[[1.0, 1.0]], a=[2.0], c0=5.0)
    sol = solve(p)
    assert sol.objective == pytest.approx(7.0)
    assert sol.eq_duals[0] == pytest.approx(-1.0)
    assert certificate_holds(p, sol)


def test_no_constraints():
    assert solve(LpProblem(c=[0.0, 0.0])).status is LpStatus.OPTIMAL
    assert solve(LpProblem(c=[1.0])).status is LpStatus.UNBOUNDED


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        LpProblem(c=[1.0, 2.0], G=[[1.0]], g=[1.0])


def test_iteration_budget_reports_failure():
    rng = np.random.default_rng(3)
    G = rng.uniform(-1, 1, (12, 6))
    p = LpProblem(c=rng.uniform(-1, 1, 6), G=np.vstack([G, np.eye(6), -np.eye(6)]), g=np.ones(24))
    assert solve(p, max_iter=1).status is LpStatus.NUMERICAL_FAILURE
    assert solve(p).status is LpStatus.OPTIMAL


def test_tolerance_context_restores_defaults():
    from shadowinfo import lpcore

    before = lpcore.DEFAULT_TOLERANCES
    with tolerances(feas=1e-9) as tol:
        assert lpcore.DEFAULT_TOLERANCES.feas == 1e-9 == tol.feas
    assert lpcore.DEFAULT_TOLERANCES is before


def test_deterministic():
    rng = np.random.default_rng(7)
    G = rng.integers(-3, 4, (10, 5)).astype(float)
    p = LpProblem(c=rng.integers(-3, 4, 5).astype(float), G=G, g=rng.integers(0, 5, 10).astype(float))
    a, b = solve(p), solve(p)
    assert a.status is b.status
    if a.x is not None:
        assert np.array_equal(a.x, b.x)


def test_degenerate_cycling_example():
    # Beale's example cycles under the textbook largest-coefficient rule.
    c = [-0.75, 150.0, -0.02, 6.0]
    G = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]] + (-np.eye(4)).tolist()
    g = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    p = LpProblem(c=c, G=G, g=g)
    sol = solve(p)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(-0.05)
    assert certificate_holds(p, sol)


@st.composite
def small_lps(draw):
    n = draw(st.integers(1, 8))
    p = draw(st.integers(0, 10))
    q = draw(st.integers(0, 3))
    ints = st.integers(-3, 3)
    G = draw(arrays(float, (p, n), elements=ints))
    g = draw(arrays(float, (p,), elements=st.integers(-2, 5)))
    A = draw(arrays(float, (q, n), elements=st.integers(-2, 2)))
    a = draw(arrays(float, (q,), elements=st.integers(-2, 2)))
    c = draw(arrays(float, (n,), elements=ints))
    return LpProblem(c=c, G=G, g=g, A=A, a=a)


@given(small_lps())
def test_matches_highs_and_certifies(p):
    sol = solve(p)
    status, value, _ = highs(p.c, p.G, p.g, p.A, p.a)
    if status in ("optimal", "infeasible", "unbounded"):
        assert sol.status.value == status
    if status == "optimal":
        assert sol.objective == pytest.approx(value, abs=1e-7)
    assert certificate_holds(p, sol)
    assert check_certificate(p, sol)["ok"]
