import logging

import numpy as np
import pytest

from shadowinfo.dynprog import (
    conjugate_tables_gap,
    dual_recursion,
    lineality_check,
    primal_recursion,
    verify_dual_dp,
    verify_primal_dp,
)
from shadowinfo.errors import ImproperRecursion
from shadowinfo.filtration import Process, build_space
from shadowinfo.integrand import IntegrandFamily, jensen_check
from shadowinfo.polycalc import box_indicator, conjugate, evaluate, max_affine
from shadowinfo.shadow import (
    StochasticProgram,
    random_adapted,
    random_annihilator_element,
    solve_dual,
    solve_primal,
)

POINTS = np.linspace(-2.0, 2.5, 10)


def single(h, dims=(1,)):
    space = build_space([("w", 1.0)], [[["w"]]] * len(dims))
    return StochasticProgram(space, tuple(dims), (h,))


def test_inst_b_primal_table(programs):
    table = primal_recursion(programs["INST-B"])
    for x0 in POINTS:
        assert evaluate(table.h[0][0], [x0]) == pytest.approx(abs(x0), abs=1e-7)
        for s in range(2):
            assert evaluate(table.htilde_at(0, s), [x0]) == pytest.approx(abs(x0), abs=1e-7)
    assert table.value == pytest.approx(0.0, abs=1e-12)


def test_deterministic_collapse(programs):
    p = programs["INST-C"]
    table = primal_recursion(p)
    for x in POINTS:
        assert evaluate(table.h[0][0], [x]) == pytest.approx(abs(x))


def test_single_stage_is_expectation(programs):
    table = primal_recursion(programs["INST-A"])
    for x in POINTS:
        assert evaluate(table.h[0][0], [x]) == pytest.approx((abs(x) + abs(x - 2.0)) / 2)
    assert table.value == pytest.approx(1.0)


def test_lineality_examples(programs):
    assert lineality_check(programs["INST-A"]).linear
    assert not lineality_check(single(max_affine([([1.0], 0.0), ([0.0], 0.0)]))).linear
    assert lineality_check(single(box_indicator([-1.0], [1.0]))).linear
    # a line in the recession cone: h(x) = |x0 - x1| is constant along (1, 1)
    assert lineality_check(single(max_affine([([1.0, -1.0], 0.0), ([-1.0, 1.0], 0.0)]), dims=(1, 1))).linear


def test_lineality_advisory_and_strict(caplog):
    p = single(max_affine([([1.0], 0.0), ([0.0], 0.0)]))
    with caplog.at_level(logging.WARNING):
        table = primal_recursion(p)
    assert "lineality" in caplog.text
    assert table.value == pytest.approx(0.0)
    with pytest.raises(ImproperRecursion):
        primal_recursion(p, strict_lineality=True)


def test_improper_recursion_names_stage():
    p = single(max_affine([([0.0, 1.0], 0.0)]), dims=(1, 1))
    with pytest.raises(ImproperRecursion) as err:
        primal_recursion(p, check_lineality=False)
    assert err.value.stage == 1


def test_verify_primal_dp_examples(programs):
    p = programs["INST-B"]
    table = primal_recursion(p)
    good = Process((1, 1), (np.zeros((2, 1)), np.array([[0.0], [2.0]])))
    rep = verify_primal_dp(table, good)
    assert rep.optimal
    assert rep.expected_values == pytest.approx([0.0, 0.0], abs=1e-9)
    bad = Process((1, 1), (np.ones((2, 1)), np.array([[-1.0], [1.0]])))
    rep = verify_primal_dp(table, bad)
    assert not rep.optimal
    assert rep.expected_values[0] == pytest.approx(1.0)


def test_primal_inequality_on_random_adapted(programs, random_data):
    rng = np.random.default_rng(0)
    for p in [programs["INST-B"], *(d.to_program() for d in random_data[:5])]:
        table = primal_recursion(p)
        phi0 = solve_primal(p).value
        for _ in range(10):
            rep = verify_primal_dp(table, random_adapted(p, rng, box=1.0), phi0=phi0)
            assert min(rep.margins) >= -1e-6


def test_inst_a_dual_table(programs):
    table = dual_recursion(programs["INST-A"])
    assert evaluate(table.g[0][0], [0.0]) == pytest.approx(-1.0)


def test_dual_table_trivial_cases(programs):
    c = dual_recursion(programs["INST-C"])
    hstar = conjugate(programs["INST-C"].integrands[0])
    d = dual_recursion(programs["INST-D"])
    for v in (-1.0, -0.3, 0.0, 0.8, 1.0, 1.5):
        assert evaluate(c.g[0][0], [v]) == pytest.approx(evaluate(hstar, [v]))
        for s in range(2):
            hs = conjugate(programs["INST-D"].integrands[s])
            k = programs["INST-D"].space.atom_of(0, s)
            assert evaluate(d.g[0][k], [v]) == pytest.approx(evaluate(hs, [v]))


def test_verify_dual_dp_at_optimum(programs):
    p = programs["INST-A"]
    table = dual_recursion(p)
    x = Process((1,), (np.ones((2, 1)),))
    v = Process((1,), (np.array([[1.0], [-1.0]]),))
    rep = verify_dual_dp(table, x, v, 1.0)
    assert rep.dual_optimal and rep.jointly_optimal
    assert rep.expected_values == pytest.approx([-1.0])
    assert rep.fenchel_sums == pytest.approx([0.0], abs=1e-9)


def test_verify_dual_dp_non_optimal_primal(programs):
    p = programs["INST-A"]
    table = dual_recursion(p)
    x = Process((1,), (np.full((2, 1), 3.0),))
    rep = verify_dual_dp(table, x, Process.zeros((1,), 2), 1.0)
    # independent values: E0h(3) = (|3| + |3 - 2|) / 2 and min E0h over a grid
    e0h_at_3 = (abs(3.0) + abs(3.0 - 2.0)) / 2
    xs = np.linspace(-5, 5, 10001)
    g0_at_0 = -float(np.min((np.abs(xs) + np.abs(xs - 2.0)) / 2))
    assert rep.expected_values == pytest.approx([g0_at_0])
    assert rep.margins == pytest.approx([0.0], abs=1e-9)
    assert rep.dual_optimal and not rep.jointly_optimal
    assert rep.fenchel_sums == pytest.approx([e0h_at_3 + g0_at_0]) == [1.0]


def test_dual_inequality_on_random_annihilator(programs):
    p = programs["INST-B"]
    table = dual_recursion(p)
    rng = np.random.default_rng(2)
    for _ in range(10):
        v = random_annihilator_element(p, rng, box=1.5)
        rep = verify_dual_dp(table, None, v, 0.0)
        assert min(rep.margins) >= -1e-6


def test_both_verifiers_accept_solver_optima(programs, random_data):
    for p in [*programs.values(), *(d.to_program() for d in random_data[:6])]:
        pr = solve_primal(p)
        dr = solve_dual(p, pr.value)
        ptab, dtab = primal_recursion(p), dual_recursion(p)
        assert ptab.value == pytest.approx(pr.value, abs=1e-7)
        assert verify_primal_dp(ptab, pr.x, phi0=pr.value).optimal
        rep = verify_dual_dp(dtab, pr.x, dr.v, pr.value)
        assert rep.dual_optimal and rep.jointly_optimal, p.name


def test_tables_are_conjugate(programs, random_data):
    for p in [programs["INST-A"], programs["INST-B"], *(d.to_program() for d in random_data[:4])]:
        assert conjugate_tables_gap(primal_recursion(p), dual_recursion(p)) <= 1e-6


def test_jensen_step_inside_dual_recursion(programs):
    p = programs["INST-B"]
    table = dual_recursion(p)
    rng = np.random.default_rng(4)
    family = IntegrandFamily(p.space.probs, [table.gtilde_at(0, s) for s in range(2)])
    for _ in range(5):
        w = rng.uniform(-1.5, 1.5, (2, 1))
        assert jensen_check(family, w, p.space.atoms(0), tol=1e-7).holds
