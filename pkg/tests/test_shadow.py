import numpy as np
import pytest

from oracles import grid_minimum, reference_value
from shadowinfo.corpus import infeasible_instance, inst_a
from shadowinfo.errors import DimensionMismatch, ValidationError
from shadowinfo.filtration import Process, adapted_projection, build_space, in_annihilator
from shadowinfo.lpcore import LpStatus
from shadowinfo.polycalc import linear, max_affine
from shadowinfo.shadow import (
    StochasticProgram,
    expected_conjugate,
    random_adapted,
    random_annihilator_element,
    solve_dual,
    solve_primal,
    subgradient_inequality_sample,
    value_function,
    verify_shadow_price,
)


def proc(values):
    return Process.from_flat((1,), np.array(values, dtype=float).reshape(-1, 1))


def test_inst_a_primal(programs):
    rep = solve_primal(programs["INST-A"])
    grid, _ = grid_minimum(lambda c: (abs(c[0]) + abs(c[0] - 2.0)) / 2, [-3.0], [5.0], 1e-3)
    assert rep.status is LpStatus.OPTIMAL
    assert rep.value == pytest.approx(grid, abs=1e-9)
    assert rep.value == pytest.approx(1.0, abs=1e-9)
    assert 0.0 - 1e-9 <= rep.x.flat()[0, 0] <= 2.0 + 1e-9


def test_inst_b_primal(programs):
    rep = solve_primal(programs["INST-B"])

    def per_scenario_best(x0, d):
        return min(abs(x0) + abs(x0 + x1 - d) for x1 in np.linspace(-4, 4, 801))

    grid, _ = grid_minimum(lambda x: 0.5 * per_scenario_best(x[0], 0.0) + 0.5 * per_scenario_best(x[0], 2.0), [-2.0], [2.0], 0.01)
    assert rep.value == pytest.approx(0.0, abs=1e-9)
    assert grid == pytest.approx(0.0, abs=1e-9)
    x = rep.x.flat()
    assert x[:, 0] == pytest.approx([0.0, 0.0], abs=1e-9)
    assert x[:, 1] == pytest.approx([0.0, 2.0], abs=1e-9)


def test_inst_c_primal(programs):
    assert solve_primal(programs["INST-C"]).value == pytest.approx(0.0, abs=1e-12)


def test_value_function_examples(programs):
    p = programs["INST-A"]
    assert value_function(p) == pytest.approx(1.0)
    assert value_function(p, proc([0.7, 0.7])) == pytest.approx(1.0)
    assert value_function(p, proc([0.0, 2.0])) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DimensionMismatch):
        value_function(p, Process.zeros((1,), 3))


def test_inst_a_dual(programs):
    rep = solve_dual(programs["INST-A"])
    assert rep.status is LpStatus.OPTIMAL
    assert rep.value == pytest.approx(-1.0, abs=1e-9)
    assert rep.v.flat()[:, 0] == pytest.approx([1.0, -1.0], abs=1e-9)
    assert rep.gap <= 1e-7
    assert rep.annihilator_residual <= 1e-12


def test_inst_d_dual_is_zero(programs):
    rep = solve_dual(programs["INST-D"])
    assert np.allclose(rep.v.flat(), 0.0, atol=1e-12)
    assert rep.value == pytest.approx(0.0, abs=1e-12)


def test_inst_b_dual(programs):
    rep = solve_dual(programs["INST-B"])
    assert rep.value == pytest.approx(0.0, abs=1e-9)
    assert expected_conjugate(programs["INST-B"], Process.zeros((1, 1), 2)) == pytest.approx(0.0, abs=1e-12)


def test_verify_shadow_price_examples(programs):
    p = programs["INST-A"]
    x = proc([1.0, 1.0])
    good = verify_shadow_price(p, x, proc([1.0, -1.0]))
    assert good.passed
    assert good.fenchel_residuals == pytest.approx([0.0, 0.0], abs=1e-12)
    zero = verify_shadow_price(p, x, proc([0.0, 0.0]))
    assert zero.in_annihilator and not zero.duality_ok and not zero.passed
    assert zero.expected_hstar == pytest.approx(0.0)
    split = verify_shadow_price(p, proc([0.0, 2.0]), proc([1.0, -1.0]))
    assert not split.adapted and not split.passed


def test_subgradient_sample_examples(programs):
    p = programs["INST-A"]
    v = proc([1.0, -1.0])
    rep = subgradient_inequality_sample(p, v, samples=20, seed=1, extra=[proc([0.0, 2.0])])
    assert rep.passed
    assert rep.margins[0] == pytest.approx(0.0, abs=1e-12)             # z = 0
    adapted = [m for m, k in zip(rep.margins, rep.kinds) if k == "adapted"]
    assert adapted == pytest.approx([0.0] * len(adapted), abs=1e-9)
    assert rep.margins[-1] == pytest.approx(0.0, abs=1e-9)             # tight perfect-foresight shift


def test_wrong_price_violates_sampled_inequality(programs):
    rep = subgradient_inequality_sample(programs["INST-A"], proc([-1.0, 1.0]), samples=50, seed=0)
    assert not rep.passed


def test_infeasible_program_certificate():
    p = infeasible_instance().to_program()
    rep = solve_primal(p)
    assert rep.status is LpStatus.INFEASIBLE
    assert rep.lp.farkas_value <= -1e-9
    assert rep.certificate_check["ok"]


def test_unbounded_program():
    space = build_space([("w", 1.0)], [[["w"]]])
    p = StochasticProgram(space, (1,), (linear([1.0]),))
    rep = solve_primal(p)
    assert rep.status is LpStatus.UNBOUNDED
    assert rep.certificate_check["ok"]
    assert value_function(p) == -np.inf


def test_program_validation():
    space = build_space([("w", 1.0)], [[["w"]]])
    with pytest.raises(ValidationError):
        StochasticProgram(space, (2,), (max_affine([([1.0], 0.0)]),))


# ---------------------------------------------------------------- corpus-wide properties


def test_primal_matches_independent_lp(random_data):
    for data in [inst_a(), *random_data]:
        status, ref = reference_value(data)
        assert status == "optimal"
        assert solve_primal(data.to_program()).value == pytest.approx(ref, abs=1e-7), data.name


def test_weak_duality_on_random_annihilator_elements(random_data):
    rng = np.random.default_rng(5)
    for data in random_data:
        p = data.to_program()
        phi0 = value_function(p)
        for _ in range(5):
            v = random_annihilator_element(p, rng, box=2.0)
            assert in_annihilator(p.space, v)[0]
            assert -expected_conjugate(p, v) <= phi0 + 1e-7


def test_translation_invariance(random_data):
    rng = np.random.default_rng(6)
    for data in random_data[:8]:
        p = data.to_program()
        z = Process.from_flat(p.dims, rng.uniform(-0.3, 0.3, (p.space.num_scenarios, p.n)))
        w = random_adapted(p, rng, box=0.3)
        assert value_function(p, z + w) == pytest.approx(value_function(p, z), abs=1e-8)


def test_corpus_cross_check(programs, random_data):
    for p in [*programs.values(), *(d.to_program() for d in random_data)]:
        pr = solve_primal(p)
        dr = solve_dual(p, pr.value)
        assert dr.gap <= 1e-7
        assert verify_shadow_price(p, pr.x, dr.v).passed, p.name
        assert np.allclose(adapted_projection(p.space, pr.x).flat(), pr.x.flat())
