import json
import subprocess
import sys

import numpy as np
import pytest

from shadowinfo.cli import bundled_instances, jsonable, run
from shadowinfo.corpus import all_instances, infeasible_instance, inst_a
from shadowinfo.errors import BadProbabilities, NonNestedPartition, ParseError
from shadowinfo.problemfile import emit, load_pair, load_problem, parse, problem_from_json
from shadowinfo.shadow import solve_dual, solve_primal

COMMANDS = ["validate", "solve", "shadow", "dp", "dual-dp", "verify", "conj"]


def write(tmp_path, doc, name="p.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


# ---------------------------------------------------------------- problem files


def test_parse_bundled_inst_a():
    from shadowinfo.cli import resolve_path

    p = parse(resolve_path("INST-A"))
    assert p.space.num_scenarios == 2 and p.T == 0 and p.n == 1


def test_parse_rejects_bad_probabilities(tmp_path):
    doc = inst_a().to_json()
    doc["scenarios"][1]["prob"] = "0.6"
    with pytest.raises(BadProbabilities):
        parse(write(tmp_path, doc))


def test_parse_rejects_non_nested(tmp_path):
    doc = infeasible_instance().to_json()
    doc.update(
        dims=[1, 1],
        stages=2,
        scenarios=[{"id": "a", "prob": 0.5}, {"id": "b", "prob": 0.5}],
        partitions=[[["a"], ["b"]], [["a", "b"]]],
        integrands={"a": {"pieces": [{"slope": [1, 0], "intercept": 0}]}, "b": {"pieces": [{"slope": [0, 1], "intercept": 0}]}},
    )
    with pytest.raises(NonNestedPartition):
        parse(write(tmp_path, doc))


@pytest.mark.parametrize(
    "mutate, where",
    [
        (lambda d: d.pop("dims"), "dims"),
        (lambda d: d["scenarios"][0].pop("prob"), "scenarios[0]"),
        (lambda d: d["integrands"]["w1"]["pieces"][0].update(slope="x"), "integrands.w1.pieces[0].slope"),
        (lambda d: d.update(stages=3), "stages"),
    ],
)
def test_parse_errors_are_located(tmp_path, mutate, where):
    doc = inst_a().to_json()
    mutate(doc)
    with pytest.raises(ParseError) as err:
        parse(write(tmp_path, doc))
    assert err.value.location == where


def test_parse_reports_json_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"dims": [1],\n "scenarios": [}')
    with pytest.raises(ParseError, match="line 2"):
        load_problem(path)


def test_round_trip_is_exact(tmp_path):
    for data in all_instances():
        path = tmp_path / f"{data.name}.json"
        text = emit(data, path)
        again = load_problem(path)
        assert emit(again) == text
        assert [p for _, p in again.scenarios] == [p for _, p in data.scenarios]
        a, b = solve_primal(data.to_program()), solve_primal(again.to_program())
        assert a.value == b.value
        assert np.array_equal(a.x.flat(), b.x.flat())


def test_string_numbers_accepted():
    doc = inst_a().to_json()
    doc["scenarios"] = [{"id": "w1", "prob": 0.5}, {"id": "w2", "prob": "0.5"}]
    assert problem_from_json(doc).scenarios[1] == ("w2", 0.5)


def test_pair_layouts(tmp_path):
    p = inst_a().to_program()
    flat = write(tmp_path, {"x": [[1.0], [1.0]], "v": [[1.0], [-1.0]]}, "flat.json")
    staged = write(tmp_path, {"x": [[[1.0], [1.0]]], "v": [[[1.0], [-1.0]]]}, "staged.json")
    for path in (flat, staged):
        x, v = load_pair(path, p.dims, 2)
        assert v.flat()[:, 0].tolist() == [1.0, -1.0]
    with pytest.raises(ParseError):
        load_pair(write(tmp_path, {"x": [[1.0]], "v": [[1.0], [2.0]]}, "bad.json"), p.dims, 2)


# ---------------------------------------------------------------- commands


def test_shadow_inst_a():
    code, rep = run(["shadow", "INST-A"])
    assert code == 0
    assert rep["phi0"] == pytest.approx(1.0)
    assert rep["dual_value"] == pytest.approx(-1.0)
    assert rep["shadow_price"] == [[1.0], [-1.0]]
    assert rep["gap"] <= 1e-7
    assert rep["certificate"]["passed"] and rep["subgradient_sample"]["passed"]
    assert rep["instance"]["digest"].startswith("sha256:")
    assert rep["wall_time"] >= 0


def test_solve_infeasible_file(tmp_path):
    path = tmp_path / "bad.json"
    emit(infeasible_instance(), path)
    code, rep = run(["solve", str(path)])
    assert code == 1
    cert = rep["primal"]["certificate"]
    assert cert["status"] == "infeasible"
    assert rep["primal"]["certificate_check"]["ok"]
    json.dumps(rep)


def test_unbounded_exit_code(tmp_path):
    doc = {
        "dims": [1],
        "scenarios": [{"id": "w", "prob": 1}],
        "partitions": [[["w"]]],
        "integrands": {"w": {"pieces": [{"slope": [1], "intercept": 0}]}},
    }
    code, rep = run(["solve", str(write(tmp_path, doc))])
    assert code == 2
    assert rep["phi0"] == "-inf"


def test_invalid_input_exit_code(tmp_path):
    doc = inst_a().to_json()
    doc["scenarios"][1]["prob"] = "0.6"
    code, rep = run(["validate", str(write(tmp_path, doc))])
    assert code == 3
    assert rep["error"]["type"] == "BadProbabilities"
    code, _ = run(["validate", str(tmp_path / "missing.json")])
    assert code == 3


def test_verification_failure_exit_code(tmp_path):
    pair = write(tmp_path, {"x": [[1.0], [1.0]], "v": [[0.0], [0.0]]}, "pair.json")
    code, rep = run(["verify", "INST-A", "--pair", str(pair)])
    assert code == 4
    assert rep["verified"] is False
    assert rep["certificate"]["duality_ok"] is False


def test_strict_lineality_flag(tmp_path):
    doc = {
        "dims": [1],
        "scenarios": [{"id": "w", "prob": 1}],
        "partitions": [[["w"]]],
        "integrands": {"w": {"pieces": [{"slope": [1], "intercept": 0}, {"slope": [0], "intercept": 0}]}},
    }
    path = str(write(tmp_path, doc))
    code, rep = run(["dp", path])
    assert code == 0 and rep["lineality"]["linear"] is False
    code, rep = run(["dp", path, "--strict-lineality"])
    assert code == 4 and rep["error"]["stage"] == 0


def test_conj_command():
    code, rep = run(["conj", "INST-A", "--scenario", "w2", "--points", "[[0.5], [2.0], [-1.0]]"])
    assert code == 0
    assert rep["values"] == [pytest.approx(1.0), "inf", pytest.approx(-2.0)]


def test_bundled_corpus_runs_every_command():
    names = [n for n in bundled_instances() if not n.endswith(".pair.json") and n != "INFEASIBLE.json"]
    assert len(names) == 24
    for name in names:
        for cmd in COMMANDS:
            code, rep = run([cmd, name])
            assert code == 0, (cmd, name, rep.get("error"))
            json.dumps(rep, allow_nan=False)


def test_bundled_files_match_generator():
    from shadowinfo.cli import resolve_path

    for data in all_instances():
        assert resolve_path(data.name).read_text() == emit(data) + "\n"


def test_reports_schema_stable():
    for cmd in COMMANDS:
        code, rep = run([cmd, "INST-B"])
        assert {"command", "instance", "exit_code", "wall_time"} <= rep.keys()
        assert rep["command"] == cmd

        def finite_or_tagged(obj):
            if isinstance(obj, dict):
                return all(finite_or_tagged(v) for v in obj.values())
            if isinstance(obj, list):
                return all(finite_or_tagged(v) for v in obj)
            if isinstance(obj, float):
                return np.isfinite(obj)
            return True

        assert finite_or_tagged(rep)


def test_jsonable_infinities():
    assert jsonable({"a": float("inf"), "b": [-np.inf, np.float64(2.0)], "c": np.array([1, 2])}) == {
        "a": "inf",
        "b": ["-inf", 2.0],
        "c": [1, 2],
    }


def test_entry_point_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "shadowinfo.cli", "shadow", "INST-A", "--samples", "5", "--seed", "3"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    rep = json.loads(proc.stdout)
    assert rep["subgradient_sample"]["num_samples"] == 5 + 4
    bad = subprocess.run(
        [sys.executable, "-m", "shadowinfo.cli", "solve", "INFEASIBLE"], capture_output=True, text=True, check=False
    )
    assert bad.returncode == 1
    assert json.loads(bad.stdout)["exit_code"] == 1
    assert "infeasible" in bad.stderr


def test_dual_solution_of_bundled_pairs_is_certified():
    for data in all_instances()[:4]:
        p = data.to_program()
        assert solve_dual(p).gap <= 1e-7
