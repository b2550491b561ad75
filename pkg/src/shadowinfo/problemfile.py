"""JSON problem files.

Layout::

    {
      "name": "INST-A",
      "stages": 1,
      "dims": [1],
      "scenarios": [{"id": "w1", "prob": "0.5"}, {"id": "w2", "prob": "0.5"}],
      "partitions": [[["w1", "w2"]]],
      "integrands": {
        "w1": {"pieces": [{"slope": [1], "intercept": 0}, ...],
               "ineq": {"G": [[...]], "g": [...]},
               "eq": {"A": [[...]], "a": [...]}},
        ...
      }
    }

Probabilities and coefficients may be JSON numbers or decimal strings; they
are emitted as ``repr`` strings so a round trip is bit-exact.  Each scenario's
integrand is the max of its affine pieces (zero when there are none) plus the
indicator of its inequality and equality blocks.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError, ShadowInfoError, ValidationError
from .filtration import build_space
from .polycalc import PolyFun, add, constant, indicator, max_affine
from .shadow import StochasticProgram


@dataclass
class IntegrandData:
    pieces: list[tuple[list[float], float]] = field(default_factory=list)
    G: list[list[float]] | None = None
    g: list[float] | None = None
    A: list[list[float]] | None = None
    a: list[float] | None = None

    def to_polyfun(self, n: int) -> PolyFun:
        f = max_affine(self.pieces) if self.pieces else constant(n, 0.0)
        if f.dim != n:
            raise ValidationError(f"pieces have dimension {f.dim}, expected {n}")
        if self.G is not None or self.A is not None:
            f = add(f, indicator(G=self.G, g=self.g, A=self.A, a=self.a, dim=n))
        return f

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "pieces": [{"slope": [repr(float(s)) for s in sl], "intercept": repr(float(b))} for sl, b in self.pieces]
        }
        if self.G is not None:
            out["ineq"] = {"G": [[repr(float(v)) for v in row] for row in self.G], "g": [repr(float(v)) for v in self.g]}
        if self.A is not None:
            out["eq"] = {"A": [[repr(float(v)) for v in row] for row in self.A], "a": [repr(float(v)) for v in self.a]}
        return out


@dataclass
class ProblemData:
    name: str
    dims: list[int]
    scenarios: list[tuple[str, float]]
    partitions: list[list[list[str]]]
    integrands: dict[str, IntegrandData]

    def to_program(self) -> StochasticProgram:
        try:
            space = build_space(self.scenarios, self.partitions)
        except ValidationError:
            raise
        n = sum(self.dims)
        funcs = []
        for sid in space.ids:
            if sid not in self.integrands:
                raise ValidationError(f"integrands: scenario {sid!r} has no integrand")
            try:
                funcs.append(self.integrands[sid].to_polyfun(n))
            except ShadowInfoError as exc:
                raise ValidationError(f"integrands.{sid}: {exc}") from exc
        return StochasticProgram(space, tuple(self.dims), tuple(funcs), self.name)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "stages": len(self.dims),
            "dims": list(self.dims),
            "scenarios": [{"id": sid, "prob": repr(float(p))} for sid, p in self.scenarios],
            "partitions": self.partitions,
            "integrands": {sid: f.to_json() for sid, f in self.integrands.items()},
        }


def _num(value, where) -> float:
    if isinstance(value, bool):
        raise ParseError("expected a number", where)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ParseError(f"expected a number, got {value!r}", where) from None


def _vec(value, where) -> list[float]:
    if not isinstance(value, list):
        raise ParseError("expected a list of numbers", where)
    return [_num(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _mat(value, where) -> list[list[float]]:
    if not isinstance(value, list):
        raise ParseError("expected a list of rows", where)
    return [_vec(row, f"{where}[{i}]") for i, row in enumerate(value)]


def _require(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"missing field {key!r}", where)
    return obj[key]


def problem_from_json(doc: dict) -> ProblemData:
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    dims = _require(doc, "dims", "dims")
    if not isinstance(dims, list) or not all(isinstance(d, int) and d >= 0 for d in dims) or not dims:
        raise ParseError("dims must be a non-empty list of non-negative integers", "dims")
    if "stages" in doc and doc["stages"] != len(dims):
        raise ParseError(f"stages={doc['stages']} but {len(dims)} dims given", "stages")
    raw_scen = _require(doc, "scenarios", "scenarios")
    if not isinstance(raw_scen, list):
        raise ParseError("expected a list", "scenarios")
    scenarios = []
    for i, item in enumerate(raw_scen):
        where = f"scenarios[{i}]"
        sid = str(_require(item, "id", where))
        scenarios.append((sid, _num(_require(item, "prob", where), f"{where}.prob")))
    partitions = _require(doc, "partitions", "partitions")
    if not isinstance(partitions, list) or not all(isinstance(p, list) for p in partitions):
        raise ParseError("expected a list of partitions", "partitions")
    if len(partitions) != len(dims):
        raise ParseError(f"{len(partitions)} partitions for {len(dims)} stages", "partitions")
    parts = []
    for t, part in enumerate(partitions):
        atoms = []
        for k, atom in enumerate(part):
            if not isinstance(atom, list):
                raise ParseError("atom must be a list of scenario ids", f"partitions[{t}][{k}]")
            atoms.append([str(s) for s in atom])
        parts.append(atoms)
    raw_int = _require(doc, "integrands", "integrands")
    if not isinstance(raw_int, dict):
        raise ParseError("expected an object keyed by scenario id", "integrands")
    integrands = {}
    for sid, entry in raw_int.items():
        where = f"integrands.{sid}"
        if not isinstance(entry, dict):
            raise ParseError("expected an object", where)
        pieces = []
        for i, piece in enumerate(entry.get("pieces", [])):
            pw = f"{where}.pieces[{i}]"
            pieces.append((_vec(_require(piece, "slope", pw), f"{pw}.slope"), _num(_require(piece, "intercept", pw), f"{pw}.intercept")))
        data = IntegrandData(pieces=pieces)
        if "ineq" in entry:
            data.G = _mat(_require(entry["ineq"], "G", f"{where}.ineq"), f"{where}.ineq.G")
            data.g = _vec(_require(entry["ineq"], "g", f"{where}.ineq"), f"{where}.ineq.g")
        if "eq" in entry:
            data.A = _mat(_require(entry["eq"], "A", f"{where}.eq"), f"{where}.eq.A")
            data.a = _vec(_require(entry["eq"], "a", f"{where}.eq"), f"{where}.eq.a")
        integrands[str(sid)] = data
    return ProblemData(str(doc.get("name", "")), dims, scenarios, parts, integrands)


def load_problem(path) -> ProblemData:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(str(exc), str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from exc
    return problem_from_json(doc)


def parse(path) -> StochasticProgram:
    """Read and validate a problem file."""
    return load_problem(path).to_program()


def emit(data: ProblemData, path=None) -> str:
    text = json.dumps(data.to_json(), indent=2)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def load_pair(path, dims, num_scenarios):
    """Read a sidecar ``{"x": ..., "v": ...}`` holding two processes.

    Each process is either an (S, n) array with one row per scenario (stages
    concatenated, as in the reports) or a list of one (S, n_t) array per stage.
    """
    from .filtration import Process

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), str(path)) from exc
    n = sum(dims)
    out = {}
    for key in ("x", "v"):
        raw = _require(doc, key, key)
        if not isinstance(raw, list) or not raw:
            raise ParseError("expected a non-empty list", key)
        stage_major = isinstance(raw[0], list) and bool(raw[0]) and isinstance(raw[0][0], list)
        if not stage_major:
            flat = np.array(_mat(raw, key), dtype=float)
            if flat.shape != (num_scenarios, n):
                raise ParseError(f"expected {num_scenarios} rows of length {n}, got shape {flat.shape}", key)
            out[key] = Process.from_flat(tuple(dims), flat)
            continue
        if len(raw) != len(dims):
            raise ParseError(f"expected {len(dims)} stage arrays", key)
        arrays = []
        for t, arr in enumerate(raw):
            mat = np.array(_mat(arr, f"{key}[{t}]"), dtype=float)
            if mat.shape != (num_scenarios, dims[t]):
                raise ParseError(f"expected shape ({num_scenarios}, {dims[t]}), got {mat.shape}", f"{key}[{t}]")
            arrays.append(mat)
        out[key] = Process(tuple(dims), tuple(arrays))
    return out["x"], out["v"]
