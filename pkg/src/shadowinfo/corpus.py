"""Canonical instances and a seeded generator of random bounded instances."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .problemfile import IntegrandData, ProblemData

INSTANCE_NAMES = ("INST-A", "INST-B", "INST-C", "INST-D")


def _abs_shift(d):
    return IntegrandData(pieces=[([1.0], -d), ([-1.0], d)])


def inst_a() -> ProblemData:
    """Newsvendor-like: h(x, w) = |x - d(w)|, d = (0, 2), x_0 decided before d is seen."""
    return ProblemData(
        name="INST-A",
        dims=[1],
        scenarios=[("w1", 0.5), ("w2", 0.5)],
        partitions=[[["w1", "w2"]]],
        integrands={"w1": _abs_shift(0.0), "w2": _abs_shift(2.0)},
    )


def inst_b() -> ProblemData:
    """Two-stage: h = |x0| + |x0 + x1 - d(w)|, x1 chosen after d is revealed."""

    def integrand(d):
        pieces = []
        for s1 in (1.0, -1.0):
            for s2 in (1.0, -1.0):
                pieces.append(([s1 + s2, s2], -s2 * d))
        return IntegrandData(pieces=pieces)

    return ProblemData(
        name="INST-B",
        dims=[1, 1],
        scenarios=[("w1", 0.5), ("w2", 0.5)],
        partitions=[[["w1", "w2"]], [["w1"], ["w2"]]],
        integrands={"w1": integrand(0.0), "w2": integrand(2.0)},
    )


def inst_c() -> ProblemData:
    return ProblemData(
        name="INST-C",
        dims=[1],
        scenarios=[("w1", 1.0)],
        partitions=[[["w1"]]],
        integrands={"w1": _abs_shift(0.0)},
    )


def inst_d() -> ProblemData:
    """INST-A with perfect information at stage 0."""
    data = inst_a()
    data.name = "INST-D"
    data.partitions = [[["w1"], ["w2"]]]
    return data


def infeasible_instance() -> ProblemData:
    """Indicator of {x <= -1, x >= 0}: empty domain."""
    return ProblemData(
        name="INFEASIBLE",
        dims=[1],
        scenarios=[("w1", 1.0)],
        partitions=[[["w1"]]],
        integrands={"w1": IntegrandData(G=[[1.0], [-1.0]], g=[-1.0, 0.0])},
    )


def canonical(name: str) -> ProblemData:
    return {"INST-A": inst_a, "INST-B": inst_b, "INST-C": inst_c, "INST-D": inst_d}[name]()


def _random_refinement(rng, atoms, max_split):
    out = []
    for atom in atoms:
        atom = list(atom)
        rng.shuffle(atom)
        k = int(rng.integers(1, min(max_split, len(atom)) + 1))
        cuts = sorted(rng.choice(np.arange(1, len(atom)), size=k - 1, replace=False).tolist()) if k > 1 else []
        bounds = [0, *cuts, len(atom)]
        out.extend(sorted(atom[bounds[i]:bounds[i + 1]]) for i in range(k))
    return out


def random_instance(seed: int, max_T: int = 2, max_scenarios: int = 6, max_dim: int = 2, max_pieces: int = 4) -> ProblemData:
    """Random tree with max-affine integrands restricted to a box.

    The box keeps every integrand proper with a bounded domain, so the primal
    problem is feasible and bounded by construction.
    """
    rng = np.random.default_rng(seed)
    T = int(rng.integers(0, max_T + 1))
    S = int(rng.integers(1, max_scenarios + 1))
    dims = [int(rng.integers(1, max_dim + 1)) for _ in range(T + 1)]
    n = sum(dims)
    ids = [f"s{i}" for i in range(S)]
    weights = rng.integers(1, 10, S).astype(float)
    probs = weights / weights.sum()
    probs[-1] = 1.0 - probs[:-1].sum()
    atoms = [ids]
    partitions = []
    for t in range(T + 1):
        atoms = _random_refinement(rng, atoms, 3)
        partitions.append([list(a) for a in atoms])
    integrands = {}
    for sid in ids:
        k = int(rng.integers(1, max_pieces + 1))
        pieces = [
            (np.round(rng.uniform(-2, 2, n), 2).tolist(), float(np.round(rng.uniform(-2, 2), 2)))
            for _ in range(k)
        ]
        bound = np.round(rng.uniform(1.0, 3.0, n), 2)
        G = np.vstack([np.eye(n), -np.eye(n)]).tolist()
        g = np.concatenate([bound, bound]).tolist()
        integrands[sid] = IntegrandData(pieces=pieces, G=G, g=g)
    return ProblemData(
        name=f"RANDOM-{seed}",
        dims=dims,
        scenarios=list(zip(ids, probs.tolist())),
        partitions=partitions,
        integrands=integrands,
    )


RANDOM_SEEDS = tuple(range(20))


def random_corpus(seeds=RANDOM_SEEDS) -> list[ProblemData]:
    return [random_instance(s) for s in seeds]


def all_instances() -> list[ProblemData]:
    return [canonical(n) for n in INSTANCE_NAMES] + random_corpus()


def write_corpus(directory) -> list[Path]:
    """Write every corpus instance plus an optimal (x, v) sidecar for each."""
    from .problemfile import emit
    from .shadow import solve_dual, solve_primal

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for data in all_instances():
        path = directory / f"{data.name}.json"
        emit(data, path)
        program = data.to_program()
        pr = solve_primal(program)
        dr = solve_dual(program, pr.value)
        pair = {"x": pr.x.flat().tolist(), "v": dr.v.flat().tolist()}
        (directory / f"{data.name}.pair.json").write_text(json.dumps(pair, indent=1) + "\n")
        written.append(path)
    bad = infeasible_instance()
    emit(bad, directory / f"{bad.name}.json")
    written.append(directory / f"{bad.name}.json")
    return written


if __name__ == "__main__":
    import sys

    for p in write_corpus(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "data"):
        print(p)
