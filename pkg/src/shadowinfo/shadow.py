"""Scenario-tree stochastic programs, their value function and shadow prices.

On a finite scenario set every strategy is bounded, so the value function

    phi(z) = inf { E h(x + z) : x adapted }

is computed by one LP, and shadow prices of information are the optimal
solutions of ``minimize E h*(v) over v with E_t v_t = 0`` (the annihilator of
the adapted processes).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lpcore
from .errors import DimensionMismatch, LpNumericalFailure, SampleEvaluationFailure
from .filtration import (
    FilteredSpace,
    Process,
    adapted_projection,
    adaptedness_residual,
    in_annihilator,
    pairing,
    project_annihilator,
)
from .lpcore import LpSolution, LpStatus
from .polycalc import INF, Lin, LpModel, PolyFun, conjugate, evaluate

DUALITY_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class StochasticProgram:
    space: FilteredSpace
    dims: tuple[int, ...]
    integrands: tuple[PolyFun, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "integrands", tuple(self.integrands))
        if len(self.dims) != self.space.num_stages:
            raise DimensionMismatch(f"{len(self.dims)} stage dimensions for {self.space.num_stages} stages")
        if len(self.integrands) != self.space.num_scenarios:
            raise DimensionMismatch("one integrand per scenario required")
        for s, h in enumerate(self.integrands):
            if h.dim != self.n:
                raise DimensionMismatch(f"integrand of scenario {self.space.ids[s]} has dimension {h.dim}, expected {self.n}")

    @property
    def n(self) -> int:
        return sum(self.dims)

    @property
    def T(self) -> int:
        return len(self.dims) - 1

    def offsets(self) -> np.ndarray:
        return np.cumsum([0, *self.dims])

    def zero_process(self) -> Process:
        return Process.zeros(self.dims, self.space.num_scenarios)

    def with_integrands(self, integrands, name=None) -> "StochasticProgram":
        return StochasticProgram(self.space, self.dims, tuple(integrands), self.name if name is None else name)


class AdaptedVariables:
    """One LP variable block per (stage, stage-t atom): adaptedness by construction."""

    def __init__(self, model: LpModel, space: FilteredSpace, dims: Sequence[int], upto: int | None = None):
        self.space = space
        self.dims = tuple(dims)
        last = len(dims) - 1 if upto is None else upto
        self.blocks = [
            [model.add_vars(dims[t]) for _ in space.atoms(t)] for t in range(last + 1)
        ]

    def cols(self, s: int) -> np.ndarray:
        return np.concatenate(
            [self.blocks[t][self.space.atom_of(t, s)] for t in range(len(self.blocks))]
        ).astype(int)

    def lin(self, s: int) -> Lin:
        return Lin.var(self.cols(s))

    def process(self, w: np.ndarray) -> Process:
        S = self.space.num_scenarios
        return Process.from_flat(self.dims[: len(self.blocks)], np.array([w[self.cols(s)] for s in range(S)]).reshape(S, -1))


def _value(sol: LpSolution) -> float:
    if sol.status is LpStatus.OPTIMAL:
        return sol.objective
    if sol.status is LpStatus.INFEASIBLE:
        return INF
    if sol.status is LpStatus.UNBOUNDED:
        return -INF
    raise LpNumericalFailure(sol.message or "LP failed")


@dataclass
class PrimalReport:
    status: LpStatus
    value: float
    x: Process | None = None
    scenario_values: np.ndarray | None = None
    lp: LpSolution | None = None
    certificate_check: dict | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "phi0": self.value,
            "certificate_check": self.certificate_check,
            "x": None if self.x is None else self.x.flat().tolist(),
            "scenario_values": None if self.scenario_values is None else self.scenario_values.tolist(),
            "certificate": None if self.lp is None else self.lp.to_dict(),
        }


@dataclass
class DualReport:
    status: LpStatus
    value: float
    v: Process | None = None
    annihilator_residual: float = float("nan")
    primal_value: float = float("nan")
    gap: float = float("nan")
    lp: LpSolution | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "dual_value": self.value,
            "shadow_price": None if self.v is None else self.v.flat().tolist(),
            "annihilator_residual": self.annihilator_residual,
            "phi0": self.primal_value,
            "gap": self.gap,
            "certificate": None if self.lp is None else self.lp.to_dict(),
        }


def _primal_model(program: StochasticProgram, z: Process | None):
    space = program.space
    model = LpModel()
    xv = AdaptedVariables(model, space, program.dims)
    zflat = None if z is None else z.flat()
    for s, h in enumerate(program.integrands):
        arg = xv.lin(s)
        if zflat is not None:
            arg = Lin(arg.cols, arg.mat, zflat[s])
        model.add_polyfun(h, arg, weight=space.probs[s])
    return model, xv


def solve_primal(program: StochasticProgram, z: Process | None = None) -> PrimalReport:
    """Minimize E h(x + z) over adapted x as one LP."""
    if z is not None and (z.dims != program.dims or z.num_scenarios != program.space.num_scenarios):
        raise DimensionMismatch("shift process does not match the program")
    model, xv = _primal_model(program, z)
    problem = model.problem()
    sol = lpcore.solve(problem)
    if sol.status is LpStatus.NUMERICAL_FAILURE:
        raise LpNumericalFailure(sol.message)
    check = lpcore.check_certificate(problem, sol)
    if sol.status is not LpStatus.OPTIMAL:
        return PrimalReport(status=sol.status, value=_value(sol), lp=sol, certificate_check=check)
    x = xv.process(sol.x)
    shifted = x.flat() if z is None else (x + z).flat()
    vals = np.array([evaluate(h, shifted[s]) for s, h in enumerate(program.integrands)])
    return PrimalReport(status=sol.status, value=sol.objective, x=x, scenario_values=vals, lp=sol, certificate_check=check)


def value_function(program: StochasticProgram, z: Process | None = None) -> float:
    """phi(z) = inf over adapted x of E h(x + z)."""
    if z is not None and (z.dims != program.dims or z.num_scenarios != program.space.num_scenarios):
        raise DimensionMismatch("shift process does not match the program")
    model, _ = _primal_model(program, z)
    return _value(lpcore.solve(model.problem()))


def annihilator_rows(model: LpModel, space: FilteredSpace, dims, vcols: Sequence[np.ndarray], weights=None):
    """Add sum_{s in A} p_s v_t(s) = 0 for every stage t and stage-t atom A."""
    offs = np.cumsum([0, *dims])
    probs = space.probs if weights is None else weights
    for t in range(len(dims)):
        for atom in space.atoms(t):
            for i in range(offs[t], offs[t + 1]):
                cols = [vcols[s][i] for s in atom]
                model.add_eq(cols, [probs[s] for s in atom], 0.0)


def solve_dual(program: StochasticProgram, primal_value: float | None = None) -> DualReport:
    """Minimize E h*(v) over the annihilator as one LP."""
    space = program.space
    for s, h in enumerate(program.integrands):
        h.check_proper(f"integrand of scenario {space.ids[s]}")
    model = LpModel()
    vcols = [model.add_vars(program.n) for _ in range(space.num_scenarios)]
    annihilator_rows(model, space, program.dims, vcols)
    for s, h in enumerate(program.integrands):
        model.add_polyfun(conjugate(h), Lin.var(vcols[s]), weight=space.probs[s])
    sol = lpcore.solve(model.problem())
    if sol.status is LpStatus.NUMERICAL_FAILURE:
        raise LpNumericalFailure(sol.message)
    if primal_value is None:
        primal_value = value_function(program)
    if sol.status is not LpStatus.OPTIMAL:
        return DualReport(status=sol.status, value=_value(sol), primal_value=primal_value, lp=sol)
    v = Process.from_flat(program.dims, np.array([sol.x[c] for c in vcols]))
    _, res = in_annihilator(space, v)
    return DualReport(
        status=sol.status,
        value=sol.objective,
        v=v,
        annihilator_residual=res,
        primal_value=primal_value,
        gap=abs(primal_value + sol.objective),
        lp=sol,
    )


def expected_integrand(program: StochasticProgram, x: Process) -> float:
    flat = x.flat()
    vals = [evaluate(h, flat[s]) for s, h in enumerate(program.integrands)]
    return _expect(program.space.probs, vals)


def expected_conjugate(program: StochasticProgram, v: Process) -> float:
    flat = v.flat()
    vals = [evaluate(conjugate(h), flat[s]) for s, h in enumerate(program.integrands)]
    return _expect(program.space.probs, vals)


def _expect(probs, vals) -> float:
    vals = np.asarray(vals, dtype=float)
    if np.any(vals == INF):
        return INF if not np.any(vals == -INF) else float("nan")
    if np.any(vals == -INF):
        return -INF
    return float(probs @ vals)


@dataclass
class ShadowCertificate:
    adapted: bool
    adaptedness_residual: float
    in_annihilator: bool
    annihilator_residual: float
    primal_finite: bool
    expected_h: float
    expected_hstar: float
    fenchel_residuals: list[float]
    fenchel_ok: bool
    duality_sum: float
    duality_ok: bool
    tol: float

    @property
    def passed(self) -> bool:
        return self.adapted and self.in_annihilator and self.primal_finite and self.fenchel_ok and self.duality_ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def verify_shadow_price(program: StochasticProgram, x: Process, v: Process, tol: float = 1e-7) -> ShadowCertificate:
    """Check x optimal and v a shadow price via scenario-wise Fenchel equality."""
    space = program.space
    ares = adaptedness_residual(space, x)
    ok_v, vres = in_annihilator(space, v, tol)
    xf, vf = x.flat(), v.flat()
    hx = np.array([evaluate(h, xf[s]) for s, h in enumerate(program.integrands)])
    hs = np.array([evaluate(conjugate(h), vf[s]) for s, h in enumerate(program.integrands)])
    fenchel = hx + hs - np.sum(xf * vf, axis=1)
    finite = bool(np.all(np.isfinite(hx)))
    eh = _expect(space.probs, hx)
    ehs = _expect(space.probs, hs)
    total = eh + ehs
    return ShadowCertificate(
        adapted=ares <= tol,
        adaptedness_residual=ares,
        in_annihilator=ok_v,
        annihilator_residual=vres,
        primal_finite=finite,
        expected_h=eh,
        expected_hstar=ehs,
        fenchel_residuals=[float(r) for r in fenchel],
        fenchel_ok=bool(np.all(np.abs(fenchel) <= tol)),
        duality_sum=float(total),
        duality_ok=bool(total <= tol),
        tol=tol,
    )


@dataclass
class SubgradientSampleReport:
    phi0: float
    worst_margin: float
    margins: list[float] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    def to_dict(self) -> dict:
        return {
            "phi0": self.phi0,
            "worst_margin": self.worst_margin,
            "num_samples": len(self.margins),
            "passed": self.passed,
            "tol": self.tol,
        }


def subgradient_inequality_sample(
    program: StochasticProgram,
    v: Process,
    samples: int = 50,
    seed: int = 0,
    box: float = 3.0,
    adapted_samples: int = 3,
    tol: float = 1e-6,
    extra: Sequence[Process] = (),
) -> SubgradientSampleReport:
    """Sample phi(z) - phi(0) - <z, v> over bounded z; all margins should be >= 0."""
    space = program.space
    rng = np.random.default_rng(seed)
    S = space.num_scenarios
    zs = [("zero", program.zero_process())]
    for _ in range(adapted_samples):
        raw = Process.from_flat(program.dims, rng.uniform(-box, box, (S, program.n)))
        zs.append(("adapted", adapted_projection(space, raw)))
    for _ in range(samples):
        zs.append(("random", Process.from_flat(program.dims, rng.uniform(-box, box, (S, program.n)))))
    zs.extend(("given", z) for z in extra)
    try:
        phi0 = value_function(program)
        margins = []
        for _, z in zs:
            phiz = value_function(program, z)
            margins.append(phiz - phi0 - pairing(space, z, v))
    except LpNumericalFailure as exc:
        raise SampleEvaluationFailure(str(exc)) from exc
    return SubgradientSampleReport(
        phi0=phi0,
        worst_margin=float(min(margins)),
        margins=[float(m) for m in margins],
        kinds=[k for k, _ in zs],
        tol=tol,
    )


def random_annihilator_element(program: StochasticProgram, rng, box: float = 3.0) -> Process:
    raw = Process.from_flat(program.dims, rng.uniform(-box, box, (program.space.num_scenarios, program.n)))
    return project_annihilator(program.space, raw)


def random_adapted(program: StochasticProgram, rng, box: float = 3.0) -> Process:
    raw = Process.from_flat(program.dims, rng.uniform(-box, box, (program.space.num_scenarios, program.n)))
    return adapted_projection(program.space, raw)
