"""Calculus of integral functionals over finite scenario sets.

A family is one polyhedral function per scenario together with the scenario
probabilities.  Sub-sigma-algebras are given as partitions (lists of atoms of
scenario indices); any coarsening of the discrete partition is allowed, the
filtration stages being the usual choice.

Set-valued conditional expectations are exposed as LP oracles (membership and
support function) rather than by enumerating vertices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lpcore
from .errors import (
    DimensionMismatch,
    EmptyAtom,
    EmptySubdifferential,
    LpNumericalFailure,
    NotInDomain,
    OrphanScenario,
    Unattained,
    ValidationError,
)
from .filtration import Process, in_annihilator, is_adapted
from .lpcore import LpStatus
from .polycalc import INF, Lin, LpModel, PolyFun, add_linear, conjugate, evaluate, fenchel_gap, weighted_sum
from .shadow import StochasticProgram, _expect, annihilator_rows, solve_primal

Partition = Sequence[Sequence[int]]


@dataclass(frozen=True)
class IntegrandFamily:
    probs: np.ndarray
    funcs: tuple[PolyFun, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "funcs", tuple(self.funcs))
        if len(self.funcs) != probs.size:
            raise DimensionMismatch(f"{len(self.funcs)} functions for {probs.size} scenarios")
        if len({f.dim for f in self.funcs}) > 1:
            raise DimensionMismatch("family members differ in dimension")

    @property
    def dim(self) -> int:
        return self.funcs[0].dim

    @property
    def num_scenarios(self) -> int:
        return self.probs.size

    @classmethod
    def of(cls, program: StochasticProgram) -> "IntegrandFamily":
        return cls(program.space.probs, program.integrands)


def trivial_partition(num_scenarios: int) -> list[list[int]]:
    return [list(range(num_scenarios))]


def discrete_partition(num_scenarios: int) -> list[list[int]]:
    return [[s] for s in range(num_scenarios)]


def check_partition(atoms: Partition, num_scenarios: int) -> list[list[int]]:
    seen = np.zeros(num_scenarios, dtype=int)
    out = []
    for k, atom in enumerate(atoms):
        atom = [int(s) for s in atom]
        if not atom:
            raise EmptyAtom(f"atom {k} is empty")
        for s in atom:
            if not 0 <= s < num_scenarios:
                raise OrphanScenario(f"atom {k} names unknown scenario {s}")
            seen[s] += 1
        out.append(atom)
    if np.any(seen != 1):
        bad = int(np.flatnonzero(seen != 1)[0])
        raise OrphanScenario(f"scenario {bad} is covered {seen[bad]} times by the partition")
    return out


def _as_points(values, num_scenarios: int, dim: int, what: str) -> np.ndarray:
    arr = np.asarray(values.flat() if isinstance(values, Process) else values, dtype=float)
    if arr.size != num_scenarios * dim:
        raise DimensionMismatch(f"{what} has {arr.size} entries, expected {num_scenarios}x{dim}")
    return arr.reshape(num_scenarios, dim)


def _check_measurable(points: np.ndarray, atoms, what: str, tol: float = 1e-9):
    for k, atom in enumerate(atoms):
        spread = np.max(np.abs(points[atom] - points[atom[0]])) if len(atom) > 1 else 0.0
        if spread > tol:
            raise ValidationError(f"{what} is not constant on atom {k} (spread {spread:.3e})")


def _weights(family: IntegrandFamily, atom) -> np.ndarray:
    p = family.probs[atom]
    return p / p.sum()


def cond_exp_integrand(family: IntegrandFamily, atoms: Partition) -> list[PolyFun]:
    """E^G f, one function per atom: the conditional average of the family."""
    atoms = check_partition(atoms, family.num_scenarios)
    return [weighted_sum([family.funcs[s] for s in atom], _weights(family, atom)) for atom in atoms]


def epi_cond_exp(family: IntegrandFamily, atoms: Partition) -> list[PolyFun]:
    """Epi-conditional expectation: the per-atom function whose conjugate is E^G(g*)."""
    for s, f in enumerate(family.funcs):
        f.check_proper(f"family member {s}")
    conj = IntegrandFamily(family.probs, [conjugate(f) for f in family.funcs])
    return [conjugate(f) for f in cond_exp_integrand(conj, atoms)]


# ---------------------------------------------------------------- Jensen


@dataclass
class JensenReport:
    left: list[float]       # (E^G f)*(E^G v) per atom
    right: list[float]      # E^G f*(v) per atom
    margins: list[float]    # right - left
    holds: bool
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def jensen_check(family: IntegrandFamily, v, atoms: Partition, tol: float = 1e-7) -> JensenReport:
    atoms = check_partition(atoms, family.num_scenarios)
    v = _as_points(v, family.num_scenarios, family.dim, "v")
    ef = cond_exp_integrand(family, atoms)
    left, right, margins = [], [], []
    holds = True
    for atom, f in zip(atoms, ef):
        q = _weights(family, atom)
        lhs = evaluate(conjugate(f), q @ v[atom])
        rhs = _expect(q, [evaluate(conjugate(family.funcs[s]), v[s]) for s in atom])
        margin = INF if rhs == INF else rhs - lhs
        holds &= bool(margin >= -tol)
        left.append(lhs)
        right.append(rhs)
        margins.append(margin)
    return JensenReport(left, right, margins, holds, tol)


# ---------------------------------------------------------------- conjugate on adapted spaces


@dataclass
class ConjugateOnNReport:
    value: float                # min over the annihilator of E f*(x* + v)
    v: Process
    direct_value: float         # sup over adapted x of <x, x*> - E f(x)
    discrepancy: float
    agree: bool

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "direct_value": self.direct_value,
            "discrepancy": self.discrepancy,
            "agree": self.agree,
            "v": self.v.flat().tolist(),
        }


def conjugate_on_n(program: StochasticProgram, xstar: Process, tol: float = 1e-7) -> ConjugateOnNReport:
    """(E f)* at an adapted x*, computed two independent ways."""
    space = program.space
    if not is_adapted(space, xstar):
        raise ValidationError("x* must be adapted")
    xs = xstar.flat()
    model = LpModel()
    vcols = [model.add_vars(program.n) for _ in range(space.num_scenarios)]
    annihilator_rows(model, space, program.dims, vcols)
    for s, h in enumerate(program.integrands):
        h.check_proper(f"integrand of scenario {space.ids[s]}")
        model.add_polyfun(conjugate(h), Lin(vcols[s], np.eye(program.n), xs[s]), weight=space.probs[s])
    sol = lpcore.solve(model.problem())
    if sol.status is LpStatus.NUMERICAL_FAILURE:
        raise LpNumericalFailure(sol.message)
    if sol.status is not LpStatus.OPTIMAL:
        raise Unattained(f"infimum over the annihilator not attained: LP {sol.status.value}")
    v = Process.from_flat(program.dims, np.array([sol.x[c] for c in vcols]))

    tilted = program.with_integrands([add_linear(h, xs[s]) for s, h in enumerate(program.integrands)])
    primal = solve_primal(tilted)
    if primal.status is LpStatus.OPTIMAL:
        direct = -primal.value
    elif primal.status is LpStatus.UNBOUNDED:
        direct = INF
    else:
        direct = -INF
    gap = abs(sol.objective - direct) if np.isfinite(direct) else INF
    return ConjugateOnNReport(sol.objective, v, direct, gap, bool(gap <= tol))


# ---------------------------------------------------------------- subdifferentials


def _selection_model(funcs, conjs, weights, points):
    """Variables w_s with objective sum_s q_s (f_s*(w_s) - x_s.w_s + f_s(x_s)).

    Every term is a Fenchel gap, hence >= 0, and vanishes exactly when
    w_s is a subgradient of f_s at x_s.
    """
    model = LpModel()
    cols = []
    for f, fc, q, x in zip(funcs, conjs, weights, points):
        fx = evaluate(f, x)
        if not np.isfinite(fx):
            raise EmptySubdifferential(f"point {np.asarray(x).tolist()} outside the domain")
        w = model.add_vars(f.dim)
        model.add_polyfun(fc, Lin.var(w), weight=q)
        model.add_cost(w, -q * np.asarray(x, dtype=float))
        model.c0 += q * fx
        cols.append(w)
    return model, cols


@dataclass
class MembershipReport:
    member: bool
    gap: float                  # minimal expected Fenchel gap over admissible selections
    witness: Process | np.ndarray | None
    tol: float

    def to_dict(self) -> dict:
        w = self.witness
        if isinstance(w, Process):
            w = w.flat().tolist()
        elif w is not None:
            w = np.asarray(w).tolist()
        return {"member": self.member, "gap": self.gap, "witness": w, "tol": self.tol}


def _solve_selection(model) -> lpcore.LpSolution:
    sol = lpcore.solve(model.problem())
    if sol.status is LpStatus.NUMERICAL_FAILURE:
        raise LpNumericalFailure(sol.message)
    return sol


def subdiff_on_n(program: StochasticProgram, x: Process, xstar: Process, tol: float = 1e-7) -> MembershipReport:
    """Is x* in the subdifferential of E f restricted to adapted processes at x?

    Membership holds iff some selection w(s) of the scenario subdifferentials
    has adapted projection x*.
    """
    space = program.space
    if not is_adapted(space, x):
        raise ValidationError("x must be adapted")
    if not is_adapted(space, xstar):
        raise ValidationError("x* must be adapted")
    xf, xsf = x.flat(), xstar.flat()
    funcs = program.integrands
    try:
        model, cols = _selection_model(funcs, [conjugate(h) for h in funcs], space.probs, xf)
    except EmptySubdifferential as exc:
        raise NotInDomain(f"E f(x) is not finite: {exc}") from exc
    offs = program.offsets()
    for t in range(program.T + 1):
        for atom in space.atoms(t):
            mass = space.probs[list(atom)].sum()
            for i in range(offs[t], offs[t + 1]):
                model.add_eq([cols[s][i] for s in atom], [space.probs[s] / mass for s in atom], xsf[atom[0], i])
    sol = _solve_selection(model)
    if sol.status is not LpStatus.OPTIMAL:
        return MembershipReport(False, INF, None, tol)
    w = Process.from_flat(program.dims, np.array([sol.x[c] for c in cols]))
    return MembershipReport(bool(sol.objective <= tol), max(sol.objective, 0.0), w, tol)


# ---------------------------------------------------------------- conditional-mean representation


@dataclass
class AtomIdentity:
    value: float                # min over mean-zero v on the atom of E^G f*(x* + v)
    direct: float               # (E^G f)*(x*) on the atom
    residual: float


@dataclass
class ConditionalConjugateReport:
    v: np.ndarray               # (S, d), conditional mean zero on every atom
    atoms: list[AtomIdentity] = field(default_factory=list)
    holds: bool = True
    tol: float = 1e-6

    def to_dict(self) -> dict:
        return {
            "v": self.v.tolist(),
            "atoms": [a.__dict__ for a in self.atoms],
            "holds": self.holds,
            "tol": self.tol,
        }


def conditional_conjugate_verify(family: IntegrandFamily, xstar, atoms: Partition, tol: float = 1e-6) -> ConditionalConjugateReport:
    """Find v with E^G v = 0 and E^G f*(x* + v) = (E^G f)*(x*) on every atom."""
    atoms = check_partition(atoms, family.num_scenarios)
    d, S = family.dim, family.num_scenarios
    xs = _as_points(xstar, S, d, "x*")
    _check_measurable(xs, atoms, "x*")
    ef = cond_exp_integrand(family, atoms)
    v = np.zeros((S, d))
    out = ConditionalConjugateReport(v, tol=tol)
    for k, (atom, f) in enumerate(zip(atoms, ef)):
        q = _weights(family, atom)
        model = LpModel()
        cols = []
        for s, qs in zip(atom, q):
            family.funcs[s].check_proper(f"family member {s}")
            c = model.add_vars(d)
            model.add_polyfun(conjugate(family.funcs[s]), Lin(c, np.eye(d), xs[s]), weight=qs)
            cols.append(c)
        for i in range(d):
            model.add_eq([c[i] for c in cols], q, 0.0)
        sol = _solve_selection(model)
        if sol.status is not LpStatus.OPTIMAL:
            raise Unattained(f"atom {k}: LP {sol.status.value}")
        for s, c in zip(atom, cols):
            v[s] = sol.x[c]
        direct = evaluate(conjugate(f), xs[atom[0]])
        res = abs(sol.objective - direct)
        out.atoms.append(AtomIdentity(sol.objective, direct, res))
        out.holds &= bool(res <= tol)
    return out


class CondExpSubdiffMap:
    """E^G of the subdifferential map s -> df(x(s), s), one LP oracle per atom."""

    def __init__(self, family: IntegrandFamily, x, atoms: Partition, tol: float = 1e-7):
        self.family = family
        self.atoms = check_partition(atoms, family.num_scenarios)
        self.x = _as_points(x, family.num_scenarios, family.dim, "x")
        _check_measurable(self.x, self.atoms, "x")
        self.tol = tol
        self._conj = [conjugate(f) for f in family.funcs]
        self._ef = cond_exp_integrand(family, self.atoms)
        for atom in self.atoms:
            for s in atom:
                if not np.isfinite(evaluate(family.funcs[s], self.x[s])):
                    raise EmptySubdifferential(f"x lies outside the domain of scenario {s}")

    def _model(self, k):
        atom = self.atoms[k]
        q = _weights(self.family, atom)
        funcs = [self.family.funcs[s] for s in atom]
        conjs = [self._conj[s] for s in atom]
        model, cols = _selection_model(funcs, conjs, q, self.x[atom])
        return model, cols, q

    def contains(self, k: int, u) -> MembershipReport:
        """u in E^G df(x) on atom k: some selection has conditional mean u."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        model, cols, q = self._model(k)
        for i in range(self.family.dim):
            model.add_eq([c[i] for c in cols], q, u[i])
        sol = _solve_selection(model)
        if sol.status is not LpStatus.OPTIMAL:
            return MembershipReport(False, INF, None, self.tol)
        w = np.array([sol.x[c] for c in cols])
        return MembershipReport(bool(sol.objective <= self.tol), max(sol.objective, 0.0), w, self.tol)

    def support(self, k: int, direction) -> float:
        """sup of direction . u over u in E^G df(x) on atom k (may be inf)."""
        direction = np.atleast_1d(np.asarray(direction, dtype=float))
        atom = self.atoms[k]
        q = _weights(self.family, atom)
        model = LpModel()
        for s, qs in zip(atom, q):
            w = model.add_vars(self.family.dim)
            fx = evaluate(self.family.funcs[s], self.x[s])
            # f*(w) <= x.w - f(x) pins w to the subdifferential
            level = Lin(w, self.x[s].reshape(1, -1), np.array([-fx]))
            model.add_level(self._conj[s], Lin.var(w), level)
            model.add_cost(w, -qs * direction)
        sol = _solve_selection(model)
        if sol.status is LpStatus.UNBOUNDED:
            return INF
        if sol.status is not LpStatus.OPTIMAL:
            raise EmptySubdifferential(f"atom {k}: no subgradient selection ({sol.status.value})")
        return -sol.objective + 0.0

    def in_subdiff_of_average(self, k: int, u) -> bool:
        """Cross-check: u in d(E^G f)(x) on atom k, by Fenchel equality."""
        atom = self.atoms[k]
        gap = fenchel_gap(self._ef[k], self.x[atom[0]], u)
        return bool(gap <= self.tol * max(1.0, abs(evaluate(self._ef[k], self.x[atom[0]]))))


def annihilator_check(program: StochasticProgram, v: np.ndarray, tol: float = 1e-9) -> tuple[bool, float]:
    """Wrap an (S, n) array as a process of the program and test E_t v_t = 0."""
    return in_annihilator(program.space, Process.from_flat(program.dims, v), tol)
