"""Exact dynamic programming on scenario trees, primal and dual.

Primal recursion (backwards in t)::

    htilde_T = h,   h_t = E_t htilde_t,   htilde_{t-1}(x^{t-1}) = inf_{x_t} h_t(x^{t-1}, x_t)

Dual recursion::

    gtilde_T = h*,  g_t = epi-conditional expectation of gtilde_t given F_t,
    gtilde_{t-1}(v^{t-1}) = g_t(v^{t-1}, 0)

``h_t`` and ``g_t`` are stored once per stage-t atom.  The epi-conditional
expectation is computed through its conjugate: (^G g)* = E^G(g*).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import lpcore
from .errors import ImproperFunction, ImproperRecursion
from .filtration import Process
from .lpcore import LpStatus
from .polycalc import (
    INF,
    Lin,
    LpModel,
    PolyFun,
    affine_compose,
    conjugate,
    evaluate,
    minimize_last,
    recession,
    weighted_sum,
)
from .shadow import AdaptedVariables, StochasticProgram, _expect

log = logging.getLogger(__name__)


def _atom_average(space, t, atom_index, funcs_by_scenario):
    """Conditional average over a stage-t atom, merging scenarios that share a function."""
    atom = space.atoms(t)[atom_index]
    mass = space.probs[list(atom)].sum()
    order, weight = [], {}
    for s in atom:
        f = funcs_by_scenario(s)
        key = id(f)
        if key not in weight:
            order.append(f)
            weight[key] = 0.0
        weight[key] += space.probs[s]
    return weighted_sum(order, [weight[id(f)] / mass for f in order])


# ---------------------------------------------------------------- lineality


@dataclass
class LinealityReport:
    linear: bool
    rows_checked: int
    strict_rows: list[int] = field(default_factory=list)
    interior_margin: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lineality_check(program: StochasticProgram, tol: float = 1e-9) -> LinealityReport:
    """Decide whether {adapted w : h_inf(w(s), s) <= 0 for all s} is a linear space.

    The set is the projection onto w of a polyhedral cone K in (w, y).  A
    convex cone is a subspace iff 0 is in its relative interior, and the
    relative interior of a projection is the projection of the relative
    interior.  So: (1) find which inequality rows of K can hold strictly (one
    LP, using that K is closed under addition); (2) ask for a point of K with
    w = 0 making all of those rows strict (a second LP).
    """
    space = program.space
    model = LpModel()
    wv = AdaptedVariables(model, space, program.dims)
    zero = Lin.fixed([0.0])
    for s, h in enumerate(program.integrands):
        model.add_level(recession(h), wv.lin(s), zero)
    cone = model.problem()
    G, A = cone.G, cone.A
    p, nz = G.shape
    if p == 0:
        return LinealityReport(True, 0)

    # (1) maximize sum s_i with G_i z + s_i <= 0, 0 <= s_i <= 1, A z = 0.
    n_all = nz + p
    G1 = np.vstack([
        np.hstack([G, np.eye(p)]),
        np.hstack([np.zeros((p, nz)), np.eye(p)]),
        np.hstack([np.zeros((p, nz)), -np.eye(p)]),
    ])
    g1 = np.concatenate([np.zeros(p), np.ones(p), np.zeros(p)])
    A1 = np.hstack([A, np.zeros((A.shape[0], p))])
    c1 = np.concatenate([np.zeros(nz), -np.ones(p)])
    sol = lpcore.solve(lpcore.LpProblem(c=c1, G=G1, g=g1, A=A1, a=np.zeros(A.shape[0])))
    if sol.status is not LpStatus.OPTIMAL:
        raise ImproperFunction(f"lineality LP ended {sol.status.value}")
    strict = np.flatnonzero(sol.x[nz:] > 0.5)
    if strict.size == 0:
        return LinealityReport(True, p)

    # (2) maximize tau with w = 0, G_i z + tau <= 0 on strict rows, tau <= 1.
    wcols = np.concatenate([np.concatenate(b) for b in wv.blocks]) if wv.blocks else np.zeros(0, dtype=int)
    k = strict.size
    tau_col = np.zeros((p, 1))
    tau_col[strict, 0] = 1.0
    G2 = np.vstack([np.hstack([G, tau_col]), np.hstack([np.zeros(nz), [1.0]])])
    g2 = np.concatenate([np.zeros(p), [1.0]])
    fix = np.zeros((wcols.size, nz + 1))
    fix[np.arange(wcols.size), wcols] = 1.0
    A2 = np.vstack([np.hstack([A, np.zeros((A.shape[0], 1))]), fix])
    c2 = np.zeros(nz + 1)
    c2[-1] = -1.0
    sol2 = lpcore.solve(lpcore.LpProblem(c=c2, G=G2, g=g2, A=A2, a=np.zeros(A2.shape[0])))
    if sol2.status is not LpStatus.OPTIMAL:
        raise ImproperFunction(f"lineality LP ended {sol2.status.value}")
    margin = -sol2.objective
    return LinealityReport(margin > tol, p, strict.tolist(), margin)


# ---------------------------------------------------------------- primal table


@dataclass
class PrimalTable:
    program: StochasticProgram
    h: list[list[PolyFun]]            # h[t][k]: stage-t atom k
    htilde: list[list[PolyFun]]       # htilde[t][k]: stage-(t+1) atom k, t < T
    stage0_min: list[float]           # inf over x_0 of h_0 on each stage-0 atom
    lineality: LinealityReport | None = None

    def h_at(self, t: int, s: int) -> PolyFun:
        return self.h[t][self.program.space.atom_of(t, s)]

    def htilde_at(self, t: int, s: int) -> PolyFun:
        if t == self.program.T:
            return self.program.integrands[s]
        return self.htilde[t][self.program.space.atom_of(t + 1, s)]

    @property
    def value(self) -> float:
        space = self.program.space
        return _expect(
            np.array([space.atom_prob(0, k) for k in range(len(space.atoms(0)))]),
            self.stage0_min,
        )


def primal_recursion(program: StochasticProgram, strict_lineality: bool = False, check_lineality: bool = True) -> PrimalTable:
    space = program.space
    T = program.T
    lin = None
    if check_lineality:
        lin = lineality_check(program)
        if not lin.linear:
            if strict_lineality:
                raise ImproperRecursion(T, "recession cone of the integrand is not a linear space")
            log.warning("lineality condition fails for %s; recursion may be ill-posed", program.name or "program")
    h = [None] * (T + 1)
    htilde = [None] * T
    table = PrimalTable(program, h, htilde, [], lin)
    for t in range(T, -1, -1):
        row = []
        for k in range(len(space.atoms(t))):
            f = _atom_average(space, t, k, lambda s: table.htilde_at(t, s))
            ok, why = f.properness
            if not ok:
                raise ImproperRecursion(t, f"h_{t} on atom {k}: {why}")
            row.append(f)
        h[t] = row
        nt = program.dims[t]
        mins = []
        for f in row:
            m = minimize_last(f, nt)
            ok, why = m.properness
            if not ok:
                raise ImproperRecursion(t, f"infimum over x_{t}: {why}")
            mins.append(m)
        if t > 0:
            htilde[t - 1] = mins
        else:
            table.stage0_min[:] = [evaluate(m, np.zeros(0)) for m in mins]
    return table


def _per_scenario(space, t, points, fn):
    """Evaluate fn(atom_index, point) once per distinct (stage-t atom, point)."""
    cache = {}
    out = np.empty(space.num_scenarios)
    for s in range(space.num_scenarios):
        k = space.atom_of(t, s)
        key = (k, tuple(np.round(points[s], 15)))
        if key not in cache:
            cache[key] = fn(k, points[s])
        out[s] = cache[key]
    return out


@dataclass
class PrimalDPReport:
    phi0: float
    expected_values: list[float]
    margins: list[float]
    argmin_residuals: list[list[float]]
    optimal: bool
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_primal_dp(table: PrimalTable, x: Process, tol: float = 1e-6, phi0: float | None = None) -> PrimalDPReport:
    """E h_t(x^t) >= phi(0) for every t; x is optimal iff every argmin residual vanishes."""
    program = table.program
    space = program.space
    phi0 = table.value if phi0 is None else phi0
    expected, margins, residuals = [], [], []
    prev = np.array([table.stage0_min[space.atom_of(0, s)] for s in range(space.num_scenarios)])
    for t in range(program.T + 1):
        pts = x.upto(t)
        vals = _per_scenario(space, t, pts, lambda k, p: evaluate(table.h[t][k], p))
        e = _expect(space.probs, vals)
        expected.append(e)
        margins.append(e - phi0)
        with np.errstate(invalid="ignore"):
            residuals.append((vals - prev).tolist())
        prev = vals if t == program.T else _per_scenario(
            space, t + 1, pts, lambda k, p: evaluate(table.htilde[t][k], p)
        )
    finite = all(np.isfinite(e) for e in expected)
    optimal = finite and all(abs(r) <= tol for row in residuals for r in row)
    return PrimalDPReport(phi0, expected, margins, residuals, bool(optimal), tol)


# ---------------------------------------------------------------- dual table


def epi_conditional(space, t, k, funcs_by_scenario) -> PolyFun:
    """Epi-conditional expectation on one atom: conjugate of the average of conjugates."""
    conj_cache = {}

    def conj_of(s):
        f = funcs_by_scenario(s)
        if id(f) not in conj_cache:
            conj_cache[id(f)] = conjugate(f)
        return conj_cache[id(f)]

    return conjugate(_atom_average(space, t, k, conj_of))


@dataclass
class DualTable:
    program: StochasticProgram
    g: list[list[PolyFun]]            # g[t][k]: stage-t atom k
    gtilde: list[list[PolyFun]]       # gtilde[t][k]: stage-(t+1) atom k, t < T
    hstar: list[PolyFun]              # gtilde_T, per scenario

    def gtilde_at(self, t: int, s: int) -> PolyFun:
        if t == self.program.T:
            return self.hstar[s]
        return self.gtilde[t][self.program.space.atom_of(t + 1, s)]


def dual_recursion(program: StochasticProgram) -> DualTable:
    space = program.space
    T = program.T
    for s, hs in enumerate(program.integrands):
        hs.check_proper(f"integrand of scenario {space.ids[s]}")
    g = [None] * (T + 1)
    gtilde = [None] * T
    table = DualTable(program, g, gtilde, [conjugate(hs) for hs in program.integrands])
    offs = program.offsets()
    for t in range(T, -1, -1):
        row = []
        for k in range(len(space.atoms(t))):
            f = epi_conditional(space, t, k, lambda s: table.gtilde_at(t, s))
            ok, why = f.properness
            if not ok:
                raise ImproperRecursion(t, f"g_{t} on atom {k}: {why}")
            row.append(f)
        g[t] = row
        if t > 0:
            keep = offs[t]
            inject = np.vstack([np.eye(keep), np.zeros((program.dims[t], keep))])
            gtilde[t - 1] = [affine_compose(f, inject) for f in row]
    return table


@dataclass
class DualDPReport:
    phi0: float
    expected_values: list[float]       # E g_t(E_t v^t)
    margins: list[float]               # E g_t(E_t v^t) + phi(0)
    fenchel_sums: list[float]          # E g_t*(x^t) + E g_t(E_t v^t)
    atom_fenchel: list[list[float]]    # g_t*(x^t) + g_t(E_t v^t) - x^t.E_t v^t per scenario
    dual_optimal: bool
    jointly_optimal: bool
    tol: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_dual_dp(table: DualTable, x: Process | None, v: Process, phi0: float, tol: float = 1e-6) -> DualDPReport:
    """E g_t(E_t v^t) >= -phi(0) for every t, with the Fenchel sums when x is given.

    Without x only the inequality margins are computed and ``jointly_optimal``
    is False.
    """
    program = table.program
    space = program.space
    expected, margins, sums, atomwise = [], [], [], []
    conj_cache = {}
    for t in range(program.T + 1):
        ev = space.cond_exp(t, v.upto(t))
        gv = _per_scenario(space, t, ev, lambda k, p: evaluate(table.g[t][k], p))
        e = _expect(space.probs, gv)
        expected.append(e)
        margins.append(e + phi0)
        if x is None:
            continue
        xt = x.upto(t)

        def gstar(k, p):
            key = (t, k)
            if key not in conj_cache:
                conj_cache[key] = conjugate(table.g[t][k])
            return evaluate(conj_cache[key], p)

        gx = _per_scenario(space, t, xt, gstar)
        sums.append(_expect(space.probs, gx) + e)
        with np.errstate(invalid="ignore"):
            atomwise.append((gx + gv - np.sum(xt * ev, axis=1)).tolist())
    dual_opt = all(abs(m) <= tol for m in margins)
    joint = x is not None and all(np.isfinite(sv) and abs(sv) <= tol for sv in sums) and all(
        abs(r) <= tol for row in atomwise for r in row
    )
    return DualDPReport(phi0, expected, margins, sums, atomwise, bool(dual_opt), bool(joint), tol)


def conjugate_tables_gap(ptable: PrimalTable, dtable: DualTable, points_per_atom: int = 10, seed: int = 0, box: float = 2.0) -> float:
    """max |g_t*(x) - h_t(x)| over random points where h_t is finite."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    program = ptable.program
    for t in range(program.T + 1):
        dim = int(program.offsets()[t + 1])
        for k, h in enumerate(ptable.h[t]):
            gstar = conjugate(dtable.g[t][k])
            for _ in range(points_per_atom):
                p = rng.uniform(-box, box, dim)
                hv = evaluate(h, p)
                gv = evaluate(gstar, p)
                if hv == INF and gv == INF:
                    continue
                worst = max(worst, abs(hv - gv))
    return worst
