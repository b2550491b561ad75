"""Dense two-phase simplex with primal, dual, Farkas and ray certificates.

Problems are stated in inequality/equality form over free variables::

    minimize    c.w + c0
    subject to  G w <= g,   A w = a

and converted internally to standard form ``M u = b, u >= 0`` with
``w = w_plus - w_minus`` and one slack per inequality row.  Pivoting follows
Bland's rule, so solves are deterministic and cannot cycle.

Dual multipliers follow the Lagrangian ``c.w + lam.(G w - g) + mu.(A w - a)``
with ``lam >= 0``; at an optimum ``c + G^T lam + A^T mu = 0`` and the dual
objective is ``c0 - lam.g - mu.a``.
"""
from __future__ import annotations

import enum
from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, LpNumericalFailure


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class LpTolerances:
    feas: float = 1e-8
    gap: float = 1e-7
    pivot: float = 1e-11
    cost: float = 1e-11
    max_iter: int = 100_000
    refactor_every: int = 50


DEFAULT_TOLERANCES = LpTolerances()


def _as_matrix(mat, ncols, name):
    if mat is None:
        return np.zeros((0, ncols))
    mat = np.array(mat, dtype=float)
    if mat.ndim != 2:
        if mat.size == 0:
            return np.zeros((0, ncols))
        mat = mat.reshape(1, -1)
    if mat.shape[1] != ncols:
        raise DimensionMismatch(f"{name} has {mat.shape[1]} columns, expected {ncols}")
    return mat


def _as_vector(vec, length, name):
    if vec is None:
        vec = np.zeros(length)
    vec = np.array(vec, dtype=float).reshape(-1)
    if vec.shape[0] != length:
        raise DimensionMismatch(f"{name} has length {vec.shape[0]}, expected {length}")
    return vec


@dataclass
class LpProblem:
    c: np.ndarray
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    A: np.ndarray | None = None
    a: np.ndarray | None = None
    c0: float = 0.0
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.array(self.c, dtype=float).reshape(-1)
        n = self.c.shape[0]
        self.G = _as_matrix(self.G, n, "G")
        self.g = _as_vector(self.g, self.G.shape[0], "g")
        self.A = _as_matrix(self.A, n, "A")
        self.a = _as_vector(self.a, self.A.shape[0], "a")
        self.c0 = float(self.c0)
        if self.names is not None and len(self.names) != n:
            raise DimensionMismatch("names must match the variable count")

    @property
    def num_vars(self):
        return self.c.shape[0]


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    ineq_duals: np.ndarray | None = None
    eq_duals: np.ndarray | None = None
    # Farkas certificate: y >= 0, z with y^T G + z^T A = 0 and y.g + z.a < 0.
    farkas_ineq: np.ndarray | None = None
    farkas_eq: np.ndarray | None = None
    # Unbounded: feasible ``x`` plus a ray with G ray <= 0, A ray = 0, c.ray < 0.
    ray: np.ndarray | None = None
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    cs_residual: float = float("nan")
    dual_objective: float = float("nan")
    farkas_value: float = float("nan")
    iterations: int = 0
    message: str = ""

    def to_dict(self):
        def arr(v):
            return None if v is None else [float(t) for t in v]

        return {
            "status": self.status.value,
            "objective": self.objective,
            "x": arr(self.x),
            "ineq_duals": arr(self.ineq_duals),
            "eq_duals": arr(self.eq_duals),
            "farkas_ineq": arr(self.farkas_ineq),
            "farkas_eq": arr(self.farkas_eq),
            "farkas_value": self.farkas_value,
            "ray": arr(self.ray),
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "gap": self.gap,
            "cs_residual": self.cs_residual,
            "iterations": self.iterations,
        }


class _Simplex:
    """Tableau simplex on ``M u = b, u >= 0`` (rows already scaled so b >= 0)."""

    def __init__(self, M, b, tol, iterations=0):
        self.M = M
        self.b = b
        self.tol = tol
        self.iterations = iterations

    def factor(self, basis, cost):
        m = len(basis)
        if m == 0:
            self.T = np.zeros((1, self.M.shape[1] + 1))
            self.T[0, :-1] = cost
            self.basis = []
            return
        B = self.M[:, basis]
        body = np.linalg.solve(B, np.column_stack([self.M, self.b]))
        body[np.abs(body) < 1e-15] = 0.0
        T = np.empty((m + 1, body.shape[1]))
        T[:m] = body
        cb = cost[basis]
        T[m, :-1] = cost - cb @ body[:, :-1]
        T[m, -1] = -cb @ body[:, -1]
        T[m, basis] = 0.0
        self.T = T
        self.basis = list(basis)

    def pivot(self, r, j):
        T = self.T
        prow = T[r] / T[r, j]
        colj = T[:, j].copy()
        colj[r] = 0.0
        T -= np.outer(colj, prow)
        T[r] = prow
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j
        self.iterations += 1

    def run(self, cost, allowed):
        """Iterate until optimal or an unbounded column is found.

        Returns ``("optimal", None)`` or ``("unbounded", j)``.
        """
        tol = self.tol
        since_factor = 0
        verified = 0
        while True:
            if self.iterations >= tol.max_iter:
                raise LpNumericalFailure(f"iteration budget {tol.max_iter} exhausted")
            m = len(self.basis)
            red = self.T[m, :-1]
            cand = np.flatnonzero((red < -tol.cost) & allowed)
            if cand.size == 0:
                # Confirm optimality on a fresh factorization before stopping.
                if since_factor == 0 or verified > 3:
                    return "optimal", None
                self.factor(self.basis, cost)
                since_factor = 0
                verified += 1
                continue
            j = int(cand[0])
            col = self.T[:m, j]
            pos = np.flatnonzero(col > tol.pivot)
            if pos.size == 0:
                if since_factor:
                    self.factor(self.basis, cost)
                    since_factor = 0
                    col = self.T[:m, j]
                    if np.any(col > tol.pivot) or self.T[m, j] >= -tol.cost:
                        continue
                return "unbounded", j
            rhs = np.maximum(self.T[pos, -1], 0.0)
            ratios = rhs / col[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * (1.0 + rmin)]
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j)
            since_factor += 1
            if since_factor >= tol.refactor_every:
                self.factor(self.basis, cost)
                since_factor = 0


def _standard_form(problem):
    n = problem.num_vars
    p = problem.G.shape[0]
    q = problem.A.shape[0]
    M = np.zeros((p + q, 2 * n + p))
    M[:p, :n] = problem.G
    M[:p, n:2 * n] = -problem.G
    M[:p, 2 * n:] = np.eye(p)
    M[p:, :n] = problem.A
    M[p:, n:2 * n] = -problem.A
    b = np.concatenate([problem.g, problem.a])
    cost = np.concatenate([problem.c, -problem.c, np.zeros(p)])
    return M, b, cost


def solve(problem: LpProblem, tol: LpTolerances | None = None, **overrides) -> LpSolution:
    """Solve ``problem`` and attach the certificate matching its status.

    Tolerance fields may be overridden per call, e.g. ``solve(p, feas=1e-9)``.
    """
    tol = tol or DEFAULT_TOLERANCES
    if overrides:
        tol = replace(tol, **overrides)
    try:
        return _solve(problem, tol)
    except (LpNumericalFailure, np.linalg.LinAlgError) as exc:
        return LpSolution(status=LpStatus.NUMERICAL_FAILURE, message=str(exc))


def _solve(problem, tol):
    n = problem.num_vars
    p = problem.G.shape[0]
    M, b, cost = _standard_form(problem)
    m, N = M.shape
    sign = np.where(b < 0, -1.0, 1.0)
    Mf = M * sign[:, None]
    bf = b * sign

    # Phase 1: reuse unit slack columns, add artificials elsewhere.
    basis = [-1] * m
    for r in range(p):
        if sign[r] > 0:
            basis[r] = 2 * n + r
    art_rows = [r for r in range(m) if basis[r] < 0]
    k = len(art_rows)
    M1 = np.zeros((m, N + k))
    M1[:, :N] = Mf
    for i, r in enumerate(art_rows):
        M1[r, N + i] = 1.0
        basis[r] = N + i
    cost1 = np.zeros(N + k)
    cost1[N:] = 1.0

    sx = _Simplex(M1, bf, tol)
    if m:
        sx.factor(basis, cost1)
        if k:
            sx.run(cost1, np.ones(N + k, dtype=bool))
    else:
        sx.factor([], cost1)
    phase1 = -sx.T[len(sx.basis), -1] if m else 0.0

    if k and phase1 > tol.feas:
        B = M1[:, sx.basis]
        y = np.linalg.solve(B.T, cost1[sx.basis]) * sign
        return _infeasible(problem, y, sx.iterations)

    # Drive zero-level artificials out; rows where that fails are redundant.
    keep = list(range(m))
    if k:
        r = 0
        while r < len(sx.basis):
            if sx.basis[r] >= N:
                row = sx.T[r, :N]
                j = int(np.argmax(np.abs(row))) if N else -1
                if N and abs(row[j]) > 1e-9:
                    sx.pivot(r, j)
                else:
                    sx.T = np.delete(sx.T, r, axis=0)
                    del sx.basis[r]
                    del keep[r]
                    continue
            r += 1
    Mk = Mf[keep]
    bk = bf[keep]
    sx2 = _Simplex(Mk, bk, tol, sx.iterations)
    sx2.factor(list(sx.basis), cost)
    outcome, j = sx2.run(cost, np.ones(N, dtype=bool))

    basis = sx2.basis
    u = np.zeros(N)
    if basis:
        u[basis] = np.linalg.solve(Mk[:, basis], bk)
    u = np.maximum(u, 0.0)
    w = u[:n] - u[n:2 * n]

    if outcome == "unbounded":
        d = np.zeros(N)
        d[j] = 1.0
        if basis:
            d[basis] = -np.linalg.solve(Mk[:, basis], Mk[:, j])
        ray = d[:n] - d[n:2 * n]
        scale = np.max(np.abs(ray)) if n else 0.0
        if scale > 0:
            ray = ray / scale
        return _unbounded(problem, w, ray, sx2.iterations)

    y = np.zeros(m)
    if basis:
        y[keep] = np.linalg.solve(Mk[:, basis].T, cost[basis])
    y = y * sign
    lam = np.maximum(-y[:p], 0.0)
    mu = -y[p:]
    return _optimal(problem, w, lam, mu, sx2.iterations)


def _optimal(problem, w, lam, mu, iterations):
    G, g, A, a, c = problem.G, problem.g, problem.A, problem.a, problem.c
    slack = g - G @ w
    pres = max(
        float(np.max(-slack, initial=0.0)),
        float(np.max(np.abs(A @ w - a), initial=0.0)),
    )
    dres = float(np.max(np.abs(c + G.T @ lam + A.T @ mu), initial=0.0))
    primal = float(c @ w + problem.c0)
    dual = float(problem.c0 - lam @ g - mu @ a)
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=w,
        objective=primal,
        ineq_duals=lam,
        eq_duals=mu,
        primal_residual=pres,
        dual_residual=dres,
        gap=abs(primal - dual),
        cs_residual=float(np.max(np.abs(lam * slack), initial=0.0)),
        dual_objective=dual,
        iterations=iterations,
    )


def _infeasible(problem, y, iterations):
    p = problem.G.shape[0]
    lam = np.maximum(-y[:p], 0.0)
    mu = -y[p:]
    scale = max(float(np.max(np.abs(lam), initial=0.0)), float(np.max(np.abs(mu), initial=0.0)), 1e-300)
    lam, mu = lam / scale, mu / scale
    return LpSolution(
        status=LpStatus.INFEASIBLE,
        farkas_ineq=lam,
        farkas_eq=mu,
        farkas_value=float(lam @ problem.g + mu @ problem.a),
        dual_residual=float(np.max(np.abs(problem.G.T @ lam + problem.A.T @ mu), initial=0.0)),
        iterations=iterations,
    )


def _unbounded(problem, w, ray, iterations):
    G, A = problem.G, problem.A
    pres = max(
        float(np.max(G @ w - problem.g, initial=0.0)),
        float(np.max(np.abs(A @ w - problem.a), initial=0.0)),
    )
    return LpSolution(
        status=LpStatus.UNBOUNDED,
        x=w,
        objective=float("-inf"),
        ray=ray,
        primal_residual=pres,
        iterations=iterations,
    )


def check_certificate(problem: LpProblem, sol: LpSolution, tol: LpTolerances | None = None) -> dict:
    """Recompute the certificate of ``sol`` by plain arithmetic.

    Returns a dict with ``ok`` plus the individual residuals.
    """
    tol = tol or DEFAULT_TOLERANCES
    G, g, A, a, c = problem.G, problem.g, problem.A, problem.a, problem.c
    if sol.status is LpStatus.OPTIMAL:
        w, lam, mu = sol.x, sol.ineq_duals, sol.eq_duals
        pres = max(float(np.max(G @ w - g, initial=0.0)), float(np.max(np.abs(A @ w - a), initial=0.0)))
        dres = float(np.max(np.abs(c + G.T @ lam + A.T @ mu), initial=0.0))
        gap = abs(float(c @ w - (-lam @ g - mu @ a)))
        ok = pres <= tol.feas and dres <= tol.feas and gap <= tol.gap and bool(np.all(lam >= 0))
        return {"ok": ok, "primal_residual": pres, "dual_residual": dres, "gap": gap}
    if sol.status is LpStatus.INFEASIBLE:
        y, z = sol.farkas_ineq, sol.farkas_eq
        combo = float(np.max(np.abs(G.T @ y + A.T @ z), initial=0.0))
        value = float(y @ g + z @ a)
        ok = bool(np.all(y >= 0)) and combo <= tol.feas and value <= -1e-9
        return {"ok": ok, "combination_residual": combo, "farkas_value": value}
    if sol.status is LpStatus.UNBOUNDED:
        w, d = sol.x, sol.ray
        pres = max(float(np.max(G @ w - g, initial=0.0)), float(np.max(np.abs(A @ w - a), initial=0.0)))
        ray_res = max(float(np.max(G @ d, initial=0.0)), float(np.max(np.abs(A @ d), initial=0.0)))
        slope = float(c @ d)
        ok = pres <= tol.feas and ray_res <= tol.feas and slope < -1e-12
        return {"ok": ok, "primal_residual": pres, "ray_residual": ray_res, "ray_slope": slope}
    return {"ok": False}


@contextmanager
def tolerances(**overrides):
    """Temporarily replace the default tolerances used by every ``solve`` call."""
    global DEFAULT_TOLERANCES
    old = DEFAULT_TOLERANCES
    DEFAULT_TOLERANCES = replace(old, **overrides)
    try:
        yield DEFAULT_TOLERANCES
    finally:
        DEFAULT_TOLERANCES = old
