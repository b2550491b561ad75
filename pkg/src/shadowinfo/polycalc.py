"""Polyhedral convex functions in extended epigraph form.

A :class:`PolyFun` of dimension ``d`` with ``m`` auxiliary variables is

    f(x) = inf_y { cx.x + cy.y + c0 :  Gx x + Gy y <= g,  Ax x + Ay y = a }

with ``f(x) = +inf`` when no ``y`` is feasible and ``-inf`` when the infimum is
unbounded.  Sums, scaling, affine composition and partial minimization only
stack blocks, and the conjugate is the LP dual of the evaluation program, so
every operation stays exact.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import lpcore
from .errors import (
    DimensionMismatch,
    EmptyAtom,
    EmptyPieceList,
    ImproperFunction,
    LpNumericalFailure,
    NonpositiveScale,
    NotInDomain,
)
from .lpcore import LpProblem, LpStatus

INF = float("inf")
FENCHEL_TOL = 1e-8


def _ro(arr, shape=None):
    arr = np.array(arr, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


class PolyFun:

    def __init__(self, cx, cy, c0, Gx, Gy, g, Ax, Ay, a, dual_of=None):
        cx = np.asarray(cx, dtype=float).reshape(-1)
        cy = np.asarray(cy, dtype=float).reshape(-1)
        d, m = cx.size, cy.size
        g = np.asarray(g, dtype=float).reshape(-1)
        a = np.asarray(a, dtype=float).reshape(-1)
        p, q = g.size, a.size
        self.cx = _ro(cx)
        self.cy = _ro(cy)
        self.c0 = float(c0)
        try:
            self.Gx = _ro(Gx, (p, d))
            self.Gy = _ro(Gy, (p, m))
            self.Ax = _ro(Ax, (q, d))
            self.Ay = _ro(Ay, (q, m))
        except ValueError as exc:
            raise DimensionMismatch(f"inconsistent block shapes: {exc}") from None
        self.g = _ro(g)
        self.a = _ro(a)
        self.dual_of = dual_of

    @property
    def dim(self) -> int:
        return self.cx.size

    @property
    def aux_dim(self) -> int:
        return self.cy.size

    @property
    def num_ineq(self) -> int:
        return self.g.size

    @property
    def num_eq(self) -> int:
        return self.a.size

    def __repr__(self):
        return f"PolyFun(d={self.dim}, m={self.aux_dim}, ineq={self.num_ineq}, eq={self.num_eq})"

    def __call__(self, x):
        return evaluate(self, x)

    def evaluation_problem(self, x) -> LpProblem:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise DimensionMismatch(f"point has length {x.size}, function has dimension {self.dim}")
        return LpProblem(
            c=self.cy,
            G=self.Gy,
            g=self.g - self.Gx @ x,
            A=self.Ay,
            a=self.a - self.Ax @ x,
            c0=float(self.cx @ x + self.c0),
        )

    @functools.cached_property
    def properness(self) -> tuple[bool, str]:
        """(proper?, reason) decided by one feasibility LP and one recession LP."""
        d, m = self.dim, self.aux_dim
        feas = lpcore.solve(
            LpProblem(
                c=np.zeros(d + m),
                G=np.hstack([self.Gx, self.Gy]),
                g=self.g,
                A=np.hstack([self.Ax, self.Ay]),
                a=self.a,
            )
        )
        if feas.status is LpStatus.INFEASIBLE:
            return False, "empty domain"
        if feas.status is not LpStatus.OPTIMAL:
            raise LpNumericalFailure("domain check failed: " + feas.message)
        ray = lpcore.solve(LpProblem(c=self.cy, G=self.Gy, g=np.zeros(self.num_ineq), A=self.Ay, a=np.zeros(self.num_eq)))
        if ray.status is LpStatus.UNBOUNDED:
            return False, "value -inf on its domain"
        if ray.status is not LpStatus.OPTIMAL:
            raise LpNumericalFailure("recession check failed: " + ray.message)
        return True, ""

    @property
    def is_proper(self) -> bool:
        return self.properness[0]

    def check_proper(self, what="function"):
        ok, why = self.properness
        if not ok:
            raise ImproperFunction(f"{what} is improper: {why}")
        return self


# ---------------------------------------------------------------- constructors


def max_affine(pieces: Sequence[tuple[Sequence[float], float]]) -> PolyFun:
    """x -> max_i (a_i.x + b_i), with a single epigraph variable."""
    pieces = list(pieces)
    if not pieces:
        raise EmptyPieceList("max_affine needs at least one piece")
    slopes = np.array([np.atleast_1d(np.asarray(s, dtype=float)) for s, _ in pieces])
    if slopes.ndim != 2:
        raise DimensionMismatch("piece slopes have different lengths")
    b = np.array([float(c) for _, c in pieces])
    k, d = slopes.shape
    return PolyFun(
        cx=np.zeros(d), cy=[1.0], c0=0.0,
        Gx=slopes, Gy=-np.ones((k, 1)), g=-b,
        Ax=np.zeros((0, d)), Ay=np.zeros((0, 1)), a=[],
    )


def indicator(G=None, g=None, A=None, a=None, dim=None) -> PolyFun:
    """0 on {G x <= g, A x = a}, +inf elsewhere."""
    if dim is None:
        for mat in (G, A):
            if mat is not None and np.size(mat):
                dim = np.atleast_2d(np.asarray(mat, dtype=float)).shape[1]
                break
        else:
            raise DimensionMismatch("indicator needs a dimension when no constraint is given")
    G = np.zeros((0, dim)) if G is None else np.asarray(G, dtype=float).reshape(-1, dim)
    A = np.zeros((0, dim)) if A is None else np.asarray(A, dtype=float).reshape(-1, dim)
    g = np.zeros(0) if g is None else np.asarray(g, dtype=float).reshape(-1)
    a = np.zeros(0) if a is None else np.asarray(a, dtype=float).reshape(-1)
    if g.size != G.shape[0] or a.size != A.shape[0]:
        raise DimensionMismatch("right-hand sides do not match constraint rows")
    return PolyFun(
        cx=np.zeros(dim), cy=np.zeros(0), c0=0.0,
        Gx=G, Gy=np.zeros((G.shape[0], 0)), g=g,
        Ax=A, Ay=np.zeros((A.shape[0], 0)), a=a,
    )


def box_indicator(lower, upper) -> PolyFun:
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    d = lower.size
    return indicator(G=np.vstack([np.eye(d), -np.eye(d)]), g=np.concatenate([upper, -lower]), dim=d)


def constant(dim: int, value: float) -> PolyFun:
    return PolyFun(np.zeros(dim), [], value, np.zeros((0, dim)), np.zeros((0, 0)), [], np.zeros((0, dim)), np.zeros((0, 0)), [])


def linear(w, c0: float = 0.0) -> PolyFun:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    f = constant(w.size, c0)
    return add_linear(f, -w)


# ---------------------------------------------------------------- algebra


def weighted_sum(funcs: Sequence[PolyFun], weights: Sequence[float]) -> PolyFun:
    """sum_i w_i f_i with positive weights; auxiliary blocks are stacked."""
    funcs = list(funcs)
    weights = [float(w) for w in weights]
    if not funcs:
        raise EmptyAtom("weighted_sum of an empty family")
    if len(weights) != len(funcs):
        raise DimensionMismatch("one weight per function required")
    d = funcs[0].dim
    for f in funcs:
        if f.dim != d:
            raise DimensionMismatch(f"dimensions {d} and {f.dim} differ")
    for w in weights:
        if not w > 0:
            raise NonpositiveScale(f"weight {w} is not positive")
    if len(funcs) == 1:
        return scale(funcs[0], weights[0]) if weights[0] != 1.0 else funcs[0]
    m = sum(f.aux_dim for f in funcs)
    p = sum(f.num_ineq for f in funcs)
    q = sum(f.num_eq for f in funcs)
    Gy = np.zeros((p, m))
    Ay = np.zeros((q, m))
    cy = np.zeros(m)
    ro = rq = col = 0
    for f, w in zip(funcs, weights):
        Gy[ro:ro + f.num_ineq, col:col + f.aux_dim] = f.Gy
        Ay[rq:rq + f.num_eq, col:col + f.aux_dim] = f.Ay
        cy[col:col + f.aux_dim] = w * f.cy
        ro += f.num_ineq
        rq += f.num_eq
        col += f.aux_dim
    return PolyFun(
        cx=sum(w * f.cx for f, w in zip(funcs, weights)),
        cy=cy,
        c0=sum(w * f.c0 for f, w in zip(funcs, weights)),
        Gx=np.vstack([f.Gx for f in funcs]), Gy=Gy, g=np.concatenate([f.g for f in funcs]),
        Ax=np.vstack([f.Ax for f in funcs]), Ay=Ay, a=np.concatenate([f.a for f in funcs]),
    )


def add(f: PolyFun, g: PolyFun) -> PolyFun:
    return weighted_sum([f, g], [1.0, 1.0])


def scale(f: PolyFun, alpha: float) -> PolyFun:
    alpha = float(alpha)
    if not alpha > 0:
        raise NonpositiveScale(f"scale factor {alpha} is not positive")
    return PolyFun(alpha * f.cx, alpha * f.cy, alpha * f.c0, f.Gx, f.Gy, f.g, f.Ax, f.Ay, f.a)


def add_linear(f: PolyFun, w) -> PolyFun:
    """x -> f(x) - w.x"""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.size != f.dim:
        raise DimensionMismatch(f"linear term has length {w.size}, function has dimension {f.dim}")
    return PolyFun(f.cx - w, f.cy, f.c0, f.Gx, f.Gy, f.g, f.Ax, f.Ay, f.a)


def affine_compose(f: PolyFun, M, c=None) -> PolyFun:
    """u -> f(M u + c)"""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.shape[0] != f.dim:
        raise DimensionMismatch(f"map has {M.shape[0]} rows, function has dimension {f.dim}")
    c = np.zeros(f.dim) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
    if c.size != f.dim:
        raise DimensionMismatch("offset length differs from function dimension")
    return PolyFun(
        cx=M.T @ f.cx, cy=f.cy, c0=f.c0 + float(f.cx @ c),
        Gx=f.Gx @ M, Gy=f.Gy, g=f.g - f.Gx @ c,
        Ax=f.Ax @ M, Ay=f.Ay, a=f.a - f.Ax @ c,
    )


def shift(f: PolyFun, z) -> PolyFun:
    """x -> f(x + z)"""
    return affine_compose(f, np.eye(f.dim), z)


def partial_min(f: PolyFun, coords: Sequence[int]) -> PolyFun:
    """Minimize out the argument coordinates ``coords`` (moved to the auxiliary block).

    The result can be improper; that surfaces when it is evaluated or checked.
    """
    coords = sorted({int(i) for i in coords})
    if any(i < 0 or i >= f.dim for i in coords):
        raise DimensionMismatch(f"coordinates {coords} out of range for dimension {f.dim}")
    keep = [i for i in range(f.dim) if i not in coords]
    return PolyFun(
        cx=f.cx[keep], cy=np.concatenate([f.cy, f.cx[coords]]), c0=f.c0,
        Gx=f.Gx[:, keep], Gy=np.hstack([f.Gy, f.Gx[:, coords]]), g=f.g,
        Ax=f.Ax[:, keep], Ay=np.hstack([f.Ay, f.Ax[:, coords]]), a=f.a,
    )


def minimize_last(f: PolyFun, k: int) -> PolyFun:
    return partial_min(f, range(f.dim - k, f.dim))


def conjugate(f: PolyFun) -> PolyFun:
    """Legendre-Fenchel conjugate as the LP dual of the evaluation program.

    f*(v) = inf { g.lam + a.mu - c0 : lam >= 0,
                  Gx^T lam + Ax^T mu = v - cx,  Gy^T lam + Ay^T mu = -cy }.
    """
    d, m, p, q = f.dim, f.aux_dim, f.num_ineq, f.num_eq
    Gy = np.hstack([-np.eye(p), np.zeros((p, q))])
    Ay = np.vstack([np.hstack([f.Gx.T, f.Ax.T]), np.hstack([f.Gy.T, f.Ay.T])])
    Ax = np.vstack([-np.eye(d), np.zeros((m, d))])
    return PolyFun(
        cx=np.zeros(d), cy=np.concatenate([f.g, f.a]), c0=-f.c0,
        Gx=np.zeros((p, d)), Gy=Gy, g=np.zeros(p),
        Ax=Ax, Ay=Ay, a=np.concatenate([-f.cx, -f.cy]),
        dual_of=f,
    )


def recession(f: PolyFun) -> PolyFun:
    """Recession (horizon) function: drop the constant and every right-hand side."""
    f.check_proper("recession input")
    return PolyFun(
        f.cx, f.cy, 0.0, f.Gx, f.Gy, np.zeros(f.num_ineq), f.Ax, f.Ay, np.zeros(f.num_eq)
    )


def expectation_family(space, atom: Sequence[int], family: Mapping[int, PolyFun] | Sequence[PolyFun]) -> PolyFun:
    """x -> sum_{s in atom} p_s / P(atom) f_s(x)."""
    atom = list(atom)
    if not atom:
        raise EmptyAtom("expectation over an empty atom")
    probs = np.asarray(space.probs if hasattr(space, "probs") else space, dtype=float)
    mass = probs[atom].sum()
    return weighted_sum([family[s] for s in atom], [probs[s] / mass for s in atom])


# ---------------------------------------------------------------- evaluation


def solve_at(f: PolyFun, x) -> lpcore.LpSolution:
    if f.dual_of is not None:
        f.dual_of.check_proper("conjugated function")
    return lpcore.solve(f.evaluation_problem(x))


def evaluate(f: PolyFun, x) -> float:
    """Exact value of ``f`` at ``x`` (``inf`` outside the domain, ``-inf`` if unbounded)."""
    sol = solve_at(f, x)
    if sol.status is LpStatus.OPTIMAL:
        return sol.objective
    if sol.status is LpStatus.INFEASIBLE:
        return INF
    if sol.status is LpStatus.UNBOUNDED:
        return -INF
    raise LpNumericalFailure(f"evaluation LP failed: {sol.message}")


def evaluate_many(f: PolyFun, points) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1, f.dim)
    return np.array([evaluate(f, x) for x in points])


def fenchel_gap(f: PolyFun, x, v, fstar: PolyFun | None = None) -> float:
    """f(x) + f*(v) - x.v, which is >= 0 and vanishes iff v is a subgradient at x."""
    fstar = conjugate(f) if fstar is None else fstar
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return evaluate(f, x) + evaluate(fstar, v) - float(x @ v)


def subgradient(f: PolyFun, x, certify: bool = True) -> np.ndarray:
    """A subgradient of ``f`` at ``x`` read off the evaluation LP multipliers.

    With ``certify`` the Fenchel equality f(x) + f*(v) = x.v is checked to
    FENCHEL_TOL; failure raises :class:`LpNumericalFailure`.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sol = solve_at(f, x)
    if sol.status is LpStatus.INFEASIBLE:
        raise NotInDomain(f"point {x.tolist()} lies outside the domain")
    if sol.status is LpStatus.UNBOUNDED:
        raise ImproperFunction("function is -inf at the point")
    if sol.status is not LpStatus.OPTIMAL:
        raise LpNumericalFailure(f"evaluation LP failed: {sol.message}")
    v = f.cx + f.Gx.T @ sol.ineq_duals + f.Ax.T @ sol.eq_duals
    if certify:
        gap = fenchel_gap(f, x, v)
        if not abs(gap) <= FENCHEL_TOL * max(1.0, abs(sol.objective)):
            raise LpNumericalFailure(f"subgradient failed Fenchel certification (gap {gap:.3e})")
    return v


@dataclass
class Lin:
    """Affine expression ``mat @ w[cols] + const`` in the variables of an :class:`LpModel`."""

    cols: np.ndarray
    mat: np.ndarray
    const: np.ndarray

    @classmethod
    def var(cls, cols) -> "Lin":
        cols = np.asarray(cols, dtype=int)
        return cls(cols, np.eye(cols.size), np.zeros(cols.size))

    @classmethod
    def fixed(cls, values) -> "Lin":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(np.zeros(0, dtype=int), np.zeros((values.size, 0)), values)

    @property
    def size(self) -> int:
        return self.const.size

    def plus(self, other: "Lin") -> "Lin":
        return Lin(
            np.concatenate([self.cols, other.cols]),
            np.hstack([self.mat, other.mat]),
            self.const + other.const,
        )


class LpModel:
    """Incremental assembly of one LP out of several PolyFun blocks."""

    def __init__(self):
        self.nvars = 0
        self._ineq = []
        self._eq = []
        self._cost = []
        self.c0 = 0.0

    def add_vars(self, k: int) -> np.ndarray:
        cols = np.arange(self.nvars, self.nvars + k)
        self.nvars += k
        return cols

    def add_cost(self, cols, coeffs):
        self._cost.append((np.asarray(cols, dtype=int), np.asarray(coeffs, dtype=float).reshape(-1)))

    def add_ineq(self, cols, mat, rhs):
        self._ineq.append((np.asarray(cols, dtype=int), np.asarray(mat, dtype=float).reshape(-1, len(cols)), np.atleast_1d(rhs)))

    def add_eq(self, cols, mat, rhs):
        self._eq.append((np.asarray(cols, dtype=int), np.asarray(mat, dtype=float).reshape(-1, len(cols)), np.atleast_1d(rhs)))

    def add_polyfun(self, f: PolyFun, x: Lin, weight: float = 1.0) -> np.ndarray:
        """Add ``weight * f(x)`` to the objective; returns the auxiliary columns."""
        if x.size != f.dim:
            raise DimensionMismatch(f"argument has size {x.size}, function has dimension {f.dim}")
        y = self.add_vars(f.aux_dim)
        cols = np.concatenate([x.cols, y])
        if f.num_ineq:
            self.add_ineq(cols, np.hstack([f.Gx @ x.mat, f.Gy]), f.g - f.Gx @ x.const)
        if f.num_eq:
            self.add_eq(cols, np.hstack([f.Ax @ x.mat, f.Ay]), f.a - f.Ax @ x.const)
        self.add_cost(x.cols, weight * (f.cx @ x.mat))
        self.add_cost(y, weight * f.cy)
        self.c0 += weight * (float(f.cx @ x.const) + f.c0)
        return y

    def add_level(self, f: PolyFun, x: Lin, level: Lin) -> np.ndarray:
        """Constrain f(x) <= level (a scalar affine expression)."""
        y = self.add_vars(f.aux_dim)
        cols = np.concatenate([x.cols, y])
        if f.num_ineq:
            self.add_ineq(cols, np.hstack([f.Gx @ x.mat, f.Gy]), f.g - f.Gx @ x.const)
        if f.num_eq:
            self.add_eq(cols, np.hstack([f.Ax @ x.mat, f.Ay]), f.a - f.Ax @ x.const)
        row_cols = np.concatenate([x.cols, y, level.cols])
        row = np.concatenate([f.cx @ x.mat, f.cy, -level.mat.reshape(-1)])
        self.add_ineq(row_cols, row, float(level.const[0] - f.cx @ x.const - f.c0))
        return y

    def problem(self) -> LpProblem:
        n = self.nvars
        c = np.zeros(n)
        for cols, coeffs in self._cost:
            np.add.at(c, cols, coeffs)

        def stack(blocks):
            rows = sum(mat.shape[0] for _, mat, _ in blocks)
            M = np.zeros((rows, n))
            rhs = np.zeros(rows)
            r = 0
            for cols, mat, b in blocks:
                k = mat.shape[0]
                for j, col in enumerate(cols):
                    M[r:r + k, col] += mat[:, j]
                rhs[r:r + k] = b
                r += k
            return M, rhs

        G, g = stack(self._ineq)
        A, a = stack(self._eq)
        return LpProblem(c=c, G=G, g=g, A=A, a=a, c0=self.c0)
