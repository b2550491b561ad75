"""Finite filtered probability spaces and processes on them.

A filtration is stored extensionally: for each stage ``t`` a partition of the
scenario set into atoms.  Every partition must refine the previous one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BadProbabilities, DimensionMismatch, NonNestedPartition, OrphanScenario

PROB_TOL = 1e-12


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def labels_from_atoms(atoms: Sequence[Sequence[int]], num_scenarios: int, stage=None) -> np.ndarray:
    """Map a list of atoms (scenario indices) to an atom label per scenario."""
    where = f"stage {stage}" if stage is not None else "partition"
    labels = np.full(num_scenarios, -1, dtype=int)
    for k, atom in enumerate(atoms):
        if len(atom) == 0:
            raise OrphanScenario(f"{where}: atom {k} is empty")
        for s in atom:
            if labels[s] >= 0:
                raise OrphanScenario(f"{where}: scenario {s} appears in atoms {labels[s]} and {k}")
            labels[s] = k
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise OrphanScenario(f"{where}: scenarios {missing.tolist()} belong to no atom")
    return labels


def conditional_mean(probs: np.ndarray, labels: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Conditional expectation of ``w`` (shape (S,) or (S, k)) given a partition.

    Each atom ``A`` receives ``sum_{s in A} p_s / P(A) * w_s``.
    """
    w = np.asarray(w, dtype=float)
    flat = w.reshape(w.shape[0], -1)
    natoms = int(labels.max()) + 1
    mass = np.bincount(labels, weights=probs, minlength=natoms)
    out = np.zeros((natoms, flat.shape[1]))
    np.add.at(out, labels, flat * probs[:, None])
    out /= mass[:, None]
    return out[labels].reshape(w.shape)


@dataclass(frozen=True, eq=False)
class FilteredSpace:
    ids: tuple[str, ...]
    probs: np.ndarray
    # partitions[t] is a tuple of atoms; each atom a tuple of scenario indices
    partitions: tuple[tuple[tuple[int, ...], ...], ...]
    labels: np.ndarray  # shape (T+1, S)

    @property
    def num_scenarios(self) -> int:
        return len(self.ids)

    @property
    def T(self) -> int:
        return len(self.partitions) - 1

    @property
    def num_stages(self) -> int:
        return len(self.partitions)

    def atoms(self, t: int) -> tuple[tuple[int, ...], ...]:
        return self.partitions[t]

    def atom_prob(self, t: int, k: int) -> float:
        return float(self.probs[list(self.partitions[t][k])].sum())

    def atom_of(self, t: int, s: int) -> int:
        return int(self.labels[t, s])

    def index(self, scenario_id: str) -> int:
        return self.ids.index(scenario_id)

    def children(self, t: int, k: int) -> list[int]:
        """Indices of the stage ``t+1`` atoms inside atom ``k`` of stage ``t``."""
        members = self.partitions[t][k]
        return sorted({int(self.labels[t + 1, s]) for s in members})

    def representative(self, t: int, k: int) -> int:
        return self.partitions[t][k][0]

    def cond_exp(self, t: int, w) -> np.ndarray:
        return conditional_mean(self.probs, self.labels[t], w)

    def expect(self, w) -> np.ndarray | float:
        w = np.asarray(w, dtype=float)
        out = np.tensordot(self.probs, w, axes=(0, 0))
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {
            "scenarios": [{"id": i, "prob": repr(float(p))} for i, p in zip(self.ids, self.probs)],
            "partitions": [[[self.ids[s] for s in atom] for atom in part] for part in self.partitions],
        }


def build_space(scenarios: Iterable[tuple[str, float]], partitions: Sequence[Sequence[Sequence]]) -> FilteredSpace:
    """Validate raw inputs and return a :class:`FilteredSpace`.

    ``partitions`` lists, for every stage, the atoms as lists of scenario ids
    (or integer indices).
    """
    scenarios = list(scenarios)
    ids = tuple(str(sid) for sid, _ in scenarios)
    if len(set(ids)) != len(ids):
        raise BadProbabilities("duplicate scenario ids")
    probs = np.array([float(p) for _, p in scenarios], dtype=float)
    if probs.size == 0:
        raise BadProbabilities("no scenarios given")
    bad = np.flatnonzero(~(probs > 0) | (probs > 1))
    if bad.size:
        raise BadProbabilities(f"probabilities must lie in (0, 1]; offending scenarios {[ids[i] for i in bad]}")
    if abs(probs.sum() - 1.0) > PROB_TOL:
        raise BadProbabilities(f"probabilities sum to {probs.sum()!r}, not 1")
    if len(partitions) == 0:
        raise NonNestedPartition("at least one stage partition is required")

    lookup = {sid: i for i, sid in enumerate(ids)}

    def resolve(item, t, k):
        if isinstance(item, (int, np.integer)) and not isinstance(item, bool):
            if not 0 <= item < len(ids):
                raise OrphanScenario(f"stage {t}, atom {k}: unknown scenario index {item}")
            return int(item)
        if str(item) not in lookup:
            raise OrphanScenario(f"stage {t}, atom {k}: unknown scenario {item!r}")
        return lookup[str(item)]

    parts = []
    labels = []
    for t, part in enumerate(partitions):
        atoms = tuple(tuple(sorted(resolve(s, t, k) for s in atom)) for k, atom in enumerate(part))
        atoms = tuple(sorted(atoms))
        labels.append(labels_from_atoms(atoms, len(ids), stage=t))
        parts.append(atoms)
    for t in range(1, len(parts)):
        for k, atom in enumerate(parts[t]):
            parents = {int(labels[t - 1][s]) for s in atom}
            if len(parents) != 1:
                raise NonNestedPartition(
                    f"stage {t}, atom {k} {[ids[s] for s in atom]} straddles stage {t - 1} atoms {sorted(parents)}"
                )
    lab = np.array(labels, dtype=int)
    lab.setflags(write=False)
    return FilteredSpace(ids=ids, probs=_frozen(probs), partitions=tuple(parts), labels=lab)


@dataclass(frozen=True, eq=False)
class Process:
    """A vector value per (stage, scenario); ``stages[t]`` has shape (S, n_t)."""

    dims: tuple[int, ...]
    stages: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.dims) != len(self.stages):
            raise DimensionMismatch("one array per stage required")
        fixed = []
        S = None
        for t, (n, arr) in enumerate(zip(self.dims, self.stages)):
            arr = np.array(arr, dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(-1, 1) if n == 1 else arr.reshape(1, -1)
            if arr.shape[1] != n:
                raise DimensionMismatch(f"stage {t}: vectors have length {arr.shape[1]}, expected {n}")
            if S is None:
                S = arr.shape[0]
            elif arr.shape[0] != S:
                raise DimensionMismatch(f"stage {t}: {arr.shape[0]} scenarios, expected {S}")
            arr.setflags(write=False)
            fixed.append(arr)
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "stages", tuple(fixed))

    @classmethod
    def from_flat(cls, dims: Sequence[int], flat) -> "Process":
        flat = np.asarray(flat, dtype=float)
        if flat.ndim == 1:
            flat = flat.reshape(-1, 1)
        if flat.shape[1] != sum(dims):
            raise DimensionMismatch(f"flat process has width {flat.shape[1]}, expected {sum(dims)}")
        cuts = np.cumsum([0, *dims])
        return cls(tuple(dims), tuple(flat[:, cuts[t]:cuts[t + 1]] for t in range(len(dims))))

    @classmethod
    def zeros(cls, dims: Sequence[int], num_scenarios: int) -> "Process":
        return cls.from_flat(dims, np.zeros((num_scenarios, sum(dims))))

    @property
    def num_scenarios(self) -> int:
        return self.stages[0].shape[0]

    def flat(self) -> np.ndarray:
        return np.hstack(self.stages)

    def upto(self, t: int) -> np.ndarray:
        """Truncation x^t = (x_0, ..., x_t) as an (S, n_0+...+n_t) array."""
        return np.hstack(self.stages[: t + 1])

    def _check(self, other):
        if self.dims != other.dims or self.num_scenarios != other.num_scenarios:
            raise DimensionMismatch("processes have different shapes")

    def __add__(self, other):
        self._check(other)
        return Process(self.dims, tuple(a + b for a, b in zip(self.stages, other.stages)))

    def __sub__(self, other):
        self._check(other)
        return Process(self.dims, tuple(a - b for a, b in zip(self.stages, other.stages)))

    def __neg__(self):
        return Process(self.dims, tuple(-a for a in self.stages))

    def __mul__(self, alpha):
        return Process(self.dims, tuple(alpha * a for a in self.stages))

    __rmul__ = __mul__

    def to_list(self) -> list:
        return [arr.tolist() for arr in self.stages]


def cond_exp(space: FilteredSpace, t: int, w) -> np.ndarray:
    return space.cond_exp(t, w)


def adapted_projection(space: FilteredSpace, x: Process) -> Process:
    return Process(x.dims, tuple(space.cond_exp(t, x.stages[t]) for t in range(len(x.dims))))


def is_adapted(space: FilteredSpace, x: Process, tol: float = 1e-9) -> bool:
    return adaptedness_residual(space, x) <= tol


def adaptedness_residual(space: FilteredSpace, x: Process) -> float:
    res = 0.0
    for t, arr in enumerate(x.stages):
        if arr.size:
            res = max(res, float(np.max(np.abs(arr - space.cond_exp(t, arr)))))
    return res


def in_annihilator(space: FilteredSpace, v: Process, tol: float = 1e-9) -> tuple[bool, float]:
    """``v`` annihilates adapted processes iff E_t v_t = 0 on every stage-t atom."""
    res = 0.0
    for t, arr in enumerate(v.stages):
        if arr.size:
            res = max(res, float(np.max(np.abs(space.cond_exp(t, arr)))))
    return res <= tol, res


def project_annihilator(space: FilteredSpace, v: Process) -> Process:
    """Orthogonal complement of the adapted projection: v - a(v)."""
    return v - adapted_projection(space, v)


def pairing(space: FilteredSpace, z: Process, v: Process) -> float:
    z._check(v)
    return float(space.probs @ np.sum(z.flat() * v.flat(), axis=1))
