"""Exact shadow prices of information for finite multistage stochastic programs."""
from .errors import ShadowInfoError
from .filtration import FilteredSpace, Process, build_space
from .polycalc import PolyFun, conjugate, evaluate, max_affine
from .problemfile import parse
from .shadow import StochasticProgram, solve_dual, solve_primal, verify_shadow_price

__version__ = "0.1.0"

__all__ = [
    "FilteredSpace",
    "PolyFun",
    "Process",
    "ShadowInfoError",
    "StochasticProgram",
    "build_space",
    "conjugate",
    "evaluate",
    "max_affine",
    "parse",
    "solve_dual",
    "solve_primal",
    "verify_shadow_price",
]
