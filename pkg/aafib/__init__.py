"""
aafib - Anderson-accelerated fast informed bound solvers for POMDPs
"""

from .anderson import AaParams, aa_fib_solve
from .errors import (AafibError, EvaluationError, ImpossibleObservationError, InsufficientHistoryError,
                     ModelValidationError, PomdpParseError, ShapeMismatchError)
from .fib import SolveParams, SolveResult, apply_F, fib_solve, init_alpha, qmdp_solve, residual_G
from .model import AlphaMatrix, Belief, PomdpModel, flat_index, validate
from .parser import load_pomdp, parse_pomdp, save_pomdp, serialize_pomdp
from .policy import EvalConfig, EvalStats, belief_update, evaluate, greedy_action
from .problems import generate_grid_nav, load_problem, tiger
from .sim import ModelSimulator, SimParams, sim_aa_fib_solve

__version__ = "0.1.0"
