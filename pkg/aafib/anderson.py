"""
Anderson acceleration
Regularized type-II Anderson mixing with a residual-schedule safeguard,
generic over any fixed-point operator on flat arrays. aa_fib_solve plugs
in the FIB operator; the simulation solver plugs in a sampled one.
"""

import logging
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq

from .errors import InsufficientHistoryError, ShapeMismatchError
from .fib import FibOperator, Operator, SolveParams, SolveResult, StepRecord, finish_result, start_alpha
from .model import PomdpModel

logger = logging.getLogger(__name__)


@dataclass
class AaParams(SolveParams):
    m_max: int = 4
    eta: float = 1e-3
    safeguard_d: float = 1e6
    safeguard_phi: float = 1e-6
    safeguard_ns: int = 5

    def __post_init__(self):
        super().__post_init__()
        # m_max = 0 degenerates to plain FPI, safeguard_d = 0 rejects every AA candidate
        if int(self.m_max) != self.m_max or self.m_max < 0:
            raise ValueError(f"m_max must be a non-negative integer, got {self.m_max}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.safeguard_d >= 0:
            raise ValueError(f"safeguard_d must be non-negative, got {self.safeguard_d}")
        if not self.safeguard_phi > 0:
            raise ValueError(f"safeguard_phi must be positive, got {self.safeguard_phi}")
        if int(self.safeguard_ns) != self.safeguard_ns or self.safeguard_ns < 1:
            raise ValueError(f"safeguard_ns must be an integer >= 1, got {self.safeguard_ns}")
        self.m_max = int(self.m_max)
        self.safeguard_ns = int(self.safeguard_ns)


@dataclass
class HistoryEntry:
    alpha: np.ndarray
    image: np.ndarray
    residual: np.ndarray


class AaState:
    """Anderson memory: the last m_max + 1 (alpha, F alpha, g) triples plus safeguard counters"""

    def __init__(self, m_max: int):
        self.history: Deque[HistoryEntry] = deque(maxlen=m_max + 1)
        self.n_aa = 0          # accepted AA steps
        self.n_consecutive = 0  # AA steps since the last safeguard check
        self.i_safe = True
        self.g0_norm: Optional[float] = None

    def push(self, alpha: np.ndarray, image: np.ndarray, residual: np.ndarray):
        self.history.append(HistoryEntry(alpha, image, residual))

    @property
    def memory(self) -> int:
        """Number of difference columns available (M^k)"""
        return max(len(self.history) - 1, 0)


def build_differences(state: AaState) -> Tuple[np.ndarray, np.ndarray]:
    """Y and S with one column per consecutive pair in the history, oldest first"""
    if len(state.history) < 2:
        raise InsufficientHistoryError(f"need at least 2 history entries, have {len(state.history)}")
    residuals = np.stack([entry.residual for entry in state.history], axis=1)
    alphas = np.stack([entry.alpha for entry in state.history], axis=1)
    return np.diff(residuals, axis=1), np.diff(alphas, axis=1)


def solve_xi(Y: np.ndarray, S: np.ndarray, g: np.ndarray, eta: float) -> np.ndarray:
    """argmin ||g - Y xi||^2 + lambda ||xi||^2 with lambda = eta (||S||_F^2 + ||Y||_F^2)"""
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise InsufficientHistoryError("weight solve needs at least one difference column")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(S)) and np.all(np.isfinite(g))):
        raise ValueError("non-finite input to the Anderson weight solve")

    M = Y.shape[1]
    lam = eta * (np.linalg.norm(S, 'fro') ** 2 + np.linalg.norm(Y, 'fro') ** 2)
    gram = Y.T @ Y + lam * np.eye(M)
    rhs = Y.T @ g
    if not gram.any():
        return np.zeros(M)

    try:
        return cho_solve(cho_factor(gram), rhs)
    except LinAlgError:
        logger.warning(f"Cholesky failed on the {M}x{M} weight system, falling back to least squares")
        return lstsq(gram, rhs)[0]


def xi_to_w(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size == 0:
        raise InsufficientHistoryError("xi is empty")
    M = xi.size
    w = np.empty(M + 1)
    w[0] = xi[0]
    w[1:M] = np.diff(xi)
    w[M] = 1.0 - xi[-1]
    return w


def aa_candidate(state: AaState, w: np.ndarray) -> np.ndarray:
    """Weighted combination of the cached operator images (never the raw iterates)"""
    if len(w) != len(state.history):
        raise ShapeMismatchError(f"{len(w)} weights for {len(state.history)} history entries")
    images = np.stack([entry.image for entry in state.history], axis=1)
    return images @ w


def safeguard_accept(g_k_norm: float, g0_norm: float, n_aa: int, d: float, phi: float, n_s: int) -> bool:
    return g_k_norm <= d * g0_norm * (n_aa / n_s + 1.0) ** (-(1.0 + phi))


def anderson_iterate(operator: Operator, alpha0: np.ndarray, params: AaParams):
    """Safeguarded AA loop. Same return contract as fixed_point_iterate."""
    alpha = np.array(alpha0, dtype=float)
    state = AaState(params.m_max)
    trace: List[StepRecord] = []
    iterates = [alpha.copy()] if params.record_iterates else None
    converged = False

    for k in range(params.max_iter):
        started = time.perf_counter()
        image = operator(alpha)
        g = alpha - image
        residual = float(np.max(np.abs(g)))
        if state.g0_norm is None:
            state.g0_norm = residual
        state.push(alpha, image, g)

        if residual <= params.tol or state.memory == 0:
            alpha = image
            trace.append(StepRecord(k, residual, 'FPI', time.perf_counter() - started))
            if iterates is not None:
                iterates.append(alpha.copy())
            if residual <= params.tol:
                converged = True
                break
            continue

        weight_started = time.perf_counter()
        Y, S = build_differences(state)
        w = xi_to_w(solve_xi(Y, S, g, params.eta))
        weight_seconds = time.perf_counter() - weight_started
        candidate = aa_candidate(state, w)

        checked = state.i_safe or state.n_consecutive >= params.safeguard_ns
        if not np.all(np.isfinite(candidate)):
            logger.warning(f"k={k}: non-finite AA candidate, taking the FPI step")
            alpha, kind, checked = image, 'FPI', False
        elif checked:
            if safeguard_accept(residual, state.g0_norm, state.n_aa, params.safeguard_d,
                                params.safeguard_phi, params.safeguard_ns):
                alpha, kind = candidate, 'AA'
                state.n_aa += 1
                state.i_safe = False
                state.n_consecutive = 1
            else:
                alpha, kind = image, 'FPI'
                state.n_consecutive = 0
        else:
            alpha, kind = candidate, 'AA'
            state.n_aa += 1
            state.n_consecutive += 1

        trace.append(StepRecord(k, residual, kind, time.perf_counter() - started,
                                weight_seconds, math.fsum(w), checked))
        if iterates is not None:
            iterates.append(alpha.copy())
        logger.debug(f"k={k} residual={residual:.3e} step={kind} M={state.memory} n_aa={state.n_aa}")

    return alpha, trace, converged, iterates


def aa_fib_solve(model: PomdpModel, params: Optional[AaParams] = None, alpha0=None) -> SolveResult:
    params = params or AaParams()
    alpha, trace, converged, iterates = anderson_iterate(
        FibOperator(model), start_alpha(model, params, alpha0), params)
    return finish_result(model.num_states, model.num_actions, 'aa-fib', alpha, trace, converged, iterates)
