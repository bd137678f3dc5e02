"""
Fast informed bound
The FIB operator F, its residual G = alpha - F(alpha), plain fixed-point
iteration, the QMDP baseline, and a brute-force belief-grid value iteration
used as a test oracle on tiny models.
"""

import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .model import AlphaMatrix, PomdpModel

logger = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]

TRACE_COLUMNS = ['k', 'residual_inf', 'step_kind', 'step_seconds', 'weight_seconds']


@dataclass
class SolveParams:
    tol: float = 1e-6
    max_iter: int = 10000
    seed: int = 0
    record_iterates: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        self.max_iter = int(self.max_iter)


@dataclass
class StepRecord:
    k: int
    residual_inf: float
    step_kind: str  # 'FPI' | 'AA'
    step_seconds: float
    weight_seconds: float = 0.0
    weight_sum: float = math.nan
    safeguard_checked: bool = False


@dataclass
class SolveResult:
    alpha: AlphaMatrix
    trace: List[StepRecord]
    converged: bool
    iterations: int
    iterates: Optional[List[np.ndarray]] = None
    solver: str = 'fib'

    @property
    def t_total(self) -> float:
        return math.fsum(rec.step_seconds for rec in self.trace)

    @property
    def t_aa(self) -> float:
        return math.fsum(rec.weight_seconds for rec in self.trace)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([rec.residual_inf for rec in self.trace])

    def trace_frame(self, full: bool = False) -> pd.DataFrame:
        """Per-iteration trace; `full` adds the weight-sum and safeguard columns"""
        frame = pd.DataFrame([vars(rec) for rec in self.trace],
                             columns=TRACE_COLUMNS + ['weight_sum', 'safeguard_checked'])
        return frame if full else frame[TRACE_COLUMNS]


class FibOperator:
    """F for one model, with the per-(a, o) matrices T * Omega cached.

    _stacked[(a, o, s), s'] = T[a, s, s'] * Omega[a, s', o]; applying F is one
    matrix product against the (|S|, |A|) stack of alpha vectors followed by
    a max over a' and a sum over o.
    """

    def __init__(self, model: PomdpModel):
        self.model = model
        A, S, O = model.num_actions, model.num_states, model.num_observations
        joint = model.transition[:, None, :, :] * model.observation.transpose(0, 2, 1)[:, :, None, :]
        self._stacked = np.ascontiguousarray(joint.reshape(A * O * S, S))
        self._reward = np.ascontiguousarray(model.reward.T).reshape(-1)
        self._shape = (A, O, S, A)

    def __call__(self, alpha: np.ndarray) -> np.ndarray:
        A, O, S, _ = self._shape
        vectors = alpha.reshape(A, S)
        projected = (self._stacked @ vectors.T).reshape(self._shape)
        future = projected.max(axis=3).sum(axis=1)
        return self._reward + self.model.discount * future.reshape(-1)


class QmdpOperator:
    """alpha_a(s) <- r(s,a) + gamma * sum_s' T(s'|s,a) max_a' alpha_a'(s')"""

    def __init__(self, model: PomdpModel):
        self.model = model
        self._reward = np.ascontiguousarray(model.reward.T).reshape(-1)

    def __call__(self, alpha: np.ndarray) -> np.ndarray:
        model = self.model
        best = alpha.reshape(model.num_actions, model.num_states).max(axis=0)
        return self._reward + model.discount * (model.transition @ best).reshape(-1)


def _as_alpha(model: PomdpModel, alpha: Union[AlphaMatrix, np.ndarray]) -> AlphaMatrix:
    if not isinstance(alpha, AlphaMatrix):
        alpha = AlphaMatrix(np.array(alpha, dtype=float), model.num_states, model.num_actions)
    alpha.check_model(model)
    return alpha


def uniform_alpha(num_states: int, num_actions: int, r_min: float, r_max: float,
                  discount: float, seed) -> AlphaMatrix:
    """Entries i.i.d. uniform on [r_min / (1 - gamma), r_max / (1 - gamma)]"""
    rng = np.random.default_rng(seed)
    scale = 1.0 / (1.0 - discount)
    data = rng.uniform(r_min * scale, r_max * scale, size=num_states * num_actions)
    return AlphaMatrix(data, num_states, num_actions)


def init_alpha(model: PomdpModel, seed) -> AlphaMatrix:
    return uniform_alpha(model.num_states, model.num_actions, model.r_min, model.r_max,
                         model.discount, seed)


def apply_F(model: PomdpModel, alpha: Union[AlphaMatrix, np.ndarray]) -> AlphaMatrix:
    alpha = _as_alpha(model, alpha)
    return AlphaMatrix(FibOperator(model)(alpha.data), model.num_states, model.num_actions)


def residual_G(model: PomdpModel, alpha: Union[AlphaMatrix, np.ndarray]) -> np.ndarray:
    alpha = _as_alpha(model, alpha)
    return alpha.data - FibOperator(model)(alpha.data)


def qmdp_update(model: PomdpModel, alpha: Union[AlphaMatrix, np.ndarray]) -> AlphaMatrix:
    alpha = _as_alpha(model, alpha)
    return AlphaMatrix(QmdpOperator(model)(alpha.data), model.num_states, model.num_actions)


def fixed_point_iterate(operator: Operator, alpha0: np.ndarray, params: SolveParams):
    """alpha <- operator(alpha) until the sup-norm residual drops to tol.

    Returns (alpha, trace, converged, iterates). Trace row k carries the
    residual of alpha^k; the returned alpha is the image of the last
    recorded iterate.
    """
    alpha = np.array(alpha0, dtype=float)
    trace: List[StepRecord] = []
    iterates = [alpha.copy()] if params.record_iterates else None
    converged = False

    for k in range(params.max_iter):
        started = time.perf_counter()
        image = operator(alpha)
        residual = float(np.max(np.abs(alpha - image)))
        alpha = image
        trace.append(StepRecord(k, residual, 'FPI', time.perf_counter() - started))
        if iterates is not None:
            iterates.append(alpha.copy())
        logger.debug(f"k={k} residual={residual:.3e}")
        if residual <= params.tol:
            converged = True
            break

    return alpha, trace, converged, iterates


def start_alpha(model: PomdpModel, params: SolveParams, alpha0) -> np.ndarray:
    if alpha0 is None:
        return init_alpha(model, params.seed).data
    return _as_alpha(model, alpha0).data.copy()


def finish_result(num_states: int, num_actions: int, solver: str, alpha, trace, converged,
                  iterates) -> SolveResult:
    result = SolveResult(AlphaMatrix(alpha, num_states, num_actions),
                         trace, converged, len(trace), iterates, solver)
    if converged:
        logger.info(f"{solver} converged in {result.iterations} iterations "
                    f"(residual {trace[-1].residual_inf:.3e}, {result.t_total:.3f}s)")
    else:
        logger.warning(f"{solver} stopped after {result.iterations} iterations without converging "
                       f"(residual {trace[-1].residual_inf:.3e})")
    return result


def fib_solve(model: PomdpModel, params: Optional[SolveParams] = None, alpha0=None) -> SolveResult:
    params = params or SolveParams()
    alpha, trace, converged, iterates = fixed_point_iterate(
        FibOperator(model), start_alpha(model, params, alpha0), params)
    return finish_result(model.num_states, model.num_actions, 'fib', alpha, trace, converged, iterates)


def qmdp_solve(model: PomdpModel, params: Optional[SolveParams] = None, alpha0=None) -> SolveResult:
    params = params or SolveParams()
    alpha, trace, converged, iterates = fixed_point_iterate(
        QmdpOperator(model), start_alpha(model, params, alpha0), params)
    return finish_result(model.num_states, model.num_actions, 'qmdp', alpha, trace, converged, iterates)


@dataclass
class BeliefGridValues:
    points: np.ndarray  # (N, |S|)
    values: np.ndarray  # (N,)
    iterations: int = 0
    converged: bool = False

    def __len__(self) -> int:
        return len(self.values)


def simplex_grid(num_states: int, divisions: int) -> np.ndarray:
    """Every belief whose entries are multiples of 1 / divisions"""
    points = [
        c + (divisions - sum(c),)
        for c in itertools.product(range(divisions + 1), repeat=num_states - 1)
        if sum(c) <= divisions
    ]
    return np.array(points, dtype=float).reshape(-1, num_states) / divisions


def exact_vi_oracle(model: PomdpModel, resolution: int = 200, tol: float = 1e-8,
                    max_iter: int = 100000) -> BeliefGridValues:
    """Value iteration on a regular belief grid with nearest-point successors.

    Only for tiny test models. `resolution` is the number of divisions per
    simplex edge, so a 2-state model gets resolution + 1 grid points.
    """
    S, A, O = model.num_states, model.num_actions, model.num_observations
    if S > 3:
        raise ValueError(f"exact_vi_oracle supports at most 3 states, got {S}")

    points = simplex_grid(S, resolution)
    tree = cKDTree(points)
    obs_prob = np.zeros((A, len(points), O))
    successor = np.zeros((A, len(points), O), dtype=int)

    for a in range(A):
        joint = (points @ model.transition[a])[:, :, None] * model.observation[a][None, :, :]
        obs_prob[a] = joint.sum(axis=1)
        with np.errstate(invalid='ignore', divide='ignore'):
            posterior = np.where(obs_prob[a][:, None, :] > 0,
                                 joint / obs_prob[a][:, None, :], 1.0 / S)
        _, idx = tree.query(posterior.transpose(0, 2, 1).reshape(-1, S))
        successor[a] = idx.reshape(len(points), O)

    immediate = points @ model.reward  # (N, A)
    values = np.zeros(len(points))
    for it in range(1, max_iter + 1):
        future = (obs_prob * values[successor]).sum(axis=2)  # (A, N)
        updated = (immediate + model.discount * future.T).max(axis=1)
        delta = float(np.max(np.abs(updated - values)))
        values = updated
        if delta <= tol:
            return BeliefGridValues(points, values, it, True)

    logger.warning(f"belief-grid value iteration hit max_iter={max_iter}")
    return BeliefGridValues(points, values, max_iter, False)
