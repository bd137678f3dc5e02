"""
Simulation-based FIB
A generative-model interface, the sampled operator F-hat built from
per-(s, a) batches of (s', o, r) draws, and the model-free AA-FIB solver
that runs the Anderson engine on F-hat.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Protocol, Sequence, Tuple

import numpy as np

from .anderson import AaParams, anderson_iterate
from .fib import FibOperator, SolveResult, finish_result, uniform_alpha
from .model import AlphaMatrix, PomdpModel

logger = logging.getLogger(__name__)


class ResamplePolicy(str, Enum):
    FRESH = 'fresh'
    FROZEN = 'frozen'


@dataclass
class SimParams:
    sample_size: int = 20
    seed: int = 0
    resample: ResamplePolicy = ResamplePolicy.FRESH

    def __post_init__(self):
        if int(self.sample_size) != self.sample_size or self.sample_size < 1:
            raise ValueError(f"sample_size must be a positive integer, got {self.sample_size}")
        self.sample_size = int(self.sample_size)
        self.resample = ResamplePolicy(self.resample)


@dataclass
class SampleBatch:
    """J draws (s'_j, o_j, r_j) for one (s, a) cell"""
    next_states: np.ndarray
    observations: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        self.next_states = np.asarray(self.next_states, dtype=int).reshape(-1)
        self.observations = np.asarray(self.observations, dtype=int).reshape(-1)
        self.rewards = np.asarray(self.rewards, dtype=float).reshape(-1)
        if self.next_states.size == 0:
            raise ValueError("a sample batch needs at least one draw")
        if not (self.next_states.size == self.observations.size == self.rewards.size):
            raise ValueError("sample batch columns differ in length")

    @classmethod
    def from_triples(cls, triples: Sequence[Tuple[int, int, float]]) -> "SampleBatch":
        next_states, observations, rewards = zip(*triples)
        return cls(np.array(next_states), np.array(observations), np.array(rewards))

    def __len__(self) -> int:
        return self.next_states.size


class Simulator(Protocol):
    num_states: int
    num_actions: int
    num_observations: int
    discount: float
    reward_range: Tuple[float, float]

    def sample(self, s: int, a: int, rng: np.random.Generator) -> Tuple[int, int, float]:
        ...

    def sample_all(self, sample_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(next_states, observations, rewards), each shaped (|A|, |S|, J)"""
        ...


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the first cdf entry above u * total, along the last axis of cdf"""
    scaled = np.asarray(u) * cdf[..., -1]
    return (cdf <= np.expand_dims(scaled, -1)).sum(axis=-1)


class ModelSimulator:
    """Generative model backed by a fully known PomdpModel"""

    def __init__(self, model: PomdpModel):
        self.model = model
        self.num_states = model.num_states
        self.num_actions = model.num_actions
        self.num_observations = model.num_observations
        self.discount = model.discount
        self.reward_range = (model.r_min, model.r_max)
        self._transition_cdf = np.cumsum(model.transition, axis=2)
        self._observation_cdf = np.cumsum(model.observation, axis=2)

    def sample(self, s: int, a: int, rng: np.random.Generator) -> Tuple[int, int, float]:
        next_state = int(_inverse_cdf(self._transition_cdf[a, s], rng.random()))
        observation = int(_inverse_cdf(self._observation_cdf[a, next_state], rng.random()))
        return next_state, observation, float(self.model.reward[s, a])

    def sample_all(self, sample_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        A, S, J = self.num_actions, self.num_states, sample_size
        next_states = _inverse_cdf(self._transition_cdf[:, :, None, :], rng.random((A, S, J)))
        obs_cdf = self._observation_cdf[np.arange(A)[:, None, None], next_states]
        observations = _inverse_cdf(obs_cdf, rng.random((A, S, J)))
        rewards = np.broadcast_to(self.model.reward.T[:, :, None], (A, S, J)).copy()
        return next_states, observations, rewards


def sample_generative(model: PomdpModel, s: int, a: int, rng: np.random.Generator) -> Tuple[int, int, float]:
    return ModelSimulator(model).sample(s, a, rng)


def empirical_obs_dist(batch: SampleBatch, num_observations: int) -> Dict[int, np.ndarray]:
    """Observation frequencies per visited next state; unvisited states get no entry"""
    dist = {}
    for next_state in np.unique(batch.next_states):
        seen = batch.observations[batch.next_states == next_state]
        dist[int(next_state)] = np.bincount(seen, minlength=num_observations) / seen.size
    return dist


def draw_batches(simulator: Simulator, sample_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Joint counts n[a, s, s', o] over one batch per cell, plus the mean reward per (a, s)"""
    A, S, O = simulator.num_actions, simulator.num_states, simulator.num_observations
    next_states, observations, rewards = simulator.sample_all(sample_size, rng)
    cell = np.arange(A * S).reshape(A, S, 1)
    flat = (cell * S + next_states) * O + observations
    counts = np.bincount(flat.ravel(), minlength=A * S * S * O).reshape(A, S, S, O)
    return counts, rewards.mean(axis=2)


def _sampled_backup(counts: np.ndarray, mean_reward: np.ndarray, alpha: np.ndarray,
                    discount: float, sample_size: int) -> np.ndarray:
    # counts[a, s, s', o] = |J_s'| * Omega-hat(o | s', a), so the J-sum collapses onto visited s'
    A, S = mean_reward.shape
    vectors = alpha.reshape(A, S)
    per_obs = counts.transpose(0, 1, 3, 2) @ vectors.T  # (A, S, O, A')
    future = per_obs.max(axis=3).sum(axis=2) / sample_size
    return (mean_reward + discount * future).reshape(-1)


def apply_F_hat(simulator: Simulator, alpha, sim_params: SimParams, rng: np.random.Generator) -> AlphaMatrix:
    """One application of F-hat with freshly drawn batches"""
    data = alpha.data if isinstance(alpha, AlphaMatrix) else np.asarray(alpha, dtype=float)
    counts, mean_reward = draw_batches(simulator, sim_params.sample_size, rng)
    image = _sampled_backup(counts, mean_reward, data, simulator.discount, sim_params.sample_size)
    return AlphaMatrix(image, simulator.num_states, simulator.num_actions)


class SampledFibOperator:
    """F-hat as a fixed-point operator.

    Fresh mode draws new batches from the master rng on every call; frozen
    mode draws once from default_rng(seed) and reuses those batches.
    """

    def __init__(self, simulator: Simulator, sim_params: SimParams,
                 rng: Optional[np.random.Generator] = None):
        self.simulator = simulator
        self.sim_params = sim_params
        self._rng = rng if rng is not None else np.random.default_rng(sim_params.seed)
        self._frozen = None
        if sim_params.resample is ResamplePolicy.FROZEN:
            self._frozen = draw_batches(simulator, sim_params.sample_size,
                                        np.random.default_rng(sim_params.seed))

    def __call__(self, alpha: np.ndarray) -> np.ndarray:
        if self._frozen is not None:
            counts, mean_reward = self._frozen
        else:
            counts, mean_reward = draw_batches(self.simulator, self.sim_params.sample_size, self._rng)
        return _sampled_backup(counts, mean_reward, alpha, self.simulator.discount,
                               self.sim_params.sample_size)


def estimate_eps(model: PomdpModel, alpha_trace, sim_params: SimParams,
                 rng: Optional[np.random.Generator] = None) -> float:
    """max_k ||F-hat alpha^k - F alpha^k||_inf over the given iterates.

    In frozen mode the operator is rebuilt from the same seed, so it sees
    exactly the batches the solver used.
    """
    exact = FibOperator(model)
    sampled = SampledFibOperator(ModelSimulator(model), sim_params, rng)
    eps = 0.0
    for alpha in alpha_trace:
        data = alpha.data if isinstance(alpha, AlphaMatrix) else np.asarray(alpha, dtype=float)
        eps = max(eps, float(np.max(np.abs(sampled(data) - exact(data)))))
    return eps


def sim_aa_fib_solve(simulator: Simulator, params: Optional[AaParams] = None,
                     sim_params: Optional[SimParams] = None, alpha0=None) -> SolveResult:
    """AA-FIB driven only by samples from `simulator`"""
    params = params or AaParams()
    sim_params = sim_params or SimParams()
    S, A = simulator.num_states, simulator.num_actions

    if alpha0 is None:
        r_min, r_max = simulator.reward_range
        start = uniform_alpha(S, A, r_min, r_max, simulator.discount, params.seed).data
    else:
        start = AlphaMatrix(np.array(alpha0.data if isinstance(alpha0, AlphaMatrix) else alpha0,
                                     dtype=float), S, A).data

    logger.debug(f"Sampled operator: J={sim_params.sample_size}, resample={sim_params.resample.value}")
    alpha, trace, converged, iterates = anderson_iterate(
        SampledFibOperator(simulator, sim_params), start, params)
    return finish_result(S, A, 'aa-fib-sim', alpha, trace, converged, iterates)