"""
Policy execution and evaluation
Greedy action selection over alpha vectors, Bayes belief updates, and
Monte-Carlo estimates of the discounted return.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import EvaluationError, ImpossibleObservationError
from .model import AlphaMatrix, Belief, PomdpModel
from .sim import ModelSimulator

logger = logging.getLogger(__name__)


class BeliefMode(str, Enum):
    FIXED = 'fixed'
    RANDOM = 'random'


@dataclass
class EvalConfig:
    num_episodes: int = 100
    max_steps: int = 100
    initial_belief: BeliefMode = BeliefMode.FIXED
    seed: int = 0

    def __post_init__(self):
        if int(self.num_episodes) != self.num_episodes or self.num_episodes < 1:
            raise ValueError(f"num_episodes must be a positive integer, got {self.num_episodes}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError(f"max_steps must be a positive integer, got {self.max_steps}")
        self.num_episodes = int(self.num_episodes)
        self.max_steps = int(self.max_steps)
        self.initial_belief = BeliefMode(self.initial_belief)


@dataclass
class EvalStats:
    mean: float
    std: float
    episodes: int
    seed: int
    mode: str = BeliefMode.FIXED.value

    def to_dict(self) -> dict:
        return asdict(self)


def _probs(b: Union[Belief, np.ndarray]) -> np.ndarray:
    return b.probs if isinstance(b, Belief) else np.asarray(b, dtype=float)


def belief_update(model: PomdpModel, b: Union[Belief, np.ndarray], a: int, o: int) -> Belief:
    """b'(s') proportional to Omega(o | s', a) * sum_s T(s' | s, a) b(s)"""
    unnormalized = model.observation[a, :, o] * (_probs(b) @ model.transition[a])
    total = unnormalized.sum()
    if total <= 0.0:
        raise ImpossibleObservationError(
            f"observation {o} has zero probability after action {a} from this belief")
    return Belief(unnormalized / total)


def greedy_action(alpha: AlphaMatrix, b: Union[Belief, np.ndarray]) -> int:
    """Lowest-index maximizer of b . alpha_a"""
    return int(np.argmax(alpha.vectors() @ _probs(b)))


def rollout(model: PomdpModel, alpha: AlphaMatrix, b0: Belief, config: EvalConfig,
            rng: np.random.Generator, simulator: Optional[ModelSimulator] = None) -> float:
    """One episode against the true hidden state, truncated at config.max_steps"""
    simulator = simulator or ModelSimulator(model)
    state = int(rng.choice(model.num_states, p=b0.probs))
    belief = b0
    total = 0.0
    weight = 1.0

    for _ in range(config.max_steps):
        action = greedy_action(alpha, belief)
        next_state, observation, reward = simulator.sample(state, action, rng)
        total += weight * reward
        weight *= model.discount
        belief = belief_update(model, belief, action, observation)
        state = next_state

    return total


def evaluate(model: PomdpModel, alpha: AlphaMatrix, config: Optional[EvalConfig] = None) -> EvalStats:
    """Mean and population std of the discounted return over independent episodes"""
    config = config or EvalConfig()
    alpha.check_model(model)
    fixed = config.initial_belief is BeliefMode.FIXED
    if fixed and model.start_belief is None:
        raise EvaluationError("fixed initial-belief evaluation needs a model with a start belief")

    simulator = ModelSimulator(model)
    returns = np.empty(config.num_episodes)
    for i, seed_seq in enumerate(np.random.SeedSequence(config.seed).spawn(config.num_episodes)):
        rng = np.random.default_rng(seed_seq)
        b0 = Belief(model.start_belief) if fixed else Belief.sample_uniform(model.num_states, rng)
        returns[i] = rollout(model, alpha, b0, config, rng, simulator)

    stats = EvalStats(float(returns.mean()), float(returns.std()), config.num_episodes,
                      config.seed, config.initial_belief.value)
    logger.info(f"Evaluated {stats.episodes} episodes ({stats.mode} start): "
                f"{stats.mean:.4f} ± {stats.std:.4f}")
    return stats
