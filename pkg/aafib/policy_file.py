"""
Policy files
Self-describing JSON documents holding solved alpha vectors plus enough
model metadata to refuse evaluating them against the wrong problem.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import List

import numpy as np

from .errors import ShapeMismatchError
from .fib import SolveResult
from .model import AlphaMatrix, PomdpModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class PolicyFile:
    model_hash: str
    num_states: int
    num_actions: int
    discount: float
    alpha: List[float]
    solver: str
    converged: bool
    iterations: int
    format_version: int = FORMAT_VERSION
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())

    def alpha_matrix(self) -> AlphaMatrix:
        return AlphaMatrix(np.array(self.alpha, dtype=float), self.num_states, self.num_actions)

    def check_model(self, model: PomdpModel):
        if (self.num_states, self.num_actions) != (model.num_states, model.num_actions):
            raise ShapeMismatchError(
                f"policy is for {self.num_states} states x {self.num_actions} actions, "
                f"model has {model.num_states} x {model.num_actions}")
        if self.model_hash != model.fingerprint():
            logger.warning("⚠️ Policy file was solved for a different model with the same shape")


def save_policy(path, model: PomdpModel, result: SolveResult, solver: str = None) -> Path:
    policy = PolicyFile(
        model_hash=model.fingerprint(),
        num_states=model.num_states,
        num_actions=model.num_actions,
        discount=model.discount,
        alpha=[float(x) for x in result.alpha.data],
        solver=solver or result.solver,
        converged=bool(result.converged),
        iterations=int(result.iterations),
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(asdict(policy), f, indent=2)
    logger.info(f"💾 Saved policy to {path}")
    return path


def load_policy(path) -> PolicyFile:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Policy file not found: {path}")

    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"Policy file {path} is not valid JSON: {e}") from e

    try:
        policy = PolicyFile(**data)
    except TypeError as e:
        raise ValueError(f"Policy file {path} has unexpected fields: {e}") from e

    if len(policy.alpha) != policy.num_states * policy.num_actions:
        raise ShapeMismatchError(
            f"policy file {path} holds {len(policy.alpha)} alpha entries, "
            f"expected {policy.num_states * policy.num_actions}")
    return policy
