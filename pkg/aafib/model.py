"""
POMDP model types
The (S, A, O, T, Omega, r, gamma) tuple, stacked alpha vectors and beliefs.

Indexing is 0-based everywhere. The flat alpha layout puts the component
for action a and state s at a * |S| + s, which is the 1-based
(a - 1) * |S| + s layout shifted down by one.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ModelValidationError, ShapeMismatchError

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PomdpModel:
    """Finite discounted POMDP.

    transition is stored as T[a, s, s'] so the inner sum over s' for a fixed
    (s, a) runs over a contiguous row. observation is Omega[a, s', o] and
    reward is r[s, a]. The model is read-only after construction.
    """
    num_states: int
    num_actions: int
    num_observations: int
    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    start_belief: Optional[np.ndarray] = None
    state_names: Optional[Tuple[str, ...]] = None
    action_names: Optional[Tuple[str, ...]] = None
    observation_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'num_states', int(self.num_states))
        object.__setattr__(self, 'num_actions', int(self.num_actions))
        object.__setattr__(self, 'num_observations', int(self.num_observations))
        object.__setattr__(self, 'discount', float(self.discount))
        object.__setattr__(self, 'transition', _frozen_array(self.transition))
        object.__setattr__(self, 'observation', _frozen_array(self.observation))
        object.__setattr__(self, 'reward', _frozen_array(self.reward))
        if self.start_belief is not None:
            object.__setattr__(self, 'start_belief', _frozen_array(self.start_belief))
        for name in ('state_names', 'action_names', 'observation_names'):
            labels = getattr(self, name)
            if labels is not None:
                object.__setattr__(self, name, tuple(str(x) for x in labels))

    @property
    def r_min(self) -> float:
        return float(self.reward.min())

    @property
    def r_max(self) -> float:
        return float(self.reward.max())

    @property
    def alpha_size(self) -> int:
        return self.num_states * self.num_actions

    def fingerprint(self) -> str:
        """Stable hash of the numeric content, used to tag policy files"""
        digest = hashlib.sha256()
        digest.update(f"{self.num_states}:{self.num_actions}:{self.num_observations}:{self.discount!r}".encode())
        for arr in (self.transition, self.observation, self.reward):
            digest.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        if self.start_belief is not None:
            digest.update(np.ascontiguousarray(self.start_belief, dtype=np.float64).tobytes())
        return digest.hexdigest()


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    location: Tuple = ()


@dataclass
class ValidationReport:
    """Every violated invariant of a model. Empty means the model is valid."""
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, message: str, location: Tuple = ()):
        self.violations.append(Violation(kind, message, location))

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)

    def summary(self) -> str:
        return "; ".join(v.message for v in self.violations)


def _check_rows(report: ValidationReport, kind: str, rows: np.ndarray, label: str):
    """rows has shape (A, X, Y); every rows[a, x] must be a distribution"""
    if not np.all(np.isfinite(rows)):
        report.add(kind, f"{label} contains non-finite entries")
        return
    for a, x in zip(*np.nonzero((rows < 0).any(axis=2))):
        report.add(kind, f"{label} row (a={a}, {x}) has negative entries", (int(a), int(x)))
    sums = rows.sum(axis=2)
    for a, x in zip(*np.nonzero(np.abs(sums - 1.0) > PROB_TOL)):
        report.add(kind, f"{label} row (a={a}, {x}) sums to {sums[a, x]!r}", (int(a), int(x)))


def validate(model: PomdpModel) -> ValidationReport:
    """List every violated invariant of `model` without raising"""
    report = ValidationReport()
    S, A, O = model.num_states, model.num_actions, model.num_observations

    for name, value in (('num_states', S), ('num_actions', A), ('num_observations', O)):
        if value < 1:
            report.add('size', f"{name} must be positive, got {value}")
    if not report.ok:
        return report

    shapes_ok = True
    for name, arr, shape in (('transition', model.transition, (A, S, S)),
                             ('observation', model.observation, (A, S, O)),
                             ('reward', model.reward, (S, A))):
        if arr.shape != shape:
            report.add('shape', f"{name} has shape {arr.shape}, expected {shape}")
            shapes_ok = False

    if shapes_ok:
        # T rows are indexed (s, a) in the model but stored [a][s]
        _check_rows(report, 'transition', model.transition, 'transition')
        _check_rows(report, 'observation', model.observation, 'observation')
        # r_min / r_max are derived from the array, so finiteness is the only range check
        if not np.all(np.isfinite(model.reward)):
            report.add('reward', "reward contains non-finite entries")

    if not (0.0 < model.discount < 1.0):
        report.add('discount', f"discount out of (0,1): {model.discount!r}")

    if model.start_belief is not None:
        b = model.start_belief
        if b.shape != (S,):
            report.add('start', f"start belief has shape {b.shape}, expected {(S,)}")
        elif (b < 0).any() or abs(b.sum() - 1.0) > PROB_TOL:
            report.add('start', f"start belief is not a distribution (sum {b.sum()!r})")

    return report


def flat_index(a: int, s: int, num_states: int, num_actions: int) -> int:
    """Position of alpha_a(s) in the stacked vector"""
    if not (0 <= a < num_actions):
        raise IndexError(f"action index {a} out of range [0, {num_actions})")
    if not (0 <= s < num_states):
        raise IndexError(f"state index {s} out of range [0, {num_states})")
    return a * num_states + s


def unflat_index(i: int, num_states: int, num_actions: int) -> Tuple[int, int]:
    if not (0 <= i < num_states * num_actions):
        raise IndexError(f"flat index {i} out of range [0, {num_states * num_actions})")
    return divmod(i, num_states)


@dataclass
class AlphaMatrix:
    """One alpha vector per action, stacked action-major into a flat array"""
    data: np.ndarray
    num_states: int
    num_actions: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1)
        if self.data.size != self.num_states * self.num_actions:
            raise ShapeMismatchError(
                f"alpha has {self.data.size} entries, expected "
                f"{self.num_states} x {self.num_actions}")

    @classmethod
    def from_vectors(cls, vectors: Sequence[Sequence[float]]) -> "AlphaMatrix":
        arr = np.asarray(vectors, dtype=float)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"expected |A| vectors of length |S|, got shape {arr.shape}")
        return cls(arr.reshape(-1).copy(), arr.shape[1], arr.shape[0])

    @classmethod
    def zeros(cls, model: PomdpModel) -> "AlphaMatrix":
        return cls(np.zeros(model.alpha_size), model.num_states, model.num_actions)

    def vectors(self) -> np.ndarray:
        """(|A|, |S|) view; row a is alpha_a"""
        return self.data.reshape(self.num_actions, self.num_states)

    def copy(self) -> "AlphaMatrix":
        return AlphaMatrix(self.data.copy(), self.num_states, self.num_actions)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def check_model(self, model: PomdpModel):
        if (self.num_states, self.num_actions) != (model.num_states, model.num_actions):
            raise ShapeMismatchError(
                f"alpha is {self.num_states} states x {self.num_actions} actions, "
                f"model is {model.num_states} x {model.num_actions}")


@dataclass
class Belief:
    """Probability distribution over states"""
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if (self.probs < 0).any() or abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"belief must be non-negative and sum to 1, got sum {self.probs.sum()!r}")

    @classmethod
    def from_weights(cls, weights) -> "Belief":
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0 or (w < 0).any():
            raise ValueError("belief weights must be non-negative with a positive sum")
        return cls(w / total)

    @classmethod
    def uniform(cls, n: int) -> "Belief":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, n: int, s: int) -> "Belief":
        probs = np.zeros(n)
        probs[s] = 1.0
        return cls(probs)

    @classmethod
    def sample_uniform(cls, n: int, rng: np.random.Generator) -> "Belief":
        """Uniform point on the simplex (normalized exponential draws)"""
        return cls.from_weights(rng.exponential(1.0, size=n))

    def __len__(self) -> int:
        return self.probs.size


def ensure_valid(model: PomdpModel) -> PomdpModel:
    report = validate(model)
    if not report.ok:
        raise ModelValidationError(report.summary())
    return model
