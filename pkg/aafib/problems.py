"""
Built-in problems
The Tiger instance, a seeded grid-navigation generator, random models for
property tests, and resolution of `--problem` strings.
"""

import logging
from typing import Dict, List, Set, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .model import PomdpModel, ensure_valid
from .parser import load_pomdp, parse_pomdp

logger = logging.getLogger(__name__)

TIGER_POMDP = """\
# Tiger: listen to locate the tiger, then open the other door
discount: 0.95
values: reward
states: tiger-left tiger-right
actions: listen open-left open-right
observations: tiger-left tiger-right

start: uniform

T: listen
identity

T: open-left
uniform

T: open-right
uniform

O: listen
0.85 0.15
0.15 0.85

O: open-left
uniform

O: open-right
uniform

R: listen : * : * : * -1
R: open-left : tiger-left : * : * -100
R: open-left : tiger-right : * : * 10
R: open-right : tiger-left : * : * 10
R: open-right : tiger-right : * : * -100
"""

GRID_ACTIONS = ('north', 'east', 'south', 'west', 'declare')
# (row, col) offsets for the four move actions
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
NUM_WALL_MASKS = 16
OBSTACLE_FRACTION = 0.10


def tiger() -> PomdpModel:
    return parse_pomdp(TIGER_POMDP)


def _connected(open_cells: Set[Tuple[int, int]]) -> bool:
    if not open_cells:
        return False
    index = {cell: i for i, cell in enumerate(open_cells)}
    edges = [(i, index[(r + dr, c + dc)]) for (r, c), i in index.items()
             for dr, dc in MOVES if (r + dr, c + dc) in index]
    pairs = np.array(edges, dtype=int).reshape(-1, 2)
    adjacency = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(index), len(index)))
    return bool(connected_components(adjacency, directed=False)[0] == 1)


def _place_obstacles(width: int, height: int, rng: np.random.Generator) -> Set[Tuple[int, int]]:
    """Block roughly 10% of the cells, interior only, keeping the rest connected"""
    wanted = int(OBSTACLE_FRACTION * width * height)
    interior = [(r, c) for r in range(1, height - 1) for c in range(1, width - 1)]
    if wanted == 0 or not interior:
        return set()

    open_cells = {(r, c) for r in range(height) for c in range(width)}
    blocked: Set[Tuple[int, int]] = set()
    for i in rng.permutation(len(interior)):
        if len(blocked) == wanted:
            break
        cell = interior[i]
        open_cells.discard(cell)
        if _connected(open_cells):
            blocked.add(cell)
        else:
            open_cells.add(cell)
    return blocked


def _wall_mask(cell: Tuple[int, int], open_cells: Set[Tuple[int, int]]) -> int:
    """Bit k is set when move k (N, E, S, W) from `cell` is blocked"""
    r, c = cell
    mask = 0
    for bit, (dr, dc) in enumerate(MOVES):
        if (r + dr, c + dc) not in open_cells:
            mask |= 1 << bit
    return mask


def generate_grid_nav(width: int, height: int, slip_prob: float = 0.1, obs_noise: float = 0.1,
                      seed: int = 0, discount: float = 0.95) -> PomdpModel:
    """Seeded maze-style navigation problem.

    The robot departs from the top-left cell and has to reach the
    bottom-right cell and declare. Moves fail (robot stays) with slip_prob,
    and the robot senses the wall layout of the cell it lands in, correct
    with probability 1 - obs_noise and otherwise one of the other 15 masks.
    Declaring pays +1 at the goal and -1 elsewhere, and sends the robot
    back to the start cell.
    """
    if int(width) != width or int(height) != height or width < 2 or height < 2:
        raise ValueError(f"grid must be at least 2x2 with integer sides, got {width}x{height}")
    if not (0.0 <= slip_prob < 1.0):
        raise ValueError(f"slip_prob must be in [0, 1), got {slip_prob}")
    if not (0.0 <= obs_noise < 1.0):
        raise ValueError(f"obs_noise must be in [0, 1), got {obs_noise}")
    if not (0.0 < discount < 1.0):
        raise ValueError(f"discount must be in (0, 1), got {discount}")
    width, height = int(width), int(height)

    rng = np.random.default_rng(seed)
    blocked = _place_obstacles(width, height, rng)
    cells: List[Tuple[int, int]] = [(r, c) for r in range(height) for c in range(width)
                                    if (r, c) not in blocked]
    open_cells = set(cells)
    index: Dict[Tuple[int, int], int] = {cell: i for i, cell in enumerate(cells)}
    goal = index[(height - 1, width - 1)]

    S, A, O = len(cells), len(GRID_ACTIONS), NUM_WALL_MASKS
    # obstacles are interior only, so the top-left cell is always open
    start = np.zeros(S)
    start[index[(0, 0)]] = 1.0

    T = np.zeros((A, S, S))
    for i, (r, c) in enumerate(cells):
        for a, (dr, dc) in enumerate(MOVES):
            j = index.get((r + dr, c + dc), i)
            T[a, i, j] += 1.0 - slip_prob
            T[a, i, i] += slip_prob
        T[A - 1, i] = start

    Om = np.full((A, S, O), obs_noise / (O - 1))
    for i, cell in enumerate(cells):
        Om[:, i, _wall_mask(cell, open_cells)] = 1.0 - obs_noise

    reward = np.zeros((S, A))
    reward[:, A - 1] = -1.0
    reward[goal, A - 1] = 1.0

    logger.debug(f"grid_nav {width}x{height}: {S} open cells, {len(blocked)} obstacles, goal={goal}")
    return ensure_valid(PomdpModel(
        num_states=S, num_actions=A, num_observations=O,
        transition=T, observation=Om, reward=reward, discount=discount,
        start_belief=start,
        state_names=tuple(f"r{r}c{c}" for r, c in cells),
        action_names=GRID_ACTIONS,
        observation_names=tuple(f"walls{m}" for m in range(O)),
    ))


def random_pomdp(rng: np.random.Generator, num_states: int, num_actions: int,
                 num_observations: int, discount: float = 0.9) -> PomdpModel:
    """Dense random model: Dirichlet(1) rows, rewards uniform on [-1, 1]"""
    return ensure_valid(PomdpModel(
        num_states=num_states, num_actions=num_actions, num_observations=num_observations,
        transition=rng.dirichlet(np.ones(num_states), size=(num_actions, num_states)),
        observation=rng.dirichlet(np.ones(num_observations), size=(num_actions, num_states)),
        reward=rng.uniform(-1.0, 1.0, size=(num_states, num_actions)),
        discount=discount,
        start_belief=rng.dirichlet(np.ones(num_states)),
    ))


def _grid_nav_from_spec(source: str) -> PomdpModel:
    parts = source.split(':')[1:]
    if len(parts) not in (0, 2, 4, 5):
        raise ValueError(f"expected grid_nav[:W:H[:SLIP:NOISE[:SEED]]], got '{source}'")
    casts = (int, int, float, float, int)
    defaults = [5, 5, 0.1, 0.1, 0]
    try:
        values = [cast(p) for cast, p in zip(casts, parts)]
    except ValueError:
        raise ValueError(f"malformed grid_nav spec '{source}'") from None
    width, height, slip, noise, seed = values + defaults[len(values):]
    return generate_grid_nav(width, height, slip, noise, seed)


def load_problem(source: str) -> PomdpModel:
    """`tiger`, `grid_nav[:W:H[:SLIP:NOISE[:SEED]]]`, or a path to a .pomdp file"""
    if source == 'tiger':
        return tiger()
    if source == 'grid_nav' or source.startswith('grid_nav:'):
        return _grid_nav_from_spec(source)
    return load_pomdp(source)
